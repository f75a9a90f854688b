use super::*;
use crate::network::{AnsatzOptions, Geometry, Network};
use crate::symm::{Group, SymLink};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli_x() -> DenseTensor {
    DenseTensor::from_real(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

fn pauli_z() -> DenseTensor {
    DenseTensor::from_real(&[2, 2], &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

fn phys(symmetric: bool) -> SymLink {
    if symmetric {
        SymLink::from_pairs(Group::zn(2), &[(0, 1), (1, 1)]).unwrap()
    } else {
        SymLink::plain(2)
    }
}

/// `σx` with one TPO link in direction `d`; carries parity 1 when symmetric.
fn sx_half(site: usize, symmetric: bool, d: Dir, coeff: f64) -> LocalOp {
    let p = phys(symmetric);
    let mu = if symmetric {
        SymLink::from_pairs(Group::zn(2), &[(1, 1)]).unwrap()
    } else {
        SymLink::plain(1)
    };
    let m = pauli_x().scale(c(coeff)).reshape(&[2, 2, 1]).unwrap();
    let op = SymTensor::from_dense(vec![p.clone(), p, mu], vec![Dir::In, Dir::Out, d], &m, 0.0).unwrap();
    LocalOp::new(site, op, vec![0])
}

fn ising(n: usize, lambda: f64, pbc: bool, symmetric: bool) -> Tpo {
    let mut h = Tpo::new(vec![phys(symmetric); n]);
    let bonds = if pbc { n } else { n - 1 };
    for s in 0..bonds {
        h.add_term(vec![sx_half(s, symmetric, Dir::Out, -1.0), sx_half((s + 1) % n, symmetric, Dir::In, 1.0)])
            .unwrap();
    }
    for s in 0..n {
        h.add_local(s, lambda, &pauli_z()).unwrap();
    }
    h
}

/// Textbook `Σ_k c_k ⊗_s m_{k,s}` with site 0 fastest.
fn kron_sum(n: usize, terms: &[(f64, Vec<(usize, DenseTensor)>)]) -> DenseTensor {
    let dim = 1usize << n;
    let mut h = DenseTensor::zeros(&[dim, dim]);
    for (coef, ops) in terms {
        for row in 0..dim {
            for col in 0..dim {
                let mut v = c(*coef);
                for s in 0..n {
                    let (r, cc) = ((row >> s) & 1, (col >> s) & 1);
                    match ops.iter().find(|(x, _)| *x == s) {
                        Some((_, m)) => v *= m.data()[r + 2 * cc],
                        None => {
                            if r != cc {
                                v = c(0.0);
                            }
                        }
                    }
                }
                h.data_mut()[row + dim * col] += v;
            }
        }
    }
    h
}

fn ising_textbook(n: usize, lambda: f64, pbc: bool) -> DenseTensor {
    let mut terms = vec![];
    let bonds = if pbc { n } else { n - 1 };
    for s in 0..bonds {
        terms.push((-1.0, vec![(s, pauli_x()), ((s + 1) % n, pauli_x())]));
    }
    for s in 0..n {
        terms.push((lambda, vec![(s, pauli_z())]));
    }
    kron_sum(n, &terms)
}

fn random_state(n: usize, d: usize, symmetric: bool, seed: u64) -> Network {
    let sel = if symmetric {
        SymLink::from_pairs(Group::zn(2), &[(0, 1)]).unwrap()
    } else {
        SymLink::plain(1)
    };
    Network::random_ansatz(
        Geometry::binary_tree(n).unwrap(),
        &vec![phys(symmetric); n],
        &sel,
        &AnsatzOptions::new(d, seed),
    )
    .unwrap()
}

fn dense_energy(h: &DenseTensor, psi: &DenseTensor) -> f64 {
    let v = psi.reshape(&[psi.len()]).unwrap();
    let hv = h.contract(&v, &[(1, 0)]).unwrap();
    v.dot(&hv).re / v.norm_sqr()
}

#[test]
fn dense_assembly_matches_textbook() {
    for sym in [false, true] {
        for pbc in [false, true] {
            let h = ising(4, 0.7, pbc, sym).to_dense().unwrap();
            assert!(h.max_abs_diff(&ising_textbook(4, 0.7, pbc)) < 1e-15);
        }
    }
    // three-site chain of TPO links, with one operator carrying two
    let p = phys(false);
    let mu = SymLink::plain(1);
    let mk = |site, m: DenseTensor, dirs: Vec<Dir>, ids: Vec<usize>| {
        let mut dims = vec![2, 2];
        dims.extend(std::iter::repeat_n(1, ids.len()));
        let mut links = vec![p.clone(), p.clone()];
        links.extend(std::iter::repeat_n(mu.clone(), ids.len()));
        let mut ds = vec![Dir::In, Dir::Out];
        ds.extend(dirs);
        LocalOp::new(site, SymTensor::from_dense(links, ds, &m.reshape(&dims).unwrap(), 0.0).unwrap(), ids)
    };
    let mut t = Tpo::new(vec![p.clone(); 4]);
    t.add_term(vec![
        mk(3, pauli_x(), vec![Dir::Out], vec![7]),
        mk(0, pauli_z().scale(c(0.5)), vec![Dir::In, Dir::Out], vec![7, 2]),
        mk(1, pauli_x(), vec![Dir::In], vec![2]),
    ])
    .unwrap();
    let want = kron_sum(4, &[(0.5, vec![(3, pauli_x()), (0, pauli_z()), (1, pauli_x())])]);
    assert!(t.to_dense().unwrap().max_abs_diff(&want) < 1e-15);
}

#[test]
fn malformed_terms_are_rejected() {
    let mut t = Tpo::new(vec![phys(false); 4]);
    assert!(t.add_term(vec![]).is_err());
    assert!(t
        .add_term(vec![sx_half(1, false, Dir::Out, 1.0), sx_half(1, false, Dir::In, 1.0)])
        .is_err());
    assert!(t.add_term(vec![sx_half(1, false, Dir::Out, 1.0)]).is_err());
    assert!(t
        .add_term(vec![sx_half(1, false, Dir::Out, 1.0), sx_half(2, false, Dir::Out, 1.0)])
        .is_err());
    // symmetric operator on a dense site
    assert!(t.add_term(vec![sx_half(0, true, Dir::Out, 1.0), sx_half(1, true, Dir::In, 1.0)]).is_err());
    // two invariant operators without a joining link
    let z = LocalOp::from_matrix(0, &phys(false), &pauli_z()).unwrap();
    let z2 = LocalOp::from_matrix(1, &phys(false), &pauli_z()).unwrap();
    assert!(t.add_term(vec![z, z2]).is_err());
    assert!(t.add_local(9, 1.0, &pauli_z()).is_err());
}

#[test]
fn cut_budget_counts_crossing_links() {
    let net = random_state(8, 4, true, 1);
    let h = ising(8, 1.0, true, true);
    h.check_network(&net).unwrap();
    assert!(h.cut_counts(&net).iter().all(|&(_, n)| n <= 2));
    // the half-system cut of the periodic chain crosses exactly two bonds
    let top = net.virtual_links().into_iter().find(|&l| net.subtree_sites(l).len() == 4).unwrap();
    assert_eq!(h.cut_counts(&net)[top].1, 2);
    let tight = ising(8, 1.0, true, true).with_cut_budget(1);
    let err = tight.check_network(&net).unwrap_err().to_string();
    assert!(err.contains("\"cut\""));
}

#[test]
fn energy_matches_dense_sandwich() {
    for (sym, seed) in [(false, 3u64), (true, 4)] {
        let mut net = random_state(8, 4, sym, seed);
        let tpo = ising(8, 0.9, true, sym);
        let want = dense_energy(&tpo.to_dense().unwrap(), &net.amplitudes().unwrap());
        for c0 in [net.root(), 0, 3, 5] {
            net.move_center(c0).unwrap();
            let env = Environment::new(&net, &tpo, vec![]).unwrap();
            let e = env.energy(&net).unwrap();
            assert!((e - want).abs() < 1e-10 * want.abs().max(1.0), "center {c0}: {e} vs {want}");
        }
    }
}

#[test]
fn pair_frame_gives_the_same_energy() {
    let mut net = random_state(8, 4, true, 8);
    net.move_center(0).unwrap();
    let tpo = ising(8, 1.1, true, true);
    let env = Environment::new(&net, &tpo, vec![]).unwrap();
    let e = env.energy(&net).unwrap();
    let nb = net.neighbors(0)[0].0;
    let frame = Frame::pair(&net, 0, nb).unwrap();
    let x = frame.gather(&net).unwrap();
    let h = env.effective(&net, &frame).unwrap();
    let ep = x.dot(&h.apply(&x).unwrap()).unwrap().re / x.norm_sqr();
    assert!((e - ep).abs() < 1e-10);
}

#[test]
fn effective_operator_is_hermitian() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for sym in [false, true] {
        let mut net = random_state(8, 4, sym, 6);
        net.move_center(1).unwrap();
        let proj = Projector::single(2.5, random_state(8, 3, sym, 7));
        let env = Environment::new(&net, &ising(8, 1.0, true, sym), vec![proj]).unwrap();
        let h = env.effective(&net, &Frame::node(&net, 1)).unwrap();
        let t = net.tensor(1);
        for _ in 0..10 {
            let x = SymTensor::random(t.links().to_vec(), t.dirs().to_vec(), &mut rng).unwrap();
            let y = SymTensor::random(t.links().to_vec(), t.dirs().to_vec(), &mut rng).unwrap();
            let a = x.dot(&h.apply(&y).unwrap()).unwrap();
            let b = y.dot(&h.apply(&x).unwrap()).unwrap().conj();
            assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
        }
        let m = h.to_dense(4096).unwrap();
        let n = m.dims()[0];
        for i in 0..n {
            for j in 0..n {
                assert!((m.data()[i + n * j] - m.data()[j + n * i].conj()).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn leaf_renormalization_preserves_the_spectrum() {
    // full-rank leaves: the renormalized n_0 is unitarily equivalent to n ⊗ 1
    let mut net = random_state(8, 16, false, 9);
    net.move_center(net.root()).unwrap();
    let mut tpo = Tpo::new(vec![phys(false); 8]);
    let n_op = DenseTensor::from_real(&[2, 2], &[0.0, 0.0, 0.0, 1.0]).unwrap();
    tpo.add_local(0, 1.0, &n_op).unwrap();
    let env = Environment::new(&net, &tpo, vec![]).unwrap();
    let up = net.node_links(0)[2];
    let e = env.entry(up, 0).unwrap();
    assert!(e.open.is_empty());
    let r = e.complete.as_ref().unwrap().downgrade();
    assert_eq!(r.rank(), 2);
    let d = r.dims()[0];
    let tr: f64 = (0..d).map(|i| r.data()[i + d * i].re).sum();
    assert!((tr - 2.0).abs() < 1e-12);
    let (w, _) = crate::kernel::eigh(r.data(), d).unwrap();
    let want = [0.0, 0.0, 1.0, 1.0];
    for (a, b) in w.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    // links not seeing site 0 carry no operator
    for l in net.virtual_links() {
        for &(q, _) in net.link_ends(l) {
            let Some(e) = env.entry(l, q) else { continue };
            // the side containing q is the subtree below l iff q is the child
            let below = net.subtree_sites(l).contains(&0);
            let q_is_child = net.parent(q).map(|x| x.1) == Some(l);
            if below != q_is_child {
                assert!(e.is_identity());
            }
        }
    }
}

#[test]
fn open_terms_carry_one_tpo_link_on_four_sites() {
    let mut net = random_state(4, 4, true, 10);
    net.move_center(1).unwrap();
    let env = Environment::new(&net, &ising(4, 1.0, true, true), vec![]).unwrap();
    let l = net.link_between(0, 1).unwrap();
    let e = env.entry(l, 0).unwrap();
    // bonds (1,2) and (3,0) cross the cut between the two leaves
    assert_eq!(e.open.len(), 2);
    assert!(e.open.values().all(|(t, ids)| ids.len() == 1 && t.rank() == 3));
    assert!(e.complete.is_some());
}

#[test]
fn identity_tpo_counts_terms() {
    let mut net = random_state(8, 3, true, 11);
    net.move_center(2).unwrap();
    let mut tpo = Tpo::new(vec![phys(true); 8]);
    for s in 0..8 {
        tpo.add_local(s, 1.0, &DenseTensor::identity(2)).unwrap();
    }
    let env = Environment::new(&net, &tpo, vec![]).unwrap();
    let h = env.effective(&net, &Frame::node(&net, 2)).unwrap();
    let t = net.tensor(2);
    let mut d = h.apply(t).unwrap();
    d.axpy(c(-8.0), t).unwrap();
    assert!(d.max_abs() < 1e-12);
}

#[test]
fn identity_shortcut_is_sound() {
    // renormalizing the identity through an isometry gives the identity
    for sym in [false, true] {
        let net = random_state(8, 3, sym, 12);
        for q in 0..net.num_nodes() {
            if Some(q) == net.center() {
                continue;
            }
            let (_, l) = net.parent(q).unwrap();
            let pz = net.position(q, l).unwrap();
            let t = net.tensor(q);
            let pairs: Vec<(usize, usize)> = (0..t.rank()).filter(|&r| r != pz).map(|r| (r, r)).collect();
            let r = t.dagger_contract(t, &pairs).unwrap().downgrade();
            let d = r.dims()[0];
            assert!(r.max_abs_diff(&DenseTensor::identity(d)) < 1e-14);
        }
    }
}

#[test]
fn advance_touches_one_link_and_matches_rebuild() {
    let mut net = random_state(16, 4, true, 13);
    let tpo = ising(16, 1.0, true, true);
    let mut env = Environment::new(&net, &tpo, vec![Projector::single(1.0, random_state(16, 2, true, 14))]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut cur = net.center().unwrap();
    for step in 0..30 {
        let nbs = net.neighbors(cur);
        let (to, l) = nbs[step % nbs.len()];
        // perturb the center like an optimizer would
        let t = net.tensor(cur);
        let mut x = SymTensor::random(t.links().to_vec(), t.dirs().to_vec(), &mut rng).unwrap();
        x.scale_mut(c(1.0 / x.norm()));
        net.set_tensor(cur, x, true).unwrap();
        let before = env.clone();
        net.step_center(to).unwrap();
        env.advance(&net, cur, to).unwrap();
        for (k, v) in before.entries() {
            if *k != (l, cur) {
                assert_eq!(env.entry(k.0, k.1), Some(v));
            }
        }
        cur = to;
    }
    let fresh = Environment::new(&net, &tpo, env.projectors().to_vec()).unwrap();
    let frame = Frame::node(&net, cur);
    for s in &frame.slots {
        if let Slot::Link { link, from } = s {
            let (a, b) = (env.entry(*link, *from).unwrap(), fresh.entry(*link, *from).unwrap());
            let diff = |x: &SymTensor, y: &SymTensor| x.downgrade().max_abs_diff(&y.downgrade());
            assert!(diff(a.complete.as_ref().unwrap(), b.complete.as_ref().unwrap()) < 1e-12);
            assert_eq!(a.open.len(), b.open.len());
            for (p, (t, _)) in &a.open {
                assert!(diff(t, &b.open[p].0) < 1e-12);
            }
            let (m1, m2) = (env.projector_entry(0, 0, *link, *from).unwrap(), fresh.projector_entry(0, 0, *link, *from).unwrap());
            assert!(diff(m1, m2) < 1e-12);
        }
    }
    assert!((env.energy(&net).unwrap() - fresh.energy(&net).unwrap()).abs() < 1e-12);
}

#[test]
fn projector_overlaps() {
    let net = random_state(8, 4, true, 16);
    let c0 = net.center().unwrap();
    let frame = Frame::node(&net, c0);
    let t = net.tensor(c0).clone();
    // self projector: u is the center tensor itself
    let env = Environment::new(&net, &Tpo::new(vec![phys(true); 8]), vec![Projector::single(1.0, net.clone())]).unwrap();
    let h = env.effective(&net, &frame).unwrap();
    assert!(h.is_pure_projector());
    let (_, u) = &h.projector_vectors()[0];
    assert!((u.dot(&t).unwrap().re - net.norm_sqr().unwrap()).abs() < 1e-12);
    let mut d = h.apply(&t).unwrap();
    d.axpy(c(-t.norm_sqr()), &t).unwrap();
    assert!(d.max_abs() < 1e-12);
    // a state in the other parity sector never overlaps
    let odd = Network::random_ansatz(
        Geometry::binary_tree(8).unwrap(),
        &vec![phys(true); 8],
        &SymLink::from_pairs(Group::zn(2), &[(1, 1)]).unwrap(),
        &AnsatzOptions::new(4, 17),
    )
    .unwrap();
    let env = Environment::new(&net, &Tpo::new(vec![phys(true); 8]), vec![Projector::single(1.0, odd)]).unwrap();
    assert!(env.effective(&net, &frame).unwrap().projector_vectors().is_empty());
    // superposition is linear in the states
    let a = random_state(8, 3, true, 18);
    let b = random_state(8, 2, true, 19);
    let empty = Tpo::new(vec![phys(true); 8]);
    let w = (C64::new(0.3, 0.4), C64::new(-1.0, 0.2));
    let sup = Projector {
        penalty: 1.0,
        states: vec![(w.0, a.clone()), (w.1, b.clone())],
    };
    let env = Environment::new(&net, &empty, vec![sup, Projector::single(1.0, a.clone()), Projector::single(1.0, b.clone())]).unwrap();
    let h = env.effective(&net, &frame).unwrap();
    let v = h.projector_vectors();
    let mut want = v[1].1.scale(w.0);
    want.axpy(w.1, &v[2].1).unwrap();
    assert!(want.downgrade().max_abs_diff(&v[0].1.downgrade()) < 1e-12);
    // overlap with the network equals the full scalar product
    assert!((v[1].1.dot(&t).unwrap() - a.scalar_product(&net).unwrap()).norm() < 1e-12);
}

#[test]
fn penalized_energy_matches_dense() {
    let net = random_state(8, 4, false, 20);
    let other = random_state(8, 4, false, 21);
    let tpo = ising(8, 1.0, true, false);
    let env = Environment::new(&net, &tpo, vec![Projector::single(3.0, other.clone())]).unwrap();
    let psi = net.amplitudes().unwrap();
    let ov = other.amplitudes().unwrap().dot(&psi).norm_sqr();
    let want = dense_energy(&tpo.to_dense().unwrap(), &psi) + 3.0 * ov / psi.norm_sqr();
    assert!((env.energy(&net).unwrap() - want).abs() < 1e-10);
}
