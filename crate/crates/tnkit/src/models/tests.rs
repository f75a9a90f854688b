use super::*;

fn ising(n: usize, lambda: f64, pbc: bool, sector: Parity) -> ModelSpec {
    ModelSpec::Ising(IsingSpec { n, lambda, pbc, sector })
}

fn bh(omega: f64, u: f64, beta: f64) -> ModelSpec {
    ModelSpec::BoseHubbard(BoseHubbardSpec {
        n: 4,
        n_b: 2,
        d: 3,
        t: 1.0,
        u,
        beta,
        s_b: 1,
        omega,
        pbc: true,
    })
}

fn dense_eigs(h: &DenseTensor, keep: Option<&[usize]>) -> Vec<f64> {
    let n = h.dims()[0];
    let idx: Vec<usize> = keep.map_or_else(|| (0..n).collect(), |k| k.to_vec());
    let m = idx.len();
    let mut a = vec![C64::new(0.0, 0.0); m * m];
    for (j, &cj) in idx.iter().enumerate() {
        for (i, &ci) in idx.iter().enumerate() {
            a[i + m * j] = h.data()[ci + n * cj];
        }
    }
    kernel::eigh(&a, m).unwrap().0
}

fn hermitian_defect(h: &DenseTensor) -> f64 {
    let n = h.dims()[0];
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((h.data()[i + n * j] - h.data()[j + n * i].conj()).norm());
        }
    }
    worst
}

#[test]
fn closed_form_values() {
    assert!((ising_exact_energy_per_site(4) + 1.3065629).abs() < 1e-7);
    assert!((ising_exact_energy_per_site(16) + 1.2752872).abs() < 1e-7);
    assert!((ising_exact_energy_per_site(1 << 20) + 4.0 / PI).abs() < 1e-9);
}

#[test]
fn critical_oracle_matches_closed_form() {
    for n in [4, 8] {
        let s = exact_diag_oracle(&ising(n, 1.0, true, Parity::Even), true).unwrap();
        let e = s.energies[0] / n as f64;
        assert!((e - ising_exact_energy_per_site(n)).abs() < 1e-12, "{n}: {e}");
    }
}

#[test]
fn ising_tpo_matches_oracle_spectrum() {
    for sym in [false, true] {
        for pbc in [false, true] {
            for lambda in [0.3, 1.0, 1.7] {
                let spec = ising(4, lambda, pbc, Parity::Even);
                let h = spec.tpo(sym).unwrap().to_dense().unwrap();
                assert!(hermitian_defect(&h) <= 1e-13 * h.norm());
                let want = exact_diag_oracle(&spec, false).unwrap().energies;
                let got = dense_eigs(&h, None);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn parity_sectors_split_the_spectrum() {
    let full = exact_diag_oracle(&ising(8, 0.8, true, Parity::Even), false).unwrap();
    let even = exact_diag_oracle(&ising(8, 0.8, true, Parity::Even), true).unwrap();
    let odd = exact_diag_oracle(&ising(8, 0.8, true, Parity::Odd), true).unwrap();
    assert_eq!(even.basis.len() + odd.basis.len(), 256);
    let mut merged: Vec<f64> = even.energies.iter().chain(&odd.energies).copied().collect();
    merged.sort_by(f64::total_cmp);
    for (a, b) in merged.iter().zip(&full.energies) {
        assert!((a - b).abs() < 1e-11);
    }
    // the dense TPO matrix has no element between the two sectors
    let h = ising(8, 0.8, true, Parity::Even).tpo(true).unwrap().to_dense().unwrap();
    for &i in &even.basis {
        for &j in &odd.basis {
            assert_eq!(h.data()[i + 256 * j], C64::new(0.0, 0.0));
        }
    }
}

#[test]
fn classical_limit() {
    for sector in [Parity::Even, Parity::Odd] {
        let s = exact_diag_oracle(&ising(8, 0.0, true, sector), true).unwrap();
        assert!((s.energies[0] + 8.0).abs() < 1e-12);
    }
}

#[test]
fn periodic_ising_is_translation_invariant() {
    let n = 8;
    let h = ising(n, 0.6, true, Parity::Even).tpo(false).unwrap().to_dense().unwrap();
    let dim = 1 << n;
    let shift = |x: usize| ((x << 1) | (x >> (n - 1))) & (dim - 1);
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let a = h.data()[i + dim * j];
            let b = h.data()[shift(i) + dim * shift(j)];
            worst = worst.max((a - b).norm());
        }
    }
    assert!(worst < 1e-15);
}

#[test]
fn bose_hubbard_tpo_matches_oracle() {
    for (omega, u, beta) in [(0.0, 10.0, 0.0), (0.25, 10.0, 0.0), (0.25, 0.0, 0.7), (0.1, 3.0, 1.5)] {
        let spec = bh(omega, u, beta);
        let h = spec.tpo(true).unwrap().to_dense().unwrap();
        assert!(hermitian_defect(&h) <= 1e-13 * h.norm());
        let s = exact_diag_oracle(&spec, true).unwrap();
        assert_eq!(s.basis.len(), 10);
        let got = dense_eigs(&h, Some(&s.basis));
        for (a, b) in got.iter().zip(&s.energies) {
            assert!((a - b).abs() < 1e-12, "{omega} {u}: {a} vs {b}");
        }
        // unsymmetric assembly agrees element by element
        let plain = spec.tpo(false).unwrap().to_dense().unwrap();
        assert!(plain.max_abs_diff(&h) < 1e-14);
    }
}

#[test]
fn flux_is_periodic() {
    let a = exact_diag_oracle(&bh(0.3, 2.0, 0.5), true).unwrap();
    let b = exact_diag_oracle(&bh(4.3, 2.0, 0.5), true).unwrap();
    for (x, y) in a.energies.iter().zip(&b.energies) {
        assert!((x - y).abs() < 1e-11);
    }
}

#[test]
fn repulsive_atomic_limit() {
    let mut spec = bh(0.0, 4.0, 0.0);
    if let ModelSpec::BoseHubbard(s) = &mut spec {
        s.t = 0.0;
    }
    let s = exact_diag_oracle(&spec, true).unwrap();
    assert!(s.energies[0].abs() < 1e-14);
}

#[test]
fn models_fit_the_cut_budget() {
    for n in [8, 16] {
        let spec = ising(n, 1.0, true, Parity::Even);
        let net = spec.initial_network(4, 1, true).unwrap();
        spec.tpo(true).unwrap().check_network(&net).unwrap();
    }
    let spec = ModelSpec::BoseHubbard(BoseHubbardSpec {
        n: 8,
        n_b: 3,
        d: 3,
        t: 1.0,
        u: 2.0,
        beta: 0.0,
        s_b: 0,
        omega: 0.1,
        pbc: true,
    });
    let net = spec.initial_network(6, 2, true).unwrap();
    spec.tpo(true).unwrap().check_network(&net).unwrap();
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(ising(6, 1.0, true, Parity::Even).validate().is_err());
    assert!(ising(2, 1.0, true, Parity::Even).validate().is_err());
    let mut s = bh(0.0, 1.0, 0.0);
    if let ModelSpec::BoseHubbard(b) = &mut s {
        b.n_b = 9;
    }
    assert!(s.validate().is_err());
    assert!(bh(0.0, 1.0, 0.0).selector(false).is_err());
    assert!(matches!(
        exact_diag_oracle(&ising(16, 1.0, true, Parity::Even), true),
        Err(TnError::CapExceeded { .. })
    ));
}
