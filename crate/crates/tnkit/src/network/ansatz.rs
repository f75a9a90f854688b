//! Randomized symmetric initial states and product states.

use super::{Geometry, LinkKind, Network};
use crate::dense::DenseTensor;
use crate::error::{Result, TnError};
use crate::symm::{cleanup_link, fused_link, Dir, Qn, SymLink, SymTensor};
use crate::C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct AnsatzOptions {
    pub bond_dim: usize,
    /// Optional upper bound on every virtual link, intersected in.
    pub max_link: Option<SymLink>,
    pub seed: u64,
    /// Remove one index per reduction step (default). When false, the
    /// largest sector of the link is halved instead.
    pub single_index: bool,
}

impl AnsatzOptions {
    pub fn new(bond_dim: usize, seed: u64) -> AnsatzOptions {
        AnsatzOptions {
            bond_dim,
            max_link: None,
            seed,
            single_index: true,
        }
    }
}

struct Builder<'a> {
    geom: &'a Geometry,
    dirs: Vec<Vec<Dir>>,
    ends: Vec<Vec<(usize, usize)>>,
    links: Vec<SymLink>,
}

impl Builder<'_> {
    fn others(&self, q: usize, skip: usize) -> Vec<(&SymLink, Dir)> {
        self.geom.node_links[q]
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != skip)
            .map(|(p, &l)| (&self.links[l], self.dirs[q][p]))
            .collect()
    }

    /// Cleans link `l` against both of its nodes. Returns whether it changed.
    fn clean(&mut self, l: usize) -> Result<bool> {
        let (a, pa) = self.ends[l][0];
        let (b, pb) = self.ends[l][1];
        let new = cleanup_link(
            &self.links[l],
            self.dirs[a][pa],
            &self.others(a, pa),
            &self.others(b, pb),
        )?;
        let changed = new != self.links[l];
        self.links[l] = new;
        Ok(changed)
    }

    /// Cleans until nothing changes; fails if a link empties.
    fn clean_all(&mut self) -> Result<()> {
        let virt: Vec<usize> = (0..self.links.len())
            .filter(|&l| self.geom.kinds[l] == LinkKind::Virtual)
            .collect();
        loop {
            let mut any = false;
            for &l in &virt {
                any |= self.clean(l)?;
                if self.links[l].is_empty() {
                    return Err(TnError::Network(format!("link {l} has no admissible sector")));
                }
            }
            if !any {
                return Ok(());
            }
        }
    }
}

fn cap_link(l: &SymLink, cap: usize) -> SymLink {
    SymLink::new(
        l.group(),
        l.sectors().iter().map(|&(q, d)| (q, d.min(cap))).collect(),
    )
    .expect("capping keeps a valid link")
}

fn check_inputs(geom: &Geometry, phys: &[SymLink]) -> Result<()> {
    if phys.len() != geom.num_sites() {
        return Err(TnError::Network(format!(
            "{} physical links for {} sites",
            phys.len(),
            geom.num_sites()
        )));
    }
    Ok(())
}

fn initial_links(geom: &Geometry, phys: &[SymLink], selector: &SymLink) -> Result<Vec<SymLink>> {
    let g = phys[0].group();
    Ok(geom
        .kinds
        .iter()
        .map(|k| match k {
            LinkKind::Physical { site } => phys[*site].clone(),
            LinkKind::Selector => selector.clone(),
            LinkKind::Virtual => SymLink::new(g, vec![]).unwrap(),
        })
        .collect())
}

impl Network {
    /// Random covariant state: virtual links from outward-in fusion, cleaned
    /// from the center out, then reduced one random index at a time until
    /// every link fits `bond_dim`; tensors get every possible match filled
    /// with complex Gaussian entries. The result is in unitary gauge at the
    /// root and normalized.
    pub fn random_ansatz(
        geom: Geometry,
        phys: &[SymLink],
        selector: &SymLink,
        opts: &AnsatzOptions,
    ) -> Result<Network> {
        if opts.bond_dim < 1 {
            return Err(TnError::InvalidRange("bond dimension below 1".into()));
        }
        check_inputs(&geom, phys)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let d = opts.bond_dim;
        let links = initial_links(&geom, phys, selector)?;
        let dirs = geom.directions();
        let ends = geom.ends();
        let root = geom.root();
        let parent = geom.parents(root);
        let mut b = Builder {
            geom: &geom,
            dirs,
            ends,
            links,
        };
        // outward-in fusion, from the leaves toward the root
        let mut order = vec![root];
        let mut i = 0;
        while i < order.len() {
            let a = order[i];
            for (q, p) in parent.iter().enumerate() {
                if p.map(|x| x.0) == Some(a) {
                    order.push(q);
                }
            }
            i += 1;
        }
        for &q in order.iter().rev() {
            let Some((_, up)) = parent[q] else { continue };
            let pu = geom.node_links[q].iter().position(|&x| x == up).unwrap();
            let mut rep = fused_link(&b.others(q, pu), Dir::In)?;
            if let Some(m) = &opts.max_link {
                rep = rep.intersect(m)?;
            }
            b.links[up] = cap_link(&rep, d);
        }
        b.clean_all()?;
        // random reductions
        let virt: Vec<usize> = (0..b.links.len())
            .filter(|&l| geom.kinds[l] == LinkKind::Virtual)
            .collect();
        let mut failures = 0usize;
        loop {
            let big: Vec<usize> = virt.iter().copied().filter(|&l| b.links[l].dim() > d).collect();
            if big.is_empty() {
                break;
            }
            let l = big[rng.random_range(0..big.len())];
            let link = &b.links[l];
            let mut sectors = link.sectors().to_vec();
            if opts.single_index {
                let (q, _) = link.sector_of(rng.random_range(0..link.dim())).unwrap();
                for s in sectors.iter_mut() {
                    if s.0 == q {
                        s.1 -= 1;
                    }
                }
            } else {
                let k = (0..sectors.len()).max_by_key(|&i| sectors[i].1).unwrap();
                let excess = link.dim() - d;
                sectors[k].1 -= (sectors[k].1 / 2).max(1).min(excess);
            }
            let saved = b.links.clone();
            b.links[l] = SymLink::new(link.group(), sectors)?;
            if b.links[l].is_empty() || b.clean_all().is_err() {
                b.links = saved;
                failures += 1;
                if failures > 1000 {
                    return Err(TnError::Network(
                        "random reduction cannot fit the bond dimension without emptying a link".into(),
                    ));
                }
            }
        }
        let mut virt_map = BTreeMap::new();
        for &l in &virt {
            virt_map.insert(l, b.links[l].clone());
        }
        Self::random_with_links_rng(geom, phys, selector, &virt_map, &mut rng)
    }

    /// Random state on prescribed virtual links (cleaned first).
    pub fn random_with_links(
        geom: Geometry,
        phys: &[SymLink],
        selector: &SymLink,
        virt: &BTreeMap<usize, SymLink>,
        seed: u64,
    ) -> Result<Network> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with_links_rng(geom, phys, selector, virt, &mut rng)
    }

    fn random_with_links_rng(
        geom: Geometry,
        phys: &[SymLink],
        selector: &SymLink,
        virt: &BTreeMap<usize, SymLink>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Network> {
        check_inputs(&geom, phys)?;
        let mut links = initial_links(&geom, phys, selector)?;
        for (&l, s) in virt {
            links[l] = s.clone();
        }
        let dirs = geom.directions();
        let mut b = Builder {
            geom: &geom,
            dirs,
            ends: geom.ends(),
            links,
        };
        b.clean_all()?;
        let mut tensors = Vec::with_capacity(geom.num_nodes());
        for q in 0..geom.num_nodes() {
            let ls: Vec<SymLink> = geom.node_links[q].iter().map(|&l| b.links[l].clone()).collect();
            let t = SymTensor::random(ls, b.dirs[q].clone(), rng)?;
            if t.num_blocks() == 0 {
                return Err(TnError::Network(format!("node {q} admits no symmetric block")));
            }
            tensors.push(t);
        }
        let mut net = Network::new(geom, tensors)?;
        net.install_unitary_gauge(net.root)?;
        net.normalize()?;
        Ok(net)
    }

    /// Product state from one local vector per site. Each vector lives in a
    /// single sector `q` of its physical link and has that sector's
    /// degeneracy as length. The selector is set to the total charge.
    pub fn product_state(geom: Geometry, phys: &[SymLink], states: &[(Qn, Vec<C64>)]) -> Result<Network> {
        check_inputs(&geom, phys)?;
        if states.len() != phys.len() {
            return Err(TnError::Network("one local state per site is required".into()));
        }
        let g = phys[0].group();
        for (s, (q, v)) in states.iter().enumerate() {
            if phys[s].deg(*q) != v.len() {
                return Err(TnError::Network(format!("site {s}: local state does not fit sector {q:?}")));
            }
        }
        let dirs = geom.directions();
        let root = geom.root();
        let parent = geom.parents(root);
        let mut labels: Vec<Option<Qn>> = vec![None; geom.kinds.len()];
        for (l, k) in geom.kinds.iter().enumerate() {
            if let LinkKind::Physical { site } = k {
                labels[l] = Some(states[*site].0);
            }
        }
        // resolve up-links bottom-up; repeat until every virtual link is known
        let sel = geom.kinds.iter().position(|k| *k == LinkKind::Selector);
        let mut pending = true;
        while pending {
            pending = false;
            for q in 0..geom.num_nodes() {
                let Some((_, up)) = parent[q] else { continue };
                if labels[up].is_some() {
                    continue;
                }
                let mut c = g.identity();
                let mut ready = true;
                for (p, &l) in geom.node_links[q].iter().enumerate() {
                    if l == up {
                        continue;
                    }
                    match labels[l] {
                        Some(x) => c = g.fuse(c, g.charge(x, dirs[q][p])),
                        None => ready = false,
                    }
                }
                if ready {
                    labels[up] = Some(g.invert(c));
                } else {
                    pending = true;
                }
            }
        }
        if let Some(sl) = sel {
            let mut c = g.identity();
            for (p, &l) in geom.node_links[root].iter().enumerate() {
                if l != sl {
                    c = g.fuse(c, g.charge(labels[l].unwrap(), dirs[root][p]));
                }
            }
            labels[sl] = Some(g.invert(c));
        }
        let mut tensors = vec![];
        for q in 0..geom.num_nodes() {
            let mut ls = vec![];
            let mut key = vec![];
            let mut block = DenseTensor::scalar(C64::new(1.0, 0.0));
            for &l in &geom.node_links[q] {
                let lab = labels[l].unwrap();
                key.push(lab);
                match geom.kinds[l] {
                    LinkKind::Physical { site } => {
                        ls.push(phys[site].clone());
                        let v = DenseTensor::new(vec![states[site].1.len()], states[site].1.clone())?;
                        block = block.contract(&v, &[])?;
                    }
                    LinkKind::Selector => {
                        ls.push(SymLink::new(g, vec![(lab, 1)])?);
                        block = block.contract(&DenseTensor::scalar(C64::new(1.0, 0.0)).reshape(&[1])?, &[])?;
                    }
                    LinkKind::Virtual => {
                        ls.push(SymLink::new(g, vec![(lab, 1)])?);
                        block = block.contract(&DenseTensor::scalar(C64::new(1.0, 0.0)).reshape(&[1])?, &[])?;
                    }
                }
            }
            tensors.push(SymTensor::from_blocks(ls, dirs[q].clone(), vec![(key, block)])?);
        }
        let mut net = Network::new(geom, tensors)?;
        net.install_unitary_gauge(net.root)?;
        Ok(net)
    }
}
