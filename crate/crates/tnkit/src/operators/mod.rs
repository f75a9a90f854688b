//! Hamiltonians as tensor product operators (TPOs) and their renormalization
//! along a tree network.
//!
//! A term is a product of local operators on distinct sites. Each operator
//! is a symmetric tensor `[out, in, tpo...]` with `out` pointing `In` and
//! `in` pointing `Out`, so it contracts with a physical link of a state
//! tensor and leaves a physical link in its place. Operators of one term are
//! joined by small auxiliary links identified by per-term TPO ids; each id
//! occurs exactly twice, once per direction.

mod env;

pub use env::{EffectiveOp, Environment, Frame, LinkOps, Projector, Slot};

use crate::dense::DenseTensor;
use crate::error::{Result, TnError};
use crate::network::Network;
use crate::symm::{Dir, SymLink, SymTensor};
use crate::C64;
use std::collections::BTreeMap;

/// Largest Hilbert space dimension materialized by [`Tpo::to_dense`].
pub const DENSE_CAP: usize = 1 << 12;

/// TPO links per local operator.
pub const MAX_TPO_LINKS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOp {
    pub site: usize,
    pub op: SymTensor,
    /// TPO id of each operator link after `[out, in]`.
    pub tpo: Vec<usize>,
}

impl LocalOp {
    pub fn new(site: usize, op: SymTensor, tpo: Vec<usize>) -> LocalOp {
        LocalOp { site, op, tpo }
    }

    /// Invariant single-site operator from a dense matrix in the physical
    /// basis.
    pub fn from_matrix(site: usize, phys: &SymLink, m: &DenseTensor) -> Result<LocalOp> {
        let op = SymTensor::from_dense(vec![phys.clone(), phys.clone()], vec![Dir::In, Dir::Out], m, 1e-14)?;
        Ok(LocalOp::new(site, op, vec![]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub ops: Vec<LocalOp>,
}

impl Term {
    pub fn sites(&self) -> Vec<usize> {
        self.ops.iter().map(|o| o.site).collect()
    }

    /// TPO ids with the sites of the two operators they join.
    fn bonds(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut b: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for o in &self.ops {
            for &id in &o.tpo {
                b.entry(id).or_default().push(o.site);
            }
        }
        b
    }

    /// Dense operator on the term's support, links `[out_1, in_1, out_2,
    /// in_2, ...]` in the order of `ops`.
    fn dense_support(&self) -> Result<DenseTensor> {
        // (dense tensor, open TPO ids after the physical pairs)
        let first = &self.ops[0];
        let mut acc = first.op.downgrade();
        let mut open: Vec<usize> = first.tpo.clone();
        let mut nphys = 2;
        for o in &self.ops[1..] {
            let d = o.op.downgrade();
            let mut pairs = vec![];
            for (j, id) in o.tpo.iter().enumerate() {
                if let Some(k) = open.iter().position(|x| x == id) {
                    pairs.push((nphys + k, 2 + j));
                }
            }
            let next_open: Vec<usize> = open
                .iter()
                .filter(|id| !o.tpo.contains(id))
                .copied()
                .chain(o.tpo.iter().filter(|id| !open.contains(id)).copied())
                .collect();
            let c = acc.contract(&d, &pairs)?;
            // free links: acc phys, acc open remaining, new phys, new open remaining
            let a_rem = open.len() - pairs.len();
            let mut order: Vec<usize> = (0..nphys).collect();
            let new_phys = nphys + a_rem;
            order.push(new_phys);
            order.push(new_phys + 1);
            order.extend(nphys..nphys + a_rem);
            order.extend(new_phys + 2..c.rank());
            acc = c.permute(&crate::dense::positions_of(&order))?;
            nphys += 2;
            open = next_open;
        }
        if !open.is_empty() {
            return Err(TnError::Operator("term leaves TPO links open".into()));
        }
        Ok(acc)
    }
}

/// Sum of terms over a fixed set of physical links.
#[derive(Clone, Debug, PartialEq)]
pub struct Tpo {
    phys: Vec<SymLink>,
    terms: Vec<Term>,
    cut_budget: usize,
}

impl Tpo {
    pub fn new(phys: Vec<SymLink>) -> Tpo {
        Tpo {
            phys,
            terms: vec![],
            cut_budget: 2,
        }
    }

    /// Maximal number of TPO links any bipartition may cut (default 2).
    pub fn with_cut_budget(mut self, budget: usize) -> Tpo {
        self.cut_budget = budget;
        self
    }

    pub fn cut_budget(&self) -> usize {
        self.cut_budget
    }

    pub fn num_sites(&self) -> usize {
        self.phys.len()
    }

    pub fn phys(&self) -> &[SymLink] {
        &self.phys
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn add_term(&mut self, ops: Vec<LocalOp>) -> Result<()> {
        let t = Term { ops };
        self.validate_term(&t)?;
        self.terms.push(t);
        Ok(())
    }

    /// Adds `c * m` on one site.
    pub fn add_local(&mut self, site: usize, c: f64, m: &DenseTensor) -> Result<()> {
        let phys = self
            .phys
            .get(site)
            .ok_or_else(|| TnError::Operator(format!("site {site} out of range")))?
            .clone();
        let op = LocalOp::from_matrix(site, &phys, &m.scale(C64::new(c, 0.0)))?;
        self.add_term(vec![op])
    }

    fn validate_term(&self, t: &Term) -> Result<()> {
        if t.ops.is_empty() {
            return Err(TnError::Operator("empty term".into()));
        }
        let mut seen = vec![false; self.phys.len()];
        for o in &t.ops {
            let s = o.site;
            if s >= self.phys.len() {
                return Err(TnError::Operator(format!("site {s} out of range")));
            }
            if seen[s] {
                return Err(TnError::Operator(format!("two operators on site {s} in one term")));
            }
            seen[s] = true;
            if o.op.rank() != 2 + o.tpo.len() {
                return Err(TnError::Operator(format!(
                    "operator on site {s} has rank {} for {} TPO ids",
                    o.op.rank(),
                    o.tpo.len()
                )));
            }
            if o.tpo.len() > MAX_TPO_LINKS {
                return Err(TnError::Operator(format!(
                    "operator on site {s} carries {} TPO links, at most {MAX_TPO_LINKS} allowed",
                    o.tpo.len()
                )));
            }
            if o.op.link(0) != &self.phys[s] || o.op.link(1) != &self.phys[s] {
                return Err(TnError::Operator(format!("operator on site {s} does not match the physical link")));
            }
            if o.op.dir(0) != Dir::In || o.op.dir(1) != Dir::Out {
                return Err(TnError::Operator(format!("operator on site {s} must be [out: In, in: Out, ...]")));
            }
        }
        // every TPO id joins exactly two operators through matching links
        let mut ends: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, o) in t.ops.iter().enumerate() {
            for (j, &id) in o.tpo.iter().enumerate() {
                ends.entry(id).or_default().push((i, 2 + j));
            }
        }
        for (id, e) in &ends {
            if e.len() != 2 {
                return Err(TnError::Operator(format!("TPO id {id} occurs {} times", e.len())));
            }
            let (a, b) = (&t.ops[e[0].0].op, &t.ops[e[1].0].op);
            if a.link(e[0].1) != b.link(e[1].1) || a.dir(e[0].1) == b.dir(e[1].1) {
                return Err(TnError::Operator(format!("TPO id {id}: links must agree with opposite directions")));
            }
            if e[0].0 == e[1].0 {
                return Err(TnError::Operator(format!("TPO id {id} loops on one operator")));
            }
        }
        // connected, so a partially contracted term always leaves a TPO link open
        let n = t.ops.len();
        let mut comp: Vec<usize> = (0..n).collect();
        fn root(c: &mut [usize], mut i: usize) -> usize {
            while c[i] != i {
                c[i] = c[c[i]];
                i = c[i];
            }
            i
        }
        for e in ends.values() {
            let (a, b) = (root(&mut comp, e[0].0), root(&mut comp, e[1].0));
            comp[a] = b;
        }
        let r0 = root(&mut comp, 0);
        if (0..n).any(|i| root(&mut comp, i) != r0) {
            return Err(TnError::Operator("term operators are not connected by TPO links".into()));
        }
        Ok(())
    }

    /// TPO links cut by the bipartition behind each link of `net`, summed
    /// over terms.
    pub fn cut_counts(&self, net: &Network) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for l in 0..net.num_links() {
            let behind = net.subtree_sites(l);
            let mut inside = vec![false; self.phys.len()];
            for &s in &behind {
                inside[s] = true;
            }
            let mut n = 0;
            for t in &self.terms {
                for sites in t.bonds().values() {
                    if inside[sites[0]] != inside[sites[1]] {
                        n += 1;
                    }
                }
            }
            out.push((l, n));
        }
        out
    }

    /// Checks that the TPO fits `net`: same physical links and no
    /// bipartition cutting more TPO links than the budget.
    pub fn check_network(&self, net: &Network) -> Result<()> {
        if net.num_sites() != self.phys.len() {
            return Err(TnError::Operator(format!(
                "operator on {} sites, network on {}",
                self.phys.len(),
                net.num_sites()
            )));
        }
        for s in 0..self.phys.len() {
            let (q, p) = net.site_position(s).unwrap();
            if net.tensor(q).link(p) != &self.phys[s] {
                return Err(TnError::Operator(format!("site {s}: physical link differs from the network")));
            }
        }
        if let Some((l, n)) = self.cut_counts(net).into_iter().find(|&(_, n)| n > self.cut_budget) {
            return Err(TnError::Operator(format!(
                "link {l} cuts {n} TPO links, budget {}; {}",
                self.cut_budget,
                self.diagnostics(net)
            )));
        }
        Ok(())
    }

    /// One JSON object per line: each term with its support and TPO link
    /// dimensions, then the cut count of every link.
    pub fn diagnostics(&self, net: &Network) -> String {
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let dims: Vec<String> = t
                .ops
                .iter()
                .flat_map(|o| (0..o.tpo.len()).map(move |j| (o, j)))
                .filter(|(o, j)| o.op.dir(2 + j) == Dir::Out)
                .map(|(o, j)| format!("{{\"id\":{},\"dim\":{}}}", o.tpo[j], o.op.link(2 + j).dim()))
                .collect();
            s.push_str(&format!(
                "{{\"term\":{i},\"sites\":{:?},\"tpo\":[{}]}}\n",
                t.sites(),
                dims.join(",")
            ));
        }
        for (l, n) in self.cut_counts(net) {
            s.push_str(&format!("{{\"link\":{l},\"cut\":{n}}}\n"));
        }
        s
    }

    /// Full matrix of the operator, site 0 fastest, as a `[rows, cols]`
    /// dense tensor. Fails above [`DENSE_CAP`].
    pub fn to_dense(&self) -> Result<DenseTensor> {
        let dims: Vec<usize> = self.phys.iter().map(|l| l.dim()).collect();
        let total = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .unwrap_or(usize::MAX);
        if total > DENSE_CAP {
            return Err(TnError::CapExceeded { size: total, cap: DENSE_CAP });
        }
        let mut strides = vec![1usize; dims.len()];
        for s in 1..dims.len() {
            strides[s] = strides[s - 1] * dims[s - 1];
        }
        let mut h = DenseTensor::zeros(&[total, total]);
        for t in &self.terms {
            let op = t.dense_support()?;
            let sites = t.sites();
            let sup: Vec<usize> = sites.iter().map(|&s| dims[s]).collect();
            let nsup: usize = sup.iter().product();
            for col in 0..total {
                let ins: Vec<usize> = sites.iter().map(|&s| (col / strides[s]) % dims[s]).collect();
                let base = col - sites.iter().zip(&ins).map(|(&s, &i)| i * strides[s]).sum::<usize>();
                for outs_flat in 0..nsup {
                    let mut rem = outs_flat;
                    let mut row = base;
                    let mut idx = Vec::with_capacity(2 * sites.len());
                    for (k, &s) in sites.iter().enumerate() {
                        let o = rem % sup[k];
                        rem /= sup[k];
                        row += o * strides[s];
                        idx.push(o);
                        idx.push(ins[k]);
                    }
                    let off = crate::dense::offset0(&idx, op.dims());
                    let v = op.data()[off];
                    if v != C64::new(0.0, 0.0) {
                        h.data_mut()[row + total * col] += v;
                    }
                }
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests;
