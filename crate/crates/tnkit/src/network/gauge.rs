//! Unitary and canonical gauges.

use super::{Network, Weights};
use crate::dense::{SingularSpectrum, Truncation};
use crate::error::{Result, TnError};
use crate::symm::{Dir, SymTensor};
use crate::C64;
use std::collections::BTreeMap;

/// QR of `t` with link `pos` as the column index. `Q` keeps the layout and
/// directions of `t`; `R` has links `[new, old]` where `new` points like the
/// neighbour's end of the link.
pub fn qr_at(t: &SymTensor, pos: usize) -> Result<(SymTensor, SymTensor)> {
    let last = t.rank() - 1;
    let d = t.dir(pos);
    let m = t.move_link(pos, last)?;
    let (mut q, mut r) = m.qr(last)?;
    if d == Dir::In {
        q = q.invert_link(last);
        r = r.invert_link(0);
    }
    Ok((q.move_link(last, pos)?, r))
}

/// SVD counterpart of [`qr_at`]; the weights are keyed by the labels of the
/// new link.
pub fn svd_at(
    t: &SymTensor,
    pos: usize,
    trunc: &Truncation,
) -> Result<(SymTensor, Weights, SymTensor, SingularSpectrum)> {
    let last = t.rank() - 1;
    let d = t.dir(pos);
    let m = t.move_link(pos, last)?;
    let s = m.svd(last, trunc)?;
    let (mut u, mut vh, mut w) = (s.u, s.vh, s.values);
    if d == Dir::In {
        u = u.invert_link(last);
        vh = vh.invert_link(0);
        let g = t.group();
        w = w.into_iter().map(|(q, v)| (g.invert(q), v)).collect();
    }
    Ok((u.move_link(last, pos)?, w, vh, s.spectrum))
}

/// Multiplies a `[new, old]` matrix into link `pos` of `t`.
pub fn absorb(t: &SymTensor, pos: usize, m: &SymTensor) -> Result<SymTensor> {
    m.contract(t, &[(1, pos)])?.move_link(0, pos)
}

/// `t · m†` on link `pos` for a `[new, old]` matrix `m`.
fn absorb_dagger(t: &SymTensor, pos: usize, m: &SymTensor) -> Result<SymTensor> {
    let last = t.rank() - 1;
    t.contract(&m.dagger(), &[(pos, 1)])?.move_link(last, pos)
}

fn invert_weights(w: &Weights, guard: f64) -> Weights {
    w.iter()
        .map(|(q, v)| {
            (
                *q,
                v.iter()
                    .map(|&x| if x > guard { 1.0 / x } else { 0.0 })
                    .collect(),
            )
        })
        .collect()
}

/// Result of cutting one link in canonical gauge.
#[derive(Clone, Debug)]
pub struct SchmidtCut {
    pub kept_norm: f64,
    pub error: f64,
}

impl Network {
    /// Makes every tensor except `c` an isometry toward `c`, processing nodes
    /// from the outermost level inwards.
    pub fn install_unitary_gauge(&mut self, c: usize) -> Result<()> {
        let lv = self.levels(c);
        for level in lv.iter().skip(1).rev() {
            for &q in level {
                let next = self.path(q, c)[1];
                self.qr_step(q, next)?;
            }
        }
        self.center = Some(c);
        self.weights = None;
        Ok(())
    }

    /// QR on `q` toward the adjacent node `next`, pushing `R` into `next`.
    fn qr_step(&mut self, q: usize, next: usize) -> Result<()> {
        let l = self.link_between(q, next).expect("adjacent nodes");
        let pq = self.position(q, l).unwrap();
        let pn = self.position(next, l).unwrap();
        let (qt, r) = qr_at(&self.tensors[q], pq)?;
        let nt = absorb(&self.tensors[next], pn, &r)?;
        self.tensors[q] = qt;
        self.tensors[next] = nt;
        Ok(())
    }

    /// Moves the unitary center along the path to `c2`.
    pub fn move_center(&mut self, c2: usize) -> Result<()> {
        let c1 = self
            .center
            .ok_or_else(|| TnError::Network("moving the center needs a unitary gauge".into()))?;
        if c1 == c2 {
            return Ok(());
        }
        let path = self.path(c1, c2);
        for w in path.windows(2) {
            self.qr_step(w[0], w[1])?;
        }
        self.center = Some(c2);
        self.weights = None;
        Ok(())
    }

    /// Moves the center by one step, passing `T[q]`'s non-isometric part
    /// through the shared link. Returns the link id.
    pub fn step_center(&mut self, to: usize) -> Result<usize> {
        let c = self
            .center
            .ok_or_else(|| TnError::Network("stepping the center needs a unitary gauge".into()))?;
        let l = self
            .link_between(c, to)
            .ok_or_else(|| TnError::Network(format!("nodes {c} and {to} are not adjacent")))?;
        self.qr_step(c, to)?;
        self.center = Some(to);
        self.weights = None;
        Ok(l)
    }

    /// `⟨Ψ|Ψ⟩` from the center tensor (unitary gauge) or by contraction.
    pub fn norm_sqr(&self) -> Result<f64> {
        match self.center {
            Some(c) => Ok(self.tensors[c].norm_sqr()),
            None => Ok(self.scalar_product(self)?.re),
        }
    }

    /// Rescales the state to unit norm; the gauge is installed at the root
    /// if missing.
    pub fn normalize(&mut self) -> Result<f64> {
        if self.center.is_none() {
            self.install_unitary_gauge(self.root)?;
        }
        let c = self.center.unwrap();
        let n = self.tensors[c].norm();
        if n == 0.0 {
            return Err(TnError::Network("cannot normalize a zero state".into()));
        }
        self.tensors[c].scale_mut(C64::new(1.0 / n, 0.0));
        if let Some(w) = self.weights.as_mut() {
            for lw in w.values_mut() {
                for v in lw.values_mut() {
                    for x in v.iter_mut() {
                        *x /= n;
                    }
                }
            }
        }
        Ok(n)
    }

    /// Largest `‖Q†Q − 1‖` over all non-center tensors, each taken over its
    /// bipartition toward the center.
    pub fn isometry_residual(&self) -> Result<f64> {
        let c = self
            .center
            .ok_or_else(|| TnError::Network("no unitary gauge installed".into()))?;
        let mut worst = 0.0f64;
        for q in 0..self.num_nodes() {
            if q == c {
                continue;
            }
            let next = self.path(q, c)[1];
            let l = self.link_between(q, next).unwrap();
            let p = self.position(q, l).unwrap();
            worst = worst.max(isometry_defect(&self.tensors[q], p)?);
        }
        Ok(worst)
    }

    /// Installs the canonical gauge: unitary gauge at the root, then from the
    /// root outwards an SVD of the local center matrix over each child link.
    /// Values below `rel_cut` (relative to the sector maximum of the whole
    /// link) are dropped, shrinking links to their Schmidt ranks.
    pub fn install_canonical_gauge(&mut self, rel_cut: f64) -> Result<()> {
        let root = self.root;
        self.install_unitary_gauge(root)?;
        let trunc = Truncation {
            max_dim: None,
            rel_threshold: rel_cut,
        };
        let mut weights: BTreeMap<usize, Weights> = BTreeMap::new();
        let order = self.order.clone();
        for q in order {
            let mut cmat = match self.parent[q] {
                None => self.tensors[q].clone(),
                Some((_, pl)) => {
                    let pp = self.position(q, pl).unwrap();
                    self.tensors[q].scale_link(pp, &weights[&pl])?
                }
            };
            for (child, l) in self.children(q) {
                let p = self.position(q, l).unwrap();
                let pc = self.position(child, l).unwrap();
                let (_, w, vh, _) = svd_at(&cmat, p, &trunc)?;
                cmat = absorb_dagger(&cmat, p, &vh)?;
                self.tensors[q] = absorb_dagger(&self.tensors[q], p, &vh)?;
                self.tensors[child] = absorb(&self.tensors[child], pc, &vh)?;
                weights.insert(l, w);
            }
        }
        self.center = Some(root);
        self.weights = Some(weights);
        Ok(())
    }

    /// Largest isometry defect of the canonical re-isometrization: for every
    /// node and every one of its virtual links `η`, `T·λ_parent / λ_η` must
    /// be an isometry toward `η`.
    pub fn canonical_residual(&self) -> Result<f64> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| TnError::Network("no canonical gauge installed".into()))?;
        let mut worst = 0.0f64;
        for q in 0..self.num_nodes() {
            let base = match self.parent[q] {
                None => self.tensors[q].clone(),
                Some((_, pl)) => self.tensors[q].scale_link(self.position(q, pl).unwrap(), &w[&pl])?,
            };
            for (_, l) in self.neighbors(q) {
                let p = self.position(q, l).unwrap();
                let lw = &w[&l];
                let vmax = lw.values().flatten().fold(0.0f64, |a, &b| a.max(b));
                let t = if self.parent[q].map(|x| x.1) == Some(l) {
                    // T̃ = T[q] itself over the parent link
                    self.tensors[q].clone()
                } else {
                    base.scale_link(p, &invert_weights(lw, 1e-12 * vmax))?
                };
                worst = worst.max(isometry_defect(&t, p)?);
            }
        }
        Ok(worst)
    }

    /// Keeps the `chi` largest Schmidt values on virtual link `l`. The state
    /// is renormalized by the kept norm and the unitary gauge at the root is
    /// restored; stored weights are discarded.
    pub fn schmidt_truncate(&mut self, l: usize, chi: usize) -> Result<SchmidtCut> {
        if chi < 1 {
            return Err(TnError::InvalidRange("bond dimension below 1".into()));
        }
        let w = self
            .weights
            .as_ref()
            .and_then(|w| w.get(&l))
            .ok_or_else(|| TnError::Network("schmidt_truncate needs the canonical gauge".into()))?
            .clone();
        let all: f64 = w.values().flatten().map(|x| x * x).sum();
        let mut flat: Vec<(f64, crate::symm::Qn, usize)> = w
            .iter()
            .flat_map(|(q, v)| v.iter().enumerate().map(move |(i, &x)| (x, *q, i)))
            .collect();
        if flat.len() <= chi {
            return Ok(SchmidtCut {
                kept_norm: all.sqrt(),
                error: 0.0,
            });
        }
        flat.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut kept = chi;
        let last = flat[kept - 1].0;
        while kept < flat.len() && last - flat[kept].0 <= crate::symm::decomp::TIE_TOLERANCE * last {
            kept += 1;
        }
        let mut keep: BTreeMap<crate::symm::Qn, Vec<usize>> = BTreeMap::new();
        for &(_, q, i) in &flat[..kept] {
            keep.entry(q).or_default().push(i);
        }
        for v in keep.values_mut() {
            v.sort();
        }
        let kept_sq: f64 = flat[..kept].iter().map(|x| x.0 * x.0).sum();
        let map = crate::symm::LinkMap {
            sectors: keep.into_iter().collect(),
        };
        for &(q, p) in &self.ends[l].clone() {
            let mut maps = vec![None; self.tensors[q].rank()];
            maps[p] = Some(map.clone());
            self.tensors[q] = self.tensors[q].subtensor_read(&maps)?;
        }
        let root = self.root;
        let scale = (all / kept_sq).sqrt();
        self.weights = None;
        self.install_unitary_gauge(root)?;
        self.tensors[root].scale_mut(C64::new(scale, 0.0));
        Ok(SchmidtCut {
            kept_norm: (kept_sq / all).sqrt(),
            error: (all - kept_sq).max(0.0).sqrt(),
        })
    }
}

/// `max |Q†Q − 1|` with link `pos` as the open index.
pub(crate) fn isometry_defect(t: &SymTensor, pos: usize) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..t.rank()).filter(|&r| r != pos).map(|r| (r, r)).collect();
    let g = t.dagger_contract(t, &pairs)?;
    let id = SymTensor::identity(t.link(pos), g.dir(0));
    let mut diff = g.downgrade();
    diff.axpy(C64::new(-1.0, 0.0), &id.downgrade())?;
    Ok(diff.max_abs())
}
