//! Blockwise QR, SVD and exponentials of symmetric tensors, and link clean-up.

use super::group::{Dir, Qn};
use super::link::{fused_link, SymLink};
use super::tensor::{Key, SymTensor};
use crate::dense::{DenseTensor, SingularSpectrum, Truncation};
use crate::error::{Result, TnError};
use crate::kernel;
use crate::C64;
use std::collections::BTreeMap;

/// Relative gap below which two singular values count as one multiplet.
pub const TIE_TOLERANCE: f64 = 1e-12;

struct Part {
    combo: Vec<Qn>,
    dims: Vec<usize>,
    offset: usize,
    size: usize,
}

/// One sector of the matricized tensor: all row combinations fusing to the
/// same row charge, stacked against all matching column combinations.
struct Sector {
    /// Label of the new link on the row-side factor.
    label: Qn,
    rows: Vec<Part>,
    cols: Vec<Part>,
    m: usize,
    n: usize,
    data: Vec<C64>,
}

fn parts(list: BTreeMap<Vec<Qn>, Vec<usize>>) -> (Vec<Part>, usize) {
    let mut out = Vec::with_capacity(list.len());
    let mut off = 0;
    for (combo, dims) in list {
        let size = dims.iter().product();
        out.push(Part {
            combo,
            dims,
            offset: off,
            size,
        });
        off += size;
    }
    (out, off)
}

fn matricize(t: &SymTensor, split: usize) -> Result<Vec<Sector>> {
    if split == 0 || split >= t.rank() {
        return Err(TnError::InvalidRange(format!(
            "split {split} of a rank-{} tensor",
            t.rank()
        )));
    }
    let g = t.group();
    type Combos = BTreeMap<Vec<Qn>, Vec<usize>>;
    let mut by_charge: BTreeMap<Qn, (Combos, Combos)> = BTreeMap::new();
    for (k, b) in t.blocks() {
        let mut charge = g.identity();
        for r in 0..split {
            charge = g.fuse(charge, g.charge(k[r], t.dir(r)));
        }
        let e = by_charge.entry(charge).or_default();
        e.0.insert(k[..split].to_vec(), b.dims()[..split].to_vec());
        e.1.insert(k[split..].to_vec(), b.dims()[split..].to_vec());
    }
    let mut sectors = Vec::with_capacity(by_charge.len());
    for (charge, (rl, cl)) in by_charge {
        let (rows, m) = parts(rl);
        let (cols, n) = parts(cl);
        let mut data = vec![C64::new(0.0, 0.0); m * n];
        for rp in &rows {
            for cp in &cols {
                let key: Key = rp.combo.iter().chain(&cp.combo).copied().collect();
                let Some(b) = t.block(&key) else { continue };
                let bd = b.data();
                for j in 0..cp.size {
                    let dst = rp.offset + (cp.offset + j) * m;
                    data[dst..dst + rp.size].copy_from_slice(&bd[j * rp.size..(j + 1) * rp.size]);
                }
            }
        }
        sectors.push(Sector {
            label: g.label_for(g.invert(charge), Dir::Out),
            rows,
            cols,
            m,
            n,
            data,
        });
    }
    Ok(sectors)
}

fn row_factor(t: &SymTensor, split: usize, link: &SymLink, secs: &[(&Sector, Vec<C64>, usize)]) -> Result<SymTensor> {
    let mut links = t.links()[..split].to_vec();
    links.push(link.clone());
    let mut dirs = t.dirs()[..split].to_vec();
    dirs.push(Dir::Out);
    let mut out = SymTensor::zeros(links, dirs)?;
    for (s, u, k) in secs {
        for rp in &s.rows {
            let mut data = Vec::with_capacity(rp.size * k);
            for j in 0..*k {
                let o = rp.offset + j * s.m;
                data.extend_from_slice(&u[o..o + rp.size]);
            }
            let mut dims = rp.dims.clone();
            dims.push(*k);
            let mut key = rp.combo.clone();
            key.push(s.label);
            out.insert_unchecked(key, DenseTensor::new(dims, data)?);
        }
    }
    out.debug_validate();
    Ok(out)
}

fn col_factor(t: &SymTensor, split: usize, link: &SymLink, secs: &[(&Sector, Vec<C64>, usize)]) -> Result<SymTensor> {
    let mut links = vec![link.clone()];
    links.extend_from_slice(&t.links()[split..]);
    let mut dirs = vec![Dir::In];
    dirs.extend_from_slice(&t.dirs()[split..]);
    let mut out = SymTensor::zeros(links, dirs)?;
    for (s, v, k) in secs {
        for cp in &s.cols {
            let off = cp.offset * k;
            let data = v[off..off + cp.size * k].to_vec();
            let mut dims = vec![*k];
            dims.extend_from_slice(&cp.dims);
            let mut key = vec![s.label];
            key.extend_from_slice(&cp.combo);
            let b = DenseTensor::new(dims, data)?;
            if b.max_abs() > 0.0 {
                out.insert_unchecked(key, b);
            }
        }
    }
    out.debug_validate();
    Ok(out)
}

/// Result of a blockwise SVD `T = U · diag(λ) · Vh`. The new link sits last
/// on `u` (outgoing) and first on `vh` (incoming).
#[derive(Clone, Debug)]
pub struct SymSvd {
    pub u: SymTensor,
    pub vh: SymTensor,
    /// Kept singular values per sector of the new link, descending.
    pub values: BTreeMap<Qn, Vec<f64>>,
    /// Kept values of all sectors merged and sorted, with the discarded weight.
    pub spectrum: SingularSpectrum,
    pub link: SymLink,
}

impl SymSvd {
    /// `λ·Vh`, the column factor with the singular values absorbed.
    pub fn s_vh(&self) -> SymTensor {
        self.vh.scale_link(0, &self.values).expect("values cover the link")
    }

    /// `U·λ`.
    pub fn u_s(&self) -> SymTensor {
        let r = self.u.rank() - 1;
        self.u.scale_link(r, &self.values).expect("values cover the link")
    }
}

impl SymTensor {
    /// Blockwise QR over rows `links[..split]`. The new link is the
    /// intersection of the fused row and column representations, restricted
    /// to sectors actually present.
    pub fn qr(&self, split: usize) -> Result<(SymTensor, SymTensor)> {
        let sectors = matricize(self, split)?;
        if sectors.is_empty() {
            return Err(TnError::Symmetry("QR of a tensor without blocks".into()));
        }
        let mut qs = Vec::with_capacity(sectors.len());
        let mut rs = Vec::with_capacity(sectors.len());
        for s in &sectors {
            let (q, r, k) = kernel::qr(&s.data, s.m, s.n);
            qs.push((s, q, k));
            rs.push((s, r, k));
        }
        let link = SymLink::new(self.group(), qs.iter().map(|(s, _, k)| (s.label, *k)).collect())?;
        let q = row_factor(self, split, &link, &qs)?;
        let r = col_factor(self, split, &link, &rs)?;
        Ok((q, r))
    }

    /// Blockwise SVD with truncation applied to the merged spectrum of all
    /// sectors. Values tied with the last kept one are kept as well.
    pub fn svd(&self, split: usize, trunc: &Truncation) -> Result<SymSvd> {
        let sectors = matricize(self, split)?;
        if sectors.is_empty() {
            return Err(TnError::Symmetry("SVD of a tensor without blocks".into()));
        }
        let mut facs = Vec::with_capacity(sectors.len());
        let mut all: Vec<(f64, usize)> = vec![];
        for (i, s) in sectors.iter().enumerate() {
            let (u, sv, vh) = kernel::svd(&s.data, s.m, s.n)?;
            all.extend(sv.iter().map(|&v| (v, i)));
            facs.push((u, sv, vh));
        }
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        let sorted: Vec<f64> = all.iter().map(|x| x.0).collect();
        let mut kept = trunc.kept(&sorted);
        if kept > 0 {
            let last = sorted[kept - 1];
            while kept < sorted.len() && last - sorted[kept] <= TIE_TOLERANCE * last && sorted[kept] > crate::dense::ZERO_CUT {
                kept += 1;
            }
        }
        let mut per = vec![0usize; sectors.len()];
        for &(_, i) in &all[..kept] {
            per[i] += 1;
        }
        let mut us = vec![];
        let mut vs = vec![];
        let mut values = BTreeMap::new();
        for (i, s) in sectors.iter().enumerate() {
            let k = per[i];
            if k == 0 {
                continue;
            }
            let (u, sv, vh) = &facs[i];
            let kfull = sv.len();
            us.push((s, u[..s.m * k].to_vec(), k));
            let mut v = Vec::with_capacity(k * s.n);
            for c in 0..s.n {
                v.extend_from_slice(&vh[c * kfull..c * kfull + k]);
            }
            vs.push((s, v, k));
            values.insert(s.label, sv[..k].to_vec());
        }
        let link = SymLink::new(self.group(), values.iter().map(|(q, v)| (*q, v.len())).collect())?;
        let u = row_factor(self, split, &link, &us)?;
        let vh = col_factor(self, split, &link, &vs)?;
        Ok(SymSvd {
            u,
            vh,
            values,
            spectrum: SingularSpectrum::from_split(&sorted, kept),
            link,
        })
    }

    /// `exp(A)` of a square operator whose rows are `links[..split]` and
    /// columns the rest, computed sector by sector. Sectors without blocks
    /// get identity blocks.
    pub fn expm(&self, split: usize) -> Result<SymTensor> {
        if 2 * split != self.rank() || self.links()[..split] != self.links()[split..] {
            return Err(TnError::Symmetry("exponential needs a square operator".into()));
        }
        for r in 0..split {
            if self.dir(r) == self.dir(split + r) {
                return Err(TnError::Symmetry("row and column directions must be opposite".into()));
            }
        }
        let g = self.group();
        // Every row combination, including the absent ones.
        let row_links = &self.links()[..split];
        let mut by_charge: BTreeMap<Qn, BTreeMap<Vec<Qn>, Vec<usize>>> = BTreeMap::new();
        let counts: Vec<usize> = row_links.iter().map(|l| l.num_sectors()).collect();
        let total: usize = counts.iter().product();
        let mut idx = vec![0usize; split];
        for _ in 0..total {
            let combo: Vec<Qn> = idx.iter().zip(row_links).map(|(&i, l)| l.sectors()[i].0).collect();
            let dims: Vec<usize> = idx.iter().zip(row_links).map(|(&i, l)| l.sectors()[i].1).collect();
            let mut c = g.identity();
            for r in 0..split {
                c = g.fuse(c, g.charge(combo[r], self.dir(r)));
            }
            by_charge.entry(c).or_default().insert(combo, dims);
            for (r, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < counts[r] {
                    break;
                }
                *i = 0;
            }
        }
        let mut out = SymTensor::zeros(self.links().to_vec(), self.dirs().to_vec())?;
        for (_, combos) in by_charge {
            let (ps, m) = parts(combos);
            let mut a = vec![C64::new(0.0, 0.0); m * m];
            for rp in &ps {
                for cp in &ps {
                    let key: Key = rp.combo.iter().chain(&cp.combo).copied().collect();
                    let Some(b) = self.block(&key) else { continue };
                    for j in 0..cp.size {
                        let dst = rp.offset + (cp.offset + j) * m;
                        a[dst..dst + rp.size].copy_from_slice(&b.data()[j * rp.size..(j + 1) * rp.size]);
                    }
                }
            }
            let e = kernel::expm(&a, m);
            for rp in &ps {
                for cp in &ps {
                    let mut data = Vec::with_capacity(rp.size * cp.size);
                    for j in 0..cp.size {
                        let o = rp.offset + (cp.offset + j) * m;
                        data.extend_from_slice(&e[o..o + rp.size]);
                    }
                    let b = DenseTensor::new(rp.dims.iter().chain(&cp.dims).copied().collect(), data)?;
                    if b.max_abs() > 0.0 {
                        let key: Key = rp.combo.iter().chain(&cp.combo).copied().collect();
                        out.insert_unchecked(key, b);
                    }
                }
            }
        }
        out.debug_validate();
        Ok(out)
    }
}

/// Restricts `link` (direction `dir` as seen from node `q`) to the sectors
/// that can actually couple: those present in the fused representation of
/// the other links at `q` and in that of the other links at `q'`, both
/// expressed in the labels `link` carries at `q`.
pub fn cleanup_link(
    link: &SymLink,
    dir: Dir,
    others_q: &[(&SymLink, Dir)],
    others_q2: &[(&SymLink, Dir)],
) -> Result<SymLink> {
    let mut out = link.clone();
    if !others_q.is_empty() {
        // charge(ℓ, dir) ⊕ fused(others at q) = 0
        out = out.intersect(&fused_link(others_q, dir.flip())?)?;
    }
    if !others_q2.is_empty() {
        // at q' the link appears with the opposite direction
        out = out.intersect(&fused_link(others_q2, dir)?)?;
    }
    Ok(out)
}
