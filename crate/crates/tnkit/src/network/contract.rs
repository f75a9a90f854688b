//! Whole-network contractions: overlaps and the full amplitudes tensor.

use super::{LinkKind, Network};
use crate::dense::DenseTensor;
use crate::error::{Result, TnError};
use crate::symm::SymTensor;
use crate::C64;

/// Default limit on the number of amplitudes materialized.
pub const AMPLITUDE_CAP: usize = 1 << 20;

impl Network {
    pub(crate) fn same_shape(&self, other: &Network) -> Result<()> {
        if self.geom != other.geom || self.group != other.group {
            return Err(TnError::Network("networks differ in geometry or group".into()));
        }
        for s in 0..self.num_sites() {
            let (a, pa) = self.site_position(s).unwrap();
            let (b, pb) = other.site_position(s).unwrap();
            if self.tensors[a].link(pa) != other.tensors[b].link(pb) {
                return Err(TnError::Network(format!("site {s}: physical links differ")));
            }
        }
        Ok(())
    }

    /// Overlap environment of node `q` toward its parent: `A†·B` over the
    /// subtree below, with links `[A-side, B-side]`.
    pub(crate) fn overlap_env(&self, other: &Network, q: usize, envs: &[Option<SymTensor>]) -> Result<SymTensor> {
        let mut x = other.tensors[q].clone();
        for (child, l) in self.children(q) {
            let p = self.position(q, l).unwrap();
            let e = envs[child].as_ref().expect("children first");
            x = super::absorb(&x, p, e)?;
        }
        let skip = self.parent[q].map(|(_, l)| self.position(q, l).unwrap());
        let pairs: Vec<(usize, usize)> = (0..x.rank()).filter(|&r| Some(r) != skip).map(|r| (r, r)).collect();
        self.tensors[q].dagger_contract(&x, &pairs)
    }

    /// `⟨self|other⟩`, contracting level by level from the leaves.
    pub fn scalar_product(&self, other: &Network) -> Result<C64> {
        self.same_shape(other)?;
        if let (Some(a), Some(b)) = (self.selector(), other.selector()) {
            if self.link(a) != other.link(b) {
                return Ok(C64::new(0.0, 0.0));
            }
        }
        let mut envs: Vec<Option<SymTensor>> = vec![None; self.num_nodes()];
        for &q in self.order.iter().rev() {
            // children come before their parents in reverse BFS order; the
            // two states may differ on virtual links
            let e = self.overlap_env(other, q, &envs)?;
            envs[q] = Some(e);
        }
        let top = envs[self.root].take().unwrap();
        Ok(top.block(&[]).and_then(|b| b.scalar_value()).unwrap_or(C64::new(0.0, 0.0)))
    }

    /// Full amplitudes `Ψ_{i1..iN}` in site order, capped at `cap` entries.
    pub fn amplitudes_capped(&self, cap: usize) -> Result<DenseTensor> {
        let total: usize = (0..self.num_sites())
            .map(|s| {
                let (q, p) = self.site_position(s).unwrap();
                self.tensors[q].link(p).dim()
            })
            .try_fold(1usize, |a, d| a.checked_mul(d))
            .unwrap_or(usize::MAX);
        if total > cap {
            return Err(TnError::CapExceeded { size: total, cap });
        }
        // each partial result: (dense tensor, site of each leading link), up link last
        let mut parts: Vec<Option<(DenseTensor, Vec<usize>)>> = vec![None; self.num_nodes()];
        for &q in self.order.iter().rev() {
            let t = self.tensors[q].downgrade();
            let links = &self.geom.node_links[q];
            let mut cur = t;
            // what each open index of `cur` stands for
            let mut tags: Vec<Tag> = links
                .iter()
                .map(|&l| match self.geom.kinds[l] {
                    LinkKind::Physical { site } => Tag::Site(site),
                    LinkKind::Selector => Tag::Selector,
                    LinkKind::Virtual => Tag::Link(l),
                })
                .collect();
            for (child, l) in self.children(q) {
                let (ct, csites) = parts[child].take().unwrap();
                let p = tags.iter().position(|t| *t == Tag::Link(l)).unwrap();
                let cl = ct.rank() - 1;
                // child's open indices come first
                cur = ct.contract(&cur, &[(cl, p)])?;
                let mut nt: Vec<Tag> = csites.iter().map(|&s| Tag::Site(s)).collect();
                nt.extend(tags.iter().enumerate().filter(|(i, _)| *i != p).map(|(_, t)| *t));
                tags = nt;
            }
            // move the parent link last
            if let Some((_, pl)) = self.parent[q] {
                let p = tags.iter().position(|t| *t == Tag::Link(pl)).unwrap();
                let n = tags.len();
                let mut order: Vec<usize> = (0..n).filter(|&i| i != p).collect();
                order.push(p);
                cur = cur.permute(&crate::dense::positions_of(&order))?;
                let sites = order[..n - 1]
                    .iter()
                    .map(|&i| match tags[i] {
                        Tag::Site(s) => s,
                        _ => unreachable!("only sites stay open below the root"),
                    })
                    .collect();
                parts[q] = Some((cur, sites));
            } else {
                // root: drop the selector (dimension 1) and sort sites
                let keep: Vec<usize> = (0..tags.len()).filter(|&i| tags[i] != Tag::Selector).collect();
                let mut by_site = keep.clone();
                by_site.sort_by_key(|&i| match tags[i] {
                    Tag::Site(s) => s,
                    _ => unreachable!(),
                });
                let mut order = by_site;
                order.extend((0..tags.len()).filter(|&i| tags[i] == Tag::Selector));
                cur = cur.permute(&crate::dense::positions_of(&order))?;
                let dims: Vec<usize> = cur.dims()[..keep.len()].to_vec();
                cur = cur.reshape(&dims)?;
                return Ok(cur);
            }
        }
        Err(TnError::Network("empty network".into()))
    }

    pub fn amplitudes(&self) -> Result<DenseTensor> {
        self.amplitudes_capped(AMPLITUDE_CAP)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Site(usize),
    Link(usize),
    Selector,
}
