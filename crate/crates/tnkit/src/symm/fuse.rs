//! Fusing adjacent symmetric links into one and splitting them back.

use super::group::{Dir, Group, Qn};
use super::link::SymLink;
use super::tensor::{extract_mid, inscribe_mid, Key, SymTensor};
use crate::dense::DenseTensor;
use crate::error::{Result, TnError};
use std::collections::{BTreeMap, HashMap};

/// Where one combination of sectors lands on the fused link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collision {
    pub combo: Vec<Qn>,
    pub fused: Qn,
    /// Collision index `α` among combinations with the same fused label.
    pub alpha: usize,
    /// Degeneracy offset `Δ` inside the fused sector.
    pub offset: usize,
    pub size: usize,
}

/// Bookkeeping for fusing links `links` (directions `dirs`) into one link of
/// direction `fused_dir`. The sparse fuse tensor itself is never built.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseNode {
    group: Group,
    links: Vec<SymLink>,
    dirs: Vec<Dir>,
    fused_dir: Dir,
    fused: SymLink,
    table: Vec<Collision>,
    index: HashMap<Vec<Qn>, usize>,
    by_label: BTreeMap<Qn, Vec<usize>>,
}

impl FuseNode {
    pub fn new(links: &[SymLink], dirs: &[Dir], fused_dir: Dir) -> Result<FuseNode> {
        if links.is_empty() {
            return Err(TnError::InvalidRange("fusing zero links".into()));
        }
        if links.len() != dirs.len() {
            return Err(TnError::RankMismatch {
                expected: links.len(),
                got: dirs.len(),
            });
        }
        let g = links[0].group();
        if links.iter().any(|l| l.group() != g) {
            return Err(TnError::Symmetry("fusing links of different groups".into()));
        }
        let counts: Vec<usize> = links.iter().map(|l| l.num_sectors()).collect();
        let total: usize = counts.iter().product();
        let mut table = Vec::with_capacity(total);
        let mut next_offset: BTreeMap<Qn, (usize, usize)> = BTreeMap::new();
        let mut idx = vec![0usize; links.len()];
        for _ in 0..total {
            let combo: Vec<Qn> = idx
                .iter()
                .zip(links)
                .map(|(&i, l)| l.sectors()[i].0)
                .collect();
            let size: usize = idx.iter().zip(links).map(|(&i, l)| l.sectors()[i].1).product();
            let mut charge = g.identity();
            for (q, d) in combo.iter().zip(dirs) {
                charge = g.fuse(charge, g.charge(*q, *d));
            }
            // the fused link must carry the same total charge
            let fused = g.label_for(charge, fused_dir);
            let e = next_offset.entry(fused).or_insert((0, 0));
            table.push(Collision {
                combo,
                fused,
                alpha: e.0,
                offset: e.1,
                size,
            });
            e.0 += 1;
            e.1 += size;
            for (r, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < counts[r] {
                    break;
                }
                *i = 0;
            }
        }
        let fused = SymLink::new(g, next_offset.iter().map(|(q, (_, d))| (*q, *d)).collect())?;
        let index = table
            .iter()
            .enumerate()
            .map(|(i, c)| (c.combo.clone(), i))
            .collect();
        let mut by_label: BTreeMap<Qn, Vec<usize>> = BTreeMap::new();
        for (i, c) in table.iter().enumerate() {
            by_label.entry(c.fused).or_default().push(i);
        }
        Ok(FuseNode {
            group: g,
            links: links.to_vec(),
            dirs: dirs.to_vec(),
            fused_dir,
            fused,
            table,
            index,
            by_label,
        })
    }

    pub fn fused(&self) -> &SymLink {
        &self.fused
    }
    pub fn fused_dir(&self) -> Dir {
        self.fused_dir
    }
    pub fn links(&self) -> &[SymLink] {
        &self.links
    }
    pub fn dirs(&self) -> &[Dir] {
        &self.dirs
    }
    pub fn table(&self) -> &[Collision] {
        &self.table
    }

    pub fn collision(&self, combo: &[Qn]) -> Option<&Collision> {
        self.index.get(combo).map(|&i| &self.table[i])
    }

    /// For each dense-fused index (column-major over the original downgraded
    /// links), the index on the downgraded fused link.
    pub fn dense_map(&self) -> Vec<usize> {
        let dims: Vec<usize> = self.links.iter().map(|l| l.dim()).collect();
        let total: usize = dims.iter().product();
        let mut out = vec![0; total];
        let mut pos = 0;
        crate::dense::for_each_index(&dims, |ix| {
            let mut combo = Vec::with_capacity(ix.len());
            let mut local = 0;
            let mut stride = 1;
            for (r, &i) in ix.iter().enumerate() {
                let (q, a) = self.links[r].sector_of(i).unwrap();
                combo.push(q);
                local += a * stride;
                stride *= self.links[r].deg(q);
            }
            let c = self.collision(&combo).unwrap();
            out[pos] = self.fused.dense_offset(c.fused).unwrap() + c.offset + local;
            pos += 1;
        });
        out
    }
}

impl SymTensor {
    /// Fuses links `k..k+node.links().len()` into one link at position `k`.
    pub fn fuse_with(&self, node: &FuseNode, k: usize) -> Result<SymTensor> {
        let m = node.links.len();
        if k + m > self.rank() {
            return Err(TnError::InvalidRange(format!("fuse range {k}..{}", k + m)));
        }
        if self.links()[k..k + m] != node.links[..] || self.dirs()[k..k + m] != node.dirs[..] {
            return Err(TnError::Symmetry("tensor links do not match the fuse node".into()));
        }
        let mut links = self.links()[..k].to_vec();
        links.push(node.fused.clone());
        links.extend_from_slice(&self.links()[k + m..]);
        let mut dirs = self.dirs()[..k].to_vec();
        dirs.push(node.fused_dir);
        dirs.extend_from_slice(&self.dirs()[k + m..]);
        let mut out = SymTensor::zeros(links, dirs)?;
        for (key, b) in self.blocks() {
            let c = node.collision(&key[k..k + m]).expect("combination in table");
            let mut nk: Key = key[..k].to_vec();
            nk.push(c.fused);
            nk.extend_from_slice(&key[k + m..]);
            let pre: usize = b.dims()[..k].iter().product();
            let post: usize = b.dims()[k + m..].iter().product();
            let dmid = node.fused.deg(c.fused);
            let mut ndims = b.dims()[..k].to_vec();
            ndims.push(dmid);
            ndims.extend_from_slice(&b.dims()[k + m..]);
            let mut target = match out.remove_block(&nk) {
                Some(t) => t,
                None => DenseTensor::zeros(&ndims),
            };
            inscribe_mid(target.data_mut(), b.data(), pre, c.size, post, dmid, c.offset);
            out.insert_unchecked(nk, target);
        }
        out.debug_validate();
        Ok(out)
    }

    /// Builds the node for links `k..=m` and fuses them.
    pub fn fuse(&self, k: usize, m: usize, fused_dir: Dir) -> Result<(SymTensor, FuseNode)> {
        if k > m || m >= self.rank() {
            return Err(TnError::InvalidRange(format!("fuse range {k}..={m}")));
        }
        let node = FuseNode::new(&self.links()[k..=m], &self.dirs()[k..=m], fused_dir)?;
        let t = self.fuse_with(&node, k)?;
        Ok((t, node))
    }

    /// Splits the link at `pos` back into the node's original links.
    pub fn split_with(&self, node: &FuseNode, pos: usize) -> Result<SymTensor> {
        if pos >= self.rank() || self.link(pos) != &node.fused || self.dir(pos) != node.fused_dir {
            return Err(TnError::Symmetry("link does not match the fuse node".into()));
        }
        let mut links = self.links()[..pos].to_vec();
        links.extend_from_slice(&node.links);
        links.extend_from_slice(&self.links()[pos + 1..]);
        let mut dirs = self.dirs()[..pos].to_vec();
        dirs.extend_from_slice(&node.dirs);
        dirs.extend_from_slice(&self.dirs()[pos + 1..]);
        let mut out = SymTensor::zeros(links, dirs)?;
        for (key, b) in self.blocks() {
            let pre: usize = b.dims()[..pos].iter().product();
            let post: usize = b.dims()[pos + 1..].iter().product();
            let dmid = b.dims()[pos];
            for &ci in &node.by_label[&key[pos]] {
                let c = &node.table[ci];
                let data = extract_mid(b.data(), pre, c.size, post, dmid, c.offset);
                if data.iter().all(|v| v.norm() < crate::dense::ZERO_CUT) {
                    continue;
                }
                let mut nk: Key = key[..pos].to_vec();
                nk.extend_from_slice(&c.combo);
                nk.extend_from_slice(&key[pos + 1..]);
                let mut ndims = b.dims()[..pos].to_vec();
                ndims.extend(c.combo.iter().zip(&node.links).map(|(q, l)| l.deg(*q)));
                ndims.extend_from_slice(&b.dims()[pos + 1..]);
                out.insert_unchecked(nk, DenseTensor::new(ndims, data)?);
            }
        }
        out.debug_validate();
        Ok(out)
    }
}
