//! Block-sparse tensors invariant under an Abelian group.

use super::group::{Dir, Group, Qn};
use super::link::SymLink;
use crate::dense::{DenseTensor, ZERO_CUT};
use crate::error::{Result, TnError};
use crate::C64;
use rand::Rng;
use std::collections::{BTreeMap, HashMap};

/// One quantum number per link.
pub type Key = Vec<Qn>;

/// Symmetric tensor: links with directions and a sorted map from matches to
/// degeneracy blocks. Absent matches are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor {
    group: Group,
    links: Vec<SymLink>,
    dirs: Vec<Dir>,
    blocks: BTreeMap<Key, DenseTensor>,
}

/// Degeneracy-index selection on one link: for each kept sector, the indices
/// (into the big link's sector) that make up the small link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkMap {
    pub sectors: Vec<(Qn, Vec<usize>)>,
}

impl LinkMap {
    /// Keeps everything.
    pub fn full(l: &SymLink) -> LinkMap {
        LinkMap {
            sectors: l.sectors().iter().map(|&(q, d)| (q, (0..d).collect())).collect(),
        }
    }

    /// Places `small` at the start of every sector of a larger link.
    pub fn leading(small: &SymLink) -> LinkMap {
        Self::full(small)
    }

    /// Places `small` after the first `offsets(q)` indices of each sector.
    pub fn shifted(small: &SymLink, offset: impl Fn(Qn) -> usize) -> LinkMap {
        LinkMap {
            sectors: small
                .sectors()
                .iter()
                .map(|&(q, d)| {
                    let o = offset(q);
                    (q, (o..o + d).collect())
                })
                .collect(),
        }
    }

    fn get(&self, q: Qn) -> Option<&Vec<usize>> {
        self.sectors
            .binary_search_by(|s| s.0.cmp(&q))
            .ok()
            .map(|i| &self.sectors[i].1)
    }

    /// The small link described by this map.
    pub fn link(&self, group: Group) -> Result<SymLink> {
        SymLink::new(
            group,
            self.sectors.iter().map(|(q, v)| (*q, v.len())).collect(),
        )
    }
}

fn check_same_group(links: &[SymLink]) -> Result<Group> {
    let g = links.first().map(|l| l.group()).unwrap_or_else(Group::trivial);
    if links.iter().any(|l| l.group() != g) {
        return Err(TnError::Symmetry("links carry different groups".into()));
    }
    Ok(g)
}

/// All quantum-number tuples on `links` that fuse to the identity.
pub fn possible_matches(links: &[SymLink], dirs: &[Dir]) -> Vec<Key> {
    let n = links.len();
    let mut out = vec![];
    if n == 0 {
        out.push(vec![]);
        return out;
    }
    if links.iter().any(|l| l.is_empty()) {
        return out;
    }
    let g = links[0].group();
    let mut key = vec![Qn::ZERO; n];
    fn rec(
        r: usize,
        acc: Qn,
        g: Group,
        links: &[SymLink],
        dirs: &[Dir],
        key: &mut Vec<Qn>,
        out: &mut Vec<Key>,
    ) {
        let n = links.len();
        if r == n - 1 {
            let need = g.label_for(g.invert(acc), dirs[r]);
            if links[r].contains(need) {
                key[r] = need;
                out.push(key.clone());
            }
            return;
        }
        for &(q, _) in links[r].sectors() {
            key[r] = q;
            rec(r + 1, g.fuse(acc, g.charge(q, dirs[r])), g, links, dirs, key, out);
        }
    }
    rec(0, g.identity(), g, links, dirs, &mut key, &mut out);
    out.sort();
    out
}

impl SymTensor {
    /// Tensor with no present matches.
    pub fn zeros(links: Vec<SymLink>, dirs: Vec<Dir>) -> Result<SymTensor> {
        if links.len() != dirs.len() {
            return Err(TnError::RankMismatch {
                expected: links.len(),
                got: dirs.len(),
            });
        }
        let group = check_same_group(&links)?;
        Ok(SymTensor {
            group,
            links,
            dirs,
            blocks: BTreeMap::new(),
        })
    }

    /// Validates every entry against the fusion rule and link degeneracies.
    pub fn from_blocks(
        links: Vec<SymLink>,
        dirs: Vec<Dir>,
        blocks: Vec<(Key, DenseTensor)>,
    ) -> Result<SymTensor> {
        let mut t = Self::zeros(links, dirs)?;
        for (k, b) in blocks {
            t.check_block(&k, &b)?;
            if t.blocks.insert(k.clone(), b).is_some() {
                return Err(TnError::Symmetry(format!("duplicate match {k:?}")));
            }
        }
        Ok(t)
    }

    /// Single-component labels for single-factor groups.
    pub fn from_int_blocks(
        links: Vec<SymLink>,
        dirs: Vec<Dir>,
        blocks: Vec<(Vec<i64>, DenseTensor)>,
    ) -> Result<SymTensor> {
        Self::from_blocks(
            links,
            dirs,
            blocks
                .into_iter()
                .map(|(k, b)| (k.into_iter().map(Qn::of).collect(), b))
                .collect(),
        )
    }

    /// Identity map on `link`: links `[link (dir), link (opposite)]`.
    pub fn identity(link: &SymLink, dir: Dir) -> SymTensor {
        let blocks = link
            .sectors()
            .iter()
            .map(|&(q, d)| (vec![q, q], DenseTensor::identity(d)))
            .collect();
        SymTensor {
            group: link.group(),
            links: vec![link.clone(), link.clone()],
            dirs: vec![dir, dir.flip()],
            blocks,
        }
    }

    /// Every possible match present, entries complex Gaussian.
    pub fn random<R: Rng + ?Sized>(links: Vec<SymLink>, dirs: Vec<Dir>, rng: &mut R) -> Result<SymTensor> {
        let mut t = Self::zeros(links, dirs)?;
        for k in possible_matches(&t.links, &t.dirs) {
            let dims = t.block_dims(&k);
            t.blocks.insert(k, DenseTensor::random(&dims, rng));
        }
        Ok(t)
    }

    pub fn random_real<R: Rng + ?Sized>(links: Vec<SymLink>, dirs: Vec<Dir>, rng: &mut R) -> Result<SymTensor> {
        let mut t = Self::zeros(links, dirs)?;
        for k in possible_matches(&t.links, &t.dirs) {
            let dims = t.block_dims(&k);
            t.blocks.insert(k, DenseTensor::random_real(&dims, rng));
        }
        Ok(t)
    }

    /// Every possible match present with zero blocks.
    pub fn zeros_full(links: Vec<SymLink>, dirs: Vec<Dir>) -> Result<SymTensor> {
        let mut t = Self::zeros(links, dirs)?;
        for k in possible_matches(&t.links, &t.dirs) {
            let dims = t.block_dims(&k);
            t.blocks.insert(k, DenseTensor::zeros(&dims));
        }
        Ok(t)
    }

    /// Reads the blocks out of a dense tensor laid out as by
    /// [`downgrade`](Self::downgrade). Fails when entries outside the allowed
    /// blocks exceed `tol`.
    pub fn from_dense(links: Vec<SymLink>, dirs: Vec<Dir>, dense: &DenseTensor, tol: f64) -> Result<SymTensor> {
        let mut t = Self::zeros(links, dirs)?;
        let dims: Vec<usize> = t.links.iter().map(|l| l.dim()).collect();
        if dense.dims() != dims.as_slice() {
            return Err(TnError::DimMismatch(format!(
                "dense dims {:?} vs links {:?}",
                dense.dims(),
                dims
            )));
        }
        let mut covered = 0.0;
        for k in possible_matches(&t.links, &t.dirs) {
            let keep: Vec<Vec<usize>> = k
                .iter()
                .zip(&t.links)
                .map(|(q, l)| {
                    let o = l.dense_offset(*q).unwrap();
                    (o..o + l.deg(*q)).collect()
                })
                .collect();
            let b = dense.subtensor_read(&keep)?;
            covered += b.norm_sqr();
            if b.max_abs() > 0.0 {
                t.blocks.insert(k, b);
            }
        }
        let rest = (dense.norm_sqr() - covered).max(0.0).sqrt();
        if rest > tol {
            return Err(TnError::Symmetry(format!(
                "dense tensor has weight {rest:e} outside the symmetric blocks"
            )));
        }
        Ok(t)
    }

    fn check_block(&self, k: &Key, b: &DenseTensor) -> Result<()> {
        if k.len() != self.rank() {
            return Err(TnError::RankMismatch {
                expected: self.rank(),
                got: k.len(),
            });
        }
        let mut acc = self.group.identity();
        for (r, q) in k.iter().enumerate() {
            self.group.validate(*q)?;
            acc = self.group.fuse(acc, self.group.charge(*q, self.dirs[r]));
        }
        if acc != self.group.identity() {
            return Err(TnError::Symmetry(format!("match {k:?} violates the fusion rule")));
        }
        let dims = self.block_dims(k);
        if b.dims() != dims.as_slice() {
            return Err(TnError::DimMismatch(format!(
                "block {k:?} has dims {:?}, links give {dims:?}",
                b.dims()
            )));
        }
        Ok(())
    }

    /// Debug-build check of fusion rule and block shapes on every match.
    pub fn debug_validate(&self) {
        if cfg!(debug_assertions) {
            for (k, b) in &self.blocks {
                if let Err(e) = self.check_block(k, b) {
                    panic!("invalid symmetric tensor: {e}");
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, b) in &self.blocks {
            self.check_block(k, b)?;
        }
        Ok(())
    }

    pub fn block_dims(&self, k: &[Qn]) -> Vec<usize> {
        k.iter().zip(&self.links).map(|(q, l)| l.deg(*q)).collect()
    }

    pub fn group(&self) -> Group {
        self.group
    }
    pub fn rank(&self) -> usize {
        self.links.len()
    }
    pub fn links(&self) -> &[SymLink] {
        &self.links
    }
    pub fn link(&self, r: usize) -> &SymLink {
        &self.links[r]
    }
    pub fn dirs(&self) -> &[Dir] {
        &self.dirs
    }
    pub fn dir(&self, r: usize) -> Dir {
        self.dirs[r]
    }
    pub fn blocks(&self) -> impl Iterator<Item = (&Key, &DenseTensor)> {
        self.blocks.iter()
    }
    pub fn blocks_mut(&mut self) -> impl Iterator<Item = (&Key, &mut DenseTensor)> {
        self.blocks.iter_mut()
    }
    pub fn block(&self, k: &[Qn]) -> Option<&DenseTensor> {
        self.blocks.get(k)
    }
    pub fn block_int(&self, k: &[i64]) -> Option<&DenseTensor> {
        let key: Key = k.iter().map(|&v| Qn::of(v)).collect();
        self.blocks.get(&key)
    }
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
    pub fn matches(&self) -> Vec<Key> {
        self.blocks.keys().cloned().collect()
    }

    /// Stored element count `Σ_matches ∏ ∂̄`.
    pub fn num_elements(&self) -> usize {
        self.blocks.values().map(|b| b.len()).sum()
    }

    /// Inserts or replaces a block after validation.
    pub fn set_block(&mut self, k: Key, b: DenseTensor) -> Result<()> {
        self.check_block(&k, &b)?;
        self.blocks.insert(k, b);
        Ok(())
    }

    pub fn remove_block(&mut self, k: &[Qn]) -> Option<DenseTensor> {
        self.blocks.remove(k)
    }

    pub(crate) fn insert_unchecked(&mut self, k: Key, b: DenseTensor) {
        self.blocks.insert(k, b);
    }

    /// Adds `b` into the block at `k`, creating it if absent.
    pub(crate) fn accumulate(&mut self, k: Key, b: DenseTensor) {
        match self.blocks.get_mut(&k) {
            Some(x) => {
                for (a, v) in x.data_mut().iter_mut().zip(b.data()) {
                    *a += v;
                }
            }
            None => {
                self.blocks.insert(k, b);
            }
        }
    }

    /// Drops blocks whose largest entry is below `tol`.
    pub fn prune(&mut self, tol: f64) {
        self.blocks.retain(|_, b| b.max_abs() >= tol.max(ZERO_CUT) && b.max_abs() > 0.0);
    }

    pub fn norm_sqr(&self) -> f64 {
        self.blocks.values().map(|b| b.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.values().fold(0.0, |m, b| m.max(b.max_abs()))
    }

    pub fn scale(&self, c: C64) -> SymTensor {
        let mut t = self.clone();
        t.scale_mut(c);
        t
    }

    pub fn scale_mut(&mut self, c: C64) {
        for b in self.blocks.values_mut() {
            b.scale_mut(c);
        }
    }

    pub fn conj(&self) -> SymTensor {
        let mut t = self.clone();
        for b in t.blocks.values_mut() {
            *b = b.conj();
        }
        t
    }

    /// Hermitian conjugate: every direction flipped, labels kept, blocks
    /// conjugated.
    pub fn dagger(&self) -> SymTensor {
        let mut t = self.conj();
        for d in t.dirs.iter_mut() {
            *d = d.flip();
        }
        t
    }

    /// Inverts the representation of link `r`: labels `ℓ → ℓ†`, direction
    /// flipped, blocks untouched.
    pub fn invert_link(&self, r: usize) -> SymTensor {
        let g = self.group;
        let mut links = self.links.clone();
        links[r] = self.links[r].inverted();
        let mut dirs = self.dirs.clone();
        dirs[r] = dirs[r].flip();
        let blocks = self
            .blocks
            .iter()
            .map(|(k, b)| {
                let mut k = k.clone();
                k[r] = g.invert(k[r]);
                (k, b.clone())
            })
            .collect();
        SymTensor {
            group: g,
            links,
            dirs,
            blocks,
        }
    }

    /// Inverts link `r` only if its direction differs from `want`.
    pub fn with_dir(self, r: usize, want: Dir) -> SymTensor {
        if self.dirs[r] == want {
            self
        } else {
            self.invert_link(r)
        }
    }

    /// Moves old link `l` to position `sigma[l]`.
    pub fn permute(&self, sigma: &[usize]) -> Result<SymTensor> {
        let n = self.rank();
        let inv = crate::dense::invert_permutation(sigma)?;
        if sigma.len() != n {
            return Err(TnError::RankMismatch {
                expected: n,
                got: sigma.len(),
            });
        }
        let links = inv.iter().map(|&l| self.links[l].clone()).collect();
        let dirs = inv.iter().map(|&l| self.dirs[l]).collect();
        let mut blocks = BTreeMap::new();
        for (k, b) in &self.blocks {
            let nk: Key = inv.iter().map(|&l| k[l]).collect();
            blocks.insert(nk, b.permute(sigma)?);
        }
        Ok(SymTensor {
            group: self.group,
            links,
            dirs,
            blocks,
        })
    }

    /// Moves link `from` to position `to`, keeping the others in order.
    pub fn move_link(&self, from: usize, to: usize) -> Result<SymTensor> {
        if from == to {
            return Ok(self.clone());
        }
        let n = self.rank();
        let mut order: Vec<usize> = (0..n).filter(|&l| l != from).collect();
        order.insert(to, from);
        self.permute(&crate::dense::positions_of(&order))
    }

    fn same_structure(&self, other: &SymTensor) -> Result<()> {
        if self.links != other.links || self.dirs != other.dirs {
            return Err(TnError::Symmetry("tensors differ in link structure".into()));
        }
        Ok(())
    }

    /// `self += c * other` for identical link structure.
    pub fn axpy(&mut self, c: C64, other: &SymTensor) -> Result<()> {
        self.same_structure(other)?;
        for (k, b) in &other.blocks {
            self.accumulate(k.clone(), b.scale(c));
        }
        Ok(())
    }

    /// `⟨self|other⟩ = Σ conj(self) other` over identical structures.
    pub fn dot(&self, other: &SymTensor) -> Result<C64> {
        self.same_structure(other)?;
        let mut acc = C64::new(0.0, 0.0);
        for (k, b) in &self.blocks {
            if let Some(o) = other.blocks.get(k) {
                acc += b.dot(o);
            }
        }
        Ok(acc)
    }

    /// Dense tensor with each link laid out sector by sector in ascending
    /// label order, degeneracies contiguous.
    pub fn downgrade(&self) -> DenseTensor {
        let dims: Vec<usize> = self.links.iter().map(|l| l.dim()).collect();
        let mut out = DenseTensor::zeros(&dims);
        for (k, b) in &self.blocks {
            let maps: Vec<Vec<usize>> = k
                .iter()
                .zip(&self.links)
                .map(|(q, l)| {
                    let o = l.dense_offset(*q).unwrap();
                    (o..o + l.deg(*q)).collect()
                })
                .collect();
            out.subtensor_assign_mut(b, &maps).expect("block inside links");
        }
        out
    }

    /// Contracts over `(link in self, link in other)` pairs; paired links
    /// must agree and point in opposite directions.
    pub fn contract(&self, other: &SymTensor, pairs: &[(usize, usize)]) -> Result<SymTensor> {
        contract_impl(self, false, other, pairs)
    }

    /// `self† · other` without materializing the conjugate.
    pub fn dagger_contract(&self, other: &SymTensor, pairs: &[(usize, usize)]) -> Result<SymTensor> {
        contract_impl(self, true, other, pairs)
    }

    /// Scales link `r` by per-sector weights.
    pub fn scale_link(&self, r: usize, weights: &BTreeMap<Qn, Vec<f64>>) -> Result<SymTensor> {
        let mut t = self.clone();
        for (k, b) in t.blocks.iter_mut() {
            let w = weights
                .get(&k[r])
                .ok_or_else(|| TnError::Symmetry(format!("no weights for sector {:?}", k[r])))?;
            *b = b.contract_diagonal_real(w, r)?;
        }
        Ok(t)
    }

    /// Blockwise subtensor readout along per-link maps; links without a map
    /// are kept whole.
    pub fn subtensor_read(&self, maps: &[Option<LinkMap>]) -> Result<SymTensor> {
        if maps.len() != self.rank() {
            return Err(TnError::RankMismatch {
                expected: self.rank(),
                got: maps.len(),
            });
        }
        let mut links = Vec::with_capacity(self.rank());
        for (r, m) in maps.iter().enumerate() {
            match m {
                None => links.push(self.links[r].clone()),
                Some(m) => {
                    for (q, idx) in &m.sectors {
                        let d = self.links[r].deg(*q);
                        if d == 0 && !idx.is_empty() {
                            return Err(TnError::Symmetry(format!(
                                "reduction references absent sector {q:?} on link {r}"
                            )));
                        }
                        if let Some(&bad) = idx.iter().find(|&&i| i >= d) {
                            return Err(TnError::IndexOutOfRange { link: r, index: bad, dim: d });
                        }
                    }
                    links.push(m.link(self.group)?);
                }
            }
        }
        let mut out = SymTensor::zeros(links, self.dirs.clone())?;
        'blocks: for (k, b) in &self.blocks {
            let mut keep = Vec::with_capacity(self.rank());
            for (r, q) in k.iter().enumerate() {
                match &maps[r] {
                    None => keep.push((0..b.dims()[r]).collect()),
                    Some(m) => match m.get(*q) {
                        Some(v) if !v.is_empty() => keep.push(v.clone()),
                        _ => continue 'blocks,
                    },
                }
            }
            out.blocks.insert(k.clone(), b.subtensor_read(&keep)?);
        }
        Ok(out)
    }

    /// Writes `s` into `self` at the positions given by `maps`. Matches of
    /// `self` absent from `s` get their mapped region zeroed (and vanish when
    /// the region is the whole block); matches only in `s` are created.
    pub fn subtensor_assign(&self, s: &SymTensor, maps: &[Option<LinkMap>]) -> Result<SymTensor> {
        if maps.len() != self.rank() || s.rank() != self.rank() {
            return Err(TnError::RankMismatch {
                expected: self.rank(),
                got: maps.len(),
            });
        }
        if s.dirs != self.dirs {
            return Err(TnError::Symmetry("direction mismatch in subtensor assignment".into()));
        }
        let full: Vec<LinkMap> = (0..self.rank())
            .map(|r| match &maps[r] {
                Some(m) => m.clone(),
                None => LinkMap::full(&self.links[r]),
            })
            .collect();
        for (r, m) in full.iter().enumerate() {
            if m.link(self.group)? != s.links[r] {
                return Err(TnError::DimMismatch(format!("map on link {r} does not describe the source link")));
            }
            for (q, idx) in &m.sectors {
                let d = self.links[r].deg(*q);
                if let Some(&bad) = idx.iter().find(|&&i| i >= d) {
                    return Err(TnError::IndexOutOfRange { link: r, index: bad, dim: d });
                }
            }
        }
        let region = |k: &Key| -> Option<Vec<Vec<usize>>> {
            let mut v = Vec::with_capacity(k.len());
            for (r, q) in k.iter().enumerate() {
                match full[r].get(*q) {
                    Some(x) if !x.is_empty() => v.push(x.clone()),
                    _ => return None,
                }
            }
            Some(v)
        };
        let mut out = self.clone();
        // matches of T: overwrite with S or zero-fill
        let keys: Vec<Key> = out.blocks.keys().cloned().collect();
        for k in keys {
            let Some(reg) = region(&k) else { continue };
            let covers_all = reg
                .iter()
                .zip(out.block_dims(&k))
                .all(|(r, d)| r.len() == d);
            match s.blocks.get(&k) {
                Some(sb) => {
                    out.blocks.get_mut(&k).unwrap().subtensor_assign_mut(sb, &reg)?;
                }
                None if covers_all => {
                    out.blocks.remove(&k);
                }
                None => {
                    let dims: Vec<usize> = reg.iter().map(|r| r.len()).collect();
                    out.blocks
                        .get_mut(&k)
                        .unwrap()
                        .subtensor_assign_mut(&DenseTensor::zeros(&dims), &reg)?;
                }
            }
        }
        // matches only in S
        for (k, sb) in &s.blocks {
            if out.blocks.contains_key(k) || self.blocks.contains_key(k) {
                continue;
            }
            let reg = region(k).expect("source match inside maps");
            let mut b = DenseTensor::zeros(&out.block_dims(k));
            b.subtensor_assign_mut(sb, &reg)?;
            out.blocks.insert(k.clone(), b);
        }
        Ok(out)
    }

    /// Embeds `self` into larger links: each link `r` of the result is
    /// `links[r]`, and the block of each match is written at the per-sector
    /// offsets given by `offsets[r]`.
    pub fn embed(&self, links: Vec<SymLink>, offsets: &[BTreeMap<Qn, usize>]) -> Result<SymTensor> {
        let mut out = SymTensor::zeros(links, self.dirs.clone())?;
        for (k, b) in &self.blocks {
            let dims = out.block_dims(k);
            let mut reg = Vec::with_capacity(k.len());
            for (r, q) in k.iter().enumerate() {
                let o = offsets[r].get(q).copied().unwrap_or(0);
                if o + b.dims()[r] > dims[r] {
                    return Err(TnError::DimMismatch(format!("embedding overflows link {r}")));
                }
                reg.push((o..o + b.dims()[r]).collect::<Vec<_>>());
            }
            let mut nb = out.blocks.remove(k).unwrap_or_else(|| DenseTensor::zeros(&dims));
            nb.subtensor_assign_mut(b, &reg)?;
            out.blocks.insert(k.clone(), nb);
        }
        Ok(out)
    }

    /// Record: `TNS1`, group, links with directions, match count, then per
    /// match the labels and the dense block record.
    pub fn write_record(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(b"TNS1");
        self.group.write(out);
        out.push(self.rank() as u8);
        for (l, d) in self.links.iter().zip(&self.dirs) {
            l.write(out, *d);
        }
        crate::io::put_u64(out, self.blocks.len() as u64);
        let nf = self.group.factors().len();
        for (k, b) in &self.blocks {
            for q in k {
                for &c in &q.0[..nf] {
                    crate::io::put_i64(out, c);
                }
            }
            b.write_record(out);
        }
    }

    pub fn to_record(&self) -> Vec<u8> {
        let mut v = vec![];
        self.write_record(&mut v);
        v
    }

    pub fn from_record(bytes: &[u8]) -> Result<(SymTensor, usize)> {
        let mut r = crate::io::Reader::new(bytes);
        let t = Self::read_record(&mut r)?;
        Ok((t, r.position()))
    }

    pub(crate) fn read_record(r: &mut crate::io::Reader<'_>) -> Result<SymTensor> {
        r.expect_magic(b"TNS1")?;
        let group = Group::read(r)?;
        let rank = r.u8()? as usize;
        let mut links = Vec::with_capacity(rank);
        let mut dirs = Vec::with_capacity(rank);
        for _ in 0..rank {
            let (l, d) = SymLink::read(r, group)?;
            links.push(l);
            dirs.push(d);
        }
        let nb = r.u64()? as usize;
        let nf = group.factors().len();
        let mut blocks = Vec::with_capacity(nb);
        for _ in 0..nb {
            let mut k = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut q = Qn::ZERO;
                for c in q.0.iter_mut().take(nf) {
                    *c = r.i64()?;
                }
                k.push(q);
            }
            let b = DenseTensor::read_record(r)?;
            blocks.push((k, b));
        }
        SymTensor::from_blocks(links, dirs, blocks)
    }

    /// Copies block data into a flat vector following `layout`.
    pub fn to_flat(&self, layout: &BlockLayout) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); layout.len];
        for (i, k) in layout.keys.iter().enumerate() {
            if let Some(b) = self.blocks.get(k) {
                let o = layout.offsets[i];
                v[o..o + b.len()].copy_from_slice(b.data());
            }
        }
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat); all layout blocks become present.
    pub fn from_flat(layout: &BlockLayout, v: &[C64]) -> SymTensor {
        let mut blocks = BTreeMap::new();
        for (i, k) in layout.keys.iter().enumerate() {
            let o = layout.offsets[i];
            let n: usize = layout.dims[i].iter().product();
            blocks.insert(
                k.clone(),
                DenseTensor::new(layout.dims[i].clone(), v[o..o + n].to_vec()).unwrap(),
            );
        }
        SymTensor {
            group: layout.group,
            links: layout.links.clone(),
            dirs: layout.dirs.clone(),
            blocks,
        }
    }
}

/// Flat vector layout over every possible match of a link structure.
#[derive(Clone, Debug)]
pub struct BlockLayout {
    pub group: Group,
    pub links: Vec<SymLink>,
    pub dirs: Vec<Dir>,
    pub keys: Vec<Key>,
    pub dims: Vec<Vec<usize>>,
    pub offsets: Vec<usize>,
    pub len: usize,
}

impl BlockLayout {
    pub fn new(links: &[SymLink], dirs: &[Dir]) -> Result<BlockLayout> {
        let group = check_same_group(links)?;
        let keys = possible_matches(links, dirs);
        let mut dims = Vec::with_capacity(keys.len());
        let mut offsets = Vec::with_capacity(keys.len());
        let mut len = 0;
        for k in &keys {
            let d: Vec<usize> = k.iter().zip(links).map(|(q, l)| l.deg(*q)).collect();
            offsets.push(len);
            len += d.iter().product::<usize>();
            dims.push(d);
        }
        Ok(BlockLayout {
            group,
            links: links.to_vec(),
            dirs: dirs.to_vec(),
            keys,
            dims,
            offsets,
            len,
        })
    }

    pub fn of(t: &SymTensor) -> Result<BlockLayout> {
        Self::new(&t.links, &t.dirs)
    }
}

fn contract_impl(
    a: &SymTensor,
    dagger_a: bool,
    b: &SymTensor,
    pairs: &[(usize, usize)],
) -> Result<SymTensor> {
    if a.group != b.group {
        return Err(TnError::Symmetry("contracting tensors of different groups".into()));
    }
    let a_dir = |r: usize| if dagger_a { a.dirs[r].flip() } else { a.dirs[r] };
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(x, y) in pairs {
        if x >= a.rank() || y >= b.rank() || used_a[x] || used_b[y] {
            return Err(TnError::InvalidRange(format!("contraction pair ({x},{y})")));
        }
        used_a[x] = true;
        used_b[y] = true;
        if a.links[x] != b.links[y] {
            return Err(TnError::Symmetry(format!(
                "pair ({x},{y}): links differ {:?} vs {:?}",
                a.links[x].sectors(),
                b.links[y].sectors()
            )));
        }
        if a_dir(x) == b.dirs[y] {
            return Err(TnError::Symmetry(format!("pair ({x},{y}): directions are not opposite")));
        }
    }
    let a_free: Vec<usize> = (0..a.rank()).filter(|&l| !used_a[l]).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|&l| !used_b[l]).collect();
    let links: Vec<SymLink> = a_free
        .iter()
        .map(|&l| a.links[l].clone())
        .chain(b_free.iter().map(|&l| b.links[l].clone()))
        .collect();
    let dirs: Vec<Dir> = a_free
        .iter()
        .map(|&l| a_dir(l))
        .chain(b_free.iter().map(|&l| b.dirs[l]))
        .collect();
    let mut out = SymTensor::zeros(links, dirs)?;

    let mut by_shared: HashMap<Vec<Qn>, Vec<(&Key, &DenseTensor)>> = HashMap::new();
    for (k, blk) in &b.blocks {
        let sk: Vec<Qn> = pairs.iter().map(|p| k[p.1]).collect();
        by_shared.entry(sk).or_default().push((k, blk));
    }
    for (ka, ba) in &a.blocks {
        let sk: Vec<Qn> = pairs.iter().map(|p| ka[p.0]).collect();
        let Some(list) = by_shared.get(&sk) else { continue };
        for (kb, bb) in list {
            let key: Key = a_free
                .iter()
                .map(|&l| ka[l])
                .chain(b_free.iter().map(|&l| kb[l]))
                .collect();
            let c = if dagger_a {
                ba.contract_conj(bb, pairs)?
            } else {
                ba.contract(bb, pairs)?
            };
            out.accumulate(key, c);
        }
    }
    out.blocks.retain(|_, blk| blk.max_abs() >= ZERO_CUT);
    out.debug_validate();
    Ok(out)
}

/// Copies `src` (shape `pre x mid x post`) into `dst` (shape
/// `pre x dmid x post`) at middle offset `off`.
pub(crate) fn inscribe_mid(dst: &mut [C64], src: &[C64], pre: usize, mid: usize, post: usize, dmid: usize, off: usize) {
    for p in 0..post {
        for m in 0..mid {
            let s = (m + p * mid) * pre;
            let d = (off + m + p * dmid) * pre;
            dst[d..d + pre].copy_from_slice(&src[s..s + pre]);
        }
    }
}

/// Inverse of [`inscribe_mid`].
pub(crate) fn extract_mid(src: &[C64], pre: usize, mid: usize, post: usize, dmid: usize, off: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(pre * mid * post);
    for p in 0..post {
        for m in 0..mid {
            let s = (off + m + p * dmid) * pre;
            out.extend_from_slice(&src[s..s + pre]);
        }
    }
    out
}
