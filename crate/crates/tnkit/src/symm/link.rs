//! Sector-labelled links.

use super::group::{Dir, Group, Qn};
use crate::error::{Result, TnError};

/// A symmetric link: ascending distinct sectors, each with a degeneracy.
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct SymLink {
    group: Group,
    sectors: Vec<(Qn, usize)>,
}

impl SymLink {
    /// Sorts the sectors; zero degeneracies are dropped, duplicates rejected.
    pub fn new(group: Group, sectors: Vec<(Qn, usize)>) -> Result<SymLink> {
        let mut s: Vec<(Qn, usize)> = sectors.into_iter().filter(|x| x.1 > 0).collect();
        s.sort();
        for w in s.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(TnError::Symmetry(format!("duplicate sector {:?}", w[0].0)));
            }
        }
        for (q, _) in &s {
            group.validate(*q)?;
        }
        Ok(SymLink { group, sectors: s })
    }

    /// Convenience for single-factor groups: `[(label, degeneracy)]`.
    pub fn from_pairs(group: Group, pairs: &[(i64, usize)]) -> Result<SymLink> {
        Self::new(group, pairs.iter().map(|&(q, d)| (Qn::of(q), d)).collect())
    }

    /// A link without symmetry information: one sector of dimension `d`.
    pub fn plain(d: usize) -> SymLink {
        SymLink {
            group: Group::trivial(),
            sectors: if d > 0 { vec![(Qn::ZERO, d)] } else { vec![] },
        }
    }

    pub fn group(&self) -> Group {
        self.group
    }
    pub fn sectors(&self) -> &[(Qn, usize)] {
        &self.sectors
    }
    pub fn num_sectors(&self) -> usize {
        self.sectors.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    /// Total dimension `Σ ∂̄`.
    pub fn dim(&self) -> usize {
        self.sectors.iter().map(|s| s.1).sum()
    }

    /// Degeneracy of a sector, 0 when absent.
    pub fn deg(&self, q: Qn) -> usize {
        match self.sectors.binary_search_by(|s| s.0.cmp(&q)) {
            Ok(i) => self.sectors[i].1,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, q: Qn) -> bool {
        self.deg(q) > 0
    }

    /// Position of the sector's first index in the downgraded link.
    pub fn dense_offset(&self, q: Qn) -> Option<usize> {
        let mut off = 0;
        for &(s, d) in &self.sectors {
            if s == q {
                return Some(off);
            }
            off += d;
        }
        None
    }

    /// Dense index for every `(sector, degeneracy index)` in sector order.
    pub fn dense_index(&self, q: Qn, i: usize) -> Option<usize> {
        let o = self.dense_offset(q)?;
        (i < self.deg(q)).then_some(o + i)
    }

    /// Sector and degeneracy index of a downgraded index.
    pub fn sector_of(&self, mut i: usize) -> Option<(Qn, usize)> {
        for &(s, d) in &self.sectors {
            if i < d {
                return Some((s, i));
            }
            i -= d;
        }
        None
    }

    /// Labels replaced by their inverses (degeneracies carried along).
    pub fn inverted(&self) -> SymLink {
        let mut s: Vec<(Qn, usize)> = self
            .sectors
            .iter()
            .map(|&(q, d)| (self.group.invert(q), d))
            .collect();
        s.sort();
        SymLink {
            group: self.group,
            sectors: s,
        }
    }

    fn check_group(&self, other: &SymLink) -> Result<()> {
        if self.group != other.group {
            return Err(TnError::Symmetry(format!(
                "group mismatch {:?} vs {:?}",
                self.group, other.group
            )));
        }
        Ok(())
    }

    /// Common sectors with the smaller degeneracy.
    pub fn intersect(&self, other: &SymLink) -> Result<SymLink> {
        self.check_group(other)?;
        let sectors = self
            .sectors
            .iter()
            .filter_map(|&(q, d)| {
                let e = other.deg(q);
                (e > 0).then_some((q, d.min(e)))
            })
            .collect();
        Ok(SymLink {
            group: self.group,
            sectors,
        })
    }

    /// Union of sectors with summed degeneracies.
    pub fn pad(&self, other: &SymLink) -> Result<SymLink> {
        self.check_group(other)?;
        let mut s = self.sectors.clone();
        for &(q, d) in &other.sectors {
            match s.binary_search_by(|x| x.0.cmp(&q)) {
                Ok(i) => s[i].1 += d,
                Err(i) => s.insert(i, (q, d)),
            }
        }
        Ok(SymLink {
            group: self.group,
            sectors: s,
        })
    }

    /// Sector-wise degeneracy cap at `d`.
    pub fn capped(&self, d: usize) -> SymLink {
        SymLink {
            group: self.group,
            sectors: self
                .sectors
                .iter()
                .map(|&(q, e)| (q, e.min(d)))
                .filter(|x| x.1 > 0)
                .collect(),
        }
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>, dir: Dir) {
        crate::io::put_u32(out, self.sectors.len() as u32);
        let nf = self.group.factors().len();
        for &(q, d) in &self.sectors {
            for &c in &q.0[..nf] {
                crate::io::put_i64(out, c);
            }
            crate::io::put_u64(out, d as u64);
        }
        out.push(matches!(dir, Dir::Out) as u8);
    }

    pub(crate) fn read(r: &mut crate::io::Reader<'_>, group: Group) -> Result<(SymLink, Dir)> {
        let n = r.u32()? as usize;
        let nf = group.factors().len();
        let mut sectors = Vec::with_capacity(n);
        for _ in 0..n {
            let mut q = Qn::ZERO;
            for c in q.0.iter_mut().take(nf) {
                *c = r.i64()?;
            }
            let d = r.u64()? as usize;
            sectors.push((q, d));
        }
        let dir = if r.u8()? == 1 { Dir::Out } else { Dir::In };
        Ok((SymLink::new(group, sectors)?, dir))
    }
}

/// Fused representation of several directed links: every reachable fused
/// label with its total degeneracy. The fused link carries direction
/// `fused_dir`.
pub fn fused_link(links: &[(&SymLink, Dir)], fused_dir: Dir) -> Result<SymLink> {
    let group = match links.first() {
        Some(l) => l.0.group(),
        None => return Err(TnError::Symmetry("fusing zero links".into())),
    };
    // running map charge -> degeneracy
    let mut acc: Vec<(Qn, usize)> = vec![(group.identity(), 1)];
    for (l, d) in links {
        if l.group() != group {
            return Err(TnError::Symmetry("group mismatch in fusion".into()));
        }
        let mut next: std::collections::BTreeMap<Qn, usize> = Default::default();
        for &(c, n) in &acc {
            for &(q, e) in l.sectors() {
                let c2 = group.fuse(c, group.charge(q, *d));
                *next.entry(c2).or_insert(0) += n * e;
            }
        }
        acc = next.into_iter().collect();
    }
    let sectors = acc
        .into_iter()
        .map(|(c, n)| (group.label_for(c, fused_dir), n))
        .collect();
    SymLink::new(group, sectors)
}
