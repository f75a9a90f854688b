//! Versioned binary checkpoints of whole networks.

use super::{Geometry, LinkKind, Network, Weights};
use crate::error::{Result, TnError};
use crate::io::{put_f64, put_i64, put_u32, Reader};
use crate::symm::{Qn, SymTensor};
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 4] = b"TNC1";

impl Network {
    /// Layout: `TNC1`, node count and per-node link ids, link registry
    /// (kind byte, site), gauge tag (0 none, 1 unitary + center, 2
    /// canonical + center), the node tensor records, then for canonical
    /// gauge the weights of every virtual link. Little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, self.num_nodes() as u32);
        for ls in &self.geom.node_links {
            out.push(ls.len() as u8);
            for &l in ls {
                put_u32(&mut out, l as u32);
            }
        }
        put_u32(&mut out, self.geom.kinds.len() as u32);
        for k in &self.geom.kinds {
            let (tag, site) = match k {
                LinkKind::Physical { site } => (0u8, *site as u32),
                LinkKind::Virtual => (1, 0),
                LinkKind::Selector => (2, 0),
            };
            out.push(tag);
            put_u32(&mut out, site);
        }
        match (self.center, &self.weights) {
            (None, _) => out.push(0),
            (Some(c), None) => {
                out.push(1);
                put_u32(&mut out, c as u32);
            }
            (Some(c), Some(_)) => {
                out.push(2);
                put_u32(&mut out, c as u32);
            }
        }
        for t in &self.tensors {
            t.write_record(&mut out);
        }
        if let Some(w) = &self.weights {
            let nf = self.group.factors().len();
            put_u32(&mut out, w.len() as u32);
            for (l, lw) in w {
                put_u32(&mut out, *l as u32);
                put_u32(&mut out, lw.len() as u32);
                for (q, v) in lw {
                    for &c in &q.0[..nf] {
                        put_i64(&mut out, c);
                    }
                    put_u32(&mut out, v.len() as u32);
                    for &x in v {
                        put_f64(&mut out, x);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        let nn = r.u32()? as usize;
        let mut node_links = Vec::with_capacity(nn);
        for _ in 0..nn {
            let k = r.u8()? as usize;
            let mut ls = Vec::with_capacity(k);
            for _ in 0..k {
                ls.push(r.u32()? as usize);
            }
            node_links.push(ls);
        }
        let nl = r.u32()? as usize;
        let mut kinds = Vec::with_capacity(nl);
        for _ in 0..nl {
            let tag = r.u8()?;
            let site = r.u32()? as usize;
            kinds.push(match tag {
                0 => LinkKind::Physical { site },
                1 => LinkKind::Virtual,
                2 => LinkKind::Selector,
                t => return Err(TnError::Format(format!("unknown link kind {t}"))),
            });
        }
        let gauge = r.u8()?;
        let center = match gauge {
            0 => None,
            1 | 2 => Some(r.u32()? as usize),
            t => return Err(TnError::Format(format!("unknown gauge tag {t}"))),
        };
        let mut tensors = Vec::with_capacity(nn);
        for _ in 0..nn {
            tensors.push(SymTensor::read_record(&mut r)?);
        }
        let mut net = Network::new(Geometry { node_links, kinds }, tensors)?;
        net.center = center;
        if gauge == 2 {
            let nf = net.group.factors().len();
            let mut w = BTreeMap::new();
            let n = r.u32()? as usize;
            for _ in 0..n {
                let l = r.u32()? as usize;
                let ns = r.u32()? as usize;
                let mut lw: Weights = BTreeMap::new();
                for _ in 0..ns {
                    let mut q = Qn::ZERO;
                    for c in q.0.iter_mut().take(nf) {
                        *c = r.i64()?;
                    }
                    let len = r.u32()? as usize;
                    let mut v = Vec::with_capacity(len);
                    for _ in 0..len {
                        v.push(r.f64()?);
                    }
                    lw.insert(q, v);
                }
                w.insert(l, lw);
            }
            net.weights = Some(w);
        }
        if r.position() != bytes.len() {
            return Err(TnError::Format("trailing bytes after checkpoint".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
