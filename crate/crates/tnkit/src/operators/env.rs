//! Renormalized operators toward the gauge center and the matrix-free
//! effective Hamiltonian built from them.

use super::Tpo;
use crate::dense::DenseTensor;
use crate::error::{Result, TnError};
use crate::network::{absorb, LinkKind, Network};
use crate::symm::{BlockLayout, SymTensor};
use crate::C64;
use std::collections::{BTreeMap, HashMap};

/// Renormalized operators behind one directed link.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkOps {
    /// Sum of every term supported entirely behind the link, `[out, in]`.
    /// `None` stands for "no such term", not for the identity.
    pub complete: Option<SymTensor>,
    /// Partially contracted terms keyed by term index: `[out, in, tpo...]`
    /// with the TPO ids of the trailing links.
    pub open: BTreeMap<usize, (SymTensor, Vec<usize>)>,
}

impl LinkOps {
    fn add_complete(&mut self, t: SymTensor) -> Result<()> {
        match &mut self.complete {
            Some(c) => c.axpy(C64::new(1.0, 0.0), &t),
            None => {
                self.complete = Some(t);
                Ok(())
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        self.complete.is_none() && self.open.is_empty()
    }
}

/// What acts on one link of a frame tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Site(usize),
    /// Renormalized operators of the side containing node `from`.
    Link { link: usize, from: usize },
    Selector,
}

/// One node, or two adjacent nodes contracted over their shared link, with
/// the meaning of every open link.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub nodes: Vec<usize>,
    pub slots: Vec<Slot>,
    inner: Option<(usize, usize, usize)>,
}

fn slot_of(net: &Network, q: usize, l: usize) -> Slot {
    match net.link_kind(l) {
        LinkKind::Physical { site } => Slot::Site(site),
        LinkKind::Selector => Slot::Selector,
        LinkKind::Virtual => Slot::Link {
            link: l,
            from: net.across(q, l).unwrap().0,
        },
    }
}

impl Frame {
    pub fn node(net: &Network, c: usize) -> Frame {
        Frame {
            nodes: vec![c],
            slots: net.node_links(c).iter().map(|&l| slot_of(net, c, l)).collect(),
            inner: None,
        }
    }

    /// Links of `a` without the shared one, then those of `b`.
    pub fn pair(net: &Network, a: usize, b: usize) -> Result<Frame> {
        let l = net
            .link_between(a, b)
            .ok_or_else(|| TnError::Network(format!("nodes {a} and {b} are not adjacent")))?;
        let mut slots = vec![];
        for q in [a, b] {
            for &x in net.node_links(q) {
                if x != l {
                    slots.push(slot_of(net, q, x));
                }
            }
        }
        Ok(Frame {
            nodes: vec![a, b],
            slots,
            inner: Some((l, net.position(a, l).unwrap(), net.position(b, l).unwrap())),
        })
    }

    /// The frame tensor of `net`.
    pub fn gather(&self, net: &Network) -> Result<SymTensor> {
        match self.inner {
            None => Ok(net.tensor(self.nodes[0]).clone()),
            Some((_, pa, pb)) => net.tensor(self.nodes[0]).contract(net.tensor(self.nodes[1]), &[(pa, pb)]),
        }
    }

    /// Shared link of a pair frame.
    pub fn inner_link(&self) -> Option<usize> {
        self.inner.map(|x| x.0)
    }
}

/// Penalty `ε |Φ⟩⟨Φ|` with `|Φ⟩ = Σ_j w_j |Ψ_j⟩`; `ε = ∞` turns it into the hard
/// constraint `⟨Φ|Ψ⟩ = 0`.
#[derive(Clone, Debug)]
pub struct Projector {
    pub penalty: f64,
    pub states: Vec<(C64, Network)>,
}

impl Projector {
    pub fn single(penalty: f64, state: Network) -> Projector {
        Projector {
            penalty,
            states: vec![(C64::new(1.0, 0.0), state)],
        }
    }
}

type Key = (usize, usize);

/// Renormalized operators and projector overlaps on every link, oriented
/// toward the gauge center of a network.
#[derive(Clone, Debug)]
pub struct Environment {
    tpo: Tpo,
    site: Vec<LinkOps>,
    cache: HashMap<Key, LinkOps>,
    projectors: Vec<Projector>,
    /// `[proj][state]`: overlap environments `[ψ-link, state-link]`.
    proj_cache: Vec<Vec<HashMap<Key, SymTensor>>>,
    /// Projector states whose selector differs from the network's; they
    /// never overlap.
    silent: Vec<Vec<bool>>,
}

/// `op` (`[out, in, tpo...]`) applied on link `pos` of `x`, whose links
/// after the first `base` are open TPO links with ids `open`. Matching ids
/// are contracted in the same step. Returns the new open ids.
fn apply_at(
    x: &SymTensor,
    base: usize,
    open: &[usize],
    pos: usize,
    op: &SymTensor,
    ids: &[usize],
) -> Result<(SymTensor, Vec<usize>)> {
    let mut pairs = vec![(1, pos)];
    let mut matched_x = vec![];
    for (j, id) in ids.iter().enumerate() {
        if let Some(k) = open.iter().position(|x| x == id) {
            pairs.push((2 + j, base + k));
            matched_x.push(k);
        }
    }
    let y = op.contract(x, &pairs)?;
    let op_free: Vec<usize> = ids.iter().copied().filter(|id| !open.contains(id)).collect();
    let x_open: Vec<usize> = (0..open.len()).filter(|k| !matched_x.contains(k)).collect();
    let u = op_free.len();
    let xo = 1 + u;
    let mut order = Vec::with_capacity(y.rank());
    for r in 0..base {
        order.push(match r.cmp(&pos) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => xo + r,
            std::cmp::Ordering::Greater => xo + r - 1,
        });
    }
    for k in 0..x_open.len() {
        order.push(xo + base - 1 + k);
    }
    order.extend(1..1 + u);
    let mut new_open: Vec<usize> = x_open.iter().map(|&k| open[k]).collect();
    new_open.extend(op_free);
    Ok((y.permute(&crate::dense::positions_of(&order))?, new_open))
}

fn zeros_like(x: &SymTensor) -> SymTensor {
    SymTensor::zeros(x.links().to_vec(), x.dirs().to_vec()).expect("valid structure")
}

/// `Σ_r ops_r · x` over the slots, the operator part of an effective
/// Hamiltonian. Terms must close within the slots.
fn apply_slots(x: &SymTensor, slots: &[Option<&LinkOps>]) -> Result<SymTensor> {
    let base = x.rank();
    let mut out = zeros_like(x);
    let mut grouped: BTreeMap<usize, Vec<(usize, &SymTensor, &[usize])>> = BTreeMap::new();
    for (r, s) in slots.iter().enumerate() {
        let Some(ops) = s else { continue };
        if let Some(c) = &ops.complete {
            out.axpy(C64::new(1.0, 0.0), &apply_at(x, base, &[], r, c, &[])?.0)?;
        }
        for (&p, (t, ids)) in &ops.open {
            grouped.entry(p).or_default().push((r, t, ids));
        }
    }
    for (p, parts) in grouped {
        let (y, open) = apply_parts(x, base, &parts)?;
        if !open.is_empty() {
            return Err(TnError::Operator(format!("term {p} does not close at this frame")));
        }
        out.axpy(C64::new(1.0, 0.0), &y)?;
    }
    Ok(out)
}

fn apply_parts(x: &SymTensor, base: usize, parts: &[(usize, &SymTensor, &[usize])]) -> Result<(SymTensor, Vec<usize>)> {
    let mut y = x.clone();
    let mut open: Vec<usize> = vec![];
    for &(r, t, ids) in parts {
        let (ny, no) = apply_at(&y, base, &open, r, t, ids)?;
        y = ny;
        open = no;
    }
    Ok((y, open))
}

impl Environment {
    /// Builds every renormalized operator toward the center of `net`, which
    /// must be in unitary gauge.
    pub fn new(net: &Network, tpo: &Tpo, projectors: Vec<Projector>) -> Result<Environment> {
        tpo.check_network(net)?;
        let c = net
            .center()
            .ok_or_else(|| TnError::Network("renormalization needs a unitary gauge".into()))?;
        let mut site = vec![LinkOps::default(); tpo.num_sites()];
        for (p, t) in tpo.terms().iter().enumerate() {
            if t.ops.len() == 1 {
                site[t.ops[0].site].add_complete(t.ops[0].op.clone())?;
            } else {
                for o in &t.ops {
                    site[o.site].open.insert(p, (o.op.clone(), o.tpo.clone()));
                }
            }
        }
        let mut silent = vec![];
        for pr in &projectors {
            let mut v = vec![];
            for (_, s) in &pr.states {
                net.same_shape(s)?;
                v.push(s.selector_label() != net.selector_label());
            }
            silent.push(v);
        }
        let proj_cache = projectors
            .iter()
            .map(|p| vec![HashMap::new(); p.states.len()])
            .collect();
        let mut env = Environment {
            tpo: tpo.clone(),
            site,
            cache: HashMap::new(),
            projectors,
            proj_cache,
            silent,
        };
        env.rebuild(net, c)?;
        Ok(env)
    }

    pub fn tpo(&self) -> &Tpo {
        &self.tpo
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    /// Recomputes everything toward `c`, bottom-up from the far leaves.
    pub fn rebuild(&mut self, net: &Network, c: usize) -> Result<()> {
        let lv = net.levels(c);
        for level in lv.iter().skip(1).rev() {
            for &q in level {
                let next = net.path(q, c)[1];
                let l = net.link_between(q, next).unwrap();
                self.renormalize(net, l, q)?;
            }
        }
        Ok(())
    }

    /// Call after the center moved from `from` to the adjacent `to`: only
    /// the link between them sees a changed tensor.
    pub fn advance(&mut self, net: &Network, from: usize, to: usize) -> Result<()> {
        let l = net
            .link_between(from, to)
            .ok_or_else(|| TnError::Network(format!("nodes {from} and {to} are not adjacent")))?;
        self.renormalize(net, l, from)
    }

    /// Renormalized operators of link `l` over the side containing `from`.
    pub fn entry(&self, l: usize, from: usize) -> Option<&LinkOps> {
        self.cache.get(&(l, from))
    }

    /// Every cached `((link, from), operators)` pair.
    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &LinkOps)> {
        self.cache.iter()
    }

    pub fn projector_entry(&self, p: usize, state: usize, l: usize, from: usize) -> Option<&SymTensor> {
        self.proj_cache.get(p)?.get(state)?.get(&(l, from))
    }

    fn slot_ops(&self, s: Slot) -> Result<Option<&LinkOps>> {
        match s {
            Slot::Site(site) => Ok(Some(&self.site[site])),
            Slot::Selector => Ok(None),
            Slot::Link { link, from } => self
                .cache
                .get(&(link, from))
                .map(Some)
                .ok_or_else(|| TnError::Operator(format!("no renormalized operator for link {link} from node {from}"))),
        }
    }

    /// Renormalizes through node `from` toward link `l`: operators of the
    /// other links absorbed into `T`, then contracted with `T†`.
    pub fn renormalize(&mut self, net: &Network, l: usize, from: usize) -> Result<()> {
        let frame = Frame::node(net, from);
        let t = net.tensor(from);
        let base = t.rank();
        let pz = net
            .position(from, l)
            .ok_or_else(|| TnError::Network(format!("link {l} is not on node {from}")))?;
        let pairs: Vec<(usize, usize)> = (0..base).filter(|&r| r != pz).map(|r| (r, r)).collect();
        let mut done: Option<SymTensor> = None;
        let mut grouped: BTreeMap<usize, Vec<(usize, &SymTensor, &[usize])>> = BTreeMap::new();
        for (r, s) in frame.slots.iter().enumerate() {
            if r == pz {
                continue;
            }
            let Some(ops) = self.slot_ops(*s)? else { continue };
            if let Some(c) = &ops.complete {
                let y = apply_at(t, base, &[], r, c, &[])?.0;
                match &mut done {
                    Some(d) => d.axpy(C64::new(1.0, 0.0), &y)?,
                    None => done = Some(y),
                }
            }
            for (&p, (op, ids)) in &ops.open {
                grouped.entry(p).or_default().push((r, op, ids));
            }
        }
        let mut entry = LinkOps::default();
        for (p, parts) in grouped {
            let (y, open) = apply_parts(t, base, &parts)?;
            if open.is_empty() {
                match &mut done {
                    Some(d) => d.axpy(C64::new(1.0, 0.0), &y)?,
                    None => done = Some(y),
                }
            } else {
                entry.open.insert(p, (t.dagger_contract(&y, &pairs)?, open));
            }
        }
        if let Some(d) = done {
            entry.complete = Some(t.dagger_contract(&d, &pairs)?);
        }
        // projector overlaps
        for pi in 0..self.projectors.len() {
            for si in 0..self.projectors[pi].states.len() {
                if self.silent[pi][si] {
                    continue;
                }
                let state = &self.projectors[pi].states[si].1;
                let mut y = state.tensor(from).clone();
                for (r, s) in frame.slots.iter().enumerate() {
                    if let (true, Slot::Link { link, from: f }) = (r != pz, s) {
                        let m = self.proj_cache[pi][si]
                            .get(&(*link, *f))
                            .ok_or_else(|| TnError::Operator(format!("no projector overlap for link {link}")))?;
                        y = absorb(&y, r, m)?;
                    }
                }
                let m = t.dagger_contract(&y, &pairs)?;
                self.proj_cache[pi][si].insert((l, from), m);
            }
        }
        self.cache.insert((l, from), entry);
        Ok(())
    }

    /// Effective Hamiltonian on the frame tensor.
    pub fn effective(&self, net: &Network, frame: &Frame) -> Result<EffectiveOp<'_>> {
        let slots = frame
            .slots
            .iter()
            .map(|s| self.slot_ops(*s))
            .collect::<Result<Vec<_>>>()?;
        let mut proj = vec![];
        for (pi, pr) in self.projectors.iter().enumerate() {
            let mut u: Option<SymTensor> = None;
            for (si, (w, state)) in pr.states.iter().enumerate() {
                if self.silent[pi][si] {
                    continue;
                }
                let mut y = frame.gather(state)?;
                for (r, s) in frame.slots.iter().enumerate() {
                    if let Slot::Link { link, from } = s {
                        let m = self.proj_cache[pi][si]
                            .get(&(*link, *from))
                            .ok_or_else(|| TnError::Operator(format!("no projector overlap for link {link}")))?;
                        y = absorb(&y, r, m)?;
                    }
                }
                match &mut u {
                    Some(acc) => acc.axpy(*w, &y)?,
                    None => u = Some(y.scale(*w)),
                }
            }
            if let Some(u) = u {
                proj.push((pr.penalty, u));
            }
        }
        let x = frame.gather(net)?;
        Ok(EffectiveOp {
            slots,
            proj,
            links: x.links().to_vec(),
            dirs: x.dirs().to_vec(),
        })
    }

    /// `⟨Ψ|H|Ψ⟩ / ⟨Ψ|Ψ⟩` evaluated at the center, projectors included.
    pub fn energy(&self, net: &Network) -> Result<f64> {
        let c = net
            .center()
            .ok_or_else(|| TnError::Network("energy needs a unitary gauge".into()))?;
        let frame = Frame::node(net, c);
        let h = self.effective(net, &frame)?;
        let x = net.tensor(c);
        Ok(x.dot(&h.apply(x)?)?.re / x.norm_sqr())
    }
}

/// Matrix-free `H_eff` at one frame: per-link operator factors plus
/// projector vectors.
pub struct EffectiveOp<'a> {
    slots: Vec<Option<&'a LinkOps>>,
    proj: Vec<(f64, SymTensor)>,
    links: Vec<crate::symm::SymLink>,
    dirs: Vec<crate::symm::Dir>,
}

impl EffectiveOp<'_> {
    pub fn apply(&self, x: &SymTensor) -> Result<SymTensor> {
        let mut out = apply_slots(x, &self.slots)?;
        for (eps, u) in &self.proj {
            if eps.is_infinite() {
                continue;
            }
            let ov = u.dot(x)?;
            out.axpy(C64::new(*eps, 0.0) * ov, u)?;
        }
        Ok(out)
    }

    /// `(penalty, vector)` of every projector at this frame. Infinite
    /// penalties are hard constraints and take no part in [`Self::apply`].
    pub fn projector_vectors(&self) -> &[(f64, SymTensor)] {
        &self.proj
    }

    /// Vectors the solution has to stay orthogonal to.
    pub fn constraints(&self) -> impl Iterator<Item = &SymTensor> {
        self.proj.iter().filter(|p| p.0.is_infinite()).map(|p| &p.1)
    }

    /// True when only projector terms act.
    pub fn is_pure_projector(&self) -> bool {
        self.slots.iter().all(|s| s.is_none_or(|o| o.is_identity()))
    }

    pub fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::new(&self.links, &self.dirs)
    }

    /// Dense matrix over the flat layout; for tests on small frames.
    pub fn to_dense(&self, cap: usize) -> Result<DenseTensor> {
        let lay = self.layout()?;
        let n = lay.len;
        if n > cap {
            return Err(TnError::CapExceeded { size: n, cap });
        }
        let mut m = DenseTensor::zeros(&[n, n]);
        for j in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            let y = self.apply(&SymTensor::from_flat(&lay, &e))?.to_flat(&lay);
            m.data_mut()[j * n..(j + 1) * n].copy_from_slice(&y);
        }
        Ok(m)
    }
}
