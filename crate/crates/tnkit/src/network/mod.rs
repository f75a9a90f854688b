//! Loop-free tensor networks: tree geometry, gauges, contractions and the
//! randomized symmetric ansatz.

mod ansatz;
mod checkpoint;
mod contract;
mod gauge;

pub use ansatz::AnsatzOptions;
pub use gauge::{absorb, qr_at, svd_at, SchmidtCut};

use crate::error::{Result, TnError};
use crate::symm::{Dir, Group, Qn, SymLink, SymTensor};
use std::collections::{BTreeMap, VecDeque};

/// Schmidt weights of one link, per sector.
pub type Weights = BTreeMap<Qn, Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkKind {
    Physical { site: usize },
    Virtual,
    Selector,
}

/// Tree shape without tensors: which links each node carries, in tensor
/// order, and the kind of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub node_links: Vec<Vec<usize>>,
    pub kinds: Vec<LinkKind>,
}

impl Geometry {
    /// Binary tree over `n` sites (a power of two, at least 4). Leaf `l`
    /// holds sites `2l, 2l+1`; the selector hangs on the top-left node.
    ///
    /// Node order: leaves first, then each layer above, top-left node
    /// second to last. Link ids: sites `0..n`, then virtual links, then the
    /// selector.
    pub fn binary_tree(n: usize) -> Result<Geometry> {
        if n < 4 || !n.is_power_of_two() {
            return Err(TnError::Network(format!(
                "binary tree needs a power of two of at least 4 sites, got {n}"
            )));
        }
        let mut kinds: Vec<LinkKind> = (0..n).map(|s| LinkKind::Physical { site: s }).collect();
        let mut node_links = vec![];
        // links hanging below the current layer
        let mut below: Vec<usize> = (0..n).collect();
        loop {
            let width = below.len() / 2;
            let top = width == 2;
            let mut ups = vec![];
            for i in 0..width {
                let mut l = vec![below[2 * i], below[2 * i + 1]];
                if !(top && i == 0) {
                    let up = kinds.len();
                    kinds.push(LinkKind::Virtual);
                    l.push(up);
                    ups.push(up);
                }
                node_links.push(l);
            }
            if top {
                let root = node_links.len() - 2;
                let sel = kinds.len();
                node_links[root].push(ups[0]);
                node_links[root].push(sel);
                kinds.push(LinkKind::Selector);
                break;
            }
            below = ups;
        }
        Ok(Geometry { node_links, kinds })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_links.len()
    }

    pub fn num_sites(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, LinkKind::Physical { .. }))
            .count()
    }

    /// Node carrying the selector, or node 0.
    pub fn root(&self) -> usize {
        for (q, ls) in self.node_links.iter().enumerate() {
            if ls.iter().any(|&l| self.kinds[l] == LinkKind::Selector) {
                return q;
            }
        }
        0
    }

    /// `(node, position)` pairs for every link id.
    pub fn ends(&self) -> Vec<Vec<(usize, usize)>> {
        let mut ends = vec![vec![]; self.kinds.len()];
        for (q, ls) in self.node_links.iter().enumerate() {
            for (p, &l) in ls.iter().enumerate() {
                ends[l].push((q, p));
            }
        }
        ends
    }

    fn validate(&self) -> Result<()> {
        let ends = self.ends();
        let mut n_virtual = 0;
        let mut sites = vec![false; self.num_sites()];
        for (l, k) in self.kinds.iter().enumerate() {
            let want = if *k == LinkKind::Virtual { 2 } else { 1 };
            if ends[l].len() != want {
                return Err(TnError::Network(format!(
                    "link {l} ({k:?}) has {} ends",
                    ends[l].len()
                )));
            }
            match k {
                LinkKind::Virtual => n_virtual += 1,
                LinkKind::Physical { site } => {
                    if *site >= sites.len() || sites[*site] {
                        return Err(TnError::Network(format!("bad site index {site}")));
                    }
                    sites[*site] = true;
                }
                LinkKind::Selector => {}
            }
        }
        if self.kinds.iter().filter(|k| **k == LinkKind::Selector).count() > 1 {
            return Err(TnError::Network("more than one selector link".into()));
        }
        let q = self.num_nodes();
        if q == 0 || n_virtual + 1 != q {
            return Err(TnError::Network("geometry is not a tree".into()));
        }
        // connectivity
        let mut seen = vec![false; q];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &l in &self.node_links[a] {
                for &(b, _) in &ends[l] {
                    if !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(TnError::Network("geometry is not connected".into()));
        }
        Ok(())
    }

    /// Parent `(node, link)` of every node in the tree rooted at `root`.
    fn parents(&self, root: usize) -> Vec<Option<(usize, usize)>> {
        let ends = self.ends();
        let mut parent = vec![None; self.num_nodes()];
        let mut seen = vec![false; self.num_nodes()];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for &l in &self.node_links[a] {
                for &(b, _) in &ends[l] {
                    if !seen[b] {
                        seen[b] = true;
                        parent[b] = Some((a, l));
                        queue.push_back(b);
                    }
                }
            }
        }
        parent
    }

    /// Directions implied by the tree: physical links enter, the selector
    /// leaves, and each virtual link leaves the node farther from the root.
    pub fn directions(&self) -> Vec<Vec<Dir>> {
        let parent = self.parents(self.root());
        self.node_links
            .iter()
            .enumerate()
            .map(|(q, ls)| {
                ls.iter()
                    .map(|&l| match self.kinds[l] {
                        LinkKind::Physical { .. } => Dir::In,
                        LinkKind::Selector => Dir::Out,
                        LinkKind::Virtual => {
                            if parent[q].map(|p| p.1) == Some(l) {
                                Dir::Out
                            } else {
                                Dir::In
                            }
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// A tree of symmetric tensors (dense networks use the trivial group).
#[derive(Clone, Debug)]
pub struct Network {
    group: Group,
    geom: Geometry,
    ends: Vec<Vec<(usize, usize)>>,
    root: usize,
    parent: Vec<Option<(usize, usize)>>,
    /// Nodes in breadth-first order from the root.
    order: Vec<usize>,
    tensors: Vec<SymTensor>,
    center: Option<usize>,
    weights: Option<BTreeMap<usize, Weights>>,
}

impl Network {
    /// Assembles a network and checks that shared links agree.
    pub fn new(geom: Geometry, tensors: Vec<SymTensor>) -> Result<Network> {
        geom.validate()?;
        if tensors.len() != geom.num_nodes() {
            return Err(TnError::Network(format!(
                "{} tensors for {} nodes",
                tensors.len(),
                geom.num_nodes()
            )));
        }
        let group = tensors[0].group();
        let dirs = geom.directions();
        for (q, t) in tensors.iter().enumerate() {
            if t.group() != group {
                return Err(TnError::Network("tensors carry different groups".into()));
            }
            if t.rank() != geom.node_links[q].len() {
                return Err(TnError::Network(format!("node {q}: tensor rank does not match its links")));
            }
            if t.dirs() != dirs[q].as_slice() {
                return Err(TnError::Network(format!("node {q}: link directions violate the tree convention")));
            }
        }
        let ends = geom.ends();
        for (l, e) in ends.iter().enumerate() {
            if e.len() == 2 {
                let (a, pa) = e[0];
                let (b, pb) = e[1];
                if tensors[a].link(pa) != tensors[b].link(pb) {
                    return Err(TnError::Network(format!("link {l}: the two tensors disagree")));
                }
            }
        }
        let root = geom.root();
        let parent = geom.parents(root);
        let mut order = vec![root];
        let mut i = 0;
        while i < order.len() {
            let a = order[i];
            for (b, p) in parent.iter().enumerate() {
                if p.map(|x| x.0) == Some(a) {
                    order.push(b);
                }
            }
            i += 1;
        }
        Ok(Network {
            group,
            geom,
            ends,
            root,
            parent,
            order,
            tensors,
            center: None,
            weights: None,
        })
    }

    pub fn group(&self) -> Group {
        self.group
    }
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }
    pub fn num_nodes(&self) -> usize {
        self.tensors.len()
    }
    pub fn num_sites(&self) -> usize {
        self.geom.num_sites()
    }
    pub fn root(&self) -> usize {
        self.root
    }
    pub fn tensor(&self, q: usize) -> &SymTensor {
        &self.tensors[q]
    }
    pub fn tensors(&self) -> &[SymTensor] {
        &self.tensors
    }
    pub fn center(&self) -> Option<usize> {
        self.center
    }
    pub fn node_links(&self, q: usize) -> &[usize] {
        &self.geom.node_links[q]
    }
    pub fn link_kind(&self, l: usize) -> LinkKind {
        self.geom.kinds[l]
    }
    pub fn num_links(&self) -> usize {
        self.geom.kinds.len()
    }
    pub fn link_ends(&self, l: usize) -> &[(usize, usize)] {
        &self.ends[l]
    }
    /// Position of link `l` on node `q`.
    pub fn position(&self, q: usize, l: usize) -> Option<usize> {
        self.geom.node_links[q].iter().position(|&x| x == l)
    }
    /// The symmetric link carried by link id `l`.
    pub fn link(&self, l: usize) -> &SymLink {
        let (q, p) = self.ends[l][0];
        self.tensors[q].link(p)
    }
    pub fn virtual_links(&self) -> Vec<usize> {
        (0..self.num_links())
            .filter(|&l| self.geom.kinds[l] == LinkKind::Virtual)
            .collect()
    }
    /// `(node, position)` of the physical link of `site`.
    pub fn site_position(&self, site: usize) -> Option<(usize, usize)> {
        let l = self
            .geom
            .kinds
            .iter()
            .position(|k| *k == LinkKind::Physical { site })?;
        Some(self.ends[l][0])
    }
    pub fn selector(&self) -> Option<usize> {
        self.geom.kinds.iter().position(|k| *k == LinkKind::Selector)
    }
    /// Label of the targeted global sector.
    pub fn selector_label(&self) -> Option<Qn> {
        self.selector().map(|l| self.link(l).sectors()[0].0)
    }
    pub fn parent(&self, q: usize) -> Option<(usize, usize)> {
        self.parent[q]
    }
    pub fn children(&self, q: usize) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .filter_map(|b| match self.parent[b] {
                Some((a, l)) if a == q => Some((b, l)),
                _ => None,
            })
            .collect()
    }
    /// Nodes in breadth-first order from the root.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    /// Neighbouring nodes of `q` with the shared link.
    pub fn neighbors(&self, q: usize) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for &l in &self.geom.node_links[q] {
            for &(b, _) in &self.ends[l] {
                if b != q {
                    out.push((b, l));
                }
            }
        }
        out
    }

    /// Node sequence from `a` to `b`, both included.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let up = |mut x: usize| {
            let mut v = vec![x];
            while let Some((p, _)) = self.parent[x] {
                v.push(p);
                x = p;
            }
            v
        };
        let pa = up(a);
        let pb = up(b);
        let common = *pa.iter().find(|x| pb.contains(x)).expect("tree is connected");
        let mut path: Vec<usize> = pa.iter().copied().take_while(|&x| x != common).collect();
        path.push(common);
        let tail: Vec<usize> = pb.iter().copied().take_while(|&x| x != common).collect();
        path.extend(tail.into_iter().rev());
        path
    }

    /// Number of links on the unique path between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        self.path(a, b).len() - 1
    }

    /// Nodes grouped by distance from `c`.
    pub fn levels(&self, c: usize) -> Vec<Vec<usize>> {
        let mut lv: Vec<Vec<usize>> = vec![];
        for q in 0..self.num_nodes() {
            let d = self.distance(c, q);
            if lv.len() <= d {
                lv.resize(d + 1, vec![]);
            }
            lv[d].push(q);
        }
        lv
    }

    /// Link shared by two adjacent nodes.
    pub fn link_between(&self, a: usize, b: usize) -> Option<usize> {
        self.neighbors(a).into_iter().find(|x| x.0 == b).map(|x| x.1)
    }

    /// Node on the other side of link `l` from `q`.
    pub fn across(&self, q: usize, l: usize) -> Option<(usize, usize)> {
        self.ends[l].iter().copied().find(|e| e.0 != q)
    }

    /// Sites in the subtree on the child side of virtual link `l`.
    pub fn subtree_sites(&self, l: usize) -> Vec<usize> {
        let (a, _) = self.ends[l][0];
        let child = match self.ends[l].get(1) {
            Some(&(b, _)) if self.parent[a].map(|p| p.1) != Some(l) => b,
            _ => a,
        };
        let mut out = vec![];
        let mut stack = vec![child];
        while let Some(q) = stack.pop() {
            for &x in &self.geom.node_links[q] {
                if let LinkKind::Physical { site } = self.geom.kinds[x] {
                    out.push(site);
                }
            }
            stack.extend(self.children(q).into_iter().map(|c| c.0));
        }
        out.sort();
        out
    }

    /// Largest virtual link dimension.
    pub fn max_bond_dim(&self) -> usize {
        self.virtual_links().iter().map(|&l| self.link(l).dim()).max().unwrap_or(0)
    }

    /// Replaces one tensor. Shared links must still agree; the gauge and any
    /// stored weights are dropped unless `keep_gauge` is set.
    pub fn set_tensor(&mut self, q: usize, t: SymTensor, keep_gauge: bool) -> Result<()> {
        if t.dirs() != self.tensors[q].dirs() {
            return Err(TnError::Network(format!("node {q}: directions changed")));
        }
        self.tensors[q] = t;
        if !keep_gauge {
            self.center = None;
        }
        self.weights = None;
        Ok(())
    }

    /// Replaces several tensors at once, for updates that change a shared
    /// link, and declares `center` as the new unitary center (the caller
    /// guarantees the isometries). Links of the touched nodes must agree
    /// afterwards.
    pub fn replace_tensors(&mut self, updates: Vec<(usize, SymTensor)>, center: Option<usize>) -> Result<()> {
        let touched: Vec<usize> = updates.iter().map(|u| u.0).collect();
        let saved: Vec<SymTensor> = touched.iter().map(|&q| self.tensors[q].clone()).collect();
        for (q, t) in updates {
            if t.dirs() != self.tensors[q].dirs() {
                for (&q, t) in touched.iter().zip(saved) {
                    self.tensors[q] = t;
                }
                return Err(TnError::Network(format!("node {q}: directions changed")));
            }
            self.tensors[q] = t;
        }
        for &q in &touched {
            for (p, &l) in self.geom.node_links[q].iter().enumerate() {
                if let Some((b, pb)) = self.across(q, l) {
                    if self.tensors[q].link(p) != self.tensors[b].link(pb) {
                        for (&q, t) in touched.iter().zip(saved) {
                            self.tensors[q] = t;
                        }
                        return Err(TnError::Network(format!("link {l}: the two tensors disagree")));
                    }
                }
            }
        }
        self.center = center;
        self.weights = None;
        Ok(())
    }

    /// Schmidt weights of virtual link `l` when the canonical gauge is set.
    pub fn weights(&self, l: usize) -> Option<&Weights> {
        self.weights.as_ref().and_then(|w| w.get(&l))
    }

    pub fn is_canonical(&self) -> bool {
        self.weights.is_some()
    }

    /// Checks link agreement on every virtual link and debug-validates all
    /// tensors.
    pub fn check(&self) -> Result<()> {
        for (l, e) in self.ends.iter().enumerate() {
            if e.len() == 2 {
                let (a, pa) = e[0];
                let (b, pb) = e[1];
                if self.tensors[a].link(pa) != self.tensors[b].link(pb) {
                    return Err(TnError::Network(format!("link {l}: the two tensors disagree")));
                }
                if self.tensors[a].dir(pa) == self.tensors[b].dir(pb) {
                    return Err(TnError::Network(format!("link {l}: directions are not opposite")));
                }
            }
        }
        for t in &self.tensors {
            t.validate()?;
        }
        Ok(())
    }

    /// Total number of stored elements.
    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.num_elements()).sum()
    }

    /// Per-sector degeneracies of every virtual link.
    pub fn link_summary(&self) -> Vec<(usize, Vec<(Qn, usize)>)> {
        self.virtual_links()
            .into_iter()
            .map(|l| (l, self.link(l).sectors().to_vec()))
            .collect()
    }
}
