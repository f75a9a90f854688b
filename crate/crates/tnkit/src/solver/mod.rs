//! Variational ground-state search on loop-free networks: sweep planning,
//! single, double and expanded center updates, excited states through
//! projectors, and variational compression, addition and orthogonalization.

pub mod compress;
pub mod lanczos;
mod sweep;

pub use compress::{compress, exact_sum, fidelity, orthogonalize, CompressResult, OrthoMode};
pub use lanczos::{lanczos_lowest, Eigenpairs, LanczosOptions};
pub use sweep::{default_penalty, excited_state, ground_state, ground_state_with, ExcitedReport};

use crate::error::{Result, TnError};
use crate::network::Network;
use crate::symm::Qn;

/// How the center tensor is optimized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// One tensor at a time; link representations stay fixed.
    Single,
    /// Two adjacent tensors contracted and split again by truncated SVD.
    Double,
    /// Single updates on a temporarily padded link: `d_pad` extra indices
    /// per sector, `n_inner` alternations between the two tensors.
    Expanded { d_pad: usize, n_inner: usize },
}

impl Scheme {
    pub fn expanded(d_pad: usize) -> Scheme {
        Scheme::Expanded { d_pad, n_inner: 2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Single => "single",
            Scheme::Double => "double",
            Scheme::Expanded { .. } => "expanded",
        }
    }
}

/// Stopping rule `E(s−1) − E(s) < ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    /// `ε = r·|E|`.
    Relative(f64),
    /// `ε(D) = a + b·D^(−c)·exp(−D/d)` with user-fitted constants.
    Fitted { a: f64, b: f64, c: f64, d: f64 },
}

impl Threshold {
    pub fn epsilon(&self, energy: f64, bond_dim: usize) -> f64 {
        match *self {
            Threshold::Relative(r) => r * energy.abs(),
            Threshold::Fitted { a, b, c, d } => {
                let x = bond_dim as f64;
                a + b * x.powf(-c) * (-x / d).exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub scheme: Scheme,
    pub eigen: LanczosOptions,
    /// Bond dimension `D` kept by truncations.
    pub bond_dim: usize,
    /// Singular values below `rel_cut` times the largest are dropped.
    pub rel_cut: f64,
    pub threshold: Threshold,
    pub max_sweeps: usize,
    /// Seeds the random padding of the expanded scheme.
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(bond_dim: usize, scheme: Scheme) -> OptimizerConfig {
        OptimizerConfig {
            scheme,
            eigen: LanczosOptions::default(),
            bond_dim,
            rel_cut: 1e-12,
            threshold: Threshold::Relative(1e-10),
            max_sweeps: 50,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bond_dim < 1 {
            return Err(TnError::Config("bond dimension below 1".into()));
        }
        if self.max_sweeps < 1 {
            return Err(TnError::Config("at least one sweep is required".into()));
        }
        if let Scheme::Expanded { n_inner, .. } = self.scheme {
            if n_inner < 1 {
                return Err(TnError::Config("expanded scheme needs at least one inner alternation".into()));
            }
        }
        if self.eigen.krylov_dim < 2 || self.eigen.tol <= 0.0 || self.eigen.max_applications < 1 {
            return Err(TnError::Config("eigensolver parameters out of range".into()));
        }
        if !(0.0..1.0).contains(&self.rel_cut) {
            return Err(TnError::Config("relative cut must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One completed sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    /// 1-based sweep number.
    pub sweep: usize,
    pub energy: f64,
    /// `E(s−1) − E(s)`; positive when the energy went down.
    pub delta: f64,
    /// Largest relative discarded norm of any truncation in the sweep.
    pub max_trunc_err: f64,
    /// Operator applications of the eigensolver.
    pub applications: usize,
    /// Local problems where the eigensolver missed its tolerance.
    pub eig_failures: usize,
    pub seconds: f64,
    /// `(link, [(label, degeneracy)])` for every virtual link.
    pub links: Vec<(usize, Vec<(Qn, usize)>)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub initial_energy: f64,
    pub sweeps: Vec<SweepRecord>,
    pub converged: bool,
}

impl ConvergenceReport {
    /// Energy after the last sweep, or the initial one before any sweep.
    pub fn energy(&self) -> f64 {
        self.sweeps.last().map_or(self.initial_energy, |r| r.energy)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.sweeps.iter().map(|r| r.energy).collect()
    }
}

/// Order of optimization centers within one sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepPlan {
    pub centers: Vec<usize>,
}

impl SweepPlan {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Neighbour of center `i` on the way to the next center, wrapping to
    /// the first one; this is the partner of double and expanded updates.
    pub fn partner(&self, net: &Network, i: usize) -> Option<usize> {
        let c = self.centers[i];
        let next = self.centers[(i + 1) % self.centers.len()];
        if next == c {
            return net.neighbors(c).first().map(|n| n.0);
        }
        Some(net.path(c, next)[1])
    }

    /// `(center, partner)` for every step.
    pub fn pairs(&self, net: &Network) -> Vec<(usize, usize)> {
        (0..self.len())
            .filter_map(|i| self.partner(net, i).map(|p| (self.centers[i], p)))
            .collect()
    }
}

/// Precedence of each node: its distance to the nearest node carrying a
/// physical link.
pub fn precedence(net: &Network) -> Vec<usize> {
    let n = net.num_nodes();
    let mut p = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..net.num_sites() {
        if let Some((q, _)) = net.site_position(s) {
            if p[q] != 0 {
                p[q] = 0;
                queue.push_back(q);
            }
        }
    }
    while let Some(q) = queue.pop_front() {
        for (m, _) in net.neighbors(q) {
            if p[m] == usize::MAX {
                p[m] = p[q] + 1;
                queue.push_back(m);
            }
        }
    }
    p
}

/// Centers by ascending precedence; within one precedence level the
/// nearest remaining node from the previous center comes next, ties going
/// to the lowest id. The walk starts from the current center (or the root).
pub fn make_sweep_plan(net: &Network) -> SweepPlan {
    let p = precedence(net);
    let top = p.iter().copied().max().unwrap_or(0);
    let mut cur = net.center().unwrap_or(net.root());
    let mut centers = Vec::with_capacity(net.num_nodes());
    for level in 0..=top {
        let mut left: Vec<usize> = (0..net.num_nodes()).filter(|&q| p[q] == level).collect();
        while !left.is_empty() {
            let k = (0..left.len())
                .min_by_key(|&i| (net.distance(cur, left[i]), left[i]))
                .unwrap();
            cur = left.remove(k);
            centers.push(cur);
        }
    }
    SweepPlan { centers }
}

#[cfg(test)]
mod tests;
