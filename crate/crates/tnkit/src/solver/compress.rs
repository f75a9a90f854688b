//! Variational compression onto a fixed geometry, exact addition by block
//! embedding, and orthogonalization against given states.

use super::sweep::Sweeper;
use super::{ConvergenceReport, OptimizerConfig, Scheme};
use crate::error::{Result, TnError};
use crate::network::Network;
use crate::operators::{Projector, Tpo};
use crate::symm::{Qn, SymLink, SymTensor};
use crate::C64;
use std::collections::BTreeMap;

/// `|⟨a|b⟩| / (‖a‖‖b‖)`; zero when either state vanishes.
pub fn fidelity(a: &Network, b: &Network) -> Result<f64> {
    let ab = a.scalar_product(b)?.norm();
    let na = a.norm_sqr()?;
    let nb = b.norm_sqr()?;
    if na <= 0.0 || nb <= 0.0 {
        return Ok(0.0);
    }
    Ok(ab / (na * nb).sqrt())
}

fn check_family(nets: &[&Network]) -> Result<()> {
    let first = nets
        .first()
        .ok_or_else(|| TnError::Network("no states given".into()))?;
    for n in &nets[1..] {
        first.same_shape(n)?;
        if n.selector_label() != first.selector_label() {
            return Err(TnError::Network("states target different symmetry sectors".into()));
        }
    }
    Ok(())
}

/// `Σ_k w_k |Ψ_k⟩` exactly: every virtual link becomes the direct sum of
/// the summands' links and each node tensor the block-diagonal embedding of
/// theirs. The weight of each state multiplies its root tensor. The result
/// carries no gauge and is not normalized, so the link dimensions are
/// exactly the sums of the summands'.
pub fn exact_sum(terms: &[(C64, Network)]) -> Result<Network> {
    let nets: Vec<&Network> = terms.iter().map(|t| &t.1).collect();
    check_family(&nets)?;
    let first = nets[0];
    let root = first.root();
    let mut links: BTreeMap<usize, SymLink> = BTreeMap::new();
    let mut offsets: Vec<BTreeMap<usize, BTreeMap<Qn, usize>>> = vec![BTreeMap::new(); nets.len()];
    for l in first.virtual_links() {
        let mut acc = nets[0].link(l).clone();
        offsets[0].insert(l, BTreeMap::new());
        for (k, n) in nets.iter().enumerate().skip(1) {
            offsets[k].insert(l, acc.sectors().iter().copied().collect());
            acc = acc.pad(n.link(l))?;
        }
        links.insert(l, acc);
    }
    let none = BTreeMap::new();
    let mut tensors = Vec::with_capacity(first.num_nodes());
    for q in 0..first.num_nodes() {
        let node_links = first.node_links(q);
        let full: Vec<SymLink> = node_links
            .iter()
            .enumerate()
            .map(|(p, l)| links.get(l).cloned().unwrap_or_else(|| first.tensor(q).link(p).clone()))
            .collect();
        let mut sum = SymTensor::zeros(full.clone(), first.tensor(q).dirs().to_vec())?;
        for (k, (w, n)) in terms.iter().enumerate() {
            let offs: Vec<BTreeMap<Qn, usize>> = node_links
                .iter()
                .map(|l| offsets[k].get(l).cloned().unwrap_or_else(|| none.clone()))
                .collect();
            let t = if q == root { n.tensor(q).scale(*w) } else { n.tensor(q).clone() };
            sum.axpy(C64::new(1.0, 0.0), &t.embed(full.clone(), &offs)?)?;
        }
        tensors.push(sum);
    }
    Network::new(first.geometry().clone(), tensors)
}

/// A compressed state with its fidelity to the target and the sweep log.
#[derive(Clone, Debug)]
pub struct CompressResult {
    pub net: Network,
    pub fidelity: f64,
    pub report: ConvergenceReport,
}

fn physical_links(net: &Network) -> Vec<SymLink> {
    (0..net.num_sites())
        .map(|s| {
            let (q, p) = net.site_position(s).unwrap();
            net.tensor(q).link(p).clone()
        })
        .collect()
}

/// `⟨Φ|Φ⟩` for `Φ = Σ w_j Ψ_j`.
fn target_norm_sqr(targets: &[(C64, Network)]) -> Result<f64> {
    let mut s = C64::new(0.0, 0.0);
    for (wi, a) in targets {
        for (wj, b) in targets {
            s += wi.conj() * wj * a.scalar_product(b)?;
        }
    }
    Ok(s.re)
}

fn compress_with(targets: &[(C64, Network)], extra: Vec<Projector>, cfg: &OptimizerConfig) -> Result<CompressResult> {
    cfg.validate()?;
    let norm2 = target_norm_sqr(targets)?;
    if norm2 <= 0.0 {
        return Err(TnError::InvalidRange("the target state vanishes".into()));
    }
    // pre-compression: exact sum, then one Schmidt cut per oversized link
    let mut init = exact_sum(targets)?;
    init.install_canonical_gauge(1e-13)?;
    for l in init.virtual_links() {
        if init.link(l).dim() > cfg.bond_dim {
            if !init.is_canonical() {
                init.install_canonical_gauge(1e-13)?;
            }
            init.schmidt_truncate(l, cfg.bond_dim)?;
        }
    }
    let tpo = Tpo::new(physical_links(&init));
    let mut projectors = vec![Projector {
        penalty: -1.0,
        states: targets.to_vec(),
    }];
    projectors.extend(extra);
    let single = OptimizerConfig {
        scheme: Scheme::Single,
        ..cfg.clone()
    };
    let mut sw = Sweeper::new(init, &tpo, projectors, &single)?;
    let report = sw.run(&mut |_, _| Ok(()))?;
    let mut net = sw.net;
    // rescale to the orthogonal projection of the target onto the result
    let mut ov = C64::new(0.0, 0.0);
    for (w, t) in targets {
        ov += w * net.scalar_product(t)?;
    }
    let fid = ov.norm() / (net.norm_sqr()? * norm2).sqrt();
    let c = net.center().unwrap();
    let t = net.tensor(c).scale(ov / net.norm_sqr()?);
    net.set_tensor(c, t, true)?;
    Ok(CompressResult {
        net,
        fidelity: fid,
        report,
    })
}

/// Best approximation of `Σ w_j |Ψ_j⟩` with bond dimension `cfg.bond_dim`
/// on the targets' geometry. The exact sum is cut link by link in
/// canonical gauge first; sweeps then maximize the overlap with closed-form
/// center updates. The result carries the norm and phase of the projected
/// target.
pub fn compress(targets: &[(C64, Network)], cfg: &OptimizerConfig) -> Result<CompressResult> {
    compress_with(targets, vec![], cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrthoMode {
    /// Compress `Ψ − Σ_k Ψ_k ⟨Ψ_k|Ψ⟩/⟨Ψ_k|Ψ_k⟩`; the `Ψ_k` should be
    /// mutually orthogonal.
    Subtract,
    /// Compress `Ψ` under penalties `ε |Ψ_k⟩⟨Ψ_k|`. `ε = ∞` makes the
    /// orthogonality a hard constraint of every center update.
    Penalty(f64),
}

/// `net` made orthogonal to `against`. The fidelity is measured against the
/// exact Gram–Schmidt vector for [`OrthoMode::Subtract`] and against `net`
/// for [`OrthoMode::Penalty`].
pub fn orthogonalize(net: &Network, against: &[Network], mode: OrthoMode, cfg: &OptimizerConfig) -> Result<CompressResult> {
    match mode {
        OrthoMode::Subtract => {
            let mut targets = vec![(C64::new(1.0, 0.0), net.clone())];
            for a in against {
                let n = a.norm_sqr()?;
                if n > 0.0 {
                    targets.push((-a.scalar_product(net)? / n, a.clone()));
                }
            }
            compress_with(&targets, vec![], cfg)
        }
        OrthoMode::Penalty(eps) => {
            if eps.is_nan() || eps <= 0.0 {
                return Err(TnError::Config("orthogonality penalty must be positive".into()));
            }
            let mut extra = vec![];
            for a in against {
                let mut a = a.clone();
                a.normalize()?;
                extra.push(Projector::single(eps, a));
            }
            compress_with(&[(C64::new(1.0, 0.0), net.clone())], extra, cfg)
        }
    }
}
