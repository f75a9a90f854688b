//! The sweep driver and the three center updates.

use super::lanczos::{lanczos_lowest, orthogonalize, vnorm};
use super::{make_sweep_plan, ConvergenceReport, OptimizerConfig, Scheme, SweepPlan, SweepRecord};
use crate::dense::Truncation;
use crate::error::{Result, TnError};
use crate::network::{absorb, qr_at, svd_at, Network};
use crate::operators::{EffectiveOp, Environment, Frame, Projector, Tpo};
use crate::symm::{fused_link, Dir, LinkMap, SymLink, SymTensor};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use web_time::Instant;

struct Local {
    x: SymTensor,
    energy: f64,
    applications: usize,
    converged: bool,
}

fn multiply(h: &EffectiveOp, lay: &crate::symm::BlockLayout, v: &[C64]) -> Result<Vec<C64>> {
    Ok(h.apply(&SymTensor::from_flat(lay, v))?.to_flat(lay))
}

/// Lowest eigenvector of `h` in the complement of its hard constraints,
/// normalized. A lone negative projector with no operator terms is solved
/// in closed form.
fn solve_local(h: &EffectiveOp, guess: &SymTensor, cfg: &OptimizerConfig, rng: &mut ChaCha8Rng) -> Result<Local> {
    let lay = h.layout()?;
    let mut cons: Vec<Vec<C64>> = vec![];
    for c in h.constraints() {
        let mut v = c.to_flat(&lay);
        let n0 = vnorm(&v);
        orthogonalize(&mut v, &cons);
        let n = vnorm(&v);
        if n > 1e-12 * n0.max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|z| *z /= n);
            cons.push(v);
        }
    }
    let finite: Vec<&(f64, SymTensor)> = h.projector_vectors().iter().filter(|p| p.0.is_finite()).collect();
    if h.is_pure_projector() && finite.len() == 1 && finite[0].0 < 0.0 {
        let (eps, u) = finite[0];
        let mut v = u.to_flat(&lay);
        orthogonalize(&mut v, &cons);
        let n = vnorm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|z| *z /= n);
            return Ok(Local {
                x: SymTensor::from_flat(&lay, &v),
                energy: eps * n * n,
                applications: 0,
                converged: true,
            });
        }
    }
    let mut start = guess.to_flat(&lay);
    orthogonalize(&mut start, &cons);
    if vnorm(&start) < 1e-10 * guess.norm().max(f64::MIN_POSITIVE) {
        start = (0..lay.len)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        orthogonalize(&mut start, &cons);
    }
    let opts = super::LanczosOptions { k: 1, ..cfg.eigen.clone() };
    let r = lanczos_lowest(
        |v| {
            if cons.is_empty() {
                return multiply(h, &lay, v);
            }
            let mut w = v.to_vec();
            orthogonalize(&mut w, &cons);
            let mut y = multiply(h, &lay, &w)?;
            orthogonalize(&mut y, &cons);
            Ok(y)
        },
        &start,
        &opts,
    )?;
    let mut x = r.vectors[0].clone();
    let n = vnorm(&x);
    x.iter_mut().for_each(|z| *z /= n);
    Ok(Local {
        x: SymTensor::from_flat(&lay, &x),
        energy: r.values[0],
        applications: r.applications,
        converged: r.converged,
    })
}

fn others(t: &SymTensor, skip: usize) -> Vec<(&SymLink, Dir)> {
    (0..t.rank()).filter(|&r| r != skip).map(|r| (t.link(r), t.dir(r))).collect()
}

fn relative_discard(spec: &crate::dense::SingularSpectrum) -> f64 {
    let all = spec.discarded_weight + spec.kept_norm * spec.kept_norm;
    if all > 0.0 {
        (spec.discarded_weight / all).sqrt()
    } else {
        0.0
    }
}

pub(crate) struct Sweeper<'a> {
    pub(crate) net: Network,
    pub(crate) env: Environment,
    cfg: &'a OptimizerConfig,
    plan: SweepPlan,
    rng: ChaCha8Rng,
    applications: usize,
    failures: usize,
    trunc_err: f64,
}

impl<'a> Sweeper<'a> {
    pub(crate) fn new(mut net: Network, tpo: &Tpo, projectors: Vec<Projector>, cfg: &'a OptimizerConfig) -> Result<Sweeper<'a>> {
        cfg.validate()?;
        if net.center().is_none() {
            net.install_unitary_gauge(net.root())?;
        }
        net.normalize()?;
        let plan = make_sweep_plan(&net);
        let env = Environment::new(&net, tpo, projectors)?;
        Ok(Sweeper {
            net,
            env,
            cfg,
            plan,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            applications: 0,
            failures: 0,
            trunc_err: 0.0,
        })
    }

    fn truncation(&self) -> Truncation {
        Truncation {
            max_dim: Some(self.cfg.bond_dim),
            rel_threshold: self.cfg.rel_cut,
        }
    }

    fn goto(&mut self, target: usize) -> Result<()> {
        while let Some(c) = self.net.center().filter(|&c| c != target) {
            let next = self.net.path(c, target)[1];
            self.net.step_center(next)?;
            self.env.advance(&self.net, c, next)?;
        }
        Ok(())
    }

    fn tally(&mut self, l: &Local) {
        self.applications += l.applications;
        if !l.converged {
            self.failures += 1;
        }
    }

    fn single(&mut self, c: usize) -> Result<f64> {
        let frame = Frame::node(&self.net, c);
        let local = {
            let h = self.env.effective(&self.net, &frame)?;
            solve_local(&h, self.net.tensor(c), self.cfg, &mut self.rng)?
        };
        self.tally(&local);
        self.net.set_tensor(c, local.x, true)?;
        Ok(local.energy)
    }

    fn double(&mut self, c: usize, c2: usize) -> Result<f64> {
        let frame = Frame::pair(&self.net, c, c2)?;
        let l = frame.inner_link().unwrap();
        let pc = self.net.position(c, l).unwrap();
        let pc2 = self.net.position(c2, l).unwrap();
        let guess = frame.gather(&self.net)?;
        let local = {
            let h = self.env.effective(&self.net, &frame)?;
            solve_local(&h, &guess, self.cfg, &mut self.rng)?
        };
        self.tally(&local);
        let split = self.net.tensor(c).rank() - 1;
        let s = local.x.svd(split, &self.truncation())?;
        self.trunc_err = self.trunc_err.max(relative_discard(&s.spectrum));
        let mut u = s.u.clone();
        let mut svh = s.s_vh();
        if self.net.tensor(c).dir(pc) == Dir::In {
            u = u.invert_link(split);
            svh = svh.invert_link(0);
        }
        let n = svh.norm();
        svh.scale_mut(C64::new(1.0 / n, 0.0));
        let tc = u.move_link(split, pc)?;
        let tc2 = svh.move_link(0, pc2)?;
        self.net.replace_tensors(vec![(c, tc), (c2, tc2)], Some(c2))?;
        self.env.advance(&self.net, c, c2)?;
        Ok(local.energy)
    }

    /// `t` with link `pos` enlarged to `new`: the part on `common` keeps the
    /// old entries, the rest is small random noise.
    fn pad_tensor(&mut self, t: &SymTensor, pos: usize, common: &SymLink, new: &SymLink) -> Result<SymTensor> {
        let mut maps = vec![None; t.rank()];
        maps[pos] = Some(LinkMap::leading(common));
        let old = t.subtensor_read(&maps)?;
        let mut links = t.links().to_vec();
        links[pos] = new.clone();
        let mut r = SymTensor::random(links, t.dirs().to_vec(), &mut self.rng)?;
        let fresh = r.num_elements().saturating_sub(old.num_elements()).max(1);
        let rn = r.norm();
        if rn > 0.0 {
            let scale = 1e-3 * t.norm() / rn * (r.num_elements() as f64 / fresh as f64).sqrt();
            r.scale_mut(C64::new(scale, 0.0));
        }
        r.subtensor_assign(&old, &maps)
    }

    fn expanded(&mut self, c: usize, c2: usize, d_pad: usize, n_inner: usize) -> Result<f64> {
        let l = self
            .net
            .link_between(c, c2)
            .ok_or_else(|| TnError::Network(format!("nodes {c} and {c2} are not adjacent")))?;
        let pc = self.net.position(c, l).unwrap();
        let pc2 = self.net.position(c2, l).unwrap();
        let eta_o = self.net.link(l).clone();
        let new = {
            let t1 = self.net.tensor(c);
            let t2 = self.net.tensor(c2);
            let d = t1.dir(pc);
            let eta1 = fused_link(&others(t1, pc), d.flip())?;
            let eta2 = fused_link(&others(t2, pc2), d)?;
            let eta_max = eta1.intersect(&eta2)?;
            eta_o.pad(&eta_max.capped(d_pad))?.intersect(&eta_max)?
        };
        if d_pad == 0 || new == eta_o {
            // nothing to expand: this is exactly a single-tensor update
            return self.single(c);
        }
        let common = eta_o.intersect(&new)?;
        let t1 = self.net.tensor(c).clone();
        let t2 = self.net.tensor(c2).clone();
        let t1 = self.pad_tensor(&t1, pc, &common, &new)?;
        let t2 = self.pad_tensor(&t2, pc2, &common, &new)?;
        // the padded partner is no longer an isometry toward c
        let (q2, r) = qr_at(&t2, pc2)?;
        let t1 = absorb(&t1, pc, &r)?;
        self.net.replace_tensors(vec![(c, t1), (c2, q2)], Some(c))?;
        self.env.renormalize(&self.net, l, c2)?;
        let mut e = 0.0;
        for round in 0..n_inner {
            self.single(c)?;
            self.net.step_center(c2)?;
            self.env.advance(&self.net, c, c2)?;
            e = self.single(c2)?;
            if round + 1 < n_inner {
                self.net.step_center(c)?;
                self.env.advance(&self.net, c2, c)?;
            }
        }
        let (u, w, vh, spec) = svd_at(self.net.tensor(c2), pc2, &self.truncation())?;
        self.trunc_err = self.trunc_err.max(relative_discard(&spec));
        let mut t2 = u.scale_link(pc2, &w)?;
        let n = t2.norm();
        t2.scale_mut(C64::new(1.0 / n, 0.0));
        let t1 = absorb(self.net.tensor(c), pc, &vh)?;
        self.net.replace_tensors(vec![(c, t1), (c2, t2)], Some(c2))?;
        self.env.advance(&self.net, c, c2)?;
        Ok(e)
    }

    /// One pass over the plan; returns the energy of the resulting state.
    pub(crate) fn sweep(&mut self) -> Result<f64> {
        self.applications = 0;
        self.failures = 0;
        self.trunc_err = 0.0;
        for i in 0..self.plan.len() {
            let c = self.plan.centers[i];
            self.goto(c)?;
            match (self.cfg.scheme, self.plan.partner(&self.net, i)) {
                (Scheme::Single, _) | (_, None) => {
                    self.single(c)?;
                }
                (Scheme::Double, Some(c2)) => {
                    self.double(c, c2)?;
                }
                (Scheme::Expanded { d_pad, n_inner }, Some(c2)) => {
                    self.expanded(c, c2, d_pad, n_inner)?;
                }
            }
        }
        self.env.energy(&self.net)
    }

    /// Sweeps until `E(s−1) − E(s) < ε` or the sweep budget runs out.
    pub(crate) fn run(&mut self, observer: &mut dyn FnMut(&SweepRecord, &Network) -> Result<()>) -> Result<ConvergenceReport> {
        let mut report = ConvergenceReport {
            initial_energy: self.env.energy(&self.net)?,
            ..Default::default()
        };
        let mut prev = report.initial_energy;
        for s in 1..=self.cfg.max_sweeps {
            let t0 = Instant::now();
            let e = self.sweep()?;
            let rec = SweepRecord {
                sweep: s,
                energy: e,
                delta: prev - e,
                max_trunc_err: self.trunc_err,
                applications: self.applications,
                eig_failures: self.failures,
                seconds: t0.elapsed().as_secs_f64(),
                links: self.net.link_summary(),
            };
            observer(&rec, &self.net)?;
            report.sweeps.push(rec);
            if prev - e < self.cfg.threshold.epsilon(e, self.cfg.bond_dim) {
                report.converged = true;
                break;
            }
            prev = e;
        }
        Ok(report)
    }
}

/// Ground state of `tpo`, starting from `net`.
pub fn ground_state(net: Network, tpo: &Tpo, cfg: &OptimizerConfig) -> Result<(Network, ConvergenceReport)> {
    ground_state_with(net, tpo, vec![], cfg, &mut |_, _| Ok(()))
}

/// [`ground_state`] with penalty projectors added to the Hamiltonian and an
/// observer called after every sweep; an observer error aborts the run.
pub fn ground_state_with(
    net: Network,
    tpo: &Tpo,
    projectors: Vec<Projector>,
    cfg: &OptimizerConfig,
    observer: &mut dyn FnMut(&SweepRecord, &Network) -> Result<()>,
) -> Result<(Network, ConvergenceReport)> {
    let mut sw = Sweeper::new(net, tpo, projectors, cfg)?;
    let report = sw.run(observer)?;
    Ok((sw.net, report))
}

/// Ten times the largest coupling times the number of sites, where the
/// coupling of a term is the product of the largest entries of its local
/// operators.
pub fn default_penalty(tpo: &Tpo) -> f64 {
    let c = tpo
        .terms()
        .iter()
        .map(|t| t.ops.iter().map(|o| o.op.max_abs()).product::<f64>())
        .fold(0.0f64, f64::max);
    10.0 * c.max(1e-300) * tpo.num_sites() as f64
}

#[derive(Clone, Debug)]
pub struct ExcitedReport {
    pub report: ConvergenceReport,
    /// `⟨H⟩` without the penalty terms.
    pub energy: f64,
    /// `|⟨Ψ_k|Ψ⟩|` for each lower state, normalized.
    pub overlaps: Vec<f64>,
    pub penalty: f64,
}

/// Lowest state of `H + ε Σ_k |Ψ_k⟩⟨Ψ_k|`. The lower states are normalized
/// copies; `penalty` defaults to [`default_penalty`].
pub fn excited_state(
    net: Network,
    tpo: &Tpo,
    lower: &[Network],
    penalty: Option<f64>,
    cfg: &OptimizerConfig,
    observer: &mut dyn FnMut(&SweepRecord, &Network) -> Result<()>,
) -> Result<(Network, ExcitedReport)> {
    let eps = penalty.unwrap_or_else(|| default_penalty(tpo));
    let mut projectors = vec![];
    for s in lower {
        let mut s = s.clone();
        s.normalize()?;
        projectors.push(Projector::single(eps, s));
    }
    let (out, report) = ground_state_with(net, tpo, projectors, cfg, observer)?;
    let energy = Environment::new(&out, tpo, vec![])?.energy(&out)?;
    let overlaps = lower
        .iter()
        .map(|s| super::compress::fidelity(s, &out))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        out,
        ExcitedReport {
            report,
            energy,
            overlaps,
            penalty: eps,
        },
    ))
}
