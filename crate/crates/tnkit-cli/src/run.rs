use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use tnkit::models::{ising_exact_energy_per_site, ModelSpec};
use tnkit::network::Network;
use tnkit::solver::{compress as compress_states, excited_state, ground_state_with, OptimizerConfig, Scheme, SweepRecord};
use tnkit::{TnError, C64};

use crate::config::RunConfig;
use crate::log::Log;
use crate::{CliError, CompressArgs};

fn describe(model: &ModelSpec) -> Value {
    match model {
        ModelSpec::Ising(s) => json!({
            "model": "ising", "n": s.n, "lambda": s.lambda, "pbc": s.pbc, "sector": s.sector.label(),
        }),
        ModelSpec::BoseHubbard(s) => json!({
            "model": "bh", "n": s.n, "nb": s.n_b, "local_dim": s.d, "t": s.t, "u": s.u,
            "beta": s.beta, "barrier_site": s.s_b, "omega": s.omega, "pbc": s.pbc,
        }),
    }
}

fn start_record(cfg: &RunConfig, command: &str) -> Value {
    let mut v = describe(&cfg.model);
    v["event"] = json!("start");
    v["command"] = json!(command);
    v["symmetric"] = json!(cfg.symmetric);
    v["bond_dim"] = json!(cfg.optimizer.bond_dim);
    v["scheme"] = json!(cfg.optimizer.scheme.name());
    if let Scheme::Expanded { d_pad, n_inner } = cfg.optimizer.scheme {
        v["d_pad"] = json!(d_pad);
        v["n_inner"] = json!(n_inner);
    }
    v["seed"] = json!(cfg.optimizer.seed);
    v
}

/// The selector label a run must keep. Every checkpoint is checked against it.
fn expected_sector(cfg: &RunConfig) -> Result<Option<tnkit::symm::Qn>, CliError> {
    if !cfg.symmetric {
        return Ok(None);
    }
    let sel = cfg.model.selector(true)?;
    Ok(Some(sel.sectors()[0].0))
}

fn check_sector(net: &Network, want: Option<tnkit::symm::Qn>) -> tnkit::Result<()> {
    if let Some(q) = want {
        if net.selector_label() != Some(q) {
            return Err(TnError::Network(format!(
                "state left its symmetry sector: {:?} instead of {q:?}",
                net.selector_label()
            )));
        }
    }
    Ok(())
}

/// The loaded checkpoint must describe the configured model.
fn load_compatible(path: &Path, cfg: &RunConfig) -> Result<Network, CliError> {
    let net = Network::load(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let n = cfg.model.num_sites();
    if net.num_sites() != n {
        return Err(CliError::Config(format!("checkpoint has {} sites, the model {n}", net.num_sites())));
    }
    let phys = cfg.model.phys_link(cfg.symmetric);
    for s in 0..n {
        let (q, p) = net.site_position(s).expect("every site sits on a node");
        if net.tensor(q).link(p) != &phys {
            return Err(CliError::Config(format!("checkpoint site {s} has a different local basis")));
        }
    }
    if let Some(q) = expected_sector(cfg)? {
        if net.selector_label() != Some(q) {
            return Err(CliError::Config("checkpoint targets a different symmetry sector".into()));
        }
    }
    Ok(net)
}

fn initial(cfg: &RunConfig, path: Option<&Path>, seed: u64) -> Result<Network, CliError> {
    match path {
        Some(p) if cfg.resume && p.exists() => load_compatible(p, cfg),
        Some(p) if cfg.resume => Err(CliError::Io(format!("{}: no checkpoint to resume from", p.display()))),
        _ => Ok(cfg.model.initial_network(cfg.optimizer.bond_dim, seed, cfg.symmetric)?),
    }
}

fn save(net: &Network, path: &Path) -> tnkit::Result<()> {
    // write to a sibling first so an interrupted run never leaves half a file
    let tmp = path.with_extension("partial");
    net.save(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn io(e: std::io::Error) -> TnError {
    TnError::Io(e.to_string())
}

/// Per-sweep observer: log row, intermediate checkpoint every `every` sweeps.
fn observer<'a>(
    log: &'a mut Log,
    path: Option<PathBuf>,
    every: usize,
    sector: Option<tnkit::symm::Qn>,
    state: Option<usize>,
) -> impl FnMut(&SweepRecord, &Network) -> tnkit::Result<()> + 'a {
    move |r, net| {
        log.sweep(r, state).map_err(io)?;
        if let Some(p) = &path {
            if r.sweep % every == 0 {
                check_sector(net, sector)?;
                save(net, p)?;
            }
        }
        Ok(())
    }
}

fn emit(log: &mut Log, summary: &Value) -> Result<(), CliError> {
    log.record(summary)?;
    println!("{summary}");
    Ok(())
}

pub fn ground(cfg: &RunConfig, quiet: bool) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut log = Log::open(cfg.log.as_deref(), quiet)?;
    log.record(&start_record(cfg, "gs"))?;
    let net = initial(cfg, cfg.checkpoint.as_deref(), cfg.optimizer.seed)?;
    let tpo = cfg.model.tpo(cfg.symmetric)?;
    let sector = expected_sector(cfg)?;
    let (net, rep) = {
        let mut obs = observer(&mut log, cfg.checkpoint.clone(), cfg.checkpoint_every, sector, None);
        ground_state_with(net, &tpo, vec![], &cfg.optimizer, &mut obs)?
    };
    check_sector(&net, sector)?;
    if let Some(p) = &cfg.checkpoint {
        save(&net, p)?;
    }
    let n = cfg.model.num_sites() as f64;
    let mut summary = json!({
        "event": "summary",
        "command": "gs",
        "energy": rep.energy(),
        "energy_per_site": rep.energy() / n,
        "initial_energy": rep.initial_energy,
        "sweeps": rep.sweeps.len(),
        "converged": rep.converged,
        "seconds": t0.elapsed().as_secs_f64(),
    });
    if let ModelSpec::Ising(s) = &cfg.model {
        if s.pbc && s.lambda.abs() == 1.0 && s.sector.label() == 0 {
            let exact = ising_exact_energy_per_site(s.n);
            summary["exact_energy_per_site"] = json!(exact);
            summary["relative_error"] = json!(((rep.energy() / n - exact) / exact).abs());
        }
    }
    if let Some(p) = &cfg.checkpoint {
        summary["checkpoint"] = json!(p);
    }
    emit(&mut log, &summary)?;
    if !rep.converged {
        return Err(CliError::NotConverged(format!("{} sweeps without meeting the threshold", rep.sweeps.len())));
    }
    Ok(())
}

fn state_path(base: &Path, k: usize) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(format!(".{k}"));
    PathBuf::from(s)
}

pub fn excited(cfg: &RunConfig, levels: usize, penalty: Option<f64>, quiet: bool) -> Result<(), CliError> {
    if let Some(p) = penalty {
        if !(p > 0.0) {
            return Err(CliError::Config("the penalty must be positive".into()));
        }
    }
    let t0 = Instant::now();
    let mut log = Log::open(cfg.log.as_deref(), quiet)?;
    log.record(&start_record(cfg, "excited"))?;
    let tpo = cfg.model.tpo(cfg.symmetric)?;
    let sector = expected_sector(cfg)?;
    let mut states: Vec<Network> = vec![];
    let mut rows = vec![];
    let mut all_converged = true;
    for k in 0..=levels {
        let path = cfg.checkpoint.as_ref().map(|p| state_path(p, k));
        let start = initial(cfg, path.as_deref(), cfg.optimizer.seed + k as u64)?;
        let mut obs = observer(&mut log, path.clone(), cfg.checkpoint_every, sector, Some(k));
        let (net, energy, rep, overlaps) = if k == 0 {
            let (net, rep) = ground_state_with(start, &tpo, vec![], &cfg.optimizer, &mut obs)?;
            (net, rep.energy(), rep, vec![])
        } else {
            let (net, ex) = excited_state(start, &tpo, &states, penalty, &cfg.optimizer, &mut obs)?;
            (net, ex.energy, ex.report, ex.overlaps)
        };
        check_sector(&net, sector)?;
        if let Some(p) = &path {
            save(&net, p)?;
        }
        all_converged &= rep.converged;
        rows.push(json!({
            "state": k,
            "energy": energy,
            "sweeps": rep.sweeps.len(),
            "converged": rep.converged,
            "overlaps": overlaps,
        }));
        states.push(net);
    }
    let summary = json!({
        "event": "summary",
        "command": "excited",
        "states": rows,
        "converged": all_converged,
        "seconds": t0.elapsed().as_secs_f64(),
    });
    emit(&mut log, &summary)?;
    if !all_converged {
        return Err(CliError::NotConverged("at least one state missed the threshold".into()));
    }
    Ok(())
}

pub fn compress(args: &CompressArgs, quiet: bool) -> Result<(), CliError> {
    let t0 = Instant::now();
    let weights = if args.weights.is_empty() {
        vec![1.0; args.inputs.len()]
    } else {
        args.weights.clone()
    };
    if weights.len() != args.inputs.len() {
        return Err(CliError::Config(format!(
            "{} weights for {} inputs",
            weights.len(),
            args.inputs.len()
        )));
    }
    let mut targets = vec![];
    for (w, p) in weights.iter().zip(&args.inputs) {
        let net = Network::load(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        targets.push((C64::new(*w, 0.0), net));
    }
    let mut cfg = OptimizerConfig::new(args.bond_dim, Scheme::Single);
    cfg.max_sweeps = args.max_sweeps;
    cfg.validate()?;
    let mut log = Log::open(args.log.as_deref(), quiet)?;
    log.record(&json!({"event": "start", "command": "compress", "inputs": args.inputs, "bond_dim": args.bond_dim}))?;
    let res = compress_states(&targets, &cfg).map_err(|e| match e {
        TnError::Network(m) => CliError::Config(m),
        other => other.into(),
    })?;
    for r in &res.report.sweeps {
        log.sweep(r, None)?;
    }
    if let Some(p) = &args.checkpoint {
        save(&res.net, p)?;
    }
    let summary = json!({
        "event": "summary",
        "command": "compress",
        "fidelity": res.fidelity,
        "norm": res.net.norm_sqr()?.sqrt(),
        "max_bond_dim": res.net.max_bond_dim(),
        "sweeps": res.report.sweeps.len(),
        "converged": res.report.converged,
        "seconds": t0.elapsed().as_secs_f64(),
    });
    emit(&mut log, &summary)?;
    if !res.report.converged {
        return Err(CliError::NotConverged("compression sweeps missed the threshold".into()));
    }
    Ok(())
}

/// Least-squares slope of `ln t` against `ln D`.
pub fn power_law_exponent(ds: &[usize], ts: &[f64]) -> f64 {
    let xs: Vec<f64> = ds.iter().map(|&d| (d as f64).ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn bench(cfg: &RunConfig, bond_dims: &[usize], sweeps: usize, quiet: bool) -> Result<(), CliError> {
    if bond_dims.is_empty() || sweeps == 0 {
        return Err(CliError::Config("bench needs bond dimensions and at least one sweep".into()));
    }
    let mut log = Log::open(cfg.log.as_deref(), quiet)?;
    log.record(&start_record(cfg, "bench"))?;
    let tpo = cfg.model.tpo(cfg.symmetric)?;
    let mut times = vec![];
    for &d in bond_dims {
        let mut opt = cfg.optimizer.clone();
        opt.bond_dim = d;
        opt.max_sweeps = sweeps;
        opt.threshold = tnkit::solver::Threshold::Relative(0.0);
        let net = cfg.model.initial_network(d, cfg.optimizer.seed, cfg.symmetric)?;
        let mut recs: Vec<SweepRecord> = vec![];
        ground_state_with(net, &tpo, vec![], &opt, &mut |r, _| {
            recs.push(r.clone());
            Ok(())
        })?;
        let timed = if recs.len() > 1 { &recs[1..] } else { &recs[..] };
        let secs = timed.iter().map(|r| r.seconds).sum::<f64>() / timed.len() as f64;
        let apps = timed.iter().map(|r| r.applications).sum::<usize>() / timed.len();
        let row = json!({"event": "bench", "bond_dim": d, "seconds_per_sweep": secs, "N_app": apps, "sweeps": recs.len()});
        if !quiet {
            eprintln!("D = {d:>4}  {secs:>9.3}s per sweep  N_app = {apps}");
        }
        log.record(&row)?;
        times.push(secs);
    }
    let mut summary = json!({
        "event": "summary",
        "command": "bench",
        "scheme": cfg.optimizer.scheme.name(),
        "bond_dims": bond_dims,
        "seconds_per_sweep": times,
    });
    if bond_dims.len() > 1 && times.iter().all(|t| *t > 0.0) {
        summary["exponent"] = json!(power_law_exponent(bond_dims, &times));
    }
    emit(&mut log, &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_a_pure_power_law() {
        let ds = [8, 16, 32, 64];
        let ts: Vec<f64> = ds.iter().map(|&d| 3e-6 * (d as f64).powi(4)).collect();
        assert!((power_law_exponent(&ds, &ts) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn state_paths_append_the_level() {
        assert_eq!(state_path(Path::new("/tmp/run.tnk"), 2), PathBuf::from("/tmp/run.tnk.2"));
    }
}
