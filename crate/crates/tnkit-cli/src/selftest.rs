//! Fast checks of the installed library against exact references. Each one
//! takes well under a second.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnkit::models::{exact_diag_oracle, BoseHubbardSpec, IsingSpec, ModelSpec, Parity};
use tnkit::solver::{compress, exact_sum, ground_state, OptimizerConfig, Scheme};
use tnkit::symm::{Dir, Group, SymLink, SymTensor};
use tnkit::C64;

use crate::CliError;

type Check = Result<String, String>;

fn ising8(lambda: f64) -> ModelSpec {
    ModelSpec::Ising(IsingSpec {
        n: 8,
        lambda,
        pbc: true,
        sector: Parity::Even,
    })
}

fn ising_oracle() -> Check {
    let spec = ising8(1.0);
    let exact = exact_diag_oracle(&spec, true).map_err(|e| e.to_string())?.energies[0];
    let net = spec.initial_network(16, 1, true).map_err(|e| e.to_string())?;
    let tpo = spec.tpo(true).map_err(|e| e.to_string())?;
    let (_, rep) = ground_state(net, &tpo, &OptimizerConfig::new(16, Scheme::Double)).map_err(|e| e.to_string())?;
    let d = (rep.energy() - exact).abs();
    if d > 1e-8 {
        return Err(format!("E = {} vs exact {exact}", rep.energy()));
    }
    Ok(format!("|ΔE| = {d:.1e}"))
}

fn bose_hubbard_oracle() -> Check {
    let spec = ModelSpec::BoseHubbard(BoseHubbardSpec {
        n: 4,
        n_b: 2,
        d: 3,
        t: 1.0,
        u: 10.0,
        beta: 0.0,
        s_b: 0,
        omega: 0.25,
        pbc: true,
    });
    let exact = exact_diag_oracle(&spec, true).map_err(|e| e.to_string())?.energies[0];
    let net = spec.initial_network(16, 2, true).map_err(|e| e.to_string())?;
    let tpo = spec.tpo(true).map_err(|e| e.to_string())?;
    let (_, rep) = ground_state(net, &tpo, &OptimizerConfig::new(16, Scheme::expanded(2))).map_err(|e| e.to_string())?;
    let d = (rep.energy() - exact).abs();
    if d > 1e-8 {
        return Err(format!("E = {} vs exact {exact}", rep.energy()));
    }
    Ok(format!("|ΔE| = {d:.1e}"))
}

fn gauge_round_trip() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..4 {
        let mut net = ising8(1.0).initial_network(4, seed, seed % 2 == 0).map_err(|e| e.to_string())?;
        let before = net.amplitudes().map_err(|e| e.to_string())?;
        for c in [0, 5, 3, 4] {
            net.move_center(c).map_err(|e| e.to_string())?;
        }
        net.install_canonical_gauge(1e-14).map_err(|e| e.to_string())?;
        let after = net.amplitudes().map_err(|e| e.to_string())?;
        let ov = before.dot(&after);
        let mut x = after.scale(ov.conj() / ov.norm());
        x.axpy(C64::new(-1.0, 0.0), &before).map_err(|e| e.to_string())?;
        worst = worst.max(x.max_abs());
    }
    if worst > 1e-12 {
        return Err(format!("amplitudes moved by {worst:.2e}"));
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn symmetric_contraction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Group::u1();
    let l = |p: &[(i64, usize)]| SymLink::from_pairs(g, p).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = SymTensor::random(
            vec![l(&[(0, 2), (1, 3)]), l(&[(0, 1), (1, 2), (2, 1)]), l(&[(1, 2), (2, 2)])],
            vec![Dir::In, Dir::In, Dir::Out],
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let b = SymTensor::random(
            vec![l(&[(1, 2), (2, 2)]), l(&[(0, 3), (1, 1)])],
            vec![Dir::In, Dir::Out],
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let c = a.contract(&b, &[(2, 0)]).map_err(|e| e.to_string())?;
        let dc = a.downgrade().contract(&b.downgrade(), &[(2, 0)]).map_err(|e| e.to_string())?;
        worst = worst.max(c.downgrade().max_abs_diff(&dc));
    }
    if worst > 1e-12 {
        return Err(format!("symmetric and dense products differ by {worst:.2e}"));
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn addition_and_compression() -> Check {
    let spec = ising8(1.0);
    let a = spec.initial_network(4, 11, true).map_err(|e| e.to_string())?;
    let b = spec.initial_network(4, 12, true).map_err(|e| e.to_string())?;
    let one = C64::new(1.0, 0.0);
    let terms = [(one, a), (one, b)];
    let sum = exact_sum(&terms).map_err(|e| e.to_string())?;
    let res = compress(&terms, &OptimizerConfig::new(8, Scheme::Single)).map_err(|e| e.to_string())?;
    let dense = sum.amplitudes().map_err(|e| e.to_string())?;
    let got = res.net.amplitudes().map_err(|e| e.to_string())?;
    let dev = got.max_abs_diff(&dense);
    if dev > 1e-8 || res.fidelity < 1.0 - 1e-10 {
        return Err(format!("fidelity {} deviation {dev:.2e}", res.fidelity));
    }
    Ok(format!("fidelity 1-{:.1e}", 1.0 - res.fidelity))
}

pub fn run(quiet: bool) -> Result<(), CliError> {
    let checks: [(&str, fn() -> Check); 5] = [
        ("Ising ground state vs exact diagonalization", ising_oracle),
        ("Bose-Hubbard ground state vs sector oracle", bose_hubbard_oracle),
        ("gauge moves keep the amplitudes", gauge_round_trip),
        ("symmetric contraction matches dense", symmetric_contraction),
        ("exact sum and compression", addition_and_compression),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        match f() {
            Ok(detail) => {
                if !quiet {
                    println!("PASS  {name}: {detail}");
                }
            }
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Internal(format!("{failed} self-test check(s) failed")));
    }
    println!("selftest: all {} checks passed", checks.len());
    Ok(())
}
