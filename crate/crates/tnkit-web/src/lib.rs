//! Browser demo: three small runs of the tnkit solver exposed through
//! wasm-bindgen. Every entry point returns a JSON string so the page needs
//! no generated bindings beyond the functions themselves.

use serde_json::json;
use tnkit::models::{exact_diag_oracle, ising_exact_energy_per_site, BoseHubbardSpec, IsingSpec, ModelSpec, Parity};
use tnkit::solver::{compress, ground_state_with, OptimizerConfig, Scheme};
use tnkit::C64;
use wasm_bindgen::prelude::*;

// keep runs small enough for a page that blocks while it computes
const MAX_SITES: usize = 32;
const MAX_BOND: usize = 32;

fn scheme(name: &str, d_pad: usize) -> Result<Scheme, String> {
    match name {
        "single" => Ok(Scheme::Single),
        "double" => Ok(Scheme::Double),
        "expanded" => Ok(Scheme::expanded(d_pad)),
        _ => Err(format!("unknown scheme {name}")),
    }
}

fn limits(n: usize, d: usize) -> Result<(), String> {
    if n > MAX_SITES || d > MAX_BOND {
        return Err(format!("the demo caps N at {MAX_SITES} and D at {MAX_BOND}"));
    }
    Ok(())
}

fn run(spec: &ModelSpec, d: usize, scheme: Scheme, seed: u64) -> Result<(Vec<f64>, Vec<usize>, bool), String> {
    let tpo = spec.tpo(true).map_err(|e| e.to_string())?;
    let net = spec.initial_network(d, seed, true).map_err(|e| e.to_string())?;
    let mut energies = vec![];
    let mut apps = vec![];
    let (_, rep) = ground_state_with(net, &tpo, vec![], &OptimizerConfig::new(d, scheme), &mut |r, _| {
        energies.push(r.energy);
        apps.push(r.applications);
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok((energies, apps, rep.converged))
}

/// Ising chain ground state: energy per sweep, plus the closed form where
/// one exists (critical field, periodic).
pub fn ising_json(n: usize, lambda: f64, pbc: bool, bond_dim: usize, scheme_name: &str, d_pad: usize) -> Result<String, String> {
    limits(n, bond_dim)?;
    let spec = ModelSpec::Ising(IsingSpec {
        n,
        lambda,
        pbc,
        sector: Parity::Even,
    });
    spec.validate().map_err(|e| e.to_string())?;
    let (energies, apps, converged) = run(&spec, bond_dim, scheme(scheme_name, d_pad)?, 1)?;
    let exact = (pbc && lambda.abs() == 1.0).then(|| ising_exact_energy_per_site(n) * n as f64);
    Ok(json!({ "energies": energies, "applications": apps, "converged": converged, "exact": exact }).to_string())
}

/// Bose-Hubbard ring at fixed boson number, compared with exact
/// diagonalization of the sector when it is small enough.
pub fn bose_hubbard_json(n: usize, n_b: usize, d: usize, u: f64, omega: f64, bond_dim: usize) -> Result<String, String> {
    limits(n, bond_dim)?;
    let spec = ModelSpec::BoseHubbard(BoseHubbardSpec {
        n,
        n_b,
        d,
        t: 1.0,
        u,
        beta: 0.0,
        s_b: 0,
        omega,
        pbc: true,
    });
    spec.validate().map_err(|e| e.to_string())?;
    let (energies, apps, converged) = run(&spec, bond_dim, Scheme::Double, 2)?;
    let exact = exact_diag_oracle(&spec, true).ok().map(|s| s.energies[0]);
    Ok(json!({ "energies": energies, "applications": apps, "converged": converged, "exact": exact }).to_string())
}

/// Sum of two random N-site states compressed to every bond dimension from
/// 1 to `max_bond`: fidelity against the exact sum.
pub fn compression_json(n: usize, bond_dim: usize, max_bond: usize) -> Result<String, String> {
    limits(n, max_bond)?;
    let spec = ModelSpec::Ising(IsingSpec {
        n,
        lambda: 1.0,
        pbc: false,
        sector: Parity::Even,
    });
    let a = spec.initial_network(bond_dim, 3, true).map_err(|e| e.to_string())?;
    let b = spec.initial_network(bond_dim, 4, true).map_err(|e| e.to_string())?;
    let one = C64::new(1.0, 0.0);
    let targets = [(one, a), (one, b)];
    let mut rows = vec![];
    for d in 1..=max_bond {
        let res = compress(&targets, &OptimizerConfig::new(d, Scheme::Single)).map_err(|e| e.to_string())?;
        rows.push(json!({ "bond_dim": d, "fidelity": res.fidelity }));
    }
    Ok(json!({ "rows": rows }).to_string())
}

#[wasm_bindgen]
pub fn ising(n: usize, lambda: f64, pbc: bool, bond_dim: usize, scheme: &str, d_pad: usize) -> Result<String, JsValue> {
    ising_json(n, lambda, pbc, bond_dim, scheme, d_pad).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bose_hubbard(n: usize, n_b: usize, d: usize, u: f64, omega: f64, bond_dim: usize) -> Result<String, JsValue> {
    bose_hubbard_json(n, n_b, d, u, omega, bond_dim).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compression(n: usize, bond_dim: usize, max_bond: usize) -> Result<String, JsValue> {
    compression_json(n, bond_dim, max_bond).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn ising_reaches_the_closed_form() {
        let v: Value = serde_json::from_str(&ising_json(8, 1.0, true, 16, "double", 0).unwrap()).unwrap();
        let last = v["energies"].as_array().unwrap().last().unwrap().as_f64().unwrap();
        assert!((last - v["exact"].as_f64().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn bose_hubbard_reports_the_oracle() {
        let v: Value = serde_json::from_str(&bose_hubbard_json(4, 2, 3, 10.0, 0.25, 16).unwrap()).unwrap();
        let last = v["energies"].as_array().unwrap().last().unwrap().as_f64().unwrap();
        assert!((last - v["exact"].as_f64().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn fidelity_grows_with_the_bond_dimension() {
        let v: Value = serde_json::from_str(&compression_json(8, 4, 8).unwrap()).unwrap();
        let f: Vec<f64> = v["rows"].as_array().unwrap().iter().map(|r| r["fidelity"].as_f64().unwrap()).collect();
        assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(f[7] > 1.0 - 1e-10);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(ising_json(6, 1.0, true, 8, "single", 0).is_err());
        assert!(ising_json(8, 1.0, true, 8, "triple", 0).is_err());
        assert!(ising_json(64, 1.0, true, 8, "single", 0).is_err());
    }
}
