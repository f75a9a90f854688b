//! Run configuration: built-in defaults, then a TOML file, then `TNKIT_*`
//! environment variables, then command-line flags. Clap resolves the last
//! two layers, so every flag below is `Option` and only overrides the file
//! when set.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use tnkit::models::{BoseHubbardSpec, IsingSpec, ModelSpec, Parity};
use tnkit::solver::{LanczosOptions, OptimizerConfig, Scheme, Threshold};

use crate::CliError;

/// Keys accepted in a `--config` file. Names match the long flags with
/// dashes turned into underscores.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub pbc: Option<bool>,
    pub sector: Option<String>,
    pub nb: Option<usize>,
    pub local_dim: Option<usize>,
    pub u: Option<f64>,
    pub t: Option<f64>,
    pub beta: Option<f64>,
    pub barrier_site: Option<usize>,
    pub omega: Option<f64>,
    pub symmetric: Option<bool>,
    pub bond_dim: Option<usize>,
    pub scheme: Option<String>,
    pub d_pad: Option<usize>,
    pub n_inner: Option<usize>,
    pub seed: Option<u64>,
    pub max_sweeps: Option<usize>,
    pub rel_tol: Option<f64>,
    pub eig_tol: Option<f64>,
    pub krylov_dim: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the keys below.
    #[arg(long, env = "TNKIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// `ising` or `bh`.
    #[arg(long, env = "TNKIT_MODEL")]
    pub model: Option<String>,
    /// Number of sites, a power of two and at least 4.
    #[arg(long, env = "TNKIT_N")]
    pub n: Option<usize>,
    /// Transverse field of the Ising chain.
    #[arg(long, env = "TNKIT_LAMBDA", allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Periodic boundaries; `--pbc false` for open ones.
    #[arg(long, env = "TNKIT_PBC", num_args = 0..=1, default_missing_value = "true")]
    pub pbc: Option<bool>,
    /// Ising parity sector, `even` or `odd`.
    #[arg(long, env = "TNKIT_SECTOR")]
    pub sector: Option<String>,
    /// Total boson number.
    #[arg(long, env = "TNKIT_NB")]
    pub nb: Option<usize>,
    /// Local cutoff: occupations 0..d-1.
    #[arg(long, env = "TNKIT_LOCAL_DIM")]
    pub local_dim: Option<usize>,
    /// On-site repulsion.
    #[arg(long, env = "TNKIT_U", allow_negative_numbers = true)]
    pub u: Option<f64>,
    /// Hopping amplitude.
    #[arg(long, env = "TNKIT_T", allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Barrier height.
    #[arg(long, env = "TNKIT_BETA", allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Site carrying the barrier.
    #[arg(long, env = "TNKIT_BARRIER_SITE")]
    pub barrier_site: Option<usize>,
    /// Flux through the ring.
    #[arg(long, env = "TNKIT_OMEGA", allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Use the model symmetry (`--symmetric false` for plain tensors).
    #[arg(long, env = "TNKIT_SYMMETRIC", num_args = 0..=1, default_missing_value = "true")]
    pub symmetric: Option<bool>,
    #[arg(long, env = "TNKIT_BOND_DIM")]
    pub bond_dim: Option<usize>,
    /// `single`, `double` or `expanded`.
    #[arg(long, env = "TNKIT_SCHEME")]
    pub scheme: Option<String>,
    /// Extra indices per sector of the expanded scheme.
    #[arg(long, env = "TNKIT_D_PAD")]
    pub d_pad: Option<usize>,
    /// Inner alternations of the expanded scheme.
    #[arg(long, env = "TNKIT_N_INNER")]
    pub n_inner: Option<usize>,
    #[arg(long, env = "TNKIT_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "TNKIT_MAX_SWEEPS")]
    pub max_sweeps: Option<usize>,
    /// Stop when the energy drops by less than this times |E| in a sweep.
    #[arg(long, env = "TNKIT_REL_TOL")]
    pub rel_tol: Option<f64>,
    /// Relative residual of the local eigensolver.
    #[arg(long, env = "TNKIT_EIG_TOL")]
    pub eig_tol: Option<f64>,
    #[arg(long, env = "TNKIT_KRYLOV_DIM")]
    pub krylov_dim: Option<usize>,
    /// Network checkpoint written during and after the run.
    #[arg(long, env = "TNKIT_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Sweeps between intermediate checkpoints.
    #[arg(long, env = "TNKIT_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<usize>,
    /// Start from the checkpoint instead of a random state.
    #[arg(long, env = "TNKIT_RESUME")]
    pub resume: bool,
    /// JSON-lines log of every sweep.
    #[arg(long, env = "TNKIT_LOG")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub symmetric: bool,
    pub optimizer: OptimizerConfig,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub resume: bool,
    pub log: Option<PathBuf>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parity(s: &str) -> Result<Parity, CliError> {
    match s {
        "even" | "0" => Ok(Parity::Even),
        "odd" | "1" => Ok(Parity::Odd),
        _ => Err(CliError::Config(format!("unknown sector {s:?}; use even or odd"))),
    }
}

pub fn scheme(name: &str, d_pad: usize, n_inner: usize) -> Result<Scheme, CliError> {
    match name {
        "single" => Ok(Scheme::Single),
        "double" => Ok(Scheme::Double),
        "expanded" => Ok(Scheme::Expanded { d_pad, n_inner }),
        _ => Err(CliError::Config(format!("unknown scheme {name:?}; use single, double or expanded"))),
    }
}

macro_rules! pick {
    ($args:ident, $file:ident, $field:ident) => {
        $args.$field.clone().or($file.$field.clone())
    };
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let model_name = pick!(self, file, model).unwrap_or_else(|| "ising".into());
        let n = pick!(self, file, n).unwrap_or(16);
        let model = match model_name.as_str() {
            "ising" => ModelSpec::Ising(IsingSpec {
                n,
                lambda: pick!(self, file, lambda).unwrap_or(1.0),
                pbc: pick!(self, file, pbc).unwrap_or(false),
                sector: parity(&pick!(self, file, sector).unwrap_or_else(|| "even".into()))?,
            }),
            "bh" => ModelSpec::BoseHubbard(BoseHubbardSpec {
                n,
                n_b: pick!(self, file, nb).unwrap_or(n / 2),
                d: pick!(self, file, local_dim).unwrap_or(3),
                t: pick!(self, file, t).unwrap_or(1.0),
                u: pick!(self, file, u).unwrap_or(1.0),
                beta: pick!(self, file, beta).unwrap_or(0.0),
                s_b: pick!(self, file, barrier_site).unwrap_or(0),
                omega: pick!(self, file, omega).unwrap_or(0.0),
                pbc: pick!(self, file, pbc).unwrap_or(true),
            }),
            other => return Err(CliError::Config(format!("unknown model {other:?}; use ising or bh"))),
        };
        model.validate()?;
        let symmetric = pick!(self, file, symmetric).unwrap_or(true);
        if matches!(model, ModelSpec::BoseHubbard(_)) && !symmetric {
            return Err(CliError::Config("Bose-Hubbard runs need the symmetric mode".into()));
        }
        if !symmetric && pick!(self, file, sector).is_some() {
            return Err(CliError::Config("a parity sector needs the symmetric mode".into()));
        }
        let bond_dim = pick!(self, file, bond_dim).unwrap_or(16);
        let d_pad = pick!(self, file, d_pad).unwrap_or(2);
        let n_inner = pick!(self, file, n_inner).unwrap_or(2);
        let scheme = scheme(&pick!(self, file, scheme).unwrap_or_else(|| "single".into()), d_pad, n_inner)?;
        let mut eigen = LanczosOptions::default();
        if let Some(t) = pick!(self, file, eig_tol) {
            eigen.tol = t;
        }
        if let Some(k) = pick!(self, file, krylov_dim) {
            eigen.krylov_dim = k;
        }
        let mut optimizer = OptimizerConfig::new(bond_dim, scheme);
        optimizer.eigen = eigen;
        optimizer.seed = pick!(self, file, seed).unwrap_or(0);
        if let Some(m) = pick!(self, file, max_sweeps) {
            optimizer.max_sweeps = m;
        }
        if let Some(r) = pick!(self, file, rel_tol) {
            if !(r >= 0.0) {
                return Err(CliError::Config("rel_tol must be non-negative".into()));
            }
            optimizer.threshold = Threshold::Relative(r);
        }
        optimizer.validate()?;
        let checkpoint = pick!(self, file, checkpoint);
        if self.resume && checkpoint.is_none() {
            return Err(CliError::Config("--resume needs --checkpoint".into()));
        }
        let checkpoint_every = pick!(self, file, checkpoint_every).unwrap_or(1);
        if checkpoint_every == 0 {
            return Err(CliError::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(RunConfig {
            model,
            symmetric,
            optimizer,
            checkpoint,
            checkpoint_every,
            resume: self.resume,
            log: pick!(self, file, log),
        })
    }
}
