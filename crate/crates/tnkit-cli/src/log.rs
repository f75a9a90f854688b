//! Sweep log: aligned columns on stderr for people, one JSON object per line
//! in the `--log` file for scripts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};
use tnkit::solver::SweepRecord;

use crate::CliError;

pub struct Log {
    file: Option<BufWriter<File>>,
    quiet: bool,
}

impl Log {
    pub fn open(path: Option<&Path>, quiet: bool) -> Result<Log, CliError> {
        let file = match path {
            Some(p) => Some(BufWriter::new(
                File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Log { file, quiet })
    }

    pub fn record(&mut self, v: &Value) -> std::io::Result<()> {
        if let Some(f) = &mut self.file {
            serde_json::to_writer(&mut *f, v)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        Ok(())
    }

    /// One sweep; `state` tags rows of excited-state runs.
    pub fn sweep(&mut self, r: &SweepRecord, state: Option<usize>) -> std::io::Result<()> {
        if !self.quiet {
            let tag = state.map_or(String::new(), |k| format!("state {k}  "));
            eprintln!(
                "{tag}sweep {:>3}  E = {:>20.12}  dE = {:>9.2e}  trunc = {:>8.1e}  N_app = {:>6}  {:>7.2}s",
                r.sweep, r.energy, r.delta, r.max_trunc_err, r.applications, r.seconds
            );
        }
        let mut row = json!({
            "event": "sweep",
            "sweep": r.sweep,
            "E": r.energy,
            "dE": r.delta,
            "max_trunc_err": r.max_trunc_err,
            "N_app": r.applications,
            "seconds": r.seconds,
        });
        if let Some(k) = state {
            row["state"] = json!(k);
        }
        if r.eig_failures > 0 {
            row["eig_failures"] = json!(r.eig_failures);
        }
        self.record(&row)
    }
}
