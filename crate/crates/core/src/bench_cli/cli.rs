use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use super::{run_experiment, Experiment, ExperimentConfig, Format, Solver, SweepPoint};
use crate::error::{invalid, Result};
use crate::rz_model::Case;
use crate::star_solver::Formulation;

/// Star-product solver for the generalized Rosen-Zener model: experiments
/// and diagnostics with CSV/JSON output.
#[derive(Debug, Parser)]
#[command(name = "star-rz", version)]
pub struct Cli {
    /// exp1 | exp2 | exp3 | exp4 | spectrum
    pub experiment: Experiment,
    /// a | b | c | d
    #[arg(long, default_value = "a")]
    pub case: Case,
    /// Comma-separated system sizes.
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Truncation order (per-experiment default when omitted).
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tf: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub trunc: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// star | rk4 | dp54
    #[arg(long, default_value = "star")]
    pub solver: Solver,
    /// Method compared against the star solver: rk4 | dp54 | none.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// smooth | literal
    #[arg(long)]
    pub formulation: Option<Formulation>,
    #[arg(long)]
    pub rk4_steps: Option<usize>,
    /// Tolerance of the reference integrations.
    #[arg(long)]
    pub oracle_tol: Option<f64>,
    /// Number of sample times for exp1.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated powers for spectrum.
    #[arg(long = "ell", value_delimiter = ',')]
    pub ells: Option<Vec<usize>>,
    /// Comma-separated interval lengths for exp4.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<f64>>,
    /// exp3 settings as `M:tol:trunc` separated by `;` (empty for none).
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<String>,
    /// Run independent cells of exp1/spectrum in parallel.
    #[arg(long)]
    pub parallel: bool,
}

fn parse_sweep(s: &str) -> Result<Vec<SweepPoint>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let parts: Vec<&str> = p.split(':').collect();
            if parts.len() != 3 {
                return invalid(format!("sweep entry '{p}' is not M:tol:trunc"));
            }
            let num = |x: &str| x.trim().parse::<f64>().map_err(|e| crate::Error::InvalidArgument(format!("'{x}': {e}")));
            let m = parts[0].trim().parse::<usize>().map_err(|e| crate::Error::InvalidArgument(format!("'{}': {e}", parts[0])))?;
            Ok(SweepPoint { m, tol: num(parts[1])?, trunc: num(parts[2])? })
        })
        .collect()
}

impl Cli {
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::new(self.experiment, self.case);
        if let Some(n) = self.n {
            c.n_list = n;
        }
        c.m = self.m;
        if let Some(v) = self.t0 {
            c.t0 = v;
        }
        if let Some(v) = self.tf {
            c.tf = v;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.trunc {
            c.trunc = v;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        c.solver = self.solver;
        if let Some(b) = self.baseline {
            c.baseline = match b.as_str() {
                "none" => None,
                other => Some(other.parse()?),
            };
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.out = self.out;
        c.format = self.format;
        if let Some(v) = self.repeats {
            c.repeats = v;
        }
        if let Some(v) = self.formulation {
            c.formulation = v;
        }
        if let Some(v) = self.rk4_steps {
            c.rk4_steps = v;
        }
        if let Some(v) = self.oracle_tol {
            c.oracle_tol = v;
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if let Some(v) = self.ells {
            c.ells = v;
        }
        if let Some(v) = self.lengths {
            c.lengths = v;
        }
        if let Some(s) = self.sweep {
            c.sweep = Some(parse_sweep(&s)?);
        }
        c.parallel = self.parallel;
        c.validate()?;
        Ok(c)
    }
}

/// Parses `args` (including the program name), runs the experiment and
/// writes the table. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.into_config().and_then(|cfg| run_experiment(&cfg)?.emit(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("star-rz: {e}");
            1
        }
    }
}
