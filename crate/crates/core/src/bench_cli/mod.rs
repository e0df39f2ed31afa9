//! Experiment harness behind the `star-rz` binary.

mod cli;
mod experiments;
mod output;

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use cli::{main_with_args, Cli};
pub use experiments::{
    default_sweep, exp1_cell, run_exp1, run_exp2, run_exp3, run_exp4, run_experiment, run_spectrum, Exp1Cell,
};
pub use output::{Cell, Table};

use crate::error::{invalid, Error, Result};
use crate::rz_model::{Case, DEFAULT_T0, DEFAULT_TF, C64};
use crate::star_solver::Formulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Spectrum,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
            Experiment::Exp4 => "exp4",
            Experiment::Spectrum => "spectrum",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(Experiment::Exp1),
            "exp2" => Ok(Experiment::Exp2),
            "exp3" => Ok(Experiment::Exp3),
            "exp4" => Ok(Experiment::Exp4),
            "spectrum" => Ok(Experiment::Spectrum),
            other => invalid(format!("unknown experiment '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Star,
    Rk4,
    Dp54,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Star => "star",
            Solver::Rk4 => "rk4",
            Solver::Dp54 => "dp54",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(Solver::Star),
            "rk4" => Ok(Solver::Rk4),
            "dp54" => Ok(Solver::Dp54),
            other => invalid(format!("unknown solver '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => invalid(format!("unknown format '{other}'")),
        }
    }
}

/// One point of a work-precision sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    pub tol: f64,
    pub trunc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub case: Case,
    pub n_list: Vec<usize>,
    /// Truncation order; the experiment's per-case default when absent.
    pub m: Option<usize>,
    pub t0: f64,
    pub tf: f64,
    pub tol: f64,
    pub trunc: f64,
    pub max_iter: usize,
    pub solver: Solver,
    /// Reference method timed next to the star solver in `exp2`.
    pub baseline: Option<Solver>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub repeats: usize,
    pub formulation: Formulation,
    /// Fixed RK4 step count.
    pub rk4_steps: usize,
    /// Tolerance of the reference integrations.
    pub oracle_tol: f64,
    /// Sample points on `[t0, tf]` for `exp1`.
    pub samples: usize,
    /// Powers for `spectrum`.
    pub ells: Vec<usize>,
    /// Interval lengths for `exp4`.
    pub lengths: Vec<f64>,
    /// Settings for `exp3`; a default sweep when `None`.
    pub sweep: Option<Vec<SweepPoint>>,
    /// Run independent `N` cells of `exp1` and `spectrum` on threads.
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, case: Case) -> Self {
        let n_list = match experiment {
            Experiment::Exp1 | Experiment::Spectrum => vec![20],
            Experiment::Exp2 => vec![160, 320, 640],
            Experiment::Exp3 => vec![160],
            Experiment::Exp4 => vec![40],
        };
        ExperimentConfig {
            experiment,
            case,
            n_list,
            m: None,
            t0: DEFAULT_T0,
            tf: DEFAULT_TF,
            tol: 1e-7,
            trunc: 1e-6,
            max_iter: 200,
            solver: Solver::Star,
            baseline: Some(Solver::Rk4),
            seed: 42,
            out: None,
            format: Format::Csv,
            repeats: 3,
            formulation: Formulation::Smooth,
            rk4_steps: 256,
            oracle_tol: 1e-12,
            samples: 201,
            ells: vec![2, 4, 8, 16, 32, 64, 128, 256],
            lengths: vec![8.0 * PI, 16.0 * PI, 32.0 * PI],
            sweep: None,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.iter().any(|&n| n < 2 || n % 2 != 0) {
            return invalid("every N must be even and >= 2");
        }
        if !(self.t0 < self.tf) {
            return invalid("t0 must be below tf");
        }
        if !(self.tol > 0.0) || !(self.trunc > 0.0) || !(self.oracle_tol > 0.0) {
            return invalid("tolerances must be positive");
        }
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        if self.lengths.iter().any(|&l| !(l > 0.0)) {
            return invalid("interval lengths must be positive");
        }
        if self.ells.contains(&0) {
            return invalid("powers ℓ must be positive");
        }
        if self.baseline == Some(Solver::Star) {
            return invalid("the baseline must be rk4 or dp54");
        }
        if self.experiment == Experiment::Exp2 && self.n_list.windows(2).any(|w| w[1] < w[0]) {
            return invalid("exp2 needs an ascending N list");
        }
        Ok(())
    }
}

/// Default `M` for the vector experiment.
pub fn default_m_exp1(case: Case) -> usize {
    match case {
        Case::A => 130,
        Case::B => 140,
        Case::C => 250,
        Case::D => 550,
    }
}

/// Default `M` for the operator experiments and the spectral bounds.
pub fn default_m_exp2(case: Case) -> usize {
    match case {
        Case::A | Case::B => 130,
        Case::C => 210,
        Case::D => 500,
    }
}

/// `M` for an interval of the given length, linear in the length
/// (case a: 130/210/370 at 8π/16π/32π; case d: 410/800 at 8π/16π).
pub fn default_m_for_length(case: Case, length: f64) -> usize {
    let x = length / (8.0 * PI);
    let (base, slope) = match case {
        Case::A | Case::B => (50.0, 80.0),
        Case::C => (50.0, 160.0),
        Case::D => (20.0, 390.0),
    };
    (base + slope * x).round().max(2.0) as usize
}

/// Seeded standard-normal complex vector, normalized.
pub fn random_state(n: usize, seed: u64) -> DVector<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im)
    });
    let nrm = v.norm();
    v.unscale(nrm)
}

/// Median, minimum and maximum of a timing sample.
pub fn timing_summary(samples: &[f64]) -> (f64, f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    (median, s[0], s[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_follow_published_orders() {
        assert_eq!(default_m_for_length(Case::A, 8.0 * PI), 130);
        assert_eq!(default_m_for_length(Case::A, 16.0 * PI), 210);
        assert_eq!(default_m_for_length(Case::A, 32.0 * PI), 370);
        assert_eq!(default_m_for_length(Case::D, 8.0 * PI), 410);
        assert_eq!(default_m_for_length(Case::D, 16.0 * PI), 800);
    }

    #[test]
    fn seeded_state() {
        let a = random_state(10, 7);
        assert!((a.norm() - 1.0).abs() < 1e-14);
        assert_eq!(a, random_state(10, 7));
        assert_ne!(a, random_state(10, 8));
    }

    #[test]
    fn medians() {
        assert_eq!(timing_summary(&[3.0, 1.0, 2.0]), (2.0, 1.0, 3.0));
        assert_eq!(timing_summary(&[4.0, 1.0, 2.0, 3.0]).0, 2.5);
    }
}
