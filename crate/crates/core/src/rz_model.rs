//! Generalized Rosen-Zener Hamiltonian
//! `H(t) = ω(t) σ3 ⊗ I_k + v(t) σ1 ⊗ M_k` with `M_k` the path-graph adjacency.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Largest `N` for which dense `N × N` matrices are formed.
pub const DENSE_CAP: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RZParameters {
    pub w0: f64,
    pub v0: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Pulse width `T0`.
    pub pulse_width: f64,
}

impl RZParameters {
    pub fn new(w0: f64, v0: f64, epsilon: f64, delta: f64, pulse_width: f64) -> Result<Self> {
        if !(pulse_width > 0.0) {
            return invalid(format!("pulse width must be positive, got {pulse_width}"));
        }
        Ok(RZParameters { w0, v0, epsilon, delta, pulse_width })
    }

    /// `ω(t) = w0 + ε cos(δ t)`.
    #[inline]
    pub fn omega(&self, t: f64) -> f64 {
        self.w0 + self.epsilon * (self.delta * t).cos()
    }

    /// `v(t) = v0 / cosh(t / T0)`.
    #[inline]
    pub fn v(&self, t: f64) -> f64 {
        self.v0 / (t / self.pulse_width).cosh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
    D,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::A, Case::B, Case::C, Case::D];

    pub fn label(self) -> &'static str {
        match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
            Case::D => "d",
        }
    }

    pub fn params(self) -> RZParameters {
        let (epsilon, delta, pulse_width) = match self {
            Case::A => (0.0, 0.0, 10.0),
            Case::B => (0.1, 0.1, 5.0),
            Case::C => (0.5, 1.0, 5.0),
            Case::D => (2.0, 5.0, 1.0),
        };
        RZParameters { w0: 5.0, v0: 0.5, epsilon, delta, pulse_width }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Case> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Case::A),
            "b" => Ok(Case::B),
            "c" => Ok(Case::C),
            "d" => Ok(Case::D),
            other => invalid(format!("unknown case label '{other}' (expected a|b|c|d)")),
        }
    }
}

pub fn preset_case(label: &str) -> Result<RZParameters> {
    Ok(label.parse::<Case>()?.params())
}

/// Default interval `[-2, -2 + 8π]`.
pub const DEFAULT_T0: f64 = -2.0;
pub const DEFAULT_TF: f64 = -2.0 + 8.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RZModel {
    pub params: RZParameters,
    pub k: usize,
    pub t0: f64,
    pub tf: f64,
}

/// Kernels on `[-1, 1]` with the Jacobian `(tf - t0)/2` folded in.
#[derive(Debug, Clone, Copy)]
pub struct RescaledKernels {
    params: RZParameters,
    t0: f64,
    h: f64,
}

impl RescaledKernels {
    #[inline]
    pub fn omega(&self, tau: f64) -> f64 {
        self.h * self.params.omega(self.t0 + (tau + 1.0) * self.h)
    }

    #[inline]
    pub fn v(&self, tau: f64) -> f64 {
        self.h * self.params.v(self.t0 + (tau + 1.0) * self.h)
    }

    pub fn jacobian(&self) -> f64 {
        self.h
    }
}

impl RZModel {
    pub fn new(params: RZParameters, k: usize, t0: f64, tf: f64) -> Result<Self> {
        if k == 0 {
            return invalid("half size k must be at least 1");
        }
        if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
            return invalid(format!("interval needs t0 < tf, got [{t0}, {tf}]"));
        }
        if !(params.pulse_width > 0.0) {
            return invalid("pulse width must be positive");
        }
        Ok(RZModel { params, k, t0, tf })
    }

    /// Model of size `n` (even) for a preset case on the default interval.
    pub fn preset(case: Case, n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return invalid(format!("system size N must be even and >= 2, got {n}"));
        }
        RZModel::new(case.params(), n / 2, DEFAULT_T0, DEFAULT_TF)
    }

    pub fn with_interval(self, t0: f64, tf: f64) -> Result<Self> {
        RZModel::new(self.params, self.k, t0, tf)
    }

    #[inline]
    pub fn n(&self) -> usize {
        2 * self.k
    }

    pub fn half_length(&self) -> f64 {
        0.5 * (self.tf - self.t0)
    }

    pub fn time_of(&self, tau: f64) -> f64 {
        self.t0 + (tau + 1.0) * self.half_length()
    }

    /// Maps `t ∈ [t0, tf]` to `τ ∈ [-1, 1]`.
    pub fn tau_of(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * (self.tf - self.t0).max(1.0);
        if !t.is_finite() || t < self.t0 - slack || t > self.tf + slack {
            return invalid(format!("t = {t} outside [{}, {}]", self.t0, self.tf));
        }
        Ok((2.0 * (t - self.t0) / (self.tf - self.t0) - 1.0).clamp(-1.0, 1.0))
    }

    pub fn rescaled_kernels(&self) -> RescaledKernels {
        RescaledKernels { params: self.params, t0: self.t0, h: self.half_length() }
    }

    /// `out = (σ1 ⊗ M_k) x`.
    pub fn apply_coupling_into(&self, x: &[C64], out: &mut [C64]) {
        let k = self.k;
        let (top, bot) = x.split_at(k);
        let (out_top, out_bot) = out.split_at_mut(k);
        path_apply(bot, out_top);
        path_apply(top, out_bot);
    }

    /// `out = H(t) x` in `O(N)` work.
    pub fn apply_hamiltonian_into(&self, t: f64, x: &[C64], out: &mut [C64]) {
        let k = self.k;
        let w = self.params.omega(t);
        let v = self.params.v(t);
        self.apply_coupling_into(x, out);
        for i in 0..k {
            out[i] = out[i] * v + x[i] * w;
            out[k + i] = out[k + i] * v - x[k + i] * w;
        }
    }

    pub fn apply_hamiltonian(&self, t: f64, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.n() {
            return invalid(format!("vector length {} does not match N = {}", x.len(), self.n()));
        }
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        self.apply_hamiltonian_into(t, x, &mut out);
        Ok(out)
    }

    /// `σ1 ⊗ M_k` as a dense real matrix.
    pub fn dense_coupling(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        let (n, k) = (self.n(), self.k);
        let mut s = DMatrix::zeros(n, n);
        for i in 0..k.saturating_sub(1) {
            s[(i, k + i + 1)] = 1.0;
            s[(i + 1, k + i)] = 1.0;
            s[(k + i, i + 1)] = 1.0;
            s[(k + i + 1, i)] = 1.0;
        }
        Ok(s)
    }

    pub fn dense_hamiltonian(&self, t: f64) -> Result<DMatrix<C64>> {
        let s = self.dense_coupling()?;
        let (w, v) = (self.params.omega(t), self.params.v(t));
        let mut h = s.map(|x| C64::new(v * x, 0.0));
        for i in 0..self.n() {
            h[(i, i)] = C64::new(sigma3(i, self.k) * w, 0.0);
        }
        Ok(h)
    }

    fn check_dense(&self) -> Result<()> {
        if self.n() > DENSE_CAP {
            return Err(Error::Refused(format!(
                "dense N × N matrix with N = {} exceeds the cap {DENSE_CAP}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Diagonal of `σ3 ⊗ I_k` at index `i`.
#[inline]
pub fn sigma3(i: usize, k: usize) -> f64 {
    if i < k {
        1.0
    } else {
        -1.0
    }
}

/// `out = M_k x` for the path adjacency `M_k`.
#[inline]
pub fn path_apply(x: &[C64], out: &mut [C64]) {
    let k = x.len();
    for i in 0..k {
        let mut s = C64::new(0.0, 0.0);
        if i > 0 {
            s += x[i - 1];
        }
        if i + 1 < k {
            s += x[i + 1];
        }
        out[i] = s;
    }
}

/// Eigenvalues `λ_j = 2 cos(jπ/(k+1))`, `j = 1..k`, of `M_k`.
pub fn path_eigenvalues(k: usize) -> Vec<f64> {
    (1..=k).map(|j| 2.0 * (j as f64 * PI / (k as f64 + 1.0)).cos()).collect()
}

/// Orthogonal eigenvector matrix of `M_k`, column `j` paired with `λ_{j+1}`.
pub fn path_eigenvectors(k: usize) -> DMatrix<f64> {
    let s = (2.0 / (k as f64 + 1.0)).sqrt();
    DMatrix::from_fn(k, k, |i, j| {
        s * (((i + 1) * (j + 1)) as f64 * PI / (k as f64 + 1.0)).sin()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let a = preset_case("a").unwrap();
        assert_eq!((a.w0, a.v0, a.epsilon, a.delta, a.pulse_width), (5.0, 0.5, 0.0, 0.0, 10.0));
        let d = preset_case("d").unwrap();
        assert_eq!((d.w0, d.v0, d.epsilon, d.delta, d.pulse_width), (5.0, 0.5, 2.0, 5.0, 1.0));
        let b = preset_case("B").unwrap();
        assert_eq!((b.epsilon, b.delta, b.pulse_width), (0.1, 0.1, 5.0));
        assert!(preset_case("e").is_err());
    }

    #[test]
    fn pulse_values() {
        let a = Case::A.params();
        assert_eq!((a.omega(0.0), a.v(0.0)), (5.0, 0.5));
        assert_eq!(Case::D.params().omega(0.0), 7.0);
        let b = Case::B.params();
        assert!((b.omega(20.0 * PI * 10.0) - 5.1).abs() < 1e-12);
    }

    #[test]
    fn rescaling() {
        let m = RZModel::new(Case::A.params(), 2, -1.0, 1.0).unwrap();
        let k = m.rescaled_kernels();
        assert_eq!(k.jacobian(), 1.0);
        assert!((k.omega(0.3) - m.params.omega(0.3)).abs() < 1e-15);
        let m = RZModel::preset(Case::D, 4).unwrap();
        let k = m.rescaled_kernels();
        assert!((k.omega(-1.0) - 4.0 * PI * m.params.omega(-2.0)).abs() < 1e-12);
        let flat = RZParameters::new(3.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let m = RZModel::new(flat, 1, 0.0, 4.0).unwrap();
        assert!((m.rescaled_kernels().omega(0.7) - 6.0).abs() < 1e-14);
        assert!(RZModel::new(flat, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn dense_small() {
        let m = RZModel::preset(Case::A, 2).unwrap();
        let h = m.dense_hamiltonian(0.0).unwrap();
        assert_eq!(h[(0, 0)].re, 5.0);
        assert_eq!(h[(1, 1)].re, -5.0);
        assert_eq!(h[(0, 1)].norm(), 0.0);
        let m = RZModel::preset(Case::A, 4).unwrap();
        let h = m.dense_hamiltonian(0.0).unwrap();
        assert_eq!(h[(0, 3)].re, 0.5);
        assert_eq!(h[(1, 2)].re, 0.5);
        assert_eq!(h[(0, 2)].re, 0.0);
        assert_eq!(h.adjoint(), h);
    }

    #[test]
    fn dense_cap() {
        let m = RZModel::preset(Case::A, DENSE_CAP + 2).unwrap();
        assert!(matches!(m.dense_hamiltonian(0.0), Err(Error::Refused(_))));
    }

    #[test]
    fn path_modes() {
        let k = 5;
        let q = path_eigenvectors(k);
        let lam = path_eigenvalues(k);
        let mut mk = DMatrix::<f64>::zeros(k, k);
        for i in 0..k - 1 {
            mk[(i, i + 1)] = 1.0;
            mk[(i + 1, i)] = 1.0;
        }
        let d = q.transpose() * mk * &q;
        for i in 0..k {
            for j in 0..k {
                let e = if i == j { lam[i] } else { 0.0 };
                assert!((d[(i, j)] - e).abs() < 1e-13);
            }
        }
    }
}
