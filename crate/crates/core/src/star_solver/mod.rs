//! Star-product discretization and the low-rank stationary iterations for
//! the state vector and the operator.
//!
//! The discretized problem is the matrix equation
//! `X + i Ω X Σ3 + i V X S = C`, with `Σ3 = σ3 ⊗ I_k`, `S = σ1 ⊗ M_k` and
//! `Ω`, `V` the coefficient matrices of the rescaled pulse kernels. It is
//! solved by the fixed point
//! `X ← G1 (C - i V X S) D1 + G2 (C - i V X S) D2`,
//! `G1 = (I + iΩ)^{-1}`, `G2 = (I - iΩ)^{-1}`, `D1`, `D2` the half projectors.

mod banded;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Dyn, LU, QR, SVD};
use serde::{Deserialize, Serialize};

pub use banded::BandedBlocks;

use crate::error::{invalid, Error, Result};
use crate::legendre_basis::{
    default_quad_points, eval_antiderivative_basis, eval_basis, labelled_coefficient_matrix,
    legendre_coefficients, theta_matrix, CoefficientMatrix,
};
use crate::rz_model::{sigma3, RZModel, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Which unknown the iteration solves for.
///
/// `Literal` iterates on `X` itself with right-hand side `φ(-1) ψ0ᵀ` and
/// evaluates `ψ(t) = φ(τ)ᵀ T X`. `Smooth` iterates on the derivative part
/// `Y = X - φ(-1) ψ0ᵀ`, whose right-hand side uses the Legendre coefficients
/// of the kernels, and evaluates `ψ(t) = ψ0 + A(τ)ᵀ Y` with the exact
/// antiderivative basis `A`. Both share one iteration matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    #[default]
    Smooth,
    Literal,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Smooth => "smooth",
            Formulation::Literal => "literal",
        })
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Formulation::Smooth),
            "literal" => Ok(Formulation::Literal),
            other => invalid(format!("unknown formulation '{other}'")),
        }
    }
}

pub struct StarDiscretization {
    pub model: RZModel,
    pub m: usize,
    pub quad_points: usize,
    pub omega_mat: CoefficientMatrix,
    pub v_mat: CoefficientMatrix,
    pub theta_mat: CoefficientMatrix,
    /// Legendre coefficients of the rescaled `ω` and `v` kernels.
    pub omega_coeffs: DVector<f64>,
    pub v_coeffs: DVector<f64>,
    pub phi_minus1: DVector<f64>,
    /// Seconds spent building the discretization.
    pub build_time: f64,
    solve_plus: LU<C64, Dyn, Dyn>,
    solve_minus: LU<C64, Dyn, Dyn>,
}

impl fmt::Debug for StarDiscretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StarDiscretization")
            .field("model", &self.model)
            .field("m", &self.m)
            .field("quad_points", &self.quad_points)
            .finish_non_exhaustive()
    }
}

/// Builds `Ω_M`, `V_M`, `T_M`, `φ_M(-1)` and factorizes `I ± iΩ_M`.
pub fn discretize(model: &RZModel, m: usize) -> Result<StarDiscretization> {
    discretize_with(model, m, None)
}

/// As [`discretize`] with an explicit quadrature size for the kernels.
pub fn discretize_with(model: &RZModel, m: usize, quad_points: Option<usize>) -> Result<StarDiscretization> {
    if m < 2 {
        return invalid(format!("truncation order M must be at least 2, got {m}"));
    }
    let start = Instant::now();
    let kern = model.rescaled_kernels();
    let w = |t: f64| kern.omega(t);
    let v = |t: f64| kern.v(t);
    let quad_points = match quad_points {
        Some(q) => q,
        None => default_quad_points(w, m).max(default_quad_points(v, m)),
    };
    let omega_mat = labelled_coefficient_matrix(w, m, quad_points, "omega")?;
    let v_mat = labelled_coefficient_matrix(v, m, quad_points, "v")?;
    let theta_mat = theta_matrix(m)?;
    let omega_coeffs = legendre_coefficients(w, m, quad_points)?;
    let v_coeffs = legendre_coefficients(v, m, quad_points)?;
    let phi_minus1 = eval_basis(m, -1.0)?;
    let iom = omega_mat.entries.map(|x| C64::new(0.0, x));
    let eye = DMatrix::<C64>::identity(m, m);
    let solve_plus = LU::new(&eye + &iom);
    let solve_minus = LU::new(&eye - &iom);
    if !solve_plus.is_invertible() || !solve_minus.is_invertible() {
        return Err(Error::Refused("I ± iΩ_M is singular".into()));
    }
    Ok(StarDiscretization {
        model: *model,
        m,
        quad_points,
        omega_mat,
        v_mat,
        theta_mat,
        omega_coeffs,
        v_coeffs,
        phi_minus1,
        build_time: start.elapsed().as_secs_f64(),
        solve_plus,
        solve_minus,
    })
}

impl StarDiscretization {
    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// `G1 B = (I + iΩ)^{-1} B`.
    pub fn apply_g1(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        self.solve_plus.solve(b).expect("factorization checked at construction")
    }

    /// `G2 B = (I - iΩ)^{-1} B`.
    pub fn apply_g2(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        self.solve_minus.solve(b).expect("factorization checked at construction")
    }

    /// `-i V_M L`.
    pub fn apply_minus_iv(&self, l: &DMatrix<C64>) -> DMatrix<C64> {
        let prod = real_mul(&self.v_mat.entries, l);
        prod.map(|z| C64::new(z.im, -z.re))
    }

    /// Left factor of the constant term.
    fn constant_left(&self, formulation: Formulation) -> DMatrix<C64> {
        match formulation {
            Formulation::Literal => to_complex(&DMatrix::from_column_slice(self.m, 1, self.phi_minus1.as_slice())),
            Formulation::Smooth => {
                let mut l = DMatrix::zeros(self.m, 2);
                for i in 0..self.m {
                    l[(i, 0)] = C64::new(self.omega_coeffs[i], 0.0);
                    l[(i, 1)] = C64::new(self.v_coeffs[i], 0.0);
                }
                l
            }
        }
    }

    /// `[G1 L, G2 L]`.
    fn split_left(&self, l: &DMatrix<C64>) -> DMatrix<C64> {
        hcat(&[&self.apply_g1(l), &self.apply_g2(l)])
    }

    /// Weight vector `w(τ)` with `ψ(t) = [ψ0 +] Xᵀ w(τ)`.
    pub fn evaluation_weights(&self, formulation: Formulation, tau: f64) -> Result<DVector<f64>> {
        eval_weights(formulation, &self.theta_mat.entries, tau)
    }
}

fn eval_weights(formulation: Formulation, theta: &DMatrix<f64>, tau: f64) -> Result<DVector<f64>> {
    let m = theta.nrows();
    match formulation {
        Formulation::Literal => Ok(theta.transpose() * eval_basis(m, tau)?),
        Formulation::Smooth => eval_antiderivative_basis(m, tau),
    }
}

pub(crate) fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

/// Real matrix times complex matrix through two real products.
pub(crate) fn real_mul(a: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let re = a * b.map(|z| z.re);
    let im = a * b.map(|z| z.im);
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// Complex product through real products (nalgebra's complex GEMM is unblocked).
pub(crate) fn complex_mul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

fn hcat(parts: &[&DMatrix<C64>]) -> DMatrix<C64> {
    let rows = parts[0].nrows();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.columns_mut(c, p.ncols()).copy_from(p);
        c += p.ncols();
    }
    out
}

/// Pair `(L, R)` with `X ≈ L Rᵀ` (vector) or `X^{(j)} ≈ Σ_c L[:, c] R_c[:, j]ᵀ` (operator).
#[derive(Debug, Clone)]
pub struct LowRankFactors<R> {
    pub left: DMatrix<C64>,
    pub right: R,
}

impl<R> LowRankFactors<R> {
    pub fn rank(&self) -> usize {
        self.left.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub trunc: f64,
    pub max_iter: usize,
    pub formulation: Formulation,
    /// Consecutive non-improving estimates tolerated before stopping.
    pub stagnation_window: usize,
    /// Keep every iterate of `b` in [`SolveStats::b_history`].
    pub record_b: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            trunc: 1e-6,
            max_iter: 200,
            formulation: Formulation::Smooth,
            stagnation_window: 10,
            record_b: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.trunc >= 0.0) {
            return invalid(format!("tol must be > 0 and trunc >= 0 (got {}, {})", self.tol, self.trunc));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b_n - b_{n-1}‖₂` per iteration.
    pub error_estimates: Vec<f64>,
    pub ranks: Vec<usize>,
    pub converged: bool,
    pub stagnated: bool,
    /// Seconds for the iteration (discretization excluded).
    pub wall_time: f64,
    /// Per-iteration seconds.
    pub iteration_times: Vec<f64>,
    /// Nonzeros and bandwidth of the operator right factor, before the
    /// first iteration and after each one. Empty for vector solves.
    pub initial_nnz: usize,
    pub initial_bandwidth: usize,
    pub nnz: Vec<usize>,
    pub bandwidths: Vec<usize>,
    /// `b_0, b_1, ...` when requested.
    #[serde(skip)]
    pub b_history: Vec<DVector<C64>>,
}

impl SolveStats {
    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    pub fn final_estimate(&self) -> f64 {
        self.error_estimates.last().copied().unwrap_or(f64::NAN)
    }
}

/// Result of a truncation of the left factor.
#[derive(Debug, Clone)]
pub struct Truncation {
    /// `Q U_r S_r`.
    pub left: DMatrix<C64>,
    /// `conj(V_r)`; the right factor becomes `R conj(V_r)`.
    pub mix: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

/// Economy QR of `L`, SVD of the triangular factor, keep `s_j >= trunc`
/// (at least one).
pub fn truncate_left(l: &DMatrix<C64>, trunc: f64) -> Truncation {
    let qr = QR::new(l.clone());
    let q = qr.q();
    let r = qr.r();
    let svd = SVD::new(r, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let rank = s.iter().filter(|&&x| x >= trunc).count().max(1);
    let mut us = u.columns(0, rank).into_owned();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col.scale_mut(s[j]);
    }
    let left = complex_mul(&q, &us);
    let mix = v_t.rows(0, rank).transpose();
    Truncation { left, mix, singular_values: s, rank }
}

/// Truncates a dense factor pair: `(L', R', r)` with `L'R'ᵀ ≈ L Rᵀ`.
pub fn truncate(l: &DMatrix<C64>, r: &DMatrix<C64>, trunc: f64) -> (DMatrix<C64>, DMatrix<C64>, usize) {
    let t = truncate_left(l, trunc);
    let right = complex_mul(r, &t.mix);
    (t.left, right, t.rank)
}

/// `(σ1 ⊗ M_k) R` column by column.
fn coupling_dense(model: &RZModel, r: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(r.nrows(), r.ncols());
    for j in 0..r.ncols() {
        let src: Vec<C64> = r.column(j).iter().copied().collect();
        let mut dst = vec![ZERO; src.len()];
        model.apply_coupling_into(&src, &mut dst);
        out.column_mut(j).copy_from_slice(&dst);
    }
    out
}

/// `[D1 R, D2 R]`.
fn split_right(k: usize, r: &DMatrix<C64>) -> DMatrix<C64> {
    let mut top = r.clone();
    let mut bot = r.clone();
    top.rows_mut(k, k).fill(ZERO);
    bot.rows_mut(0, k).fill(ZERO);
    hcat(&[&top, &bot])
}

/// Constant term `(L_c, R_c)` and first iterate of the vector iteration.
struct VectorIteration<'a> {
    disc: &'a StarDiscretization,
    g: DMatrix<C64>,
    d: DMatrix<C64>,
}

impl<'a> VectorIteration<'a> {
    fn new(disc: &'a StarDiscretization, psi0: &DVector<C64>, formulation: Formulation) -> Self {
        let model = &disc.model;
        let k = model.k;
        let lc = disc.constant_left(formulation);
        let rc = match formulation {
            Formulation::Literal => DMatrix::from_column_slice(psi0.len(), 1, psi0.as_slice()),
            Formulation::Smooth => {
                let n = psi0.len();
                let mut rc = DMatrix::zeros(n, 2);
                let mut s = vec![ZERO; n];
                model.apply_coupling_into(psi0.as_slice(), &mut s);
                for i in 0..n {
                    rc[(i, 0)] = -I * sigma3(i, k) * psi0[i];
                    rc[(i, 1)] = -I * s[i];
                }
                rc
            }
        };
        let g = disc.split_left(&lc);
        let d = split_right(k, &rc);
        VectorIteration { disc, g, d }
    }

    fn step(&self, l: &DMatrix<C64>, r: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
        let disc = self.disc;
        let lv = disc.apply_minus_iv(l);
        let sr = coupling_dense(&disc.model, r);
        let left = hcat(&[&disc.apply_g1(&lv), &disc.apply_g2(&lv), &self.g]);
        let right = hcat(&[&split_right(disc.model.k, &sr), &self.d]);
        (left, right)
    }
}

/// Initial factors `X_0`: `φ(-1) ψ0ᵀ` (literal) or `G C` (smooth).
pub fn initial_factors(
    disc: &StarDiscretization,
    psi0: &DVector<C64>,
    formulation: Formulation,
) -> (DMatrix<C64>, DMatrix<C64>) {
    match formulation {
        Formulation::Literal => (
            to_complex(&DMatrix::from_column_slice(disc.m, 1, disc.phi_minus1.as_slice())),
            DMatrix::from_column_slice(psi0.len(), 1, psi0.as_slice()),
        ),
        Formulation::Smooth => {
            let it = VectorIteration::new(disc, psi0, formulation);
            (it.g, it.d)
        }
    }
}

/// One untruncated step of the vector iteration:
/// `L' = [G1(-iVL), G2(-iVL), g]`, `R' = [D1 S R, D2 S R, d]`.
pub fn fixed_point_step(
    disc: &StarDiscretization,
    psi0: &DVector<C64>,
    formulation: Formulation,
    l: &DMatrix<C64>,
    r: &DMatrix<C64>,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if l.nrows() != disc.m || r.nrows() != disc.n() || l.ncols() != r.ncols() || psi0.len() != disc.n() {
        return invalid("factor shapes do not conform to the discretization");
    }
    Ok(VectorIteration::new(disc, psi0, formulation).step(l, r))
}

/// Solution handle of the state-vector solve.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub model: RZModel,
    pub formulation: Formulation,
    pub psi0: DVector<C64>,
    pub factors: LowRankFactors<DMatrix<C64>>,
    theta: DMatrix<f64>,
}

impl StateSolution {
    /// `ψ(t)` without forming `X`.
    pub fn evaluate_state(&self, t: f64) -> Result<DVector<C64>> {
        let tau = self.model.tau_of(t)?;
        let w = eval_weights(self.formulation, &self.theta, tau)?;
        let coeff = self.factors.left.transpose() * to_complex(&DMatrix::from_column_slice(w.len(), 1, w.as_slice()));
        let mut psi = complex_mul(&self.factors.right, &coeff).column(0).into_owned();
        if self.formulation == Formulation::Smooth {
            psi += &self.psi0;
        }
        Ok(psi)
    }

    /// `X = L Rᵀ` (debugging and small oracles only).
    pub fn dense_unknown(&self) -> DMatrix<C64> {
        complex_mul(&self.factors.left, &self.factors.right.transpose())
    }
}

/// Low-rank fixed point for the state vector.
pub fn solve_vector(
    disc: &StarDiscretization,
    psi0: &DVector<C64>,
    config: &SolverConfig,
) -> Result<(StateSolution, SolveStats)> {
    config.validate()?;
    if psi0.len() != disc.n() {
        return invalid(format!("ψ0 has length {}, expected N = {}", psi0.len(), disc.n()));
    }
    if !(psi0.norm() > 0.0) {
        return invalid("ψ0 must be nonzero");
    }
    let start = Instant::now();
    let it = VectorIteration::new(disc, psi0, config.formulation);
    let (mut l, mut r) = initial_factors(disc, psi0, config.formulation);
    let conj_psi0 = psi0.map(|z| z.conj());
    let project = |l: &DMatrix<C64>, r: &DMatrix<C64>| -> DVector<C64> {
        let rc = r.transpose() * &conj_psi0;
        (l * rc).column(0).into_owned()
    };
    let mut stats = SolveStats::default();
    let mut b_old = project(&l, &r);
    if config.record_b {
        stats.b_history.push(b_old.clone());
    }
    let mut guard = StagnationGuard::new(config.stagnation_window);
    for iteration in 1..=config.max_iter {
        let t_iter = Instant::now();
        let (l_ext, r_ext) = it.step(&l, &r);
        let tr = truncate_left(&l_ext, config.trunc);
        l = tr.left;
        r = complex_mul(&r_ext, &tr.mix);
        if !all_finite(&l) || !all_finite(&r) {
            return Err(Error::Divergence { iteration });
        }
        let b = project(&l, &r);
        let est = (&b - &b_old).norm();
        b_old = b;
        if config.record_b {
            stats.b_history.push(b_old.clone());
        }
        stats.iterations = iteration;
        stats.error_estimates.push(est);
        stats.ranks.push(tr.rank);
        stats.iteration_times.push(t_iter.elapsed().as_secs_f64());
        if est < config.tol {
            stats.converged = true;
            break;
        }
        if guard.stalled(est) {
            stats.stagnated = true;
            break;
        }
    }
    stats.wall_time = start.elapsed().as_secs_f64();
    let sol = StateSolution {
        model: disc.model,
        formulation: config.formulation,
        psi0: psi0.clone(),
        factors: LowRankFactors { left: l, right: r },
        theta: disc.theta_mat.entries.clone(),
    };
    Ok((sol, stats))
}

struct StagnationGuard {
    window: usize,
    best: f64,
    misses: usize,
}

impl StagnationGuard {
    fn new(window: usize) -> Self {
        StagnationGuard { window, best: f64::INFINITY, misses: 0 }
    }

    fn stalled(&mut self, est: f64) -> bool {
        if est < self.best {
            self.best = est;
            self.misses = 0;
        } else {
            self.misses += 1;
        }
        self.window > 0 && self.misses >= self.window
    }
}

/// Largest entry modulus of a complex matrix.
pub fn max_abs(a: &DMatrix<C64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn all_finite(a: &DMatrix<C64>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Solution handle of the operator solve.
#[derive(Debug, Clone)]
pub struct OperatorSolution {
    pub model: RZModel,
    pub formulation: Formulation,
    pub factors: LowRankFactors<BandedBlocks>,
    theta: DMatrix<f64>,
}

impl OperatorSolution {
    fn block_weights(&self, t: f64) -> Result<Vec<C64>> {
        let tau = self.model.tau_of(t)?;
        let w = eval_weights(self.formulation, &self.theta, tau)?;
        let w = to_complex(&DMatrix::from_column_slice(w.len(), 1, w.as_slice()));
        Ok((self.factors.left.transpose() * w).iter().copied().collect())
    }

    /// `U(t) e_j`.
    pub fn evaluate_operator(&self, t: f64, j: usize) -> Result<DVector<C64>> {
        let n = self.model.n();
        if j >= n {
            return invalid(format!("column {j} out of range for N = {n}"));
        }
        let w = self.block_weights(t)?;
        let mut col = DVector::from_vec(self.factors.right.weighted_column(&w, j));
        if self.formulation == Formulation::Smooth {
            col[j] += 1.0;
        }
        Ok(col)
    }

    /// `U(t)` as a dense matrix.
    pub fn evaluate_operator_full(&self, t: f64) -> Result<DMatrix<C64>> {
        let w = self.block_weights(t)?;
        let mut u = self.factors.right.weighted_dense(&w);
        if self.formulation == Formulation::Smooth {
            for i in 0..u.nrows() {
                u[(i, i)] += 1.0;
            }
        }
        Ok(u)
    }
}

/// Low-rank fixed point for the operator, right factor kept in
/// banded-block storage.
pub fn solve_operator(disc: &StarDiscretization, config: &SolverConfig) -> Result<(OperatorSolution, SolveStats)> {
    config.validate()?;
    let start = Instant::now();
    let model = &disc.model;
    let k = model.k;
    let lc = disc.constant_left(config.formulation);
    let rc = match config.formulation {
        Formulation::Literal => BandedBlocks::identity(k),
        Formulation::Smooth => BandedBlocks::from_fn(k, 1, 2, |c, i, j| {
            let (ri, rj) = (i % k, j % k);
            let same_half = (i < k) == (j < k);
            match c {
                0 if i == j => -I * sigma3(i, k),
                1 if !same_half && ri.abs_diff(rj) == 1 => -I,
                _ => ZERO,
            }
        }),
    };
    let g = disc.split_left(&lc);
    let d = BandedBlocks::hstack(&[&rc.project_half(true), &rc.project_half(false)]);
    let (mut l, mut r) = match config.formulation {
        Formulation::Literal => (lc, rc),
        Formulation::Smooth => (g.clone(), d.clone()),
    };
    let first_column = |l: &DMatrix<C64>, r: &BandedBlocks| -> DVector<C64> {
        let w: Vec<C64> = (0..r.blocks()).map(|c| r.entry(c, 0, 0)).collect();
        l * DVector::from_vec(w)
    };
    let mut stats = SolveStats { initial_nnz: r.nnz(), initial_bandwidth: r.bandwidth(), ..Default::default() };
    let mut b_old = first_column(&l, &r);
    if config.record_b {
        stats.b_history.push(b_old.clone());
    }
    let mut guard = StagnationGuard::new(config.stagnation_window);
    for iteration in 1..=config.max_iter {
        let t_iter = Instant::now();
        let lv = disc.apply_minus_iv(&l);
        let l_ext = hcat(&[&disc.apply_g1(&lv), &disc.apply_g2(&lv), &g]);
        let sr = r.apply_coupling();
        let r_ext = BandedBlocks::hstack(&[&sr.project_half(true), &sr.project_half(false), &d]);
        let tr = truncate_left(&l_ext, config.trunc);
        l = tr.left;
        r = r_ext.combine(&tr.mix);
        if !all_finite(&l) || !r.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        let b = first_column(&l, &r);
        let est = (&b - &b_old).norm();
        b_old = b;
        if config.record_b {
            stats.b_history.push(b_old.clone());
        }
        stats.iterations = iteration;
        stats.error_estimates.push(est);
        stats.ranks.push(tr.rank);
        stats.nnz.push(r.nnz());
        stats.bandwidths.push(r.bandwidth());
        stats.iteration_times.push(t_iter.elapsed().as_secs_f64());
        if est < config.tol {
            stats.converged = true;
            break;
        }
        if guard.stalled(est) {
            stats.stagnated = true;
            break;
        }
    }
    stats.wall_time = start.elapsed().as_secs_f64();
    let sol = OperatorSolution {
        model: disc.model,
        formulation: config.formulation,
        factors: LowRankFactors { left: l, right: r },
        theta: disc.theta_mat.entries.clone(),
    };
    Ok((sol, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rz_model::{Case, RZParameters};

    fn toy(case: Case, n: usize, m: usize) -> StarDiscretization {
        discretize(&RZModel::preset(case, n).unwrap(), m).unwrap()
    }

    #[test]
    fn factorization_round_trip() {
        let disc = toy(Case::C, 4, 8);
        let y = DMatrix::from_fn(8, 3, |i, j| C64::new((i + j) as f64 * 0.3 - 1.0, (i * j) as f64 * 0.1));
        let x = disc.apply_g1(&y);
        let a = DMatrix::<C64>::identity(8, 8) + disc.omega_mat.entries.map(|w| C64::new(0.0, w));
        assert!(max_abs(&(a * x - &y)) < 1e-12);
    }

    #[test]
    fn zero_omega_gives_identity_solve() {
        let p = RZParameters::new(0.0, 0.5, 0.0, 0.0, 1.0).unwrap();
        let disc = discretize(&RZModel::new(p, 2, -1.0, 1.0).unwrap(), 6).unwrap();
        assert!(disc.omega_mat.entries.amax() == 0.0);
        let y = DMatrix::from_fn(6, 2, |i, j| C64::new(i as f64, j as f64));
        assert!(max_abs(&(disc.apply_g1(&y) - &y)) < 1e-15);
    }

    #[test]
    fn lossless_truncation() {
        let l = DMatrix::from_fn(9, 6, |i, j| C64::new(((i * 7 + j * 3) as f64).sin(), ((i + 2 * j) as f64).cos()));
        let r = DMatrix::from_fn(5, 6, |i, j| C64::new(((i * 5 + j) as f64).cos(), ((3 * i + j) as f64).sin()));
        let (l2, r2, rank) = truncate(&l, &r, 0.0);
        assert_eq!(rank, 6);
        let a = complex_mul(&l, &r.transpose());
        let b = complex_mul(&l2, &r2.transpose());
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn duplicate_columns_drop_rank() {
        let mut l = DMatrix::from_fn(7, 3, |i, j| C64::new((i as f64 + 1.0).powi(j as i32), 0.5 * j as f64));
        let c0 = l.column(0).into_owned();
        l.column_mut(2).copy_from(&c0);
        let r = DMatrix::from_fn(4, 3, |i, j| C64::new(i as f64 - j as f64, 1.0));
        let (_, _, rank) = truncate(&l, &r, 1e-8);
        assert!(rank <= 2);
    }

    #[test]
    fn decoupled_vector_solve() {
        let p = RZParameters::new(5.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let model = RZModel::new(p, 2, 0.0, 2.0).unwrap();
        let disc = discretize(&model, 40).unwrap();
        let psi0 = DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5), C64::new(0.5, 0.0), C64::new(-0.5, 0.0)]);
        let (sol, stats) = solve_vector(&disc, &psi0, &SolverConfig::default()).unwrap();
        assert!(stats.converged && stats.iterations <= 2);
        for &t in &[0.0, 0.37, 1.0, 2.0] {
            let psi = sol.evaluate_state(t).unwrap();
            for i in 0..4 {
                let ph = C64::new(0.0, -sigma3(i, 2) * 5.0 * t).exp();
                assert!((psi[i] - ph * psi0[i]).norm() < 1e-8);
            }
        }
        assert!(sol.evaluate_state(2.5).is_err());
    }

    #[test]
    fn initial_operator_is_identity() {
        let disc = toy(Case::A, 6, 24);
        let cfg = SolverConfig { max_iter: 0, ..Default::default() };
        for f in [Formulation::Literal, Formulation::Smooth] {
            let (sol, _) = solve_operator(&disc, &SolverConfig { formulation: f, ..cfg }).unwrap();
            let u0 = sol.evaluate_operator_full(disc.model.t0).unwrap();
            if f == Formulation::Smooth {
                assert!(max_abs(&(u0 - DMatrix::<C64>::identity(6, 6))) < 1e-12);
            }
        }
    }
}
