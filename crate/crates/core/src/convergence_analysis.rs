//! Convergence diagnostics of the stationary iteration `x ← A x + c`,
//! `A = G (i (σ1 ⊗ M_k) ⊗ V_M)`, `G = (I + i (σ3 ⊗ I_k) ⊗ Ω_M)^{-1}`.
//!
//! In the eigenbasis of `M_k` the operator splits as `A ≅ ⊕_j λ_j B` with
//! `B = i [[0, G1 V], [G2 V, 0]]`, and `B² = -diag(C, conj(C))`,
//! `C = G1 V G2 V`. The fast routes below use this reduction; the
//! column-by-column routes apply `A` directly.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rz_model::{path_eigenvalues, C64};
use crate::star_solver::{complex_mul, real_mul, SolveStats, StarDiscretization};

/// `A x` for `x = vec(X)`, `X` of size `M × N` (column-major).
pub fn iteration_matrix_apply(disc: &StarDiscretization, x: &DVector<C64>) -> Result<DVector<C64>> {
    let (m, n) = (disc.m, disc.n());
    if x.len() != m * n {
        return invalid(format!("vector length {} does not match M·N = {}", x.len(), m * n));
    }
    let xs = DMatrix::from_column_slice(m * n, 1, x.as_slice());
    Ok(iteration_matrix_apply_many(disc, &xs).column(0).into_owned())
}

/// `A` applied to every column of `xs` (`MN × b`).
pub fn iteration_matrix_apply_many(disc: &StarDiscretization, xs: &DMatrix<C64>) -> DMatrix<C64> {
    let (m, n, k) = (disc.m, disc.n(), disc.model.k);
    let b = xs.ncols();
    // Columns of all X's side by side: M × (N b).
    let wide = DMatrix::from_column_slice(m, n * b, xs.as_slice());
    let vx = real_mul(&disc.v_mat.entries, &wide);
    // Right-multiply each X by S = σ1 ⊗ M_k, then scale by i.
    let mut vxs = DMatrix::<C64>::zeros(m, n * b);
    for blk in 0..b {
        let base = blk * n;
        for j in 0..n {
            let (half, jj) = (j / k, j % k);
            let other = (1 - half) * k;
            let mut col = DVector::<C64>::zeros(m);
            if jj > 0 {
                col += vx.column(base + other + jj - 1);
            }
            if jj + 1 < k {
                col += vx.column(base + other + jj + 1);
            }
            vxs.column_mut(base + j).copy_from(&col.map(|z| C64::new(-z.im, z.re)));
        }
    }
    // G1 on the first k columns of every X, G2 on the rest.
    let mut top = DMatrix::<C64>::zeros(m, k * b);
    let mut bot = DMatrix::<C64>::zeros(m, k * b);
    for blk in 0..b {
        top.columns_mut(blk * k, k).copy_from(&vxs.columns(blk * n, k));
        bot.columns_mut(blk * k, k).copy_from(&vxs.columns(blk * n + k, k));
    }
    let top = disc.apply_g1(&top);
    let bot = disc.apply_g2(&bot);
    let mut out = DMatrix::<C64>::zeros(m * n, b);
    for blk in 0..b {
        let mut xcol = DMatrix::<C64>::zeros(m, n);
        xcol.columns_mut(0, k).copy_from(&top.columns(blk * k, k));
        xcol.columns_mut(k, k).copy_from(&bot.columns(blk * k, k));
        out.column_mut(blk).copy_from_slice(xcol.as_slice());
    }
    out
}

/// Dense `A` (small sizes; oracle use).
pub fn iteration_matrix_dense(disc: &StarDiscretization) -> DMatrix<C64> {
    let mn = disc.m * disc.n();
    iteration_matrix_apply_many(disc, &DMatrix::identity(mn, mn))
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let mx = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + values.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// `‖A^ℓ‖_F^{1/ℓ}` by applying `A` `ℓ` times to each canonical basis vector,
/// with per-column renormalization and log-magnitude accumulation.
pub fn frobenius_power_bound(disc: &StarDiscretization, ell: usize) -> Result<f64> {
    if ell == 0 {
        return invalid("power ℓ must be at least 1");
    }
    let mn = disc.m * disc.n();
    const BATCH: usize = 64;
    let mut log_sq = Vec::with_capacity(mn);
    let mut start = 0;
    while start < mn {
        let b = BATCH.min(mn - start);
        let mut xs = DMatrix::<C64>::zeros(mn, b);
        for c in 0..b {
            xs[(start + c, c)] = C64::new(1.0, 0.0);
        }
        let mut logs = vec![0.0; b];
        for _ in 0..ell {
            xs = iteration_matrix_apply_many(disc, &xs);
            for (c, lg) in logs.iter_mut().enumerate() {
                let nrm = xs.column(c).norm();
                if nrm > 0.0 {
                    xs.column_mut(c).unscale_mut(nrm);
                    *lg += nrm.ln();
                } else {
                    *lg = f64::NEG_INFINITY;
                }
            }
        }
        log_sq.extend(logs.iter().map(|l| 2.0 * l));
        start += b;
    }
    Ok((0.5 * log_sum_exp(&log_sq) / ell as f64).exp())
}

/// `C = G1 V G2 V`.
fn modal_core(disc: &StarDiscretization) -> DMatrix<C64> {
    let eye = DMatrix::<f64>::identity(disc.m, disc.m);
    let v = real_mul(&disc.v_mat.entries, &crate::star_solver::to_complex(&eye));
    let g2v = disc.apply_g2(&v);
    let vg2v = real_mul(&disc.v_mat.entries, &g2v);
    disc.apply_g1(&vg2v)
}

/// `log Σ_j |λ_j|^{2ℓ}` over the eigenvalues of `M_k`.
fn log_mode_weight(k: usize, ell: usize) -> f64 {
    let lam: Vec<f64> = path_eigenvalues(k).iter().map(|l| l.abs()).collect();
    let terms: Vec<f64> = lam.iter().map(|&l| 2.0 * ell as f64 * l.ln()).collect();
    log_sum_exp(&terms)
}

/// `‖A^ℓ‖_F^{1/ℓ}` for each `ℓ` in `ells`, through the modal reduction:
/// `‖A^ℓ‖_F² = Σ_j λ_j^{2ℓ} ‖B^ℓ‖_F²`, `‖B^{2m}‖_F² = 2 ‖C^m‖_F²`,
/// `‖B^{2m+1}‖_F² = 2 ‖C^m G1 V‖_F²`. Powers are formed sequentially with
/// renormalization.
pub fn frobenius_power_bounds(disc: &StarDiscretization, ells: &[usize]) -> Result<Vec<f64>> {
    if ells.contains(&0) {
        return invalid("power ℓ must be at least 1");
    }
    let m = disc.m;
    let c = modal_core(disc);
    let eye = crate::star_solver::to_complex(&DMatrix::<f64>::identity(m, m));
    let g1v = disc.apply_g1(&real_mul(&disc.v_mat.entries, &eye));
    let max_half = ells.iter().map(|l| l / 2).max().unwrap_or(0);
    // log ‖B^ℓ‖_F² for each requested ℓ.
    let mut log_b = vec![f64::NEG_INFINITY; ells.len()];
    let mut p = eye.clone();
    let mut log_scale = 0.0;
    for half in 0..=max_half {
        if half > 0 {
            p = complex_mul(&c, &p);
            let nrm = p.norm();
            if nrm == 0.0 {
                break;
            }
            p.unscale_mut(nrm);
            log_scale += nrm.ln();
        }
        for (slot, &ell) in ells.iter().enumerate() {
            if ell / 2 != half {
                continue;
            }
            let nrm = if ell % 2 == 0 { p.norm() } else { complex_mul(&p, &g1v).norm() };
            if nrm > 0.0 {
                log_b[slot] = 2.0f64.ln() + 2.0 * (nrm.ln() + log_scale);
            }
        }
    }
    Ok(ells
        .iter()
        .zip(&log_b)
        .map(|(&ell, &lb)| {
            let total = lb + log_mode_weight(disc.model.k, ell);
            if total.is_finite() {
                (0.5 * total / ell as f64).exp()
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRadius {
    pub value: f64,
    pub converged: bool,
    /// Matrix-vector products spent (0 for the direct route).
    pub matvecs: usize,
}

/// Largest `M·N` accepted by [`spectral_radius_small`].
pub const SMALL_BUDGET: usize = 4000;

/// `ρ(A) = max_j |λ_j| · sqrt(ρ(C))`, with `ρ(C)` from a complex Schur form.
pub fn spectral_radius_small(disc: &StarDiscretization) -> Result<SpectralRadius> {
    if disc.m * disc.n() > SMALL_BUDGET {
        return invalid(format!("M·N = {} exceeds the eigenvalue budget {SMALL_BUDGET}", disc.m * disc.n()));
    }
    Ok(spectral_radius_modal(disc))
}

/// Same as [`spectral_radius_small`] without the size guard; the work is
/// `O(M³)` regardless of `N`.
pub fn spectral_radius_modal(disc: &StarDiscretization) -> SpectralRadius {
    let lam_max = path_eigenvalues(disc.model.k).iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let c = modal_core(disc);
    let rho_c = match Schur::try_new(c, 1e-15, 10_000) {
        Some(s) => {
            let (_, t) = s.unpack();
            (0..t.nrows()).fold(0.0f64, |a, i| a.max(t[(i, i)].norm()))
        }
        None => {
            return SpectralRadius { value: f64::NAN, converged: false, matvecs: 0 };
        }
    };
    SpectralRadius { value: lam_max * rho_c.sqrt(), converged: true, matvecs: 0 }
}

/// Matvec-only estimate: restarted power iteration where each cycle spans a
/// short Krylov space, reads off the largest Ritz modulus and restarts from
/// `A^cycle x`. Plain Rayleigh quotients stall here since several distinct
/// eigenvalues share the top modulus.
/// Stops when two cycles agree to `tol` relatively, or after `max_matvecs`.
pub fn spectral_radius_power(disc: &StarDiscretization, tol: f64, max_matvecs: usize) -> SpectralRadius {
    const CYCLE: usize = 24;
    let mn = disc.m * disc.n();
    let mut x = DVector::from_fn(mn, |i, _| {
        let s = i as f64 + 1.0;
        C64::new((s * 0.7548776662).fract() - 0.5, (s * 0.5698402910).fract() - 0.5)
    });
    x.unscale_mut(x.norm());
    let mut prev = f64::INFINITY;
    let mut matvecs = 0;
    let mut value = 0.0;
    while matvecs < max_matvecs {
        let dim = CYCLE.min(mn).min(max_matvecs - matvecs);
        let mut basis: Vec<DVector<C64>> = vec![x.clone()];
        let mut h = DMatrix::<C64>::zeros(dim + 1, dim);
        let mut size = dim;
        for j in 0..dim {
            let mut w = iteration_matrix_apply_many(disc, &DMatrix::from_column_slice(mn, 1, basis[j].as_slice()))
                .column(0)
                .into_owned();
            matvecs += 1;
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = q.dotc(&w);
                    h[(i, j)] += c;
                    w.axpy(-c, q, C64::new(1.0, 0.0));
                }
            }
            let nrm = w.norm();
            h[(j + 1, j)] = C64::new(nrm, 0.0);
            if nrm <= 1e-14 * h.column(j).norm().max(f64::MIN_POSITIVE) {
                size = j + 1;
                break;
            }
            basis.push(w.unscale(nrm));
        }
        let hk = h.view((0, 0), (size, size)).into_owned();
        if hk.iter().all(|z| z.norm() == 0.0) {
            return SpectralRadius { value: 0.0, converged: true, matvecs };
        }
        value = match Schur::try_new(hk, 1e-15, 10_000) {
            Some(s) => {
                let t = s.unpack().1;
                (0..size).fold(0.0f64, |a, i| a.max(t[(i, i)].norm()))
            }
            None => value,
        };
        if size < dim || (value - prev).abs() <= tol * value.max(f64::MIN_POSITIVE) {
            return SpectralRadius { value, converged: true, matvecs };
        }
        prev = value;
        // Restart from A^dim x, whose Krylov coordinates follow from H.
        let mut c = DVector::<C64>::zeros(dim + 1);
        c[0] = C64::new(1.0, 0.0);
        for _ in 0..dim {
            c = &h * c.rows(0, dim);
            let nrm = c.norm();
            c.unscale_mut(nrm);
        }
        x = basis.iter().zip(c.iter()).fold(DVector::zeros(mn), |acc, (q, &w)| acc + q * w);
        x.unscale_mut(x.norm());
    }
    SpectralRadius { value, converged: false, matvecs }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// Entry 0 describes the starting factor, entry `n` iteration `n`.
    pub ranks: Vec<usize>,
    pub nnz: Vec<usize>,
    pub bandwidths: Vec<usize>,
    pub iteration_times: Vec<f64>,
    /// Iterations where `bandwidth > iteration + 1`.
    pub bandwidth_violations: Vec<usize>,
    /// Iterations where `rank > M`.
    pub rank_violations: Vec<usize>,
}

impl StructureReport {
    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    pub fn final_nnz(&self) -> usize {
        self.nnz.last().copied().unwrap_or(0)
    }

    pub fn is_clean(&self) -> bool {
        self.bandwidth_violations.is_empty() && self.rank_violations.is_empty()
    }
}

/// Per-iteration structure of an operator solve, with bound checks.
pub fn structure_report(stats: &SolveStats, m: usize, initial_rank: usize) -> StructureReport {
    let mut rep = StructureReport {
        ranks: std::iter::once(initial_rank).chain(stats.ranks.iter().copied()).collect(),
        nnz: std::iter::once(stats.initial_nnz).chain(stats.nnz.iter().copied()).collect(),
        bandwidths: std::iter::once(stats.initial_bandwidth).chain(stats.bandwidths.iter().copied()).collect(),
        iteration_times: stats.iteration_times.clone(),
        ..Default::default()
    };
    for (it, &b) in rep.bandwidths.iter().enumerate() {
        if b > it + 1 {
            rep.bandwidth_violations.push(it);
        }
    }
    for (it, &r) in rep.ranks.iter().enumerate() {
        if r > m {
            rep.rank_violations.push(it);
        }
    }
    rep
}

/// Least-squares line `y = slope x + intercept` and its `R²`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Geometric-mean contraction of the estimates over the last `window`
/// iterations, measured over two-step gaps so that the alternation between
/// the two halves of the state does not bias it.
pub fn tail_rate(estimates: &[f64], window: usize) -> Option<f64> {
    let n = estimates.len();
    if n < window.max(2) + 2 || window < 2 {
        return None;
    }
    let first = estimates[n - 1 - window];
    let last = estimates[n - 1];
    if first <= 0.0 || last <= 0.0 {
        return None;
    }
    Some((last / first).powf(1.0 / window as f64))
}

/// Sizes up to this use a dense SVD in [`spectral_norm`].
pub const SVD_CUTOFF: usize = 64;

/// `‖E‖₂`: dense SVD for small matrices, above [`SVD_CUTOFF`] Lanczos with
/// full reorthogonalization on `EᴴE` (as a real symmetric operator on
/// `[Re x; Im x]`), stopped when the top Ritz value settles to `1e-12`
/// relative.
pub fn spectral_norm(e: &DMatrix<C64>) -> f64 {
    if e.nrows().max(e.ncols()) <= SVD_CUTOFF {
        return e.clone().singular_values().iter().fold(0.0f64, |a, s| a.max(*s));
    }
    let (er, ei) = (e.map(|z| z.re), e.map(|z| z.im));
    let (ert, eit) = (er.transpose(), ei.transpose());
    let n = e.ncols();
    let op = |x: &DVector<f64>| {
        let (xr, xi) = (x.rows(0, n), x.rows(n, n));
        let yr = &er * xr - &ei * xi;
        let yi = &er * xi + &ei * xr;
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&(&ert * &yr + &eit * &yi));
        z.rows_mut(n, n).copy_from(&(&ert * &yi - &eit * &yr));
        z
    };
    let mut q = DVector::from_fn(2 * n, |i, _| 1.0 + (i as f64 * 0.618034).fract());
    q.unscale_mut(q.norm());
    let max_dim = (2 * n).min(400);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_dim);
    let (mut alpha, mut beta) = (Vec::new(), Vec::<f64>::new());
    let mut theta = 0.0f64;
    for j in 0..max_dim {
        let mut w = op(&q);
        let a = w.dot(&q);
        basis.push(q.clone());
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = w.dot(b);
                w.axpy(-c, b, 1.0);
            }
        }
        let bnorm = w.norm();
        let check = j + 1 == max_dim || j % 8 == 7 || bnorm <= 1e-14 * a.abs().max(theta);
        if check {
            let k = alpha.len();
            let t = DMatrix::from_fn(k, k, |r, c| match r.abs_diff(c) {
                0 => alpha[r],
                1 => beta[r.min(c)],
                _ => 0.0,
            });
            let top = SymmetricEigen::new(t).eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
            let settled = (top - theta).abs() <= 1e-12 * top;
            theta = top;
            if settled || bnorm <= 1e-14 * theta {
                break;
            }
        }
        if bnorm == 0.0 {
            break;
        }
        beta.push(bnorm);
        q = w.unscale(bnorm);
    }
    theta.max(0.0).sqrt()
}

/// `‖UᴴU - I‖₂`.
pub fn unitarity_deviation(u: &DMatrix<C64>) -> f64 {
    let mut g = complex_mul(&u.adjoint(), u);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    spectral_norm(&g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSample {
    pub iteration: usize,
    pub estimate: f64,
    pub true_error: f64,
}

impl EstimatorSample {
    /// `max(est/true, true/est)`; 1 is perfect.
    pub fn discrepancy(&self) -> f64 {
        let r = self.estimate / self.true_error;
        r.max(1.0 / r)
    }
}

/// Pairs each estimate `‖b_n - b_{n-1}‖` with `‖b_n - b_*‖` for the
/// recorded iterates of `stats` (requires `record_b`).
pub fn estimator_fidelity(stats: &SolveStats, b_star: &DVector<C64>) -> Vec<EstimatorSample> {
    stats
        .error_estimates
        .iter()
        .enumerate()
        .filter_map(|(i, &est)| {
            let b = stats.b_history.get(i + 1)?;
            Some(EstimatorSample { iteration: i + 1, estimate: est, true_error: (b - b_star).norm() })
        })
        .collect()
}
