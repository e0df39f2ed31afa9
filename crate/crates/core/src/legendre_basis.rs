//! Orthonormal Legendre basis, Gauss-Legendre quadrature and coefficient
//! matrices of kernels `f(t) Θ(t - s)` on `[-1, 1]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Slack accepted on `|τ| <= 1` before a point counts as extrapolation.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f` on `[-1, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The `n`-point Gauss-Legendre rule on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return invalid("quadrature needs at least one point");
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root.
        let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn check_domain(tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau.abs() > 1.0 + DOMAIN_SLACK {
        return invalid(format!("τ = {tau} lies outside [-1, 1]"));
    }
    Ok(tau.clamp(-1.0, 1.0))
}

fn check_order(m: usize) -> Result<()> {
    if m == 0 {
        return invalid("basis order M must be at least 1");
    }
    Ok(())
}

#[inline]
fn norm_factor(k: usize) -> f64 {
    ((2 * k + 1) as f64 / 2.0).sqrt()
}

/// Fills `out[j] = P_j(x)` for `j < out.len()`.
fn fill_legendre(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0) * x * out[j] - jf * out[j - 1]) / (jf + 1.0);
    }
}

fn basis_into(tau: f64, out: &mut [f64]) {
    fill_legendre(tau, out);
    for (k, p) in out.iter_mut().enumerate() {
        *p *= norm_factor(k);
    }
}

fn antiderivative_into(tau: f64, scratch: &mut Vec<f64>, out: &mut [f64]) {
    let m = out.len();
    scratch.resize(m + 1, 0.0);
    fill_legendre(tau, scratch);
    out[0] = (tau + 1.0) * norm_factor(0);
    for l in 1..m {
        out[l] = norm_factor(l) * (scratch[l + 1] - scratch[l - 1]) / (2 * l + 1) as f64;
    }
}

/// `[p_0(τ), ..., p_{M-1}(τ)]` with `p_k = sqrt((2k+1)/2) P_k`.
pub fn eval_basis(m: usize, tau: f64) -> Result<DVector<f64>> {
    check_order(m)?;
    let tau = check_domain(tau)?;
    let mut out = vec![0.0; m];
    basis_into(tau, &mut out);
    Ok(DVector::from_vec(out))
}

/// `[∫_{-1}^τ p_0, ..., ∫_{-1}^τ p_{M-1}]` in closed form.
pub fn eval_antiderivative_basis(m: usize, tau: f64) -> Result<DVector<f64>> {
    check_order(m)?;
    let tau = check_domain(tau)?;
    let mut out = vec![0.0; m];
    antiderivative_into(tau, &mut Vec::new(), &mut out);
    Ok(DVector::from_vec(out))
}

/// `M × n` table of `p_k(x_q)`.
pub fn basis_table(m: usize, points: &[f64]) -> DMatrix<f64> {
    let mut table = DMatrix::zeros(m, points.len());
    let mut col = vec![0.0; m];
    for (q, &x) in points.iter().enumerate() {
        basis_into(x, &mut col);
        table.column_mut(q).copy_from_slice(&col);
    }
    table
}

/// `M × n` table of `∫_{-1}^{x_q} p_ℓ`.
pub fn antiderivative_table(m: usize, points: &[f64]) -> DMatrix<f64> {
    let mut table = DMatrix::zeros(m, points.len());
    let mut col = vec![0.0; m];
    let mut scratch = Vec::with_capacity(m + 1);
    for (q, &x) in points.iter().enumerate() {
        antiderivative_into(x, &mut scratch, &mut col);
        table.column_mut(q).copy_from_slice(&col);
    }
    table
}

/// Truncated coefficient matrix of a kernel `f(t) Θ(t - s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub order: usize,
    pub entries: DMatrix<f64>,
    pub kernel_label: String,
}

impl CoefficientMatrix {
    /// Leading `m × m` block, which is the order-`m` truncation.
    pub fn truncate(&self, m: usize) -> Result<CoefficientMatrix> {
        if m == 0 || m > self.order {
            return invalid(format!("cannot truncate order {} to {m}", self.order));
        }
        Ok(CoefficientMatrix {
            order: m,
            entries: self.entries.view((0, 0), (m, m)).into_owned(),
            kernel_label: self.kernel_label.clone(),
        })
    }
}

/// `F[k][ℓ] = Σ_q w_q f(t_q) p_k(t_q) ∫_{-1}^{t_q} p_ℓ` with a `quad_points` Gauss rule.
pub fn kernel_coefficient_matrix(
    f: impl Fn(f64) -> f64,
    m: usize,
    quad_points: usize,
) -> Result<CoefficientMatrix> {
    labelled_coefficient_matrix(f, m, quad_points, "f")
}

pub fn labelled_coefficient_matrix(
    f: impl Fn(f64) -> f64,
    m: usize,
    quad_points: usize,
    label: &str,
) -> Result<CoefficientMatrix> {
    check_order(m)?;
    if quad_points < m {
        return Err(Error::Refused(format!(
            "{quad_points} quadrature points cannot resolve order {m}"
        )));
    }
    let rule = gauss_legendre_rule(quad_points)?;
    let mut p = basis_table(m, &rule.nodes);
    for (q, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let s = w * f(x);
        p.column_mut(q).scale_mut(s);
    }
    let a = antiderivative_table(m, &rule.nodes);
    let entries = p * a.transpose();
    Ok(CoefficientMatrix { order: m, entries, kernel_label: label.to_string() })
}

/// Coefficient matrix of the bare Heaviside kernel, `T_M`.
pub fn theta_matrix(m: usize) -> Result<CoefficientMatrix> {
    // p_k A_ℓ has degree at most 2M - 1, so M + 1 points are exact.
    labelled_coefficient_matrix(|_| 1.0, m, m + 1, "theta")
}

/// Orthonormal Legendre coefficients `c_k = ∫ f p_k`, `k < m`.
pub fn legendre_coefficients(f: impl Fn(f64) -> f64, m: usize, quad_points: usize) -> Result<DVector<f64>> {
    check_order(m)?;
    let rule = gauss_legendre_rule(quad_points.max(m))?;
    let mut c = DVector::zeros(m);
    let mut col = vec![0.0; m];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let s = w * f(x);
        basis_into(x, &mut col);
        for (ck, pk) in c.iter_mut().zip(&col) {
            *ck += s * pk;
        }
    }
    Ok(c)
}

/// Smallest probe size `n` (64, 128, ..., 8192) whose `n`-point Legendre
/// coefficients of `f` have a last quarter below `1e-12` of the largest.
pub fn kernel_resolution(f: impl Fn(f64) -> f64) -> usize {
    let mut n = 64;
    loop {
        let c = legendre_coefficients(&f, n, n).expect("positive probe size");
        let peak = c.amax();
        let tail = c.rows(3 * n / 4, n - 3 * n / 4).amax();
        if peak == 0.0 || tail <= 1e-12 * peak || n >= 8192 {
            return n;
        }
        n *= 2;
    }
}

/// Default quadrature size for an order-`m` coefficient matrix of `f`.
pub fn default_quad_points(f: impl Fn(f64) -> f64, m: usize) -> usize {
    m + (kernel_resolution(f) / 2 + 16).max(32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules() {
        let r1 = gauss_legendre_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
        let r2 = gauss_legendre_rule(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0] + x).abs() < 1e-15 && (r2.nodes[1] - x).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15 && (r2.weights[1] - 1.0).abs() < 1e-15);
        assert!(gauss_legendre_rule(0).is_err());
    }

    #[test]
    fn monomial_exactness() {
        let r = gauss_legendre_rule(16).unwrap();
        assert!((r.integrate(|x| x.powi(30)) - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn basis_values() {
        let b = eval_basis(2, -1.0).unwrap();
        assert!((b[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((b[1] + 1.5f64.sqrt()).abs() < 1e-15);
        let b = eval_basis(3, 0.0).unwrap();
        assert!(b[1].abs() < 1e-15);
        assert!((b[2] + 2.5f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(eval_basis(3, 1.5).is_err());
        assert!(eval_basis(0, 0.0).is_err());
    }

    #[test]
    fn antiderivative_endpoints() {
        let a = eval_antiderivative_basis(2, 1.0).unwrap();
        assert!((a[0] - 2f64.sqrt()).abs() < 1e-15 && a[1].abs() < 1e-15);
        let a = eval_antiderivative_basis(2, -1.0).unwrap();
        assert!(a[0].abs() < 1e-15 && a[1].abs() < 1e-15);
    }

    #[test]
    fn theta_small() {
        let t1 = theta_matrix(1).unwrap();
        assert!((t1.entries[(0, 0)] - 1.0).abs() < 1e-14);
        let t = theta_matrix(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let expect = [[1.0, -s], [s, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.entries[(i, j)] - expect[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_kernel_and_refusal() {
        let z = kernel_coefficient_matrix(|_| 0.0, 5, 40).unwrap();
        assert_eq!(z.entries.amax(), 0.0);
        assert!(matches!(kernel_coefficient_matrix(|_| 1.0, 10, 9), Err(Error::Refused(_))));
    }

    #[test]
    fn resolution_grows_with_oscillation() {
        assert_eq!(kernel_resolution(|_| 1.0), 64);
        assert!(kernel_resolution(|x| (40.0 * x).cos()) >= 128);
    }
}
