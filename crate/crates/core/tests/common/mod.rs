//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Dim, Matrix, RawStorage, SymmetricEigen};
use star_rz::star_solver::StarDiscretization;
use star_rz::{RZModel, C64};

/// Gauss-Legendre rule from the eigen-decomposition of the Jacobi matrix.
pub fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |r, c| {
        if r.abs_diff(c) == 1 {
            let k = r.max(c) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `p_k(x) = sqrt((2k+1)/2) P_k(x)`, `k < m`.
pub fn orthonormal_legendre(m: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; m + 1];
    p[0] = 1.0;
    if m >= 1 {
        p[1] = x;
    }
    for k in 1..m {
        p[k + 1] = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    (0..m).map(|k| ((2 * k + 1) as f64 / 2.0).sqrt() * p[k]).collect()
}

/// `∫_{-1}^{x} p_k` from `∫ P_k = (P_{k+1} - P_{k-1}) / (2k+1)`.
pub fn orthonormal_antiderivative(m: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; m + 2];
    p[0] = 1.0;
    p[1] = x;
    for k in 1..=m {
        p[k + 1] = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    (0..m)
        .map(|k| {
            let raw = if k == 0 { x + 1.0 } else { (p[k + 1] - p[k - 1]) / (2 * k + 1) as f64 };
            ((2 * k + 1) as f64 / 2.0).sqrt() * raw
        })
        .collect()
}

/// `F[k][ℓ] = ∫_{-1}^{1} ∫_{-1}^{t} f(t) p_k(t) p_ℓ(s) ds dt` by a
/// composite outer rule (`panels` × `pts`) and a Gauss rule on `[-1, t]`
/// for the inner integral (no antiderivative identities involved).
pub fn brute_coefficient_matrix(f: impl Fn(f64) -> f64, m: usize, panels: usize, pts: usize) -> DMatrix<f64> {
    let (gx, gw) = golub_welsch(pts);
    let (ix, iw) = golub_welsch(m.div_ceil(2) + 2);
    let mut out = DMatrix::zeros(m, m);
    for p in 0..panels {
        let a = -1.0 + 2.0 * p as f64 / panels as f64;
        let b = -1.0 + 2.0 * (p + 1) as f64 / panels as f64;
        for (&x, &w) in gx.iter().zip(&gw) {
            let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
            let wt = 0.5 * (b - a) * w * f(t);
            let pk = orthonormal_legendre(m, t);
            let mut inner = vec![0.0; m];
            for (&y, &v) in ix.iter().zip(&iw) {
                let s = -1.0 + 0.5 * (t + 1.0) * (y + 1.0);
                let ps = orthonormal_legendre(m, s);
                for l in 0..m {
                    inner[l] += 0.5 * (t + 1.0) * v * ps[l];
                }
            }
            for k in 0..m {
                for l in 0..m {
                    out[(k, l)] += wt * pk[k] * inner[l];
                }
            }
        }
    }
    out
}

fn sigma3_diag(model: &RZModel) -> Vec<f64> {
    (0..model.n()).map(|i| if i < model.k { 1.0 } else { -1.0 }).collect()
}

/// `I + i(Σ3 ⊗ Ω + S ⊗ V)`, the system matrix acting on `vec(X)`.
pub fn dense_system(disc: &StarDiscretization) -> DMatrix<C64> {
    let (m, n) = (disc.m, disc.n());
    let s = disc.model.dense_coupling().unwrap();
    let sig = sigma3_diag(&disc.model);
    let om = &disc.omega_mat.entries;
    let v = &disc.v_mat.entries;
    DMatrix::from_fn(m * n, m * n, |r, c| {
        let (i, a) = (r % m, r / m);
        let (j, b) = (c % m, c / m);
        let mut z = if a == b { sig[a] * om[(i, j)] } else { 0.0 };
        z += s[(a, b)] * v[(i, j)];
        let one = if r == c { 1.0 } else { 0.0 };
        C64::new(one, z)
    })
}

fn unvec(x: &DVector<C64>, m: usize, n: usize) -> DMatrix<C64> {
    DMatrix::from_column_slice(m, n, x.as_slice())
}

/// Dense solution `X` of `X + iΩXΣ3 + iVXS = φ(-1) ψ0ᵀ`.
pub fn dense_literal_unknown(disc: &StarDiscretization, psi0: &DVector<C64>) -> DMatrix<C64> {
    let (m, n) = (disc.m, disc.n());
    let phi = orthonormal_legendre(m, -1.0);
    let rhs = DVector::from_fn(m * n, |r, _| psi0[r / m] * phi[r % m]);
    unvec(&dense_system(disc).lu().solve(&rhs).unwrap(), m, n)
}

/// Dense solution `Y` of `Y + iΩYΣ3 + iVYS = -i(ω_c ψ0ᵀ Σ3 + v_c ψ0ᵀ S)`,
/// where `ω_c`, `v_c` are Legendre coefficients of the rescaled kernels.
pub fn dense_smooth_unknown(disc: &StarDiscretization, psi0: &DVector<C64>) -> DMatrix<C64> {
    let (m, n) = (disc.m, disc.n());
    let s = disc.model.dense_coupling().unwrap().map(|x| C64::new(x, 0.0));
    let sig = sigma3_diag(&disc.model);
    let s_psi = &s * psi0;
    let rhs = DVector::from_fn(m * n, |r, _| {
        let (i, a) = (r % m, r / m);
        let z = psi0[a] * sig[a] * disc.omega_coeffs[i] + s_psi[a] * disc.v_coeffs[i];
        C64::new(z.im, -z.re)
    });
    unvec(&dense_system(disc).lu().solve(&rhs).unwrap(), m, n)
}

/// `T_M` by the brute-force oracle.
pub fn brute_theta(m: usize) -> DMatrix<f64> {
    brute_coefficient_matrix(|_| 1.0, m, 4, m + 4)
}

/// `ψ(t) = Xᵀ T_Mᵀ φ(τ)`.
pub fn literal_state(model: &RZModel, x: &DMatrix<C64>, theta: &DMatrix<f64>, t: f64) -> DVector<C64> {
    let m = x.nrows();
    let tau = 2.0 * (t - model.t0) / (model.tf - model.t0) - 1.0;
    let w = theta.transpose() * DVector::from_vec(orthonormal_legendre(m, tau));
    x.transpose() * w.map(|v| C64::new(v, 0.0))
}

/// `ψ(t) = ψ0 + Yᵀ A(τ)` with `A_ℓ(τ) = ∫_{-1}^τ p_ℓ`.
pub fn smooth_state(model: &RZModel, psi0: &DVector<C64>, y: &DMatrix<C64>, t: f64) -> DVector<C64> {
    let m = y.nrows();
    let tau = 2.0 * (t - model.t0) / (model.tf - model.t0) - 1.0;
    let a = DVector::from_vec(orthonormal_antiderivative(m, tau));
    psi0 + y.transpose() * a.map(|v| C64::new(v, 0.0))
}

/// Largest entry modulus of a complex matrix or vector.
pub fn cmax<R: Dim, C: Dim, S: RawStorage<C64, R, C>>(a: &Matrix<C64, R, C, S>) -> f64 {
    a.iter().fold(0.0, |m: f64, z| m.max(z.norm()))
}

/// Deterministic normalized test vector.
pub fn test_state(n: usize, salt: f64) -> DVector<C64> {
    let v = DVector::from_fn(n, |i, _| C64::new((1.3 * i as f64 + salt).sin(), (0.7 * i as f64 - salt).cos()));
    let nrm = v.norm();
    v.unscale(nrm)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
