//! Time-stepping references: classical RK4, Dormand-Prince 5(4), and a
//! modal reference that decouples the Rosen-Zener model into `k` two-level
//! systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rz_model::{path_eigenvalues, path_eigenvectors, RZModel, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Rk4,
    Dp54,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub method: Method,
    /// Fixed step count over `[t0, tf]`; required for RK4, optional for DP54
    /// (adaptive when absent).
    pub steps: Option<usize>,
    pub atol: f64,
    pub rtol: f64,
    /// Record every accepted step in the trajectory.
    pub dense_output: bool,
}

impl StepperConfig {
    pub fn rk4(steps: usize) -> Self {
        StepperConfig { method: Method::Rk4, steps: Some(steps), atol: 0.0, rtol: 0.0, dense_output: false }
    }

    pub fn dp54(atol: f64, rtol: f64) -> Self {
        StepperConfig { method: Method::Dp54, steps: None, atol, rtol, dense_output: false }
    }

    pub fn dp54_fixed(steps: usize) -> Self {
        StepperConfig { method: Method::Dp54, steps: Some(steps), atol: 0.0, rtol: 0.0, dense_output: false }
    }

    fn validate(&self) -> Result<()> {
        match (self.method, self.steps) {
            (Method::Rk4, None) => invalid("RK4 needs a step count"),
            (_, Some(0)) => invalid("step count must be positive"),
            (Method::Dp54, None) if !(self.atol > 0.0 && self.rtol > 0.0) => {
                invalid("adaptive DP54 needs atol, rtol > 0")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<C64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Dormand-Prince 5(4) tableau.
mod dp {
    pub const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    pub const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    /// `B - B*` (fifth minus fourth order weights).
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

/// Integrates `y' = f(t, y)` from `t0` through the increasing `samples`,
/// returning the state at each sample.
pub struct Integrator<F> {
    f: F,
    config: StepperConfig,
    dim: usize,
    stages: Vec<Vec<C64>>,
    tmp: Vec<C64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<F: FnMut(f64, &[C64], &mut [C64])> Integrator<F> {
    pub fn new(f: F, dim: usize, config: StepperConfig) -> Result<Self> {
        config.validate()?;
        Ok(Integrator {
            f,
            config,
            dim,
            stages: vec![vec![ZERO; dim]; 7],
            tmp: vec![ZERO; dim],
            accepted: 0,
            rejected: 0,
        })
    }

    /// States at `samples` (each `>= t0`, increasing). `span` fixes the
    /// nominal fixed step `span / steps`.
    pub fn run(
        &mut self,
        t0: f64,
        y0: &[C64],
        samples: &[f64],
        span: f64,
        mut on_step: impl FnMut(f64, &[C64]),
    ) -> Result<Vec<Vec<C64>>> {
        if y0.len() != self.dim {
            return invalid("initial state has the wrong dimension");
        }
        if samples.windows(2).any(|w| w[1] < w[0]) || samples.first().is_some_and(|&s| s < t0) {
            return invalid("sample times must be increasing and not before t0");
        }
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut out = Vec::with_capacity(samples.len());
        let fixed = self.config.steps.map(|s| span / s as f64);
        let mut h = fixed.unwrap_or(0.0);
        let mut err_old: f64 = 1e-4;
        let mut have_k1 = false;
        for &target in samples {
            while target - t > 1e-14 * span.max(1.0) {
                match fixed {
                    Some(hf) => {
                        let step = hf.min(target - t);
                        // Snap onto the target when within rounding of it.
                        let step = if target - t - step < 1e-12 * hf { target - t } else { step };
                        match self.config.method {
                            Method::Rk4 => self.rk4_step(t, &mut y, step),
                            Method::Dp54 => {
                                self.dp_stages(t, &y, step, false);
                                self.dp_combine(&mut y, step);
                            }
                        }
                        t += step;
                        self.accepted += 1;
                        on_step(t, &y);
                    }
                    None => {
                        if h == 0.0 {
                            h = self.initial_step(t, &y, target - t);
                        }
                        let step = h.min(target - t);
                        if step < 1e-14 * span {
                            return Err(Error::Stiffness { t, dt: step });
                        }
                        self.dp_stages(t, &y, step, have_k1);
                        let err = self.dp_error(&y, step);
                        if err <= 1.0 {
                            self.dp_combine(&mut y, step);
                            t += step;
                            // First-same-as-last: stage 7 is f(t + h, y_new).
                            self.stages.swap(0, 6);
                            have_k1 = true;
                            self.accepted += 1;
                            on_step(t, &y);
                            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_old.powf(0.4 / 5.0);
                            err_old = err.max(1e-4);
                            let grown = step * fac.clamp(0.2, 10.0);
                            // Keep the controller's step when clipped to a sample.
                            h = if step < h { h.max(grown) } else { grown };
                        } else {
                            self.rejected += 1;
                            h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                        }
                    }
                }
                if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Stiffness { t, dt: h });
                }
            }
            out.push(y.clone());
        }
        Ok(out)
    }

    fn rk4_step(&mut self, t: f64, y: &mut [C64], h: f64) {
        let n = self.dim;
        let [k1, k2, k3, k4, ..] = &mut self.stages[..] else { unreachable!() };
        (self.f)(t, y, k1);
        for i in 0..n {
            self.tmp[i] = y[i] + k1[i] * (0.5 * h);
        }
        (self.f)(t + 0.5 * h, &self.tmp, k2);
        for i in 0..n {
            self.tmp[i] = y[i] + k2[i] * (0.5 * h);
        }
        (self.f)(t + 0.5 * h, &self.tmp, k3);
        for i in 0..n {
            self.tmp[i] = y[i] + k3[i] * h;
        }
        (self.f)(t + h, &self.tmp, k4);
        for i in 0..n {
            y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }

    fn dp_stages(&mut self, t: f64, y: &[C64], h: f64, have_k1: bool) {
        if !have_k1 {
            let k0 = &mut self.stages[0];
            (self.f)(t, y, k0);
        }
        for s in 1..7 {
            for i in 0..self.dim {
                let mut acc = y[i];
                for (j, &a) in dp::A[s][..s].iter().enumerate() {
                    if a != 0.0 {
                        acc += self.stages[j][i] * (h * a);
                    }
                }
                self.tmp[i] = acc;
            }
            let ks = &mut self.stages[s];
            (self.f)(t + dp::C[s] * h, &self.tmp, ks);
        }
    }

    fn dp_combine(&self, y: &mut [C64], h: f64) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (s, &b) in dp::B.iter().enumerate() {
                if b != 0.0 {
                    acc += self.stages[s][i] * b;
                }
            }
            *yi += acc * h;
        }
    }

    fn dp_error(&self, y: &[C64], h: f64) -> f64 {
        let mut sum = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let mut e = ZERO;
            let mut inc = ZERO;
            for s in 0..7 {
                e += self.stages[s][i] * dp::E[s];
                inc += self.stages[s][i] * dp::B[s];
            }
            let ynew = *yi + inc * h;
            let scale = self.config.atol + self.config.rtol * yi.norm().max(ynew.norm());
            sum += (e.norm() * h / scale).powi(2);
        }
        (sum / self.dim as f64).sqrt()
    }

    fn initial_step(&mut self, t: f64, y: &[C64], remaining: f64) -> f64 {
        let k0 = &mut self.stages[0];
        (self.f)(t, y, k0);
        let scale: Vec<f64> = y.iter().map(|z| self.config.atol + self.config.rtol * z.norm()).collect();
        let d0 = rms(y.iter().zip(&scale).map(|(z, s)| z.norm() / s));
        let d1 = rms(self.stages[0].iter().zip(&scale).map(|(z, s)| z.norm() / s));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(remaining)
    }
}

fn rms(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len().max(1) as f64;
    (it.map(|x| x * x).sum::<f64>() / n).sqrt()
}

fn check_samples(model: &RZModel, times: &[f64]) -> Result<()> {
    for &t in times {
        model.tau_of(t)?;
    }
    Ok(())
}

/// Integrates `ψ' = -i H(t) ψ` from `t0`, reporting states at `sample_times`
/// (or at `tf` when empty; every accepted step with `dense_output`).
pub fn propagate_state(
    model: &RZModel,
    psi0: &DVector<C64>,
    config: &StepperConfig,
    sample_times: &[f64],
) -> Result<Trajectory> {
    if psi0.len() != model.n() {
        return invalid(format!("ψ0 has length {}, expected {}", psi0.len(), model.n()));
    }
    let samples: Vec<f64> = if sample_times.is_empty() { vec![model.tf] } else { sample_times.to_vec() };
    check_samples(model, &samples)?;
    let f = |t: f64, y: &[C64], dy: &mut [C64]| {
        model.apply_hamiltonian_into(t, y, dy);
        for z in dy.iter_mut() {
            *z = C64::new(z.im, -z.re);
        }
    };
    let mut integ = Integrator::new(f, model.n(), *config)?;
    let mut traj = Trajectory::default();
    let dense = config.dense_output;
    let mut steps = Vec::new();
    let states = integ.run(model.t0, psi0.as_slice(), &samples, model.tf - model.t0, |t, y| {
        if dense {
            steps.push((t, DVector::from_column_slice(y)));
        }
    })?;
    if dense {
        traj.times.push(model.t0);
        traj.states.push(psi0.clone());
        for (t, y) in steps {
            traj.times.push(t);
            traj.states.push(y);
        }
    } else {
        traj.times = samples;
        traj.states = states.into_iter().map(DVector::from_vec).collect();
    }
    traj.accepted_steps = integ.accepted;
    traj.rejected_steps = integ.rejected;
    Ok(traj)
}

/// `U(t_end)` by integrating all columns of `U' = -i H U` together.
pub fn propagate_operator_to(model: &RZModel, t_end: f64, config: &StepperConfig) -> Result<DMatrix<C64>> {
    let n = model.n();
    if n > crate::rz_model::DENSE_CAP {
        return Err(Error::Refused(format!("operator propagation with N = {n} exceeds the dense cap")));
    }
    model.tau_of(t_end)?;
    let eye = DMatrix::<C64>::identity(n, n);
    if t_end <= model.t0 {
        return Ok(eye);
    }
    let f = |t: f64, y: &[C64], dy: &mut [C64]| {
        for (ycol, dcol) in y.chunks_exact(n).zip(dy.chunks_exact_mut(n)) {
            model.apply_hamiltonian_into(t, ycol, dcol);
            for z in dcol.iter_mut() {
                *z = C64::new(z.im, -z.re);
            }
        }
    };
    let mut integ = Integrator::new(f, n * n, *config)?;
    let out = integ.run(model.t0, eye.as_slice(), &[t_end], model.tf - model.t0, |_, _| {})?;
    Ok(DMatrix::from_column_slice(n, n, &out[0]))
}

pub fn propagate_operator(model: &RZModel, config: &StepperConfig) -> Result<DMatrix<C64>> {
    propagate_operator_to(model, model.tf, config)
}

/// Reference solution through the eigenbasis of `M_k`: `U(t)` is unitarily
/// similar to `⊕_j U_j(t)`, each `U_j` the propagator of
/// `[[ω(t), λ_j v(t)], [λ_j v(t), -ω(t)]]`.
#[derive(Debug, Clone)]
pub struct ModalReference {
    pub model: RZModel,
    pub times: Vec<f64>,
    /// `blocks[s][j]` is `U_j(times[s])`, row-major 2 × 2.
    pub blocks: Vec<Vec<[C64; 4]>>,
    q: DMatrix<f64>,
}

impl ModalReference {
    pub fn new(model: &RZModel, times: &[f64], tol: f64) -> Result<Self> {
        check_samples(model, times)?;
        let lam = path_eigenvalues(model.k);
        let cfg = StepperConfig::dp54(tol, tol);
        let mut blocks = vec![Vec::with_capacity(model.k); times.len()];
        for &l in &lam {
            let p = model.params;
            let f = |t: f64, y: &[C64], dy: &mut [C64]| {
                let (w, c) = (p.omega(t), l * p.v(t));
                // Two columns of the 2 × 2 propagator.
                for col in 0..2 {
                    let (a, b) = (y[col], y[2 + col]);
                    let ha = a * w + b * c;
                    let hb = a * c - b * w;
                    dy[col] = C64::new(ha.im, -ha.re);
                    dy[2 + col] = C64::new(hb.im, -hb.re);
                }
            };
            let one = C64::new(1.0, 0.0);
            let y0 = [one, ZERO, ZERO, one];
            let mut integ = Integrator::new(f, 4, cfg)?;
            let out = integ.run(model.t0, &y0, times, model.tf - model.t0, |_, _| {})?;
            for (s, y) in out.into_iter().enumerate() {
                blocks[s].push([y[0], y[1], y[2], y[3]]);
            }
        }
        Ok(ModalReference { model: *model, times: times.to_vec(), blocks, q: path_eigenvectors(model.k) })
    }

    /// `U(times[s]) ψ0` in `O(k²)` work.
    pub fn state(&self, s: usize, psi0: &DVector<C64>) -> DVector<C64> {
        let k = self.model.k;
        let (top, bot) = (psi0.rows(0, k).into_owned(), psi0.rows(k, k).into_owned());
        let qt = self.q.transpose();
        let a = real_times(&qt, &top);
        let c = real_times(&qt, &bot);
        let mut a2 = DVector::zeros(k);
        let mut c2 = DVector::zeros(k);
        for j in 0..k {
            let u = &self.blocks[s][j];
            a2[j] = u[0] * a[j] + u[1] * c[j];
            c2[j] = u[2] * a[j] + u[3] * c[j];
        }
        let mut out = DVector::zeros(2 * k);
        out.rows_mut(0, k).copy_from(&real_times(&self.q, &a2));
        out.rows_mut(k, k).copy_from(&real_times(&self.q, &c2));
        out
    }

    /// Dense `U(times[s])`.
    pub fn operator(&self, s: usize) -> DMatrix<C64> {
        let k = self.model.k;
        let mut u = DMatrix::zeros(2 * k, 2 * k);
        for (e, (r0, c0)) in [(0, 0), (0, k), (k, 0), (k, k)].into_iter().enumerate() {
            let d: Vec<C64> = self.blocks[s].iter().map(|b| b[e]).collect();
            let mut qr = self.q.clone();
            let mut qi = self.q.clone();
            for j in 0..k {
                qr.column_mut(j).scale_mut(d[j].re);
                qi.column_mut(j).scale_mut(d[j].im);
            }
            let re = qr * self.q.transpose();
            let im = qi * self.q.transpose();
            for i in 0..k {
                for j in 0..k {
                    u[(r0 + i, c0 + j)] = C64::new(re[(i, j)], im[(i, j)]);
                }
            }
        }
        u
    }
}

fn real_times(a: &DMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    let re = a * x.map(|z| z.re);
    let im = a * x.map(|z| z.im);
    DVector::from_fn(re.len(), |i, _| C64::new(re[i], im[i]))
}

/// Modal reference for `U(tf)`.
pub fn reference_operator(model: &RZModel, tol: f64) -> Result<DMatrix<C64>> {
    Ok(ModalReference::new(model, &[model.tf], tol)?.operator(0))
}

/// Modal reference states `ψ(t)` for each sample time.
pub fn reference_states(model: &RZModel, psi0: &DVector<C64>, times: &[f64], tol: f64) -> Result<Vec<DVector<C64>>> {
    let r = ModalReference::new(model, times, tol)?;
    Ok((0..times.len()).map(|s| r.state(s, psi0)).collect())
}
