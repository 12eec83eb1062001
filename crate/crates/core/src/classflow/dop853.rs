//! Adaptive explicit Runge-Kutta integration with the Dormand-Prince 8(5,3)
//! pair and its seventh-order continuous extension.

use std::ops::ControlFlow;

use super::tableau::{A, C, D, E3, E5};

const N_STAGES: usize = 12;
const N_EXTENDED: usize = 16;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

/// First-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Polynomial interpolant over one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t_old: f64,
    pub t: f64,
    y_old: Vec<f64>,
    coeffs: Vec<f64>,
}

impl DenseSegment {
    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t >= self.t_old {
            (self.t_old, self.t)
        } else {
            (self.t, self.t_old)
        };
        t >= lo && t <= hi
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.y_old.len();
        let h = self.t - self.t_old;
        let x = if h == 0.0 { 0.0 } else { (t - self.t_old) / h };
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.coeffs.chunks_exact(n).rev().enumerate() {
            let w = if i % 2 == 0 { x } else { 1.0 - x };
            for (o, c) in out.iter_mut().zip(row) {
                *o = (*o + c) * w;
            }
        }
        for (o, y) in out.iter_mut().zip(&self.y_old) {
            *o += y;
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y_old.len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// State handed to the observer after every accepted step.
pub struct Step<'a> {
    pub t: f64,
    pub y: &'a [f64],
    pub f: &'a [f64],
    pub dense: Option<&'a DenseSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFailure {
    NonFinite { t: f64 },
    MaxSteps { t: f64, steps: usize },
    Underflow { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub evaluations: usize,
    /// True when the observer requested an early stop.
    pub stopped: bool,
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub max_step: f64,
    /// Build the continuous extension for every step (three extra evaluations).
    pub dense: bool,
}

impl Default for Dop853 {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
            max_step: f64::INFINITY,
            dense: false,
        }
    }
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

struct Work {
    n: usize,
    k: Vec<f64>,
    ytmp: Vec<f64>,
    evaluations: usize,
}

impl Work {
    fn stage(&self, s: usize) -> &[f64] {
        &self.k[s * self.n..(s + 1) * self.n]
    }

    /// Evaluates stage `s` from rows `0..s` of `a`.
    fn eval_stage<S: OdeSystem + ?Sized>(&mut self, sys: &S, s: usize, t: f64, y: &[f64], h: f64) {
        let n = self.n;
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &a) in A[s][..s].iter().enumerate() {
                if a != 0.0 {
                    acc += a * self.k[j * n + i];
                }
            }
            self.ytmp[i] = y[i] + h * acc;
        }
        sys.rhs(t + C[s] * h, &self.ytmp, &mut self.k[s * n..(s + 1) * n]);
        self.evaluations += 1;
    }
}

impl Dop853 {
    fn initial_step<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        f0: &[f64],
        direction: f64,
        interval: f64,
        work: &mut Work,
    ) -> f64 {
        let n = y0.len();
        let scale: Vec<f64> = y0.iter().map(|y| self.atol + y.abs() * self.rtol).collect();
        let d0 = rms(y0.iter().zip(&scale).map(|(y, s)| y / s), n);
        let d1 = rms(f0.iter().zip(&scale).map(|(f, s)| f / s), n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * direction * f).collect();
        let mut f1 = vec![0.0; n];
        sys.rhs(t0 + h0 * direction, &y1, &mut f1);
        work.evaluations += 1;
        let d2 = rms(
            f1.iter().zip(f0).zip(&scale).map(|((a, b), s)| (a - b) / s),
            n,
        ) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(interval).min(self.max_step)
    }

    /// Integrates from `t0` to `t1` (either direction). The observer sees every
    /// accepted step and may stop the integration early. On failure the last
    /// accepted state is returned alongside the cause.
    pub fn integrate<S, O>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t1: f64,
        mut observer: O,
    ) -> Result<Outcome, (StepFailure, Outcome)>
    where
        S: OdeSystem + ?Sized,
        O: FnMut(&Step) -> ControlFlow<()>,
    {
        let n = sys.dim();
        assert_eq!(n, y0.len(), "state length must match the system dimension");
        let mut work = Work {
            n,
            k: vec![0.0; N_EXTENDED * n],
            ytmp: vec![0.0; n],
            evaluations: 0,
        };
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut f = vec![0.0; n];
        sys.rhs(t, &y, &mut f);
        work.evaluations += 1;
        let outcome = |t: f64, y: &[f64], steps: usize, evals: usize, stopped: bool| Outcome {
            t,
            y: y.to_vec(),
            steps,
            evaluations: evals,
            stopped,
        };
        if y.iter().chain(&f).any(|v| !v.is_finite()) {
            return Err((StepFailure::NonFinite { t }, outcome(t, &y, 0, work.evaluations, false)));
        }
        if t1 == t0 {
            return Ok(outcome(t, &y, 0, work.evaluations, false));
        }
        let direction = (t1 - t0).signum();
        let interval = (t1 - t0).abs();
        let mut h_abs = self.initial_step(sys, t0, &y, &f, direction, interval, &mut work);
        let mut y_new = vec![0.0; n];
        let mut f_new = vec![0.0; n];
        let mut steps = 0usize;

        while direction * (t1 - t) > 0.0 {
            if steps >= self.max_steps {
                return Err((
                    StepFailure::MaxSteps { t, steps },
                    outcome(t, &y, steps, work.evaluations, false),
                ));
            }
            let min_step = 10.0 * ulp(t);
            h_abs = h_abs.min(self.max_step).max(min_step);
            let mut rejected = false;
            let h;
            let t_new;
            loop {
                if h_abs < min_step {
                    return Err((
                        StepFailure::Underflow { t },
                        outcome(t, &y, steps, work.evaluations, false),
                    ));
                }
                let mut tn = t + h_abs * direction;
                if direction * (tn - t1) > 0.0 {
                    tn = t1;
                }
                let hh = tn - t;
                let ha = hh.abs();

                work.k[..n].copy_from_slice(&f);
                for s in 1..N_STAGES {
                    work.eval_stage(sys, s, t, &y, hh);
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, &b) in A[N_STAGES][..N_STAGES].iter().enumerate() {
                        if b != 0.0 {
                            acc += b * work.k[j * n + i];
                        }
                    }
                    y_new[i] = y[i] + hh * acc;
                }
                sys.rhs(tn, &y_new, &mut f_new);
                work.evaluations += 1;
                work.k[N_STAGES * n..(N_STAGES + 1) * n].copy_from_slice(&f_new);

                let mut err5 = 0.0;
                let mut err3 = 0.0;
                for i in 0..n {
                    let scale = self.atol + y[i].abs().max(y_new[i].abs()) * self.rtol;
                    let mut e5 = 0.0;
                    let mut e3 = 0.0;
                    for j in 0..=N_STAGES {
                        let kj = work.k[j * n + i];
                        e5 += E5[j] * kj;
                        e3 += E3[j] * kj;
                    }
                    err5 += (e5 / scale).powi(2);
                    err3 += (e3 / scale).powi(2);
                }
                let error_norm = if err5 == 0.0 && err3 == 0.0 {
                    0.0
                } else {
                    ha * err5 / ((err5 + 0.01 * err3) * n as f64).sqrt()
                };
                if !error_norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                    // Shrink and retry; persistent non-finite values end in underflow
                    // unless the state itself is already broken.
                    if !f_new.iter().chain(&y_new).any(|v| v.is_finite()) || h_abs <= min_step {
                        return Err((
                            StepFailure::NonFinite { t: tn },
                            outcome(t, &y, steps, work.evaluations, false),
                        ));
                    }
                    h_abs *= MIN_FACTOR;
                    rejected = true;
                    continue;
                }
                if error_norm < 1.0 {
                    let mut factor = if error_norm == 0.0 {
                        MAX_FACTOR
                    } else {
                        MAX_FACTOR.min(SAFETY * error_norm.powf(ERROR_EXPONENT))
                    };
                    if rejected {
                        factor = factor.min(1.0);
                    }
                    h = hh;
                    t_new = tn;
                    h_abs = ha * factor;
                    break;
                }
                h_abs = ha * MIN_FACTOR.max(SAFETY * error_norm.powf(ERROR_EXPONENT));
                rejected = true;
            }
            if f_new.iter().any(|v| !v.is_finite()) {
                return Err((
                    StepFailure::NonFinite { t: t_new },
                    outcome(t, &y, steps, work.evaluations, false),
                ));
            }

            let dense = if self.dense {
                for s in N_STAGES + 1..N_EXTENDED {
                    work.eval_stage(sys, s, t, &y, h);
                }
                let mut coeffs = vec![0.0; 7 * n];
                for i in 0..n {
                    let dy = y_new[i] - y[i];
                    coeffs[i] = dy;
                    coeffs[n + i] = h * f[i] - dy;
                    coeffs[2 * n + i] = 2.0 * dy - h * (f_new[i] + f[i]);
                    for (r, drow) in D.iter().enumerate() {
                        let mut acc = 0.0;
                        for (j, &d) in drow.iter().enumerate() {
                            if d != 0.0 {
                                acc += d * work.stage(j)[i];
                            }
                        }
                        coeffs[(3 + r) * n + i] = h * acc;
                    }
                }
                Some(DenseSegment {
                    t_old: t,
                    t: t_new,
                    y_old: y.clone(),
                    coeffs,
                })
            } else {
                None
            };

            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut f, &mut f_new);
            steps += 1;
            let step = Step {
                t,
                y: &y,
                f: &f,
                dense: dense.as_ref(),
            };
            if observer(&step).is_break() {
                return Ok(outcome(t, &y, steps, work.evaluations, true));
            }
        }
        Ok(outcome(t, &y, steps, work.evaluations, false))
    }
}

fn ulp(t: f64) -> f64 {
    let a = t.abs();
    if a < f64::MIN_POSITIVE {
        return f64::from_bits(1);
    }
    f64::from_bits(a.to_bits() + 1) - a
}
