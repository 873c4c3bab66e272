//! Explicit Dormand–Prince 5(4) integrator with PI step-size control for
//! small fixed-size real systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    /// Same relative and absolute tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

/// Stateful adaptive stepper. Call [`Dopri5::advance_to`] with increasing
/// target times; each call lands exactly on the target.
pub struct Dopri5<const N: usize, F> {
    rhs: F,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    err_old: f64,
    opts: OdeOptions,
    steps: usize,
    rejected: usize,
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], opts: OdeOptions) -> Self {
        let k1 = rhs(t0, &y0);
        let mut s = Self {
            rhs,
            t: t0,
            y: y0,
            k1,
            h: 0.0,
            err_old: 1e-4,
            opts,
            steps: 0,
            rejected: 0,
        };
        s.h = opts.h_init.unwrap_or_else(|| s.initial_step());
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn steps(&self) -> (usize, usize) {
        (self.steps, self.rejected)
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * a.abs().max(b.abs())
    }

    // Hairer & Wanner's starting-step heuristic.
    fn initial_step(&mut self) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k1[i] / sc).powi(2);
        }
        d0 = (d0 / N as f64).sqrt();
        d1 = (d1 / N as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.opts.h_max);
        let y1 = axpy(&self.y, h0, &[(1.0, &self.k1)]);
        let k2 = (self.rhs)(self.t + h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((k2[i] - self.k1[i]) / sc).powi(2);
        }
        d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.opts.h_max)
    }

    /// Integrates up to `t_target` (which must not lie before the current time).
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let expo1 = 0.2 - BETA * 0.75;
        while self.t < t_target {
            if self.steps + self.rejected >= self.opts.max_steps {
                return Err(Error::Integration {
                    t_reached: self.t,
                    reason: format!("step budget of {} exhausted", self.opts.max_steps),
                });
            }
            let remaining = t_target - self.t;
            let clamped = self.h >= remaining;
            let h = if clamped { remaining } else { self.h };
            if h <= 1e-14 * self.t.abs().max(1.0) && !clamped {
                return Err(Error::Integration {
                    t_reached: self.t,
                    reason: format!("step size underflow (h = {h:.3e}); problem too stiff for tolerance"),
                });
            }

            let t = self.t;
            let y = &self.y;
            let k1 = self.k1;
            let k2 = (self.rhs)(t + C2 * h, &axpy(y, h, &[(A21, &k1)]));
            let k3 = (self.rhs)(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = (self.rhs)(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = (self.rhs)(
                t + C5 * h,
                &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = (self.rhs)(
                t + h,
                &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = (self.rhs)(t + h, &y_new);

            let mut err = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                err += (e / self.scale(y[i], y_new[i])).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                self.rejected += 1;
                self.h = h * FAC_MIN;
                continue;
            }

            let fac11 = err.powf(expo1);
            if err <= 1.0 {
                let fac = (fac11 / self.err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let h_next = (h / fac).min(self.opts.h_max);
                self.err_old = err.max(1e-4);
                self.t = if clamped { t_target } else { t + h };
                self.y = y_new;
                self.k1 = k7;
                self.steps += 1;
                // a step shortened to hit the target says nothing about the natural step
                self.h = if clamped { self.h.max(h_next) } else { h_next };
            } else {
                self.rejected += 1;
                self.h = h / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let mut s = Dopri5::new(|_t, y: &[f64; 1]| [-2.0 * y[0]], 0.0, [1.0], OdeOptions::with_tol(1e-10));
        for i in 1..=20 {
            let t = 0.25 * i as f64;
            s.advance_to(t).unwrap();
            assert_eq!(s.t(), t);
            assert!((s.y()[0] - (-2.0 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_phase() {
        let mut s = Dopri5::new(
            |_t, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            OdeOptions::with_tol(1e-11),
        );
        s.advance_to(10.0 * std::f64::consts::PI).unwrap();
        assert!((s.y()[0] - 1.0).abs() < 1e-8);
        assert!(s.y()[1].abs() < 1e-8);
    }

    #[test]
    fn stiff_problem_exhausts_budget() {
        let opts = OdeOptions {
            max_steps: 1000,
            ..OdeOptions::with_tol(1e-8)
        };
        let mut s = Dopri5::new(|_t, y: &[f64; 1]| [-1e7 * (y[0] - 1.0)], 0.0, [0.0], opts);
        let err = s.advance_to(10.0).unwrap_err();
        assert!(matches!(err, Error::Integration { t_reached, .. } if t_reached < 10.0));
    }

    #[test]
    fn linear_invariant_preserved() {
        // RK methods conserve linear invariants: x + y stays at 1
        let mut s = Dopri5::new(
            |t, y: &[f64; 2]| {
                let r = (1.0 + t.sin()) * (y[0] - 2.0 * y[1]);
                [-r, r]
            },
            0.0,
            [0.3, 0.7],
            OdeOptions::with_tol(1e-6),
        );
        s.advance_to(50.0).unwrap();
        assert!((s.y()[0] + s.y()[1] - 1.0).abs() < 1e-13);
    }
}
