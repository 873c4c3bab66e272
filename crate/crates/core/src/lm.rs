//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with a
//! finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step satisfies `|Δp| ≤ step_tol·(|p| + step_tol)`.
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStop {
    StepTolerance,
    /// Residuals vanished to rounding.
    ZeroResidual,
    /// No damping level produced a decrease, so the gradient is zero to
    /// working precision.
    NoDescent,
    MaxIterations,
    /// The residual function returned non-finite values at the start point.
    NonFinite,
}

impl LmStop {
    pub fn converged(self) -> bool {
        matches!(self, LmStop::StepTolerance | LmStop::ZeroResidual | LmStop::NoDescent)
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Jacobian at `params`.
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub stop: LmStop,
}

impl LmReport {
    pub fn cost(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Central differences. The step for parameter `i` is
/// `∛ε · max(|p_i|, scale_i)`, grown tenfold (up to three times) when the
/// column comes out identically zero.
pub fn numeric_jacobian<F>(f: &F, p: &DVector<f64>, scales: &[f64], m: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
{
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut plus = DVector::zeros(m);
    let mut minus = DVector::zeros(m);
    let mut probe = p.clone();
    let base = f64::EPSILON.cbrt();
    for i in 0..n {
        let mut h = base * p[i].abs().max(scales[i]);
        for _attempt in 0..4 {
            probe[i] = p[i] + h;
            let up = probe[i] - p[i];
            f(&probe, &mut plus);
            probe[i] = p[i] - h;
            let down = p[i] - probe[i];
            f(&probe, &mut minus);
            probe[i] = p[i];
            let col = (&plus - &minus) / (up + down);
            let all_zero = col.iter().all(|v| *v == 0.0);
            jac.set_column(i, &col);
            if !all_zero {
                break;
            }
            h *= 10.0;
        }
    }
    jac
}

/// Minimizes `|r(p)|²`. `f` writes the residual vector of length `m`.
/// `scales` gives a typical magnitude for every parameter, used only for the
/// finite-difference steps.
pub fn minimize<F>(f: F, p0: DVector<f64>, scales: &[f64], m: usize, opts: &LmOptions) -> LmReport
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
{
    let n = p0.len();
    let mut p = p0;
    let mut r = DVector::zeros(m);
    f(&p, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return LmReport {
            jacobian: DMatrix::zeros(m, n),
            params: p,
            residuals: r,
            iterations: 0,
            stop: LmStop::NonFinite,
        };
    }
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut jac = numeric_jacobian(&f, &p, scales, m);
    let mut trial_r = DVector::zeros(m);
    let mut stop = LmStop::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            stop = LmStop::ZeroResidual;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        // Marquardt scaling, floored so that a dead column cannot make the
        // damped system singular
        let diag_floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        stop = LmStop::NoDescent;
                        break 'outer;
                    }
                    continue;
                }
            };
            let trial = &p + &step;
            f(&trial, &mut trial_r);
            let trial_cost = trial_r.norm_squared();
            if trial_cost.is_finite() && trial_cost < cost {
                let small = step.norm() <= opts.step_tol * (p.norm() + opts.step_tol);
                p = trial;
                std::mem::swap(&mut r, &mut trial_r);
                let tiny_gain = cost - trial_cost <= 4.0 * f64::EPSILON * cost;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-15);
                jac = numeric_jacobian(&f, &p, scales, m);
                if small || tiny_gain {
                    stop = LmStop::StepTolerance;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                stop = LmStop::NoDescent;
                break 'outer;
            }
        }
    }

    LmReport {
        params: p,
        residuals: r,
        jacobian: jac,
        iterations,
        stop,
    }
}

/// Diagonal of `σ²(JᵀJ)⁻¹` with `σ² = |r|²/(m − n)`. `None` where the
/// normal matrix is not positive definite or a variance is unusable.
pub fn standard_errors(report: &LmReport) -> Vec<Option<f64>> {
    let (m, n) = report.jacobian.shape();
    if m <= n {
        return vec![None; n];
    }
    let sigma2 = report.cost() / (m - n) as f64;
    let jtj = report.jacobian.transpose() * &report.jacobian;
    let Some(ch) = jtj.cholesky() else {
        return vec![None; n];
    };
    let cov = ch.inverse() * sigma2;
    (0..n)
        .map(|i| {
            let v = cov[(i, i)];
            (v.is_finite() && v >= 0.0).then(|| v.sqrt())
        })
        .collect()
}

/// Correlation matrix of the parameter estimates, if the normal matrix is
/// invertible.
pub fn correlations(report: &LmReport) -> Option<DMatrix<f64>> {
    let jtj = report.jacobian.transpose() * &report.jacobian;
    let cov = jtj.cholesky()?.inverse();
    let n = cov.nrows();
    let d: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    Some(DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (d[i] * d[j])))
}
