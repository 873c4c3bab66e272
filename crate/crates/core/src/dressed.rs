//! Reduced two-population model and its bright/dark (dressed) decomposition.
//!
//! With the coherences eliminated adiabatically the populations obey, in
//! units of γ,
//!
//! ```text
//! ṅ₁ = −(1+ε)(n₁ − n₁⁰) − S(1 + cos δt)(n₁ − n₀)
//! ṅ₀ = −(1−ε)(n₀ − n₀⁰) + S(1 + cos δt)(n₁ − n₀)
//! ```
//!
//! Rotating the deviation from the stationary point by the mixing angle θ
//! diagonalizes the time-independent part; η₁ is the bright, fast-decaying
//! combination and η₀ the dark, slow one. All public rates are in physical
//! time units, i.e. already multiplied by γ.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::master::output_grid;
use crate::model::ReducedParams;
use crate::ode::{Dopri5, OdeOptions};
use crate::trajectory::{
    run_to_steady_state, CsvRow, ParamsSnapshot, Populations, SteadyState, SteadyStateOptions, Tier, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationState {
    pub n1: f64,
    pub n0: f64,
}

impl PopulationState {
    pub fn new(n1: f64, n0: f64) -> Result<Self> {
        for (name, v) in [("n1", n1), ("n0", n0)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("population must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { n1, n0 })
    }

    pub fn equilibrium(params: &ReducedParams) -> Self {
        Self {
            n1: params.n1_eq(),
            n0: params.n0_eq(),
        }
    }

    fn in_unit_range(&self, tol: f64) -> bool {
        (-tol..=1.0 + tol).contains(&self.n1) && (-tol..=1.0 + tol).contains(&self.n0)
    }
}

impl Populations for PopulationState {
    fn populations(&self) -> (f64, f64) {
        (self.n1, self.n0)
    }
}

impl CsvRow for PopulationState {
    fn header() -> &'static [&'static str] {
        &["t", "n1", "n0"]
    }

    fn row(&self, t: f64, _: &ParamsSnapshot) -> Vec<f64> {
        vec![t, self.n1, self.n0]
    }
}

/// Rate of change of the reduced populations at time `t`.
pub fn reduced_derivative(t: f64, n: &PopulationState, params: &ReducedParams) -> PopulationState {
    let eps = params.epsilon();
    let drive = params.saturation() * (1.0 + (params.beat() * t).cos()) * (n.n1 - n.n0);
    let g = params.gamma();
    PopulationState {
        n1: g * (-(1.0 + eps) * (n.n1 - params.n1_eq()) - drive),
        n0: g * (-(1.0 - eps) * (n.n0 - params.n0_eq()) + drive),
    }
}

fn reduced_rhs(params: ReducedParams) -> impl FnMut(f64, &[f64; 2]) -> [f64; 2] {
    move |t, y| {
        let r = reduced_derivative(t, &PopulationState { n1: y[0], n0: y[1] }, &params);
        [r.n1, r.n0]
    }
}

/// Sampling and range checks shared by the reduced and dressed integrators.
fn integrate_sampled<S, F>(
    rhs: F,
    y0: [f64; 2],
    beat: f64,
    t_end: f64,
    tol: f64,
    mut traj: Trajectory<S>,
    to_state: impl Fn(&[f64; 2]) -> S,
    in_range: impl Fn(&S) -> bool,
) -> Result<Trajectory<S>>
where
    F: FnMut(f64, &[f64; 2]) -> [f64; 2],
{
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::param("t_end", format!("must be positive, got {t_end}")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    let (n, dt) = output_grid(beat, t_end);
    traj.push(0.0, to_state(&y0));
    let mut stepper = Dopri5::new(rhs, 0.0, y0, OdeOptions::with_tol(tol));
    let mut warned = false;
    for i in 1..=n {
        let t = if i == n { t_end } else { i as f64 * dt };
        stepper.advance_to(t)?;
        let s = to_state(stepper.y());
        if !warned && !in_range(&s) {
            log::warn!("populations left [0, 1] at t = {t:.6e}");
            warned = true;
        }
        traj.push(t, s);
    }
    Ok(traj)
}

/// Integrates the reduced population equations from `initial`.
pub fn integrate_reduced(
    params: &ReducedParams,
    initial: PopulationState,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory<PopulationState>> {
    let traj = Trajectory::new(Tier::Reduced, ParamsSnapshot::Reduced(*params), tol);
    integrate_sampled(
        reduced_rhs(*params),
        [initial.n1, initial.n0],
        params.beat(),
        t_end,
        tol,
        traj,
        |y| PopulationState { n1: y[0], n0: y[1] },
        |s| s.in_unit_range(10.0 * tol),
    )
}

/// Slowest relaxation rate of the reduced model, γλ₀.
fn slowest_rate(params: &ReducedParams) -> f64 {
    let (s, e) = (params.saturation(), params.epsilon());
    params.gamma() * (1.0 + s - s.hypot(e))
}

/// Integrates the reduced model from equilibrium until it is periodic.
pub fn steady_state_reduced(
    params: &ReducedParams,
    opts: &SteadyStateOptions,
) -> Result<SteadyState<PopulationState>> {
    let traj = Trajectory::new(Tier::Reduced, ParamsSnapshot::Reduced(*params), opts.tol);
    run_to_steady_state(
        reduced_rhs(*params),
        [params.n1_eq(), params.n0_eq()],
        params.beat(),
        1.0 / slowest_rate(params),
        params.gamma(),
        opts,
        traj,
        |y| PopulationState { n1: y[0], n0: y[1] },
    )
}

/// Time-independent Liouvillian `ℒ₀`, modulated part `ℒ₁(t)` and source
/// `n⁰`, all in units of γ, such that `ṅ/γ = −(ℒ₀ + ℒ₁(t)) n + n⁰`.
pub fn liouvillian_parts(params: &ReducedParams, t: f64) -> (Matrix2<f64>, Matrix2<f64>, Vector2<f64>) {
    let s = params.saturation();
    let e = params.epsilon();
    let l0 = Matrix2::new(1.0 + s + e, -s, -s, 1.0 + s - e);
    let m = s * (params.beat() * t).cos();
    let l1 = Matrix2::new(m, -m, -m, m);
    let src = Vector2::new((1.0 + e) * params.n1_eq(), (1.0 - e) * params.n0_eq());
    (l0, l1, src)
}

/// Fixed point of the undriven-by-beat part, `ℒ₀ n̄ = n⁰`.
pub fn stationary_solution(params: &ReducedParams) -> PopulationState {
    let s = params.saturation();
    let e = params.epsilon();
    let c0 = 1.0 + 2.0 * s - e * e;
    let dn = params.delta_n0();
    PopulationState {
        n1: params.n1_eq() - s * (1.0 - e) / c0 * dn,
        n0: params.n0_eq() + s * (1.0 + e) / c0 * dn,
    }
}

/// Eigen-decomposition of `ℒ₀` and the stationary point in both frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DressedFrame {
    pub lambda1: f64,
    pub lambda0: f64,
    /// Mixing angle in `[0, π/2]`.
    pub theta: f64,
    pub n_bar: PopulationState,
    /// `(η̄₁, η̄₀)`: the stationary point expressed in the rotated basis.
    pub eta_bar: [f64; 2],
    /// Set when `S = 0` and θ was fixed by continuity rather than mixing.
    pub degenerate_mixing: bool,
    pub saturation: f64,
    pub epsilon: f64,
}

impl DressedFrame {
    /// `√(S² + ε²)`.
    pub fn splitting(&self) -> f64 {
        self.saturation.hypot(self.epsilon)
    }

    /// Rotation `U_R = [[cos θ, sin θ], [−sin θ, cos θ]]`; its columns are
    /// the eigenvectors of `ℒ₀` for `λ₁` and `λ₀`.
    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, s, -s, c)
    }
}

pub fn eigen_frame(params: &ReducedParams) -> Result<DressedFrame> {
    let s = params.saturation();
    let e = params.epsilon();
    if s == 0.0 && e == 0.0 {
        return Err(Error::DegenerateFrame);
    }
    let r = s.hypot(e);
    let lambda1 = 1.0 + s + r;
    // 1 + S − r loses digits when S ≫ ε; use the product form instead
    let lambda0 = (1.0 + 2.0 * s - e * e) / lambda1;
    // tan θ = √(1+(ε/S)²) − ε/S  ⇔  2θ = atan2(S, ε)
    let theta = if s == 0.0 {
        if e > 0.0 {
            0.0
        } else {
            FRAC_PI_2
        }
    } else {
        0.5 * s.atan2(e)
    };
    let (sn, cs) = theta.sin_cos();
    let (a1, a0) = ((1.0 + e) * params.n1_eq(), (1.0 - e) * params.n0_eq());
    Ok(DressedFrame {
        lambda1,
        lambda0,
        theta,
        n_bar: stationary_solution(params),
        eta_bar: [(cs * a1 - sn * a0) / lambda1, (sn * a1 + cs * a0) / lambda0],
        degenerate_mixing: s == 0.0,
        saturation: s,
        epsilon: e,
    })
}

/// `(η₁, η₀)`: deviation from `n̄` rotated into the eigenbasis.
pub fn dressed_coordinates(n: &PopulationState, frame: &DressedFrame) -> (f64, f64) {
    let (s, c) = frame.theta.sin_cos();
    let d1 = n.n1 - frame.n_bar.n1;
    let d0 = n.n0 - frame.n_bar.n0;
    (c * d1 - s * d0, s * d1 + c * d0)
}

/// Inverse of [`dressed_coordinates`].
pub fn bare_populations(eta: [f64; 2], frame: &DressedFrame) -> PopulationState {
    let (s, c) = frame.theta.sin_cos();
    PopulationState {
        n1: frame.n_bar.n1 + c * eta[0] + s * eta[1],
        n0: frame.n_bar.n0 - s * eta[0] + c * eta[1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DressedState {
    pub eta1: f64,
    pub eta0: f64,
    /// Bare populations rotated back from the dressed coordinates.
    pub n: PopulationState,
}

impl Populations for DressedState {
    fn populations(&self) -> (f64, f64) {
        (self.n.n1, self.n.n0)
    }
}

impl CsvRow for DressedState {
    fn header() -> &'static [&'static str] {
        &["t", "eta1", "eta0", "n1", "n0"]
    }

    fn row(&self, t: f64, _: &ParamsSnapshot) -> Vec<f64> {
        vec![t, self.eta1, self.eta0, self.n.n1, self.n.n0]
    }
}

/// Rate of the dressed coordinates. With `modulated = false` the cos δt
/// coupling is dropped and each coordinate relaxes on its own.
pub fn dressed_derivative(
    eta: [f64; 2],
    t: f64,
    params: &ReducedParams,
    frame: &DressedFrame,
    modulated: bool,
) -> [f64; 2] {
    let g = params.gamma();
    let mut r1 = -frame.lambda1 * eta[0];
    let mut r0 = -frame.lambda0 * eta[1];
    if modulated && frame.saturation > 0.0 {
        let s = frame.saturation;
        let e = frame.epsilon;
        let r = frame.splitting();
        let m = s / r * (params.beat() * t).cos();
        let x1 = eta[0] + frame.eta_bar[0];
        let x0 = eta[1] + frame.eta_bar[1];
        r1 -= m * ((r + s) * x1 - e * x0);
        r0 -= m * (-e * x1 + (r - s) * x0);
    }
    [g * r1, g * r0]
}

fn integrate_dressed_impl(
    params: &ReducedParams,
    initial_eta: [f64; 2],
    t_end: f64,
    tol: f64,
    modulated: bool,
) -> Result<Trajectory<DressedState>> {
    let frame = eigen_frame(params)?;
    let p = *params;
    let traj = Trajectory::new(Tier::Dressed, ParamsSnapshot::Reduced(p), tol);
    integrate_sampled(
        move |t, y| dressed_derivative(*y, t, &p, &frame, modulated),
        initial_eta,
        if modulated { params.beat() } else { 0.0 },
        t_end,
        tol,
        traj,
        |y| DressedState {
            eta1: y[0],
            eta0: y[1],
            n: bare_populations(*y, &frame),
        },
        |s| s.n.in_unit_range(10.0 * tol),
    )
}

/// Integrates the coupled dressed-coordinate equations.
pub fn integrate_dressed(
    params: &ReducedParams,
    initial_eta: [f64; 2],
    t_end: f64,
    tol: f64,
) -> Result<Trajectory<DressedState>> {
    integrate_dressed_impl(params, initial_eta, t_end, tol, true)
}

/// Same as [`integrate_dressed`] with the beat modulation switched off, so
/// that `η_k(t) = η_k(0) e^{−γλ_k t}`.
pub fn integrate_dressed_unmodulated(
    params: &ReducedParams,
    initial_eta: [f64; 2],
    t_end: f64,
    tol: f64,
) -> Result<Trajectory<DressedState>> {
    integrate_dressed_impl(params, initial_eta, t_end, tol, false)
}

/// Periodic regime of the dressed equations started from equilibrium.
pub fn steady_state_dressed(params: &ReducedParams, opts: &SteadyStateOptions) -> Result<SteadyState<DressedState>> {
    let frame = eigen_frame(params)?;
    let p = *params;
    let (e1, e0) = dressed_coordinates(&PopulationState::equilibrium(params), &frame);
    let traj = Trajectory::new(Tier::Dressed, ParamsSnapshot::Reduced(p), opts.tol);
    run_to_steady_state(
        move |t, y: &[f64; 2]| dressed_derivative(*y, t, &p, &frame, true),
        [e1, e0],
        params.beat(),
        1.0 / slowest_rate(params),
        params.gamma(),
        opts,
        traj,
        |y| DressedState {
            eta1: y[0],
            eta0: y[1],
            n: bare_populations(*y, &frame),
        },
    )
}

/// Strong-field coordinates `η₁' = (n₁ − n₀)/√2` and
/// `η₀' = (n₁ + n₀ − (n₁⁰ + n₀⁰) − ε(n₁⁰ − n₀⁰))/√2`.
pub fn strong_field_coordinates(n: &PopulationState, params: &ReducedParams) -> [f64; 2] {
    let sum_eq = params.n1_eq() + params.n0_eq();
    [
        (n.n1 - n.n0) * FRAC_1_SQRT_2,
        (n.n1 + n.n0 - sum_eq - params.epsilon() * params.delta_n0()) * FRAC_1_SQRT_2,
    ]
}

/// Rate of the strong-field coordinates:
/// `η̇₁ = −(1+2S)η₁ − εη₀ − 2S cos δt η₁ + (1−ε²)Δn⁰/√2`, `η̇₀ = −η₀ − εη₁`.
pub fn strong_field_derivative(eta: [f64; 2], t: f64, params: &ReducedParams) -> [f64; 2] {
    let s = params.saturation();
    let e = params.epsilon();
    let g = params.gamma();
    let drive = 2.0 * s * (params.beat() * t).cos();
    [
        g * (-(1.0 + 2.0 * s) * eta[0] - e * eta[1] - drive * eta[0] + (1.0 - e * e) * FRAC_1_SQRT_2 * params.delta_n0()),
        g * (-eta[1] - e * eta[0]),
    ]
}
