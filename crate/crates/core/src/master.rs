//! Rotating-frame master equation of the bichromatically driven two-level
//! system with unequal population relaxation.
//!
//! Only ρ₁₀ is stored; ρ₀₁ is always its complex conjugate, so the state is
//! Hermitian by construction.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::ode::{Dopri5, OdeOptions};
use crate::trajectory::{
    run_to_steady_state, CsvRow, ParamsSnapshot, Populations, SteadyState, SteadyStateOptions, Tier, Trajectory,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityState {
    pub rho11: f64,
    pub rho00: f64,
    pub rho10: Complex64,
}

impl DensityState {
    /// Validated initial state: populations in [0, 1] and a positive
    /// semidefinite matrix.
    pub fn new(rho11: f64, rho00: f64, rho10: Complex64) -> Result<Self> {
        for (name, v) in [("rho11", rho11), ("rho00", rho00)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("population must lie in [0, 1], got {v}")));
            }
        }
        let s = Self { rho11, rho00, rho10 };
        if !s.is_positive(1e-12) {
            return Err(Error::param(
                "rho10",
                format!("|rho10|^2 = {} exceeds rho11*rho00 = {}", rho10.norm_sqr(), rho11 * rho00),
            ));
        }
        Ok(s)
    }

    /// Diagonal state at the equilibrium populations.
    pub fn equilibrium(params: &SystemParams) -> Self {
        Self {
            rho11: params.n1_eq(),
            rho00: params.n0_eq(),
            rho10: Complex64::new(0.0, 0.0),
        }
    }

    pub fn rho01(&self) -> Complex64 {
        self.rho10.conj()
    }

    pub fn trace(&self) -> f64 {
        self.rho11 + self.rho00
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.rho11 >= -tol && self.rho00 >= -tol && self.rho10.norm_sqr() <= self.rho11 * self.rho00 + tol
    }

    fn to_array(self) -> [f64; 4] {
        [self.rho11, self.rho00, self.rho10.re, self.rho10.im]
    }

    fn from_array(y: &[f64; 4]) -> Self {
        Self {
            rho11: y[0],
            rho00: y[1],
            rho10: Complex64::new(y[2], y[3]),
        }
    }
}

impl Populations for DensityState {
    fn populations(&self) -> (f64, f64) {
        (self.rho11, self.rho00)
    }
}

impl CsvRow for DensityState {
    fn header() -> &'static [&'static str] {
        &["t", "rho11", "rho00", "re_rho10", "im_rho10", "trace", "trace_flux"]
    }

    fn row(&self, t: f64, params: &ParamsSnapshot) -> Vec<f64> {
        let flux = match params {
            ParamsSnapshot::System(p) => trace_flux(self, p),
            ParamsSnapshot::Reduced(_) => f64::NAN,
        };
        vec![t, self.rho11, self.rho00, self.rho10.re, self.rho10.im, self.trace(), flux]
    }
}

/// Time derivative of every density-matrix element, including ρ̇₀₁ evaluated
/// from its own equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRate {
    pub d_rho11: f64,
    pub d_rho00: f64,
    pub d_rho10: Complex64,
    pub d_rho01: Complex64,
}

pub fn derivative(t: f64, state: &DensityState, params: &SystemParams) -> DensityRate {
    let gamma = params.gamma();
    let eps = params.epsilon();
    let g = params.gamma_coh();
    let w = params.detuning();
    let phase = Complex64::from_polar(1.0, params.beat() * t);
    // Ω₁ + Ω₂ e^{iδt} and Ω₁ + Ω₂ e^{−iδt}
    let drive_p = params.rabi1() + params.rabi2() * phase;
    let drive_m = params.rabi1() + params.rabi2() * phase.conj();
    let rho10 = state.rho10;
    let rho01 = state.rho01();
    let inversion = state.rho11 - state.rho00;

    let exchange = 0.5 * I * drive_m * rho10 - 0.5 * I * drive_p * rho01;
    DensityRate {
        d_rho11: -gamma * (1.0 + eps) * (state.rho11 - params.n1_eq()) + exchange.re,
        d_rho00: -gamma * (1.0 - eps) * (state.rho00 - params.n0_eq()) - exchange.re,
        d_rho10: -(g - I * w) * rho10 + 0.5 * I * drive_p * inversion,
        d_rho01: -(g + I * w) * rho01 - 0.5 * I * drive_m * inversion,
    }
}

fn rhs(params: SystemParams) -> impl FnMut(f64, &[f64; 4]) -> [f64; 4] {
    move |t, y| {
        let r = derivative(t, &DensityState::from_array(y), &params);
        [r.d_rho11, r.d_rho00, r.d_rho10.re, r.d_rho10.im]
    }
}

/// Rate of probability exchange with the reservoir, d(ρ₁₁ + ρ₀₀)/dt.
pub fn trace_flux(state: &DensityState, params: &SystemParams) -> f64 {
    -params.gamma()
        * ((1.0 + params.epsilon()) * (state.rho11 - params.n1_eq())
            + (1.0 - params.epsilon()) * (state.rho00 - params.n0_eq()))
}

/// Output spacing used by the time-domain integrators: 64 samples per beat
/// period, and at least 256 samples over the run.
pub(crate) fn output_grid(beat: f64, t_end: f64) -> (usize, f64) {
    let mut dt = t_end / 256.0;
    if beat != 0.0 {
        dt = dt.min(TAU / beat.abs() / 64.0);
    }
    let n = (t_end / dt).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

/// Integrates the master equation from `initial` over `[0, t_end]` with
/// local error tolerance `tol`.
pub fn integrate_full(
    params: &SystemParams,
    initial: DensityState,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory<DensityState>> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::param("t_end", format!("must be positive, got {t_end}")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    if !initial.is_positive(1e-12) {
        return Err(Error::param("initial", "initial density matrix is not positive"));
    }
    let (n, dt) = output_grid(params.beat(), t_end);
    let mut traj = Trajectory::new(Tier::Full, ParamsSnapshot::System(*params), tol);
    traj.push(0.0, initial);
    let mut stepper = Dopri5::new(rhs(*params), 0.0, initial.to_array(), OdeOptions::with_tol(tol));
    let mut warned = false;
    for i in 1..=n {
        let t = if i == n { t_end } else { i as f64 * dt };
        stepper.advance_to(t)?;
        let s = DensityState::from_array(stepper.y());
        if !warned && !s.is_positive(10.0 * tol) {
            log::warn!("density matrix lost positivity at t = {t:.6e} (relaxation model is not of Lindblad form)");
            warned = true;
        }
        traj.push(t, s);
    }
    Ok(traj)
}

/// Integrates from equilibrium until the beat-periodic regime is reached.
pub fn steady_state_full(params: &SystemParams, opts: &SteadyStateOptions) -> Result<SteadyState<DensityState>> {
    let slowest = (params.gamma() * (1.0 - params.epsilon().abs())).min(params.gamma_coh());
    let traj = Trajectory::new(Tier::Full, ParamsSnapshot::System(*params), opts.tol);
    run_to_steady_state(
        rhs(*params),
        DensityState::equilibrium(params).to_array(),
        params.beat(),
        1.0 / slowest,
        params.gamma(),
        opts,
        traj,
        DensityState::from_array,
    )
}

/// Period-averaged ⟨ρ₁₁ − ρ₀₀⟩ in the periodic regime.
pub fn steady_population_difference(params: &SystemParams, opts: &SteadyStateOptions) -> Result<f64> {
    Ok(steady_state_full(params, opts)?.mean_diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::period_average;
    use proptest::prelude::*;

    fn driven() -> SystemParams {
        SystemParams::builder()
            .gamma(1.0)
            .epsilon(0.5)
            .gamma_coh(20.0)
            .omega0(0.0)
            .omega1(1.3)
            .omega2(-0.4)
            .rabi1(3.0)
            .rabi2(2.0)
            .equilibrium(0.7, 0.3)
            .build()
            .unwrap()
    }

    #[test]
    fn equilibrium_is_stationary_without_drive() {
        let p = SystemParams::builder().epsilon(0.3).equilibrium(0.6, 0.4).build().unwrap();
        let r = derivative(0.7, &DensityState::equilibrium(&p), &p);
        assert_eq!(r.d_rho11, 0.0);
        assert_eq!(r.d_rho00, 0.0);
        assert_eq!(r.d_rho10, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn free_decay_rates() {
        let p = SystemParams::builder()
            .gamma(2.0)
            .epsilon(0.25)
            .gamma_coh(7.0)
            .omega1(3.0)
            .equilibrium(0.5, 0.5)
            .build()
            .unwrap();
        let s = DensityState {
            rho11: 0.9,
            rho00: 0.2,
            rho10: Complex64::new(0.1, -0.2),
        };
        let r = derivative(0.0, &s, &p);
        assert!((r.d_rho11 + 2.5 * 0.4).abs() < 1e-15);
        assert!((r.d_rho00 + 1.5 * (-0.3)).abs() < 1e-15);
        let expect = -(Complex64::new(7.0, -3.0)) * s.rho10;
        assert!((r.d_rho10 - expect).norm() < 1e-14);
    }

    // Classical RK4 step written independently of the adaptive integrator.
    fn rk4_step(p: &SystemParams, t: f64, s: &DensityState, h: f64) -> DensityState {
        let f = |t: f64, s: &DensityState| derivative(t, s, p);
        let add = |s: &DensityState, r: &DensityRate, c: f64| DensityState {
            rho11: s.rho11 + c * r.d_rho11,
            rho00: s.rho00 + c * r.d_rho00,
            rho10: s.rho10 + c * r.d_rho10,
        };
        let k1 = f(t, s);
        let k2 = f(t + h / 2.0, &add(s, &k1, h / 2.0));
        let k3 = f(t + h / 2.0, &add(s, &k2, h / 2.0));
        let k4 = f(t + h, &add(s, &k3, h));
        DensityState {
            rho11: s.rho11 + h / 6.0 * (k1.d_rho11 + 2.0 * k2.d_rho11 + 2.0 * k3.d_rho11 + k4.d_rho11),
            rho00: s.rho00 + h / 6.0 * (k1.d_rho00 + 2.0 * k2.d_rho00 + 2.0 * k3.d_rho00 + k4.d_rho00),
            rho10: s.rho10 + h / 6.0 * (k1.d_rho10 + 2.0 * k2.d_rho10 + 2.0 * k3.d_rho10 + k4.d_rho10),
        }
    }

    #[test]
    fn derivative_matches_richardson_finite_difference() {
        let p = driven();
        let s = DensityState {
            rho11: 0.55,
            rho00: 0.35,
            rho10: Complex64::new(0.12, 0.05),
        };
        let t = 0.8;
        let central = |h: f64| {
            let fwd = rk4_step(&p, t, &s, h);
            let bwd = rk4_step(&p, t, &s, -h);
            (
                (fwd.rho11 - bwd.rho11) / (2.0 * h),
                (fwd.rho00 - bwd.rho00) / (2.0 * h),
                (fwd.rho10 - bwd.rho10) / (2.0 * h),
            )
        };
        let h = 1e-3;
        let (a1, a0, a10) = central(h);
        let (b1, b0, b10) = central(h / 2.0);
        let rich = |a: f64, b: f64| (4.0 * b - a) / 3.0;
        let r = derivative(t, &s, &p);
        assert!((rich(a1, b1) - r.d_rho11).abs() < 1e-9);
        assert!((rich(a0, b0) - r.d_rho00).abs() < 1e-9);
        let c10 = (4.0 * b10 - a10) / 3.0;
        assert!((c10 - r.d_rho10).norm() < 1e-9);
    }

    #[test]
    fn trace_flux_examples() {
        let p = SystemParams::builder().epsilon(0.5).equilibrium(0.6, 0.4).build().unwrap();
        assert_eq!(trace_flux(&DensityState::equilibrium(&p), &p), 0.0);
        let s = DensityState {
            rho11: 0.7,
            rho00: 0.4,
            rho10: Complex64::new(0.0, 0.0),
        };
        assert!((trace_flux(&s, &p) + 0.15).abs() < 1e-15);
        let closed = SystemParams::builder().equilibrium(0.6, 0.4).build().unwrap();
        let s = DensityState {
            rho11: 0.8,
            rho00: 0.2,
            rho10: Complex64::new(0.0, 0.0),
        };
        assert!(trace_flux(&s, &closed).abs() < 1e-15);
    }

    #[test]
    fn free_decay_recovers_rates() {
        let p = SystemParams::builder()
            .gamma(1.0)
            .epsilon(0.4)
            .gamma_coh(3.0)
            .omega1(2.0)
            .equilibrium(0.3, 0.7)
            .build()
            .unwrap();
        let init = DensityState::new(0.9, 0.1, Complex64::new(0.2, 0.1)).unwrap();
        let traj = integrate_full(&p, init, 3.0, 1e-11).unwrap();
        let fit_rate = |f: &dyn Fn(&DensityState) -> f64| {
            // least-squares slope of log|f| against t
            let pts: Vec<(f64, f64)> = traj.iter().map(|(t, s)| (t, f(s).abs().ln())).collect();
            let n = pts.len() as f64;
            let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
            let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
            -num / den
        };
        let g1 = fit_rate(&|s| s.rho11 - 0.3);
        let g0 = fit_rate(&|s| s.rho00 - 0.7);
        let gc = fit_rate(&|s| s.rho10.norm());
        assert!((g1 - 1.4).abs() < 0.014, "{g1}");
        assert!((g0 - 0.6).abs() < 0.006, "{g0}");
        assert!((gc - 3.0).abs() < 0.03, "{gc}");
    }

    #[test]
    fn open_system_is_detectable() {
        let p = SystemParams::builder()
            .epsilon(0.5)
            .gamma_coh(20.0)
            .omega1(1.0)
            .rabi(3.0)
            .equilibrium(0.8, 0.2)
            .build()
            .unwrap();
        let ss = steady_state_full(&p, &SteadyStateOptions::default()).unwrap();
        let start = ss.trajectory.transient_end.unwrap();
        let max_flux = ss
            .trajectory
            .iter()
            .filter(|(t, _)| *t >= start)
            .map(|(_, s)| trace_flux(s, &p).abs())
            .fold(0.0, f64::max);
        assert!(max_flux > 1e-3, "{max_flux}");
        let (d, _) = period_average(&ss.trajectory, p.beat(), 1).unwrap();
        assert!((d - ss.mean_diff).abs() < 1e-12);
    }

    #[test]
    fn trajectory_csv_columns() {
        let p = driven();
        let traj = integrate_full(&p, DensityState::equilibrium(&p), 0.5, 1e-8).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,rho11,rho00,re_rho10,im_rho10,trace,trace_flux");
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0, 0.7, 0.3, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(text.lines().count(), traj.len() + 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(DensityState::new(0.5, 0.5, Complex64::new(0.6, 0.0)).is_err());
        assert!(DensityState::new(1.2, 0.0, Complex64::new(0.0, 0.0)).is_err());
        let p = driven();
        let s = DensityState::equilibrium(&p);
        assert!(integrate_full(&p, s, 0.0, 1e-8).is_err());
        assert!(integrate_full(&p, s, 1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coherence_rates_are_conjugate(
            t in 0.0f64..10.0, r11 in 0.0f64..1.0, r00 in 0.0f64..1.0,
            re in -0.5f64..0.5, im in -0.5f64..0.5,
            w1 in -5.0f64..5.0, w2 in -5.0f64..5.0, a in 0.0f64..5.0, b in 0.0f64..5.0,
        ) {
            let p = SystemParams::builder().epsilon(0.3).gamma_coh(4.0).omega1(w1).omega2(w2)
                .rabi1(a).rabi2(b).equilibrium(0.6, 0.4).build().unwrap();
            let s = DensityState { rho11: r11, rho00: r00, rho10: Complex64::new(re, im) };
            let r = derivative(t, &s, &p);
            prop_assert!((r.d_rho10.conj() - r.d_rho01).norm() <= 1e-14 * (1.0 + r.d_rho01.norm()));
        }

        #[test]
        fn closed_system_conserves_trace(
            rabi1 in 0.0f64..8.0, rabi2 in 0.0f64..8.0, w1 in -3.0f64..3.0, w2 in -3.0f64..3.0,
        ) {
            let tol = 1e-8;
            let p = SystemParams::builder().epsilon(0.0).gamma_coh(5.0).omega1(w1).omega2(w2)
                .rabi1(rabi1).rabi2(rabi2).equilibrium(0.6, 0.4).build().unwrap();
            let traj = integrate_full(&p, DensityState::equilibrium(&p), 5.0, tol).unwrap();
            for (_, s) in traj.iter() {
                prop_assert!((s.trace() - 1.0).abs() <= 10.0 * tol);
            }
        }
    }
}
