//! Time series produced by the integrating tiers, period averaging, and the
//! shared "integrate until periodic" driver.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ReducedParams, SystemParams};
use crate::ode::{Dopri5, OdeOptions};

/// Which model produced a trajectory or spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Full,
    Harmonic,
    Reduced,
    Dressed,
    Analytic,
    Imported,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tier::Full => "full",
            Tier::Harmonic => "harmonic",
            Tier::Reduced => "reduced",
            Tier::Dressed => "dressed",
            Tier::Analytic => "analytic",
            Tier::Imported => "imported",
        };
        f.write_str(s)
    }
}

impl FromStr for Tier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Tier::Full),
            "harmonic" => Ok(Tier::Harmonic),
            "reduced" => Ok(Tier::Reduced),
            "dressed" => Ok(Tier::Dressed),
            "analytic" => Ok(Tier::Analytic),
            "imported" => Ok(Tier::Imported),
            other => Err(Error::param("tier", format!("unknown tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ParamsSnapshot {
    System(SystemParams),
    Reduced(ReducedParams),
}

/// One CSV row per sample of a trajectory.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn row(&self, t: f64, params: &ParamsSnapshot) -> Vec<f64>;
}

/// Anything that carries the two bare populations.
pub trait Populations {
    /// `(n1, n0)`.
    fn populations(&self) -> (f64, f64);
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub tier: Tier,
    pub params: ParamsSnapshot,
    pub tol: f64,
    /// Time after which the trajectory is considered periodic.
    pub transient_end: Option<f64>,
}

impl<S> Trajectory<S> {
    pub(crate) fn new(tier: Tier, params: ParamsSnapshot, tol: f64) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            tier,
            params,
            tol,
            transient_end: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &S)> {
        self.times.iter().copied().zip(self.states.iter())
    }

    pub fn last(&self) -> Option<(f64, &S)> {
        self.times.last().copied().zip(self.states.last())
    }

    pub(crate) fn push(&mut self, t: f64, s: S) {
        debug_assert!(self.times.last().map_or(true, |&last| t > last));
        self.times.push(t);
        self.states.push(s);
    }
}

impl<S: CsvRow> Trajectory<S> {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(S::header())?;
        for (t, s) in self.iter() {
            w.write_record(s.row(t, &self.params).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trapezoidal average of `f` over `[t_start, t_end]` of the sampled series,
/// interpolating linearly at the window start.
fn window_average<S>(times: &[f64], states: &[S], t_start: f64, f: impl Fn(&S) -> f64) -> f64 {
    let n = times.len();
    let t_end = times[n - 1];
    let first = times.partition_point(|&t| t < t_start);
    let mut integral = 0.0;
    if first > 0 && times[first] > t_start {
        let (ta, tb) = (times[first - 1], times[first]);
        let (fa, fb) = (f(&states[first - 1]), f(&states[first]));
        let fs = fa + (fb - fa) * (t_start - ta) / (tb - ta);
        integral += 0.5 * (fs + fb) * (tb - t_start);
    }
    for i in first..n - 1 {
        integral += 0.5 * (f(&states[i]) + f(&states[i + 1])) * (times[i + 1] - times[i]);
    }
    integral / (t_end - t_start)
}

/// Averages of `n1 − n0` and `n1 + n0` over the last `n_periods` beat periods
/// of the trajectory. `delta = 0` is not periodic and is rejected.
pub fn period_average<S: Populations>(traj: &Trajectory<S>, delta: f64, n_periods: usize) -> Result<(f64, f64)> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::param("delta", "period averaging needs a nonzero beat frequency"));
    }
    if n_periods == 0 {
        return Err(Error::param("n_periods", "must be at least 1"));
    }
    let span = n_periods as f64 * TAU / delta.abs();
    tail_average(traj, span)
}

pub(crate) fn tail_average<S: Populations>(traj: &Trajectory<S>, span: f64) -> Result<(f64, f64)> {
    let (t_end, _) = traj
        .last()
        .ok_or_else(|| Error::Data("empty trajectory".into()))?;
    let start_marker = traj.transient_end.unwrap_or(traj.times[0]);
    let available = t_end - start_marker;
    // tolerate rounding in the accumulated period boundaries
    if available < span * (1.0 - 1e-9) || traj.len() < 2 {
        return Err(Error::InsufficientSpan { needed: span, available });
    }
    let t_start = (t_end - span).max(traj.times[0]);
    let diff = window_average(&traj.times, &traj.states, t_start, |s| {
        let (a, b) = s.populations();
        a - b
    });
    let sum = window_average(&traj.times, &traj.states, t_start, |s| {
        let (a, b) = s.populations();
        a + b
    });
    Ok((diff, sum))
}

/// Settings for [`run_to_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    pub tol: f64,
    pub samples_per_period: usize,
    /// Relative block-to-block change of the averaged populations that
    /// declares the periodic regime reached.
    pub rel_change: f64,
    /// Give up after this much simulated time (in units of 1/γ).
    pub max_time_gamma: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            samples_per_period: 64,
            rel_change: 1e-6,
            max_time_gamma: 5.0e4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState<S> {
    pub trajectory: Trajectory<S>,
    pub mean_diff: f64,
    pub mean_sum: f64,
}

/// Integrates from `y0` in blocks of whole beat periods until the block
/// averages of `n1 ∓ n0` stop changing, then reports the last block's average.
///
/// A block lasts at least `min_block` so that fast beats do not fake
/// convergence; for `delta = 0` the block is exactly `min_block`.
pub(crate) fn run_to_steady_state<const N: usize, F, S>(
    rhs: F,
    y0: [f64; N],
    delta: f64,
    min_block: f64,
    gamma: f64,
    opts: &SteadyStateOptions,
    mut traj: Trajectory<S>,
    to_state: impl Fn(&[f64; N]) -> S,
) -> Result<SteadyState<S>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    S: Populations,
{
    let (block, samples) = if delta != 0.0 {
        let period = TAU / delta.abs();
        let periods = (min_block / period).ceil().max(1.0) as usize;
        (periods as f64 * period, periods * opts.samples_per_period.max(4))
    } else {
        (min_block, opts.samples_per_period.max(4))
    };
    let dt = block / samples as f64;
    let max_time = opts.max_time_gamma / gamma;

    let mut stepper = Dopri5::new(rhs, 0.0, y0, OdeOptions::with_tol(opts.tol));
    traj.push(0.0, to_state(&y0));
    let mut prev: Option<(f64, f64)> = None;
    let mut block_index = 0usize;
    loop {
        let t0 = block_index as f64 * block;
        for j in 1..=samples {
            let t = t0 + j as f64 * dt;
            stepper.advance_to(t)?;
            traj.push(t, to_state(stepper.y()));
        }
        block_index += 1;
        let t_end = block_index as f64 * block;
        let first = traj.times.partition_point(|&t| t < t0 - 0.5 * dt);
        let diff = window_average(&traj.times[first..], &traj.states[first..], t0, |s| {
            let (a, b) = s.populations();
            a - b
        });
        let sum = window_average(&traj.times[first..], &traj.states[first..], t0, |s| {
            let (a, b) = s.populations();
            a + b
        });
        if let Some((pd, ps)) = prev {
            // an averaged population near zero is compared against the integration noise floor
            let floor = 10.0 * opts.tol;
            let close = |a: f64, b: f64| (a - b).abs() <= opts.rel_change * a.abs().max(b.abs()) + floor;
            if close(diff, pd) && close(sum, ps) {
                traj.transient_end = Some(t0);
                return Ok(SteadyState {
                    trajectory: traj,
                    mean_diff: diff,
                    mean_sum: sum,
                });
            }
        }
        prev = Some((diff, sum));
        if t_end > max_time {
            return Err(Error::NonConvergence {
                what: "periodic steady state",
                detail: format!("block averages still changing at t = {t_end:.4e}"),
            });
        }
    }
}
