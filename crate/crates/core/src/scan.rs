//! δ-scans and saturation sweeps over every tier.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{fluorescence_signal, resonance_shape, ResonanceShape};
use crate::dressed::{steady_state_dressed, steady_state_reduced};
use crate::error::{Error, Result};
use crate::fit::{auto_initial_guess, fit_composite, FitOptions, ModelSpec};
use crate::harmonic::{auto_truncation, solve_harmonic_balance};
use crate::master::steady_state_full;
use crate::model::SystemParams;
use crate::spectrum::{Spectrum, SpectrumSource};
use crate::trajectory::{ParamsSnapshot, SteadyStateOptions, Tier};

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub steady: SteadyStateOptions,
    /// Relative tolerance for the harmonic truncation search.
    pub harmonic_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            steady: SteadyStateOptions::default(),
            harmonic_tol: 1e-8,
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("grid", "is empty"));
    }
    if grid.iter().any(|d| !d.is_finite()) {
        return Err(Error::param("grid", "contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Period-averaged population difference of one tier at a single beat.
///
/// The analytic tier treats S as a constant and evaluates it at zero beat
/// (ω₁ = ω₂); the other tiers keep the weak dependence of the coherence
/// Lorentzians on ω₁ = ω₂ + δ.
///
/// At exactly δ = 0 the time-domain and harmonic tiers describe two
/// phase-locked fields, i.e. a static drive of strength `4S`, which differs
/// from the δ → 0 limit of the lineshape. The analytic tier returns the limit.
pub fn signal_at(params: &SystemParams, delta: f64, tier: Tier, opts: &ScanOptions) -> Result<f64> {
    let p = params.with_beat(delta)?;
    match tier {
        Tier::Full => Ok(steady_state_full(&p, &opts.steady)?.mean_diff),
        Tier::Harmonic => {
            let order = auto_truncation(&p, opts.harmonic_tol)?;
            Ok(solve_harmonic_balance(&p, order)?.dc_difference())
        }
        Tier::Reduced => Ok(steady_state_reduced(&p.reduced()?, &opts.steady)?.mean_diff),
        Tier::Dressed => Ok(steady_state_dressed(&p.reduced()?, &opts.steady)?.mean_diff),
        Tier::Analytic => fluorescence_signal(delta, &params.with_beat(0.0)?.reduced()?),
        Tier::Imported => Err(Error::Unsupported("imported spectra cannot be computed".into())),
    }
}

/// Evaluates `tier` at every beat detuning in `grid`, in parallel.
pub fn scan_delta(params: &SystemParams, grid: &[f64], tier: Tier, opts: &ScanOptions) -> Result<Spectrum> {
    check_grid(grid)?;
    if matches!(tier, Tier::Reduced | Tier::Dressed) {
        let widest = grid.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        if let Some(msg) = params.with_beat(widest)?.adiabatic_advisory() {
            log::warn!("{tier} tier: {msg}");
        }
    }
    let signal = grid
        .par_iter()
        .map(|&d| signal_at(params, d, tier, opts).map_err(|e| e.at_delta(d)))
        .collect::<Result<Vec<f64>>>()?;
    Spectrum::new(grid.to_vec(), signal, tier, SpectrumSource::Model(ParamsSnapshot::System(*params)))
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub scan: ScanOptions,
    pub fit: FitOptions,
    /// Points per δ-scan for the fitted tiers.
    pub points: usize,
    /// The scan covers `0 ≤ δ ≤ span · max(w₁, γ)` with `w₁` the analytic
    /// estimate.
    pub span: f64,
    /// Also obtain the analytic rows by fitting synthetic spectra instead of
    /// reading the closed forms.
    pub fit_analytic: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            scan: ScanOptions::default(),
            fit: FitOptions::default(),
            points: 61,
            span: 8.0,
            fit_analytic: false,
        }
    }
}

/// One saturation value of a sweep. `shape` is `None` when the row failed,
/// with the reason in `note`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub saturation: f64,
    pub shape: Option<ResonanceShape>,
    pub note: Option<String>,
}

/// Scan grid with points packed towards δ = 0 so the narrow component is
/// resolved. δ = 0 itself is left out: there the two fields are
/// phase-locked rather than beating, and the time-domain tiers return the
/// static-drive value, which is not the limit of the lineshape.
pub fn sweep_grid(params: &SystemParams, points: usize, span: f64) -> Result<Vec<f64>> {
    Ok(packed_grid(span * analytic_w1(params)?, points))
}

fn analytic_w1(params: &SystemParams) -> Result<f64> {
    let reduced = params.with_beat(0.0)?.reduced()?;
    let w1 = resonance_shape(&reduced).map(|s| s.w1).unwrap_or(params.gamma());
    Ok(w1.max(params.gamma()))
}

fn packed_grid(top: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (1..=n).map(|i| top * (i as f64 / n as f64).powi(2)).collect()
}

/// The integrating tiers see S fall off as the first field leaves the
/// coherence Lorentzian, which digs a hole of width about Γ under the
/// narrow resonance. Unless Γ is far outside the scan it gets its own
/// component and the grid is widened to contain it.
fn fit_setup(p: &SystemParams, tier: Tier, opts: &SweepOptions) -> Result<(Vec<f64>, ModelSpec)> {
    let top = opts.span * analytic_w1(p)?;
    if tier != Tier::Analytic && p.gamma_coh() < HOLE_RANGE * top {
        let top = top.max(HOLE_SPAN * p.gamma_coh());
        Ok((packed_grid(top, 2 * opts.points), ModelSpec::theory_with_hole()))
    } else {
        Ok((packed_grid(top, opts.points), ModelSpec::theory()))
    }
}

const HOLE_RANGE: f64 = 10.0;
const HOLE_SPAN: f64 = 6.0;

fn sweep_row(params: &SystemParams, s: f64, tier: Tier, opts: &SweepOptions) -> Result<ResonanceShape> {
    let p = params.with_beat(0.0)?.with_saturation(s)?;
    if tier == Tier::Analytic && !opts.fit_analytic {
        return resonance_shape(&p.reduced()?);
    }
    let (grid, spec) = fit_setup(&p, tier, opts)?;
    let spectrum = scan_delta(&p, &grid, tier, &opts.scan)?;
    let guess = auto_initial_guess(&spectrum, &spec)?;
    let fit = fit_composite(&spectrum, &guess, &opts.fit)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            what: "composite fit",
            detail: fit.status,
        });
    }
    let shape = fit.to_resonance_shape()?;
    if let Some(w) = fit.identifiability_warning {
        log::warn!("S = {s}: {w}");
    }
    Ok(shape)
}

/// Resonance parameters against saturation. Failing rows are flagged and
/// the sweep carries on; only an invalid grid is an error.
pub fn sweep_power(params: &SystemParams, s_grid: &[f64], tier: Tier, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if s_grid.is_empty() {
        return Err(Error::param("S", "sweep grid is empty"));
    }
    if let Some(s) = s_grid.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::param("S", format!("sweep values must be positive, got {s}")));
    }
    params.with_beat(0.0)?.with_saturation(1.0)?;
    Ok(s_grid
        .par_iter()
        .map(|&s| match sweep_row(params, s, tier, opts) {
            Ok(shape) => SweepRow {
                saturation: s,
                shape: Some(shape),
                note: None,
            },
            Err(e) => {
                log::warn!("sweep row S = {s} failed: {e}");
                SweepRow {
                    saturation: s,
                    shape: None,
                    note: Some(e.to_string()),
                }
            }
        })
        .collect())
}

/// Sweep table as CSV with columns `S, A0, A1, w0, w1, B, note`. Failed
/// rows leave the numeric fields empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["S", "A0", "A1", "w0", "w1", "B", "note"])?;
    for r in rows {
        let mut rec = vec![r.saturation.to_string()];
        match &r.shape {
            Some(s) => rec.extend([s.a0, s.a1, s.w0, s.w1, s.background].map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        rec.push(r.note.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
