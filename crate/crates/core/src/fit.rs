//! Composite resonance fits: up to three Lorentzians sharing one center, on
//! a flat or Gaussian background.
//!
//! ```text
//! y(δ) = background(δ) + Σ_j a_j · w_j² / ((δ − c)² + w_j²)
//! ```
//!
//! Widths are fitted through their logarithms so they stay positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analytics::{ResonanceShape, ShapeSource};
use crate::error::{Error, Result};
use crate::lm::{self, LmOptions, LmStop};
use crate::model::lorentz_unchecked;
use crate::spectrum::Spectrum;

pub const MIN_POINTS: usize = 12;
pub const MAX_COMPONENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorentzian {
    pub amplitude: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Background {
    Flat {
        offset: f64,
    },
    Gaussian {
        amplitude: f64,
        width: f64,
        center: f64,
        offset: f64,
    },
}

impl Background {
    pub fn eval(&self, delta: f64) -> f64 {
        match *self {
            Background::Flat { offset } => offset,
            Background::Gaussian {
                amplitude,
                width,
                center,
                offset,
            } => {
                let z = (delta - center) / width;
                offset + amplitude * (-0.5 * z * z).exp()
            }
        }
    }

    pub fn kind(&self) -> BackgroundKind {
        match self {
            Background::Flat { .. } => BackgroundKind::Flat,
            Background::Gaussian { .. } => BackgroundKind::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundKind {
    Flat,
    Gaussian,
}

/// Shape of the model to fit, independent of parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub components: usize,
    pub background: BackgroundKind,
    /// Fit the shared center, or hold it at `center`.
    pub center_free: bool,
    pub center: f64,
}

impl ModelSpec {
    /// The theory lineshape: two components, flat background, centered at 0.
    pub fn theory() -> Self {
        Self {
            components: 2,
            background: BackgroundKind::Flat,
            center_free: false,
            center: 0.0,
        }
    }

    /// The theory lineshape plus a broad third component for the hole of
    /// width about Γ that appears when Γ is not far above γ.
    pub fn theory_with_hole() -> Self {
        Self {
            components: 3,
            ..Self::theory()
        }
    }

    /// Three components on a Gaussian background with a free center, for
    /// measured spectra.
    pub fn experimental() -> Self {
        Self {
            components: 3,
            background: BackgroundKind::Gaussian,
            center_free: true,
            center: 0.0,
        }
    }

    pub fn parameter_count(&self) -> usize {
        let bg = match self.background {
            BackgroundKind::Flat => 1,
            BackgroundKind::Gaussian => 4,
        };
        bg + usize::from(self.center_free) + 2 * self.components
    }

    fn validate(&self) -> Result<()> {
        if self.components == 0 || self.components > MAX_COMPONENTS {
            return Err(Error::param(
                "components",
                format!("must be 1..={MAX_COMPONENTS}, got {}", self.components),
            ));
        }
        if !self.center.is_finite() {
            return Err(Error::param("center", "must be finite"));
        }
        Ok(())
    }
}

/// Standard error of one fitted parameter; `None` when the covariance is
/// not available for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub name: String,
    pub std_error: Option<f64>,
}

/// Parameters of a composite resonance together with fit diagnostics. Also
/// serves as the initial guess for [`fit_composite`], in which case the
/// diagnostic fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeFit {
    pub components: Vec<Lorentzian>,
    pub center: f64,
    #[serde(default)]
    pub center_free: bool,
    pub background: Background,
    #[serde(default)]
    pub std_errors: Vec<ParamError>,
    #[serde(default)]
    pub residual_norm: f64,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
    /// Set when two components cannot be told apart by the data.
    #[serde(default)]
    pub identifiability_warning: Option<String>,
    #[serde(default)]
    pub status: String,
}

impl CompositeFit {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            components: self.components.len(),
            background: self.background.kind(),
            center_free: self.center_free,
            center: self.center,
        }
    }

    pub fn eval(&self, delta: f64) -> f64 {
        let x = delta - self.center;
        self.background.eval(delta)
            + self
                .components
                .iter()
                .map(|c| c.amplitude * lorentz_unchecked(c.half_width, x))
                .sum::<f64>()
    }

    /// Components ordered from narrowest to widest.
    pub fn sorted_components(&self) -> Vec<Lorentzian> {
        let mut c = self.components.clone();
        c.sort_by(|a, b| a.half_width.total_cmp(&b.half_width));
        c
    }

    /// Flat-background fits expressed in the normalized form
    /// `B(1 + A₀L_{w₀} + A₁L_{w₁})`, with `w₀ ≤ w₁`.
    ///
    /// A third, broadest component is read as the coherence hole: it is
    /// folded into the baseline under the two narrow components, so
    /// `B = offset + a_hole`.
    pub fn to_resonance_shape(&self) -> Result<ResonanceShape> {
        let Background::Flat { offset } = self.background else {
            return Err(Error::Unsupported("resonance shape needs a flat background".into()));
        };
        if !(2..=3).contains(&self.components.len()) {
            return Err(Error::Unsupported(format!(
                "resonance shape needs two components (three with a hole), fit has {}",
                self.components.len()
            )));
        }
        let c = self.sorted_components();
        let baseline = offset + c.get(2).map_or(0.0, |hole| hole.amplitude);
        if baseline == 0.0 {
            return Err(Error::Data("zero background cannot normalize the amplitudes".into()));
        }
        Ok(ResonanceShape {
            background: baseline,
            a0: c[0].amplitude / baseline,
            a1: c[1].amplitude / baseline,
            w0: c[0].half_width,
            w1: c[1].half_width,
            source: ShapeSource::Fitted,
        })
    }

    /// Two-component guess reproducing a resonance shape exactly.
    pub fn from_resonance_shape(shape: &ResonanceShape) -> Self {
        Self::from_parts(
            vec![
                Lorentzian {
                    amplitude: shape.background * shape.a0,
                    half_width: shape.w0,
                },
                Lorentzian {
                    amplitude: shape.background * shape.a1,
                    half_width: shape.w1,
                },
            ],
            0.0,
            false,
            Background::Flat {
                offset: shape.background,
            },
        )
    }

    pub fn from_parts(components: Vec<Lorentzian>, center: f64, center_free: bool, background: Background) -> Self {
        Self {
            components,
            center,
            center_free,
            background,
            std_errors: Vec::new(),
            residual_norm: 0.0,
            converged: false,
            iterations: 0,
            identifiability_warning: None,
            status: "guess".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        let mut vals = vec![self.center];
        match self.background {
            Background::Flat { offset } => vals.push(offset),
            Background::Gaussian {
                amplitude,
                width,
                center,
                offset,
            } => {
                if !(width > 0.0) {
                    return Err(Error::param("background.width", format!("must be positive, got {width}")));
                }
                vals.extend([amplitude, width, center, offset]);
            }
        }
        for c in &self.components {
            if !(c.half_width > 0.0) || !c.half_width.is_finite() {
                return Err(Error::param("half_width", format!("must be positive, got {}", c.half_width)));
            }
            vals.push(c.amplitude);
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("guess", "contains non-finite values"));
        }
        Ok(())
    }

    fn pack(&self) -> DVector<f64> {
        let mut p = Vec::with_capacity(self.spec().parameter_count());
        match self.background {
            Background::Flat { offset } => p.push(offset),
            Background::Gaussian {
                amplitude,
                width,
                center,
                offset,
            } => p.extend([offset, amplitude, width.ln(), center]),
        }
        if self.center_free {
            p.push(self.center);
        }
        for c in &self.components {
            p.extend([c.amplitude, c.half_width.ln()]);
        }
        DVector::from_vec(p)
    }
}

/// Evaluates packed parameters without allocating a [`CompositeFit`].
#[derive(Debug, Clone, Copy)]
struct Packed {
    spec: ModelSpec,
}

impl Packed {
    fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = match self.spec.background {
            BackgroundKind::Flat => vec!["background.offset".into()],
            BackgroundKind::Gaussian => vec![
                "background.offset".into(),
                "background.amplitude".into(),
                "background.width".into(),
                "background.center".into(),
            ],
        };
        if self.spec.center_free {
            names.push("center".into());
        }
        for j in 0..self.spec.components {
            names.push(format!("components[{j}].amplitude"));
            names.push(format!("components[{j}].half_width"));
        }
        names
    }

    fn eval(&self, p: &[f64], delta: f64) -> f64 {
        let (bg, mut i) = match self.spec.background {
            BackgroundKind::Flat => (p[0], 1),
            BackgroundKind::Gaussian => {
                let z = (delta - p[3]) / p[2].exp();
                (p[0] + p[1] * (-0.5 * z * z).exp(), 4)
            }
        };
        let center = if self.spec.center_free {
            i += 1;
            p[i - 1]
        } else {
            self.spec.center
        };
        let x = delta - center;
        let mut y = bg;
        for _ in 0..self.spec.components {
            y += p[i] * lorentz_unchecked(p[i + 1].exp(), x);
            i += 2;
        }
        y
    }

    fn unpack(&self, p: &[f64]) -> CompositeFit {
        let (background, mut i) = match self.spec.background {
            BackgroundKind::Flat => (Background::Flat { offset: p[0] }, 1),
            BackgroundKind::Gaussian => (
                Background::Gaussian {
                    offset: p[0],
                    amplitude: p[1],
                    width: p[2].exp(),
                    center: p[3],
                },
                4,
            ),
        };
        let center = if self.spec.center_free {
            i += 1;
            p[i - 1]
        } else {
            self.spec.center
        };
        let components = (0..self.spec.components)
            .map(|j| Lorentzian {
                amplitude: p[i + 2 * j],
                half_width: p[i + 2 * j + 1].exp(),
            })
            .collect();
        CompositeFit::from_parts(components, center, self.spec.center_free, background)
    }

    /// Typical magnitudes, used for finite-difference steps.
    fn scales(&self, spectrum: &Spectrum) -> Vec<f64> {
        let ymax = spectrum.signal().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let d = spectrum.delta();
        let span = (d[d.len() - 1] - d[0]).max(f64::MIN_POSITIVE);
        let mut s = match self.spec.background {
            BackgroundKind::Flat => vec![ymax],
            BackgroundKind::Gaussian => vec![ymax, ymax, 1.0, span],
        };
        if self.spec.center_free {
            s.push(span);
        }
        for _ in 0..self.spec.components {
            s.extend([ymax, 1.0]);
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub lm: LmOptions,
    /// Relative width separation below which two components are reported
    /// as not identifiable.
    pub width_separation: f64,
    /// Correlation magnitude above which two components are reported as not
    /// identifiable.
    pub max_correlation: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lm: LmOptions::default(),
            width_separation: 1e-3,
            max_correlation: 0.9999,
        }
    }
}

/// Least-squares fit of the model described by `init` to `spectrum`.
///
/// Bad input is an error. Numerical trouble (max iterations, singular
/// normal matrix) is not: the result comes back with `converged = false`
/// and a status message.
pub fn fit_composite(spectrum: &Spectrum, init: &CompositeFit, opts: &FitOptions) -> Result<CompositeFit> {
    init.validate()?;
    let spec = init.spec();
    let needed = MIN_POINTS.max(spec.parameter_count() + 1);
    if spectrum.len() < needed {
        return Err(Error::Data(format!(
            "fit needs at least {needed} points, spectrum has {}",
            spectrum.len()
        )));
    }
    let packed = Packed { spec };
    let delta = spectrum.delta();
    let signal = spectrum.signal();
    let residual = |p: &DVector<f64>, r: &mut DVector<f64>| {
        for i in 0..delta.len() {
            r[i] = packed.eval(p.as_slice(), delta[i]) - signal[i];
        }
    };
    let report = lm::minimize(residual, init.pack(), &packed.scales(spectrum), delta.len(), &opts.lm);

    let mut fit = packed.unpack(report.params.as_slice());
    fit.iterations = report.iterations;
    fit.residual_norm = report.residuals.norm();
    fit.converged = report.stop.converged();
    fit.status = match report.stop {
        LmStop::StepTolerance => "converged".into(),
        LmStop::ZeroResidual => "converged (zero residual)".into(),
        LmStop::NoDescent => "converged (no further descent at working precision)".into(),
        LmStop::MaxIterations => format!("iteration limit {} reached", opts.lm.max_iterations),
        LmStop::NonFinite => "model is non-finite at the initial guess".into(),
    };

    let raw = lm::standard_errors(&report);
    let names = packed.names();
    let bg_len = match spec.background {
        BackgroundKind::Flat => 1,
        BackgroundKind::Gaussian => 4,
    };
    let first_component = bg_len + usize::from(spec.center_free);
    fit.std_errors = names
        .into_iter()
        .zip(raw.iter())
        .enumerate()
        .map(|(i, (name, e))| {
            // log-parameters: σ_w = w·σ_ln w
            let is_log = (i >= first_component && (i - first_component) % 2 == 1)
                || (spec.background == BackgroundKind::Gaussian && i == 2);
            let std_error = e.map(|s| if is_log { s * report.params[i].exp() } else { s });
            ParamError {
                name,
                std_error: std_error.filter(|v| v.is_finite()),
            }
        })
        .collect();
    fit.identifiability_warning = identifiability(&fit, &report, first_component, opts);
    if fit.identifiability_warning.is_some() && fit.converged {
        log::warn!("{}", fit.identifiability_warning.as_deref().unwrap_or_default());
    }
    Ok(fit)
}

fn identifiability(fit: &CompositeFit, report: &lm::LmReport, first: usize, opts: &FitOptions) -> Option<String> {
    let n = fit.components.len();
    for a in 0..n {
        for b in a + 1..n {
            let (wa, wb) = (fit.components[a].half_width, fit.components[b].half_width);
            if (wa - wb).abs() <= opts.width_separation * wa.max(wb) {
                return Some(format!("components {a} and {b} have indistinguishable widths ({wa:.6e}, {wb:.6e})"));
            }
        }
    }
    match lm::correlations(report) {
        None if n > 1 => Some("normal matrix is singular; component parameters are not separately determined".into()),
        None => None,
        Some(corr) => {
            for a in 0..n {
                for b in a + 1..n {
                    let (ia, ib) = (first + 2 * a + 1, first + 2 * b + 1);
                    if corr[(ia, ib)].abs() > opts.max_correlation {
                        return Some(format!(
                            "widths of components {a} and {b} are correlated at {:.6}",
                            corr[(ia, ib)]
                        ));
                    }
                }
            }
            None
        }
    }
}

/// Robust noise level from second differences in the outer tenth of the
/// spectrum on either side.
pub fn noise_estimate(spectrum: &Spectrum) -> f64 {
    let y = spectrum.signal();
    let n = y.len();
    let k = (n / 10).max(3).min(n);
    let mut d2: Vec<f64> = Vec::new();
    for range in [0..k, n - k..n] {
        let seg = &y[range];
        for w in seg.windows(3) {
            d2.push((w[0] - 2.0 * w[1] + w[2]).abs() / 6.0_f64.sqrt());
        }
    }
    median(&mut d2) / 0.6745
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Half-width at half prominence of the extremum at `idx` in `d`, found by
/// walking outwards on both sides. Falls back to half the grid span.
fn half_prominence_width(delta: &[f64], d: &[f64], idx: usize) -> f64 {
    let half = 0.5 * d[idx];
    let crosses = |i: usize| (d[i] - half) * half.signum() <= 0.0;
    let interp = |inside: usize, outside: usize| {
        let (x0, x1, y0, y1) = (delta[inside], delta[outside], d[inside], d[outside]);
        if y1 == y0 {
            x1
        } else {
            x0 + (half - y0) * (x1 - x0) / (y1 - y0)
        }
    };
    let mut sides = Vec::new();
    if let Some(j) = (idx + 1..d.len()).find(|&j| crosses(j)) {
        sides.push(interp(j - 1, j) - delta[idx]);
    }
    if let Some(j) = (0..idx).rev().find(|&j| crosses(j)) {
        sides.push(delta[idx] - interp(j + 1, j));
    }
    if sides.is_empty() {
        0.5 * (delta[delta.len() - 1] - delta[0])
    } else {
        sides.iter().sum::<f64>() / sides.len() as f64
    }
}

fn argmax_abs(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
        .0
}

/// Widths, center and background shape of a partial model whose
/// amplitudes and background levels are obtained by linear least squares.
#[derive(Debug, Clone)]
struct Profile {
    center: f64,
    widths: Vec<f64>,
    /// `(width, center)` of a Gaussian background.
    gaussian: Option<(f64, f64)>,
}

impl Profile {
    /// Column values at `delta`: components first, then the offset, then the
    /// Gaussian profile if any.
    fn basis(&self, delta: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.widths.iter().map(|w| lorentz_unchecked(*w, delta - self.center)));
        out.push(1.0);
        if let Some((w, c)) = self.gaussian {
            let z = (delta - c) / w;
            out.push((-0.5 * z * z).exp());
        }
    }

    /// Least-squares coefficients and the squared residual norm.
    fn solve(&self, delta: &[f64], y: &[f64]) -> Option<(Vec<f64>, f64)> {
        let m = self.widths.len() + 1 + usize::from(self.gaussian.is_some());
        let mut a = DMatrix::zeros(delta.len(), m);
        let mut row = Vec::with_capacity(m);
        for (i, d) in delta.iter().enumerate() {
            self.basis(*d, &mut row);
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        let b = DVector::from_column_slice(y);
        let svd = a.clone().svd(true, true);
        let tol = svd.singular_values.max() * 1e-13;
        let coef = svd.solve(&b, tol).ok()?;
        let cost = (&a * &coef - &b).norm_squared();
        (cost.is_finite() && coef.iter().all(|v| v.is_finite())).then(|| (coef.as_slice().to_vec(), cost))
    }

    fn cost(&self, delta: &[f64], y: &[f64]) -> f64 {
        self.solve(delta, y).map_or(f64::INFINITY, |(_, c)| c)
    }

    fn residual(&self, delta: &[f64], y: &[f64]) -> Vec<f64> {
        let Some((coef, _)) = self.solve(delta, y) else {
            return y.to_vec();
        };
        let mut row = Vec::new();
        delta
            .iter()
            .zip(y)
            .map(|(d, v)| {
                self.basis(*d, &mut row);
                v - row.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// Bounds and spacing rules for the width search.
#[derive(Debug, Clone, Copy)]
struct WidthLimits {
    min: f64,
    max: f64,
    /// Smallest allowed ratio between two component widths.
    min_ratio: f64,
}

impl WidthLimits {
    fn admissible(&self, w: f64, others: impl Iterator<Item = f64>) -> bool {
        (self.min..=self.max).contains(&w) && others.into_iter().all(|o| (w / o).ln().abs() >= self.min_ratio.ln())
    }
}

/// Coordinate search over log-widths (and the center when it is free),
/// shrinking the search range on every sweep.
fn refine(profile: &mut Profile, delta: &[f64], y: &[f64], limits: WidthLimits, center_free: bool) {
    const STEPS: usize = 25;
    let mut best = profile.cost(delta, y);
    let mut range = 0.6_f64; // decades either side
    for _sweep in 0..6 {
        for i in 0..profile.widths.len() {
            let current = profile.widths[i];
            for k in 0..STEPS {
                let f = 10f64.powf(range * (2.0 * k as f64 / (STEPS - 1) as f64 - 1.0));
                let w = current * f;
                let others = profile.widths.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v);
                if !limits.admissible(w, others) {
                    continue;
                }
                let old = std::mem::replace(&mut profile.widths[i], w);
                let c = profile.cost(delta, y);
                if c < best {
                    best = c;
                } else {
                    profile.widths[i] = old;
                }
            }
        }
        if center_free {
            let reach = 0.5 * profile.widths.iter().copied().fold(f64::INFINITY, f64::min) * range / 0.6;
            let start = profile.center;
            for k in 0..STEPS {
                let c0 = start + reach * (2.0 * k as f64 / (STEPS - 1) as f64 - 1.0);
                let old = std::mem::replace(&mut profile.center, c0);
                let c = profile.cost(delta, y);
                if c < best {
                    best = c;
                } else {
                    profile.center = old;
                }
            }
        }
        range *= 0.5;
    }
}

fn fit_gaussian_background(delta: &[f64], y: &[f64], init: Background, scale: f64, span: f64) -> Background {
    let Background::Gaussian {
        amplitude,
        width,
        center,
        offset,
    } = init
    else {
        return init;
    };
    let rep = lm::minimize(
        |p: &DVector<f64>, r: &mut DVector<f64>| {
            for i in 0..delta.len() {
                let z = (delta[i] - p[3]) / p[2].exp();
                r[i] = p[0] + p[1] * (-0.5 * z * z).exp() - y[i];
            }
        },
        DVector::from_vec(vec![offset, amplitude, width.ln(), center]),
        &[scale, scale, 1.0, span],
        delta.len(),
        &LmOptions::default(),
    );
    let p = &rep.params;
    if p.iter().all(|v| v.is_finite()) {
        Background::Gaussian {
            offset: p[0],
            amplitude: p[1],
            width: p[2].exp(),
            center: p[3],
        }
    } else {
        init
    }
}

/// Builds a starting point for [`fit_composite`] from the data alone.
///
/// The background comes from the spectrum tails (for a Gaussian background,
/// from a fit that excludes the central feature). The first component is
/// seeded with the half-prominence width of the whole feature. Each further
/// component is seeded from the strongest structure left in the residual,
/// after which all widths are refined together. Amplitudes and background
/// levels are always the linear least-squares values for the current widths,
/// which keeps the search away from pairs of cancelling components.
pub fn auto_initial_guess(spectrum: &Spectrum, spec: &ModelSpec) -> Result<CompositeFit> {
    spec.validate()?;
    let n = spectrum.len();
    if n < MIN_POINTS {
        return Err(Error::Data(format!("initial guess needs at least {MIN_POINTS} points, have {n}")));
    }
    let delta = spectrum.delta();
    let y = spectrum.signal();
    let span = delta[n - 1] - delta[0];
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let noise = noise_estimate(spectrum);
    let k = (n / 10).max(2);
    let tail_level = {
        let mut tails: Vec<f64> = y[..k].iter().chain(&y[n - k..]).copied().collect();
        median(&mut tails)
    };

    let mut background = Background::Flat { offset: tail_level };
    if spec.background == BackgroundKind::Gaussian {
        let weights: Vec<f64> = y.iter().map(|v| (v - tail_level).abs()).collect();
        let wsum: f64 = weights.iter().sum();
        background = if wsum > 0.0 {
            let c = delta.iter().zip(&weights).map(|(d, w)| d * w).sum::<f64>() / wsum;
            let var = delta.iter().zip(&weights).map(|(d, w)| (d - c).powi(2) * w).sum::<f64>() / wsum;
            let ic = delta.partition_point(|d| *d < c).min(n - 1);
            let rough = Background::Gaussian {
                amplitude: y[ic] - tail_level,
                width: var.sqrt().max(span * 1e-3),
                center: c,
                offset: tail_level,
            };
            fit_gaussian_background(delta, y, rough, scale, span)
        } else {
            Background::Gaussian {
                amplitude: 0.0,
                width: span,
                center: 0.5 * (delta[0] + delta[n - 1]),
                offset: tail_level,
            }
        };
    }

    let detrended = |bg: &Background| -> Vec<f64> { delta.iter().zip(y).map(|(d, v)| v - bg.eval(*d)).collect() };
    let mut d = detrended(&background);
    let threshold = (5.0 * noise).max(1e-9 * scale);
    let peak = d[argmax_abs(&d)].abs();
    if !(peak > threshold) {
        return Err(Error::Guess(format!("no feature above the noise (peak {peak:.3e}, noise {noise:.3e})")));
    }

    if let Background::Gaussian { .. } = background {
        // refit the background with the central feature masked out
        let i = argmax_abs(&d);
        let hw = half_prominence_width(delta, &d, i);
        let keep: Vec<usize> = (0..n).filter(|&j| (delta[j] - delta[i]).abs() > 3.0 * hw).collect();
        if keep.len() >= 8 {
            let xs: Vec<f64> = keep.iter().map(|&j| delta[j]).collect();
            let ys: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
            background = fit_gaussian_background(&xs, &ys, background, scale, span);
            d = detrended(&background);
        }
    }

    let spacing = delta.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let limits = WidthLimits {
        min: 0.5 * spacing,
        max: 2.0 * span,
        min_ratio: 1.15,
    };
    let mut profile = Profile {
        center: if spec.center_free { delta[argmax_abs(&d)] } else { spec.center },
        widths: Vec::new(),
        gaussian: match background {
            Background::Gaussian { width, center, .. } => Some((width, center)),
            Background::Flat { .. } => None,
        },
    };
    for _ in 0..spec.components {
        let r = profile.residual(delta, y);
        let i = argmax_abs(&r);
        let mut seed = half_prominence_width(delta, &r, i).clamp(limits.min, limits.max);
        let mut tries = 0;
        while !limits.admissible(seed, profile.widths.iter().copied()) && tries < 40 {
            seed = if tries % 2 == 0 { seed * 0.5 } else { seed * 3.1 };
            seed = seed.clamp(limits.min, limits.max);
            tries += 1;
        }
        profile.widths.push(seed);
        refine(&mut profile, delta, y, limits, spec.center_free);
    }

    let (coef, cost) = profile
        .solve(delta, y)
        .ok_or_else(|| Error::Guess("linear amplitude solve failed".into()))?;
    let nc = profile.widths.len();
    let mut components: Vec<Lorentzian> = profile
        .widths
        .iter()
        .zip(&coef)
        .map(|(w, a)| Lorentzian {
            amplitude: *a,
            half_width: *w,
        })
        .collect();
    components.sort_by(|a, b| a.half_width.total_cmp(&b.half_width));
    let background = match background {
        Background::Flat { .. } => Background::Flat { offset: coef[nc] },
        Background::Gaussian { width, center, .. } => Background::Gaussian {
            amplitude: coef[nc + 1],
            width,
            center,
            offset: coef[nc],
        },
    };

    let mut guess = CompositeFit::from_parts(components, profile.center, spec.center_free, background);
    guess.residual_norm = cost.sqrt();
    guess.status = "auto guess".into();
    Ok(guess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{linspace, SpectrumSource};
    use crate::trajectory::Tier;

    fn spectrum_of(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Spectrum {
        let d = linspace(lo, hi, n);
        let s = d.iter().map(|x| f(*x)).collect();
        Spectrum::new(d, s, Tier::Analytic, SpectrumSource::Synthetic).unwrap()
    }

    fn truth() -> CompositeFit {
        CompositeFit::from_parts(
            vec![
                Lorentzian {
                    amplitude: 0.3,
                    half_width: 0.2,
                },
                Lorentzian {
                    amplitude: -0.6,
                    half_width: 1.5,
                },
            ],
            0.0,
            false,
            Background::Flat { offset: 1.0 },
        )
    }

    #[test]
    fn eval_matches_formula() {
        let t = truth();
        let x = 0.7;
        let want = 1.0 + 0.3 * 0.04 / (0.49 + 0.04) - 0.6 * 2.25 / (0.49 + 2.25);
        assert!((t.eval(x) - want).abs() < 1e-15);
        let g = Background::Gaussian {
            amplitude: 2.0,
            width: 0.5,
            center: 1.0,
            offset: 0.1,
        };
        assert!((g.eval(1.5) - (0.1 + 2.0 * (-0.5_f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn noiseless_round_trip() {
        let t = truth();
        let s = spectrum_of(|x| t.eval(x), -8.0, 8.0, 161);
        let mut guess = t.clone();
        guess.components[0].half_width *= 1.3;
        guess.components[1].amplitude *= 0.8;
        if let Background::Flat { offset } = &mut guess.background {
            *offset *= 1.05;
        }
        let fit = fit_composite(&s, &guess, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{}", fit.status);
        for (a, b) in fit.sorted_components().iter().zip(t.sorted_components()) {
            assert!((a.half_width / b.half_width - 1.0).abs() < 1e-8);
            assert!((a.amplitude / b.amplitude - 1.0).abs() < 1e-8);
        }
        assert!(fit.residual_norm < 1e-10);
        assert!(fit.identifiability_warning.is_none());
    }

    #[test]
    fn auto_guess_single_lorentzian_within_factor_two() {
        for (a, w, bg) in [(-0.4, 0.5, 2.0), (1.0, 2.0, 0.0), (0.05, 0.1, 1.0)] {
            let s = spectrum_of(|x| bg + a * w * w / (x * x + w * w), -10.0, 10.0, 201);
            let spec = ModelSpec {
                components: 1,
                ..ModelSpec::theory()
            };
            let g = auto_initial_guess(&s, &spec).unwrap();
            let ratio = g.components[0].half_width / w;
            assert!((0.5..=2.0).contains(&ratio), "w = {w}, guess ratio {ratio}");
        }
    }

    #[test]
    fn flat_spectrum_is_featureless() {
        let s = spectrum_of(|_| 0.7, -5.0, 5.0, 50);
        assert!(matches!(auto_initial_guess(&s, &ModelSpec::theory()), Err(Error::Guess(_))));
        let noisy = s.with_noise(0.01, 3).unwrap();
        assert!(matches!(auto_initial_guess(&noisy, &ModelSpec::theory()), Err(Error::Guess(_))));
    }

    #[test]
    fn too_few_points_rejected() {
        let t = truth();
        let s = spectrum_of(|x| t.eval(x), -1.0, 1.0, 11);
        assert!(matches!(fit_composite(&s, &t, &FitOptions::default()), Err(Error::Data(_))));
    }

    #[test]
    fn bad_guess_rejected() {
        let t = truth();
        let s = spectrum_of(|x| t.eval(x), -5.0, 5.0, 40);
        let mut g = t.clone();
        g.components[0].half_width = -1.0;
        assert!(fit_composite(&s, &g, &FitOptions::default()).unwrap_err().is_config_error());
        let mut g = t.clone();
        g.components[1].amplitude = f64::NAN;
        assert!(fit_composite(&s, &g, &FitOptions::default()).is_err());
    }

    #[test]
    fn equal_width_start_separates_or_flags() {
        let t = truth();
        let s = spectrum_of(|x| t.eval(x), -8.0, 8.0, 161);
        let mut g = t.clone();
        g.components[0].half_width = 0.7;
        g.components[1].half_width = 0.7;
        let fit = fit_composite(&s, &g, &FitOptions::default()).unwrap();
        let finite = fit.components.iter().all(|c| c.amplitude.is_finite() && c.half_width.is_finite())
            && fit.residual_norm.is_finite()
            && fit.std_errors.iter().all(|e| e.std_error.is_none_or(|v| v.is_finite() && v >= 0.0));
        assert!(finite);
        let sorted = fit.sorted_components();
        let separated = (sorted[0].half_width / 0.2 - 1.0).abs() < 1e-6 && (sorted[1].half_width / 1.5 - 1.0).abs() < 1e-6;
        assert!(separated || fit.identifiability_warning.is_some(), "{fit:?}");

        // identical components stay identical under a symmetric update
        let mut g = t.clone();
        g.components[0] = Lorentzian {
            amplitude: -0.15,
            half_width: 0.7,
        };
        g.components[1] = g.components[0];
        let fit = fit_composite(&s, &g, &FitOptions::default()).unwrap();
        assert!(fit.residual_norm.is_finite());
        let sorted = fit.sorted_components();
        let separated = (sorted[0].half_width / 0.2 - 1.0).abs() < 1e-6;
        assert!(separated || fit.identifiability_warning.is_some());
    }

    #[test]
    fn iteration_limit_is_not_an_error() {
        let t = truth();
        let s = spectrum_of(|x| t.eval(x), -8.0, 8.0, 161);
        let mut g = t.clone();
        g.components[0].half_width = 0.05;
        g.components[1].half_width = 5.0;
        let opts = FitOptions {
            lm: LmOptions {
                max_iterations: 2,
                ..LmOptions::default()
            },
            ..FitOptions::default()
        };
        let fit = fit_composite(&s, &g, &opts).unwrap();
        assert!(!fit.converged);
        assert!(fit.status.contains("iteration limit"));
    }

    #[test]
    fn three_components_on_gaussian_background() {
        let t = CompositeFit::from_parts(
            vec![
                Lorentzian {
                    amplitude: 0.08,
                    half_width: 0.15,
                },
                Lorentzian {
                    amplitude: -0.25,
                    half_width: 0.8,
                },
                Lorentzian {
                    amplitude: -0.3,
                    half_width: 4.0,
                },
            ],
            0.3,
            true,
            Background::Gaussian {
                amplitude: -0.4,
                width: 15.0,
                center: -1.0,
                offset: 2.0,
            },
        );
        let s = spectrum_of(|x| t.eval(x), -40.0, 40.0, 1601);
        let g = auto_initial_guess(&s, &ModelSpec::experimental()).unwrap();
        let fit = fit_composite(&s, &g, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{}", fit.status);
        assert!(fit.residual_norm < 1e-8, "{fit:?}");
        for (a, b) in fit.sorted_components().iter().zip(t.sorted_components()) {
            assert!((a.half_width / b.half_width - 1.0).abs() < 1e-6, "{a:?} {b:?}");
        }
        assert!((fit.center - 0.3).abs() < 1e-8);
    }

    #[test]
    fn resonance_shape_round_trip() {
        let shape = ResonanceShape {
            background: 0.5,
            a0: 0.1,
            a1: -0.4,
            w0: 0.2,
            w1: 3.0,
            source: ShapeSource::Analytic,
        };
        let f = CompositeFit::from_resonance_shape(&shape);
        for x in [-3.0, 0.0, 0.4, 9.0] {
            assert!((f.eval(x) - shape.signal(x)).abs() < 1e-15);
        }
        let back = f.to_resonance_shape().unwrap();
        assert_eq!(back.a0, 0.1);
        assert_eq!(back.w1, 3.0);
        assert_eq!(back.source, ShapeSource::Fitted);
    }

    #[test]
    fn std_errors_are_reported_for_noisy_data() {
        let t = truth();
        let s = spectrum_of(|x| t.eval(x), -8.0, 8.0, 161).with_noise(0.005, 11).unwrap();
        let fit = fit_composite(&s, &t, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.std_errors.len(), 5);
        for e in &fit.std_errors {
            let v = e.std_error.unwrap();
            assert!(v > 0.0 && v < 0.1, "{e:?}");
        }
    }

    #[test]
    fn guess_json_round_trip() {
        let t = truth();
        let text = serde_json::to_string(&t).unwrap();
        let back: CompositeFit = serde_json::from_str(&text).unwrap();
        assert_eq!(back.components, t.components);
        let minimal = r#"{"components":[{"amplitude":1,"half_width":2}],"center":0,"background":{"kind":"flat","offset":0.5}}"#;
        let g: CompositeFit = serde_json::from_str(minimal).unwrap();
        assert_eq!(g.spec().components, 1);
        assert!(!g.center_free);
    }
}
