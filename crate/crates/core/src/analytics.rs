//! Closed-form composite resonance of the first-harmonic approximation.
//!
//! Keeping only the DC and `e^{±iδt}` parts of the reduced populations, the
//! period-averaged population difference becomes
//!
//! ```text
//! n̄₁ − n̄₀ = B · (1 + A₀ L_{w₀}(δ) + A₁ L_{w₁}(δ)),   B = Δn⁰ / (1 + 2S/(1−ε²))
//! ```
//!
//! with `L_w(δ) = w²/(δ² + w²)`. [`first_harmonic_solve`] obtains the same
//! quantity by solving the balance equations numerically, which is how the
//! closed forms are checked.

use nalgebra::{Matrix6, Vector6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lorentz_unchecked, ReducedParams};

/// The auxiliary quantities `(τ, μ, ν)`, dimensionless.
pub fn tau_mu_nu(params: &ReducedParams) -> (f64, f64, f64) {
    let s = params.saturation();
    let e = params.epsilon();
    let r = s.hypot(e);
    let l1 = 1.0 + s + r;
    let l0 = 1.0 + s - r;
    let c0 = 1.0 + 2.0 * s - e * e;
    let shift = s * s * (1.0 + 2.0 * s) / c0;
    let tau = 0.5 * (l1 * l1 + l0 * l0) - shift;
    // (λ₁² − λ₀²)/2 = 2(1+S)r, written without the cancellation
    let mu = 2.0 * (1.0 + s) * r - shift;
    let nu = 4.0 * s * s * (1.0 + s) * e * e / ((r + s) * (r + 1.0 + s));
    (tau, mu, nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeSource {
    Analytic,
    Fitted,
}

/// Background level and the two Lorentzian components of the resonance.
/// Widths are half-widths in rate units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceShape {
    pub background: f64,
    pub a0: f64,
    pub a1: f64,
    pub w0: f64,
    pub w1: f64,
    pub source: ShapeSource,
}

impl ResonanceShape {
    /// Lineshape at beat detuning `delta`.
    pub fn signal(&self, delta: f64) -> f64 {
        self.background * (1.0 + self.a0 * lorentz_unchecked(self.w0, delta) + self.a1 * lorentz_unchecked(self.w1, delta))
    }
}

pub fn resonance_shape(params: &ReducedParams) -> Result<ResonanceShape> {
    let s = params.saturation();
    let e = params.epsilon();
    let gamma = params.gamma();
    let c0 = 1.0 + 2.0 * s - e * e;
    let background = params.delta_n0() / (1.0 + 2.0 * s / (1.0 - e * e));
    let (tau, mu, nu) = tau_mu_nu(params);
    let q = (mu * mu + nu).sqrt();
    // w₀²w₁² = τ² − μ² − ν = c₀² − 2S², which keeps w₀² free of cancellation
    let product = c0 * c0 - 2.0 * s * s;
    let w1_sq = tau + q;
    let w0_sq = product / w1_sq;
    if !(w0_sq > 0.0) || !(w1_sq > 0.0) || !w0_sq.is_finite() {
        return Err(Error::WidthDomain { tau, mu, nu });
    }
    let (a0, a1) = if q == 0.0 || s == 0.0 {
        (0.0, 0.0)
    } else {
        let base = (1.0 + 2.0 * s) / c0;
        (s * s / q * (1.0 / w0_sq - base), -s * s / q * (1.0 / w1_sq - base))
    };
    Ok(ResonanceShape {
        background,
        a0,
        a1,
        w0: gamma * w0_sq.sqrt(),
        w1: gamma * w1_sq.sqrt(),
        source: ShapeSource::Analytic,
    })
}

/// Strong-field approximations `(w₀, w₁) ≈ γ(λ₀, √(λ₁² − 2S²))`.
pub fn strong_field_widths(params: &ReducedParams) -> Result<(f64, f64)> {
    let s = params.saturation();
    let e = params.epsilon();
    if s < 1.0 {
        log::warn!("strong-field widths requested at S = {s} < 1");
    }
    let r = s.hypot(e);
    let l1 = 1.0 + s + r;
    let l0 = (1.0 + 2.0 * s - e * e) / l1;
    let arg = l1 * l1 - 2.0 * s * s;
    if !(arg > 0.0) {
        let (tau, mu, nu) = tau_mu_nu(params);
        return Err(Error::WidthDomain { tau, mu, nu });
    }
    Ok((params.gamma() * l0, params.gamma() * arg.sqrt()))
}

/// Period-averaged population difference predicted at beat `delta`.
pub fn fluorescence_signal(delta: f64, params: &ReducedParams) -> Result<f64> {
    Ok(resonance_shape(params)?.signal(delta))
}

/// First-harmonic populations `n_i(t) = α_i + β_i cos(δt + φ_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstHarmonic {
    pub alpha1: f64,
    pub alpha0: f64,
    pub beta1: f64,
    pub beta0: f64,
    pub phi1: f64,
    pub phi0: f64,
}

impl FirstHarmonic {
    pub fn difference(&self) -> f64 {
        self.alpha1 - self.alpha0
    }

    /// Complex amplitudes `c_i = β_i e^{iφ_i}`.
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        (
            Complex64::from_polar(self.beta1, self.phi1),
            Complex64::from_polar(self.beta0, self.phi0),
        )
    }
}

/// Solves the balance equations of the first-harmonic ansatz numerically.
///
/// With `x = δ/γ`, `D = α₁ − α₀` and `c = c₁ − c₀`, substituting the ansatz
/// into the reduced equations and keeping the DC and `e^{iδt}` parts gives
///
/// ```text
/// 0      = −(1+ε)(α₁ − n₁⁰) − S(D + Re c / 2)
/// 0      = −(1−ε)(α₀ − n₀⁰) + S(D + Re c / 2)
/// ix c₁  = −(1+ε) c₁ − S(c + D)
/// ix c₀  = −(1−ε) c₀ + S(c + D)
/// ```
///
/// which is a 6×6 real linear system in `(α₁, α₀, Re c₁, Im c₁, Re c₀, Im c₀)`.
pub fn first_harmonic_solve(params: &ReducedParams, delta: f64) -> Result<FirstHarmonic> {
    let s = params.saturation();
    let e = params.epsilon();
    let x = delta / params.gamma();
    let (g1, g0) = (1.0 + e, 1.0 - e);
    // unknown order: α₁, α₀, u₁ = Re c₁, v₁ = Im c₁, u₀, v₀
    #[rustfmt::skip]
    let a = Matrix6::new(
        // DC rows
        g1 + s,  -s,      0.5 * s,  0.0,      -0.5 * s, 0.0,
        -s,      g0 + s, -0.5 * s,  0.0,       0.5 * s, 0.0,
        // Re and Im of the c₁ row: (1+ε+S+ix)c₁ − S c₀ + S D = 0
        s,       -s,      g1 + s,   -x,       -s,       0.0,
        0.0,     0.0,     x,        g1 + s,   0.0,      -s,
        // c₀ row: (1−ε+S+ix)c₀ − S c₁ − S D = 0
        -s,      s,       -s,       0.0,      g0 + s,   -x,
        0.0,     0.0,     0.0,      -s,       x,        g0 + s,
    );
    let b = Vector6::new(g1 * params.n1_eq(), g0 * params.n0_eq(), 0.0, 0.0, 0.0, 0.0);
    let lu = a.lu();
    let sol = lu.solve(&b).ok_or_else(|| {
        let d = lu.u().diagonal().map(f64::abs);
        Error::Singular {
            condition_estimate: d.max() / d.min(),
        }
    })?;
    let c1 = Complex64::new(sol[2], sol[3]);
    let c0 = Complex64::new(sol[4], sol[5]);
    Ok(FirstHarmonic {
        alpha1: sol[0],
        alpha0: sol[1],
        beta1: c1.norm(),
        beta0: c0.norm(),
        phi1: c1.arg(),
        phi0: c0.arg(),
    })
}
