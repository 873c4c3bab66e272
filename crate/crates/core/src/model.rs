//! Physical parameters of the driven two-level system and the small helpers
//! shared by every tier (relaxation rates, Lorentz factor, saturation).
//!
//! Rates and frequencies are angular frequencies in one consistent unit.
//! Setting `gamma = 1` measures everything in units of the mean population
//! relaxation rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Normalized Lorentz factor `a² / (x² + a²)`.
pub fn lorentz(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::param("a", format!("half-width must be positive, got {a}")));
    }
    Ok(lorentz_unchecked(a, x))
}

#[inline]
pub(crate) fn lorentz_unchecked(a: f64, x: f64) -> f64 {
    let a2 = a * a;
    a2 / (x * x + a2)
}

/// Validated parameter set for the full (microscopic) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    gamma: f64,
    epsilon: f64,
    #[serde(rename = "Gamma")]
    gamma_coh: f64,
    omega0: f64,
    omega1: f64,
    omega2: f64,
    #[serde(rename = "Omega1")]
    rabi1: f64,
    #[serde(rename = "Omega2")]
    rabi2: f64,
    n1_eq: f64,
    n0_eq: f64,
}

/// Builder for [`SystemParams`]. Defaults: `gamma = 1`, `epsilon = 0`,
/// `Gamma = 10`, all frequencies zero, no drive, `n1_eq = 1`, `n0_eq = 0`.
#[derive(Debug, Clone, Copy)]
pub struct SystemParamsBuilder {
    p: SystemParams,
}

impl Default for SystemParamsBuilder {
    fn default() -> Self {
        Self {
            p: SystemParams {
                gamma: 1.0,
                epsilon: 0.0,
                gamma_coh: 10.0,
                omega0: 0.0,
                omega1: 0.0,
                omega2: 0.0,
                rabi1: 0.0,
                rabi2: 0.0,
                n1_eq: 1.0,
                n0_eq: 0.0,
            },
        }
    }
}

impl SystemParamsBuilder {
    pub fn gamma(mut self, v: f64) -> Self {
        self.p.gamma = v;
        self
    }
    pub fn epsilon(mut self, v: f64) -> Self {
        self.p.epsilon = v;
        self
    }
    pub fn gamma_coh(mut self, v: f64) -> Self {
        self.p.gamma_coh = v;
        self
    }
    pub fn omega0(mut self, v: f64) -> Self {
        self.p.omega0 = v;
        self
    }
    pub fn omega1(mut self, v: f64) -> Self {
        self.p.omega1 = v;
        self
    }
    pub fn omega2(mut self, v: f64) -> Self {
        self.p.omega2 = v;
        self
    }
    /// Sets both Rabi frequencies.
    pub fn rabi(mut self, v: f64) -> Self {
        self.p.rabi1 = v;
        self.p.rabi2 = v;
        self
    }
    pub fn rabi1(mut self, v: f64) -> Self {
        self.p.rabi1 = v;
        self
    }
    pub fn rabi2(mut self, v: f64) -> Self {
        self.p.rabi2 = v;
        self
    }
    pub fn equilibrium(mut self, n1_eq: f64, n0_eq: f64) -> Self {
        self.p.n1_eq = n1_eq;
        self.p.n0_eq = n0_eq;
        self
    }
    pub fn build(self) -> Result<SystemParams> {
        self.p.validate()?;
        Ok(self.p)
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {v}")))
    }
}

pub(crate) fn validate_relaxation(gamma: f64, epsilon: f64) -> Result<()> {
    check_finite("gamma", gamma)?;
    check_finite("epsilon", epsilon)?;
    if gamma <= 0.0 {
        return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
    }
    if epsilon.abs() >= 1.0 {
        return Err(Error::param(
            "epsilon",
            format!("|epsilon| must be below 1 so both population rates stay positive, got {epsilon}"),
        ));
    }
    Ok(())
}

pub(crate) fn validate_equilibrium(n1_eq: f64, n0_eq: f64) -> Result<()> {
    check_finite("n1_eq", n1_eq)?;
    check_finite("n0_eq", n0_eq)?;
    for (name, v) in [("n1_eq", n1_eq), ("n0_eq", n0_eq)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
        }
    }
    if (n1_eq + n0_eq - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::param(
            "n1_eq",
            format!("equilibrium populations must sum to 1, got {}", n1_eq + n0_eq),
        ));
    }
    Ok(())
}

impl SystemParams {
    pub fn builder() -> SystemParamsBuilder {
        SystemParamsBuilder::default()
    }

    fn validate(&self) -> Result<()> {
        validate_relaxation(self.gamma, self.epsilon)?;
        check_finite("Gamma", self.gamma_coh)?;
        if self.gamma_coh <= 0.0 {
            return Err(Error::param(
                "Gamma",
                format!("coherence relaxation rate must be positive, got {}", self.gamma_coh),
            ));
        }
        check_finite("omega0", self.omega0)?;
        check_finite("omega1", self.omega1)?;
        check_finite("omega2", self.omega2)?;
        check_finite("Omega1", self.rabi1)?;
        check_finite("Omega2", self.rabi2)?;
        validate_equilibrium(self.n1_eq, self.n0_eq)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    /// Coherence relaxation rate Γ.
    pub fn gamma_coh(&self) -> f64 {
        self.gamma_coh
    }
    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn omega1(&self) -> f64 {
        self.omega1
    }
    pub fn omega2(&self) -> f64 {
        self.omega2
    }
    pub fn rabi1(&self) -> f64 {
        self.rabi1
    }
    pub fn rabi2(&self) -> f64 {
        self.rabi2
    }
    pub fn n1_eq(&self) -> f64 {
        self.n1_eq
    }
    pub fn n0_eq(&self) -> f64 {
        self.n0_eq
    }

    /// Beat frequency δ = ω₁ − ω₂.
    pub fn beat(&self) -> f64 {
        self.omega1 - self.omega2
    }

    /// Detuning of the first field from the resonance, ω = ω₁ − ω₀.
    pub fn detuning(&self) -> f64 {
        self.omega1 - self.omega0
    }

    pub fn detuning2(&self) -> f64 {
        self.omega2 - self.omega0
    }

    /// Population relaxation rates (γ₁, γ₀) = (γ(1+ε), γ(1−ε)).
    pub fn relaxation_rates(&self) -> (f64, f64) {
        (self.gamma * (1.0 + self.epsilon), self.gamma * (1.0 - self.epsilon))
    }

    pub fn equal_rabi(&self) -> bool {
        let scale = self.rabi1.abs().max(self.rabi2.abs());
        (self.rabi1 - self.rabi2).abs() <= 1e-12 * scale
    }

    /// Saturation parameter of the reduced population equations,
    /// `S = Ω²/(2γΓ) · (L_Γ(ω₁−ω₀) + L_Γ(ω₂−ω₀))`.
    ///
    /// This is the coefficient that multiplies `(1 + cos δt)(n₁ − n₀)` once
    /// the coherences are eliminated adiabatically from the master equation.
    pub fn saturation_parameter(&self) -> Result<f64> {
        if !self.equal_rabi() {
            return Err(Error::Unsupported(format!(
                "saturation parameter needs equal Rabi frequencies, got {} and {}",
                self.rabi1, self.rabi2
            )));
        }
        let g = self.gamma_coh;
        let lsum = lorentz_unchecked(g, self.detuning()) + lorentz_unchecked(g, self.detuning2());
        Ok(self.rabi1 * self.rabi1 / (2.0 * self.gamma * g) * lsum)
    }

    /// Same parameters with ω₁ moved so that ω₁ − ω₂ = `delta`.
    pub fn with_beat(&self, delta: f64) -> Result<Self> {
        check_finite("delta", delta)?;
        Ok(Self {
            omega1: self.omega2 + delta,
            ..*self
        })
    }

    pub fn with_rabi(&self, rabi: f64) -> Result<Self> {
        check_finite("Omega", rabi)?;
        Ok(Self {
            rabi1: rabi,
            rabi2: rabi,
            ..*self
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let p = Self { epsilon, ..*self };
        p.validate()?;
        Ok(p)
    }

    /// Rescales the (equal) Rabi frequencies so that the saturation
    /// parameter at the current frequencies equals `s`.
    pub fn with_saturation(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::param("S", format!("must be non-negative, got {s}")));
        }
        let unit = self.with_rabi(1.0)?.saturation_parameter()?;
        self.with_rabi((s / unit).sqrt())
    }

    /// Describes why the adiabatic elimination behind the reduced tiers is
    /// questionable here, if it is (δ > Γ/3 or Ω > Γ).
    pub fn adiabatic_advisory(&self) -> Option<String> {
        let g = self.gamma_coh;
        let omega = self.rabi1.abs().max(self.rabi2.abs());
        let mut issues = Vec::new();
        if self.beat().abs() > g / 3.0 {
            issues.push(format!("|delta| = {} exceeds Gamma/3 = {}", self.beat().abs(), g / 3.0));
        }
        if omega > g {
            issues.push(format!("Omega = {omega} exceeds Gamma = {g}"));
        }
        (!issues.is_empty()).then(|| format!("adiabatic approximation is questionable: {}", issues.join("; ")))
    }

    /// Reduced-model view of these parameters (requires Ω₁ = Ω₂).
    pub fn reduced(&self) -> Result<ReducedParams> {
        Ok(ReducedParams {
            gamma: self.gamma,
            epsilon: self.epsilon,
            saturation: self.saturation_parameter()?,
            beat: self.beat(),
            n1_eq: self.n1_eq,
            n0_eq: self.n0_eq,
        })
    }
}

/// JSON configuration schema. A single `Omega` fans out to both fields;
/// `Omega1`/`Omega2` may be given instead for the full model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(rename = "Gamma")]
    pub gamma_coh: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub omega2: f64,
    #[serde(rename = "Omega", default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<f64>,
    #[serde(rename = "Omega1", default, skip_serializing_if = "Option::is_none")]
    pub rabi1: Option<f64>,
    #[serde(rename = "Omega2", default, skip_serializing_if = "Option::is_none")]
    pub rabi2: Option<f64>,
    /// Saturation parameter in place of a Rabi frequency; the equal Rabi
    /// frequency is derived from it at the configured detunings.
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
    pub n1_eq: f64,
    pub n0_eq: f64,
}

impl TryFrom<ParamsConfig> for SystemParams {
    type Error = Error;

    fn try_from(c: ParamsConfig) -> Result<Self> {
        let (r1, r2) = match (c.rabi, c.rabi1, c.rabi2, c.saturation) {
            (Some(r), None, None, None) => (r, r),
            (None, Some(a), Some(b), None) => (a, b),
            (None, None, None, Some(_)) => (0.0, 0.0),
            (None, None, None, None) => {
                return Err(Error::param("Omega", "missing Rabi frequency or `S`"));
            }
            _ => {
                return Err(Error::param(
                    "Omega",
                    "give exactly one of `Omega`, both `Omega1` and `Omega2`, or `S`",
                ));
            }
        };
        let p = SystemParams::builder()
            .gamma(c.gamma)
            .epsilon(c.epsilon)
            .gamma_coh(c.gamma_coh)
            .omega0(c.omega0)
            .omega1(c.omega1)
            .omega2(c.omega2)
            .rabi1(r1)
            .rabi2(r2)
            .equilibrium(c.n1_eq, c.n0_eq)
            .build()?;
        match c.saturation {
            Some(sat) => p.with_saturation(sat),
            None => Ok(p),
        }
    }
}

impl From<&SystemParams> for ParamsConfig {
    fn from(p: &SystemParams) -> Self {
        let (rabi, rabi1, rabi2) = if p.rabi1 == p.rabi2 {
            (Some(p.rabi1), None, None)
        } else {
            (None, Some(p.rabi1), Some(p.rabi2))
        };
        ParamsConfig {
            gamma: p.gamma,
            epsilon: p.epsilon,
            gamma_coh: p.gamma_coh,
            omega0: p.omega0,
            omega1: p.omega1,
            omega2: p.omega2,
            rabi,
            rabi1,
            rabi2,
            saturation: None,
            n1_eq: p.n1_eq,
            n0_eq: p.n0_eq,
        }
    }
}

impl SystemParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ParamsConfig = serde_json::from_str(text)?;
        cfg.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ParamsConfig::from(self)).expect("plain struct serializes")
    }
}

/// Parameters of the reduced (population-only) model: everything the
/// adiabatic, dressed-state and first-harmonic tiers depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    gamma: f64,
    epsilon: f64,
    saturation: f64,
    beat: f64,
    n1_eq: f64,
    n0_eq: f64,
}

impl ReducedParams {
    pub fn new(gamma: f64, epsilon: f64, saturation: f64, beat: f64, n1_eq: f64, n0_eq: f64) -> Result<Self> {
        validate_relaxation(gamma, epsilon)?;
        if !(saturation >= 0.0) || !saturation.is_finite() {
            return Err(Error::param("S", format!("must be non-negative and finite, got {saturation}")));
        }
        check_finite("delta", beat)?;
        validate_equilibrium(n1_eq, n0_eq)?;
        Ok(Self {
            gamma,
            epsilon,
            saturation,
            beat,
            n1_eq,
            n0_eq,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn saturation(&self) -> f64 {
        self.saturation
    }
    pub fn beat(&self) -> f64 {
        self.beat
    }
    pub fn n1_eq(&self) -> f64 {
        self.n1_eq
    }
    pub fn n0_eq(&self) -> f64 {
        self.n0_eq
    }
    /// Equilibrium population difference Δn⁰ = n₁⁰ − n₀⁰.
    pub fn delta_n0(&self) -> f64 {
        self.n1_eq - self.n0_eq
    }

    pub fn relaxation_rates(&self) -> (f64, f64) {
        (self.gamma * (1.0 + self.epsilon), self.gamma * (1.0 - self.epsilon))
    }

    pub fn with_saturation(&self, s: f64) -> Result<Self> {
        Self::new(self.gamma, self.epsilon, s, self.beat, self.n1_eq, self.n0_eq)
    }

    pub fn with_beat(&self, delta: f64) -> Result<Self> {
        Self::new(self.gamma, self.epsilon, self.saturation, delta, self.n1_eq, self.n0_eq)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.gamma, epsilon, self.saturation, self.beat, self.n1_eq, self.n0_eq)
    }
}

impl TryFrom<&SystemParams> for ReducedParams {
    type Error = Error;
    fn try_from(p: &SystemParams) -> Result<Self> {
        p.reduced()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adiabatic_advisory_thresholds() {
        let p = SystemParams::builder().gamma_coh(30.0).rabi(5.0).omega1(5.0).build().unwrap();
        assert!(p.adiabatic_advisory().is_none());
        assert!(p.with_beat(11.0).unwrap().adiabatic_advisory().is_some());
        assert!(p.with_rabi(31.0).unwrap().adiabatic_advisory().is_some());
    }

    #[test]
    fn relaxation_rates_examples() {
        let p = SystemParams::builder().build().unwrap();
        assert_eq!(p.relaxation_rates(), (1.0, 1.0));
        let p = SystemParams::builder().epsilon(0.85).build().unwrap();
        let (g1, g0) = p.relaxation_rates();
        assert!((g1 - 1.85).abs() < 1e-15 && (g0 - 0.15).abs() < 1e-15);
        let p = SystemParams::builder().gamma(0.11).epsilon(0.85).build().unwrap();
        let (g1, g0) = p.relaxation_rates();
        assert!((g1 - 0.2035).abs() < 1e-15 && (g0 - 0.0165).abs() < 1e-15);
    }

    #[test]
    fn lorentz_examples() {
        assert_eq!(lorentz(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(lorentz(2.0, 2.0).unwrap(), 0.5);
        assert!((lorentz(1.0, 3.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(lorentz(0.0, 1.0).is_err());
        assert!(lorentz(-1.0, 1.0).is_err());
    }

    #[test]
    fn saturation_examples() {
        let p = SystemParams::builder().gamma_coh(10.0).build().unwrap();
        assert_eq!(p.saturation_parameter().unwrap(), 0.0);
        // both Lorentz factors equal 1
        let p = SystemParams::builder().gamma_coh(10.0).rabi(1.0).build().unwrap();
        assert!((p.saturation_parameter().unwrap() - 0.1).abs() < 1e-15);
        // both Lorentz factors equal 1/2
        let p = SystemParams::builder()
            .gamma_coh(1.0)
            .rabi(1.0)
            .omega1(1.0)
            .omega2(1.0)
            .build()
            .unwrap();
        assert!((p.saturation_parameter().unwrap() - 0.5).abs() < 1e-15);
        let p = SystemParams::builder().rabi1(1.0).rabi2(2.0).build().unwrap();
        assert!(matches!(p.saturation_parameter(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn with_saturation_hits_target() {
        let p = SystemParams::builder()
            .gamma_coh(100.0)
            .omega1(3.0)
            .build()
            .unwrap()
            .with_saturation(2.5)
            .unwrap();
        assert!((p.saturation_parameter().unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn construction_rejects_invalid() {
        assert!(SystemParams::builder().gamma(0.0).build().is_err());
        assert!(SystemParams::builder().gamma_coh(-1.0).build().is_err());
        assert!(SystemParams::builder().epsilon(1.0).build().is_err());
        assert!(SystemParams::builder().epsilon(-1.2).build().is_err());
        assert!(SystemParams::builder().equilibrium(0.7, 0.4).build().is_err());
        assert!(SystemParams::builder().equilibrium(1.2, -0.2).build().is_err());
        assert!(SystemParams::builder().omega1(f64::NAN).build().is_err());
    }

    #[test]
    fn json_single_omega_fans_out() {
        let text = r#"{"gamma":1,"epsilon":0.5,"Gamma":100,"omega0":0,"omega1":2,"omega2":0,
                       "Omega":5,"n1_eq":0.7,"n0_eq":0.3}"#;
        let p = SystemParams::from_json(text).unwrap();
        assert_eq!(p.rabi1(), 5.0);
        assert_eq!(p.rabi2(), 5.0);
        assert_eq!(p.beat(), 2.0);
        let back = SystemParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_rejects_ambiguous_rabi() {
        let text = r#"{"gamma":1,"epsilon":0,"Gamma":10,"omega0":0,"omega1":0,"omega2":0,
                       "Omega":1,"Omega1":1,"n1_eq":1,"n0_eq":0}"#;
        assert!(SystemParams::from_json(text).is_err());
        let text = r#"{"gamma":1,"epsilon":0,"Gamma":10,"omega0":0,"omega1":0,"omega2":0,
                       "Omega":1,"n1_eq":1,"n0_eq":0,"extra":3}"#;
        assert!(SystemParams::from_json(text).is_err());
    }

    #[test]
    fn json_saturation_sets_rabi() {
        let text = r#"{"gamma":0.11,"epsilon":0.85,"Gamma":1.1,"omega0":0,"omega1":0,"omega2":0,
                       "S":1.0,"n1_eq":0.3,"n0_eq":0.7}"#;
        let p = SystemParams::from_json(text).unwrap();
        assert!((p.saturation_parameter().unwrap() - 1.0).abs() < 1e-14);
        assert!((p.rabi1() - (0.11f64 * 1.1).sqrt()).abs() < 1e-14);
        let text = r#"{"gamma":1,"epsilon":0,"Gamma":10,"omega0":0,"omega1":0,"omega2":0,
                       "Omega":1,"S":1,"n1_eq":1,"n0_eq":0}"#;
        assert!(SystemParams::from_json(text).is_err());
    }

    proptest! {
        #[test]
        fn rates_mean_and_half_difference(gamma in 1e-3f64..1e3, eps in -0.999f64..0.999) {
            let p = SystemParams::builder().gamma(gamma).epsilon(eps).build().unwrap();
            let (g1, g0) = p.relaxation_rates();
            prop_assert!(((g1 + g0) / 2.0 - gamma).abs() <= 1e-12 * gamma);
            prop_assert!(((g1 - g0) / 2.0 - gamma * eps).abs() <= 1e-12 * gamma);
            prop_assert!(g1 > 0.0 && g0 > 0.0);
        }

        #[test]
        fn lorentz_even_and_decreasing(a in 1e-3f64..1e3, x in 0.0f64..1e3, dx in 1e-6f64..10.0) {
            let l = lorentz(a, x).unwrap();
            prop_assert_eq!(l, lorentz(a, -x).unwrap());
            prop_assert!(l > 0.0 && l <= 1.0);
            prop_assert!(lorentz(a, x + dx).unwrap() < l);
        }

        #[test]
        fn saturation_swap_invariant(w1 in -50.0f64..50.0, w2 in -50.0f64..50.0, rabi in 0.0f64..20.0) {
            let a = SystemParams::builder().gamma_coh(7.0).omega0(1.0).omega1(w1).omega2(w2).rabi(rabi).build().unwrap();
            let b = SystemParams::builder().gamma_coh(7.0).omega0(1.0).omega1(w2).omega2(w1).rabi(rabi).build().unwrap();
            let sa = a.saturation_parameter().unwrap();
            prop_assert!((sa - b.saturation_parameter().unwrap()).abs() <= 1e-12 * sa.max(1e-300));
            prop_assert!(sa >= 0.0);
            // maximal with both fields on resonance
            let on_res = SystemParams::builder().gamma_coh(7.0).omega0(1.0).omega1(1.0).omega2(1.0).rabi(rabi).build().unwrap();
            prop_assert!(on_res.saturation_parameter().unwrap() >= sa - 1e-15);
        }
    }
}
