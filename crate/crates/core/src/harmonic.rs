//! Periodic steady state from the Fourier-space population equations.
//!
//! Populations are expanded as `n_i(t) = Σ_k ñ_i(k) e^{ikδt}` for
//! `k ∈ [−N, N]` and the coherences are eliminated exactly, which leaves a
//! block-tridiagonal complex linear system in the population harmonics.
//! Unknowns are interleaved: `ñ₁(k)` sits at index `2(k+N)` and `ñ₀(k)` at
//! `2(k+N)+1`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ReducedParams, SystemParams};
use crate::trajectory::ParamsSnapshot;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative residual the direct solve must reach.
const RESIDUAL_TOL: f64 = 1e-10;

/// Coherence elimination kernels `(K, L, M)` at harmonic `k`, in units of γ.
///
/// `M` is returned without the phase factor; the assembled equations couple it to
/// the neighbouring harmonics with an extra factor `i` (see
/// [`solve_harmonic_balance`]).
pub fn kernels(k: i64, params: &SystemParams) -> (Complex64, Complex64, Complex64) {
    let gamma = params.gamma();
    let z = Complex64::new(params.gamma_coh(), k as f64 * params.beat());
    let d1 = params.detuning();
    let d2 = params.detuning2();
    let (w1, w2) = (params.rabi1(), params.rabi2());
    let p1 = 1.0 / (z * z + d1 * d1);
    let p2 = 1.0 / (z * z + d2 * d2);
    let k_ = (w1 * w1 * z * p1 + w2 * w2 * z * p2) / gamma;
    let l_ = w1 * w2 * (z * p1 + z * p2) / gamma;
    let m_ = w1 * w2 * (-d1 * p1 + d2 * p2) / gamma;
    (k_, l_, m_)
}

/// Which coherence kernels enter the population equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelModel {
    /// Exact elimination, valid at any δ.
    Exact,
    /// `K = L = 2S`, `M = 0`: the adiabatic limit δ, detunings ≪ Γ.
    Adiabatic,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicSolution {
    /// Truncation order `N`.
    pub order: usize,
    /// `ñ₁(k)` for `k = −N..=N`.
    pub coeffs_n1: Vec<Complex64>,
    /// `ñ₀(k)` for `k = −N..=N`.
    pub coeffs_n0: Vec<Complex64>,
    pub beat: f64,
    pub kernel: KernelModel,
    pub params: ParamsSnapshot,
    /// Relative residual of the assembled system at the solution.
    pub residual: f64,
}

impl HarmonicSolution {
    fn index(&self, k: i64) -> Option<usize> {
        let n = self.order as i64;
        (k.abs() <= n).then(|| (k + n) as usize)
    }

    /// `ñ₁(k)`, zero outside the truncation window.
    pub fn n1(&self, k: i64) -> Complex64 {
        self.index(k).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs_n1[i])
    }

    pub fn n0(&self, k: i64) -> Complex64 {
        self.index(k).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs_n0[i])
    }

    /// Harmonic `k` of the population difference.
    pub fn difference(&self, k: i64) -> Complex64 {
        self.n1(k) - self.n0(k)
    }

    /// Period-averaged `n₁ − n₀`.
    pub fn dc_difference(&self) -> f64 {
        self.difference(0).re
    }

    pub fn dc_sum(&self) -> f64 {
        (self.n1(0) + self.n0(0)).re
    }

    /// Populations `(n₁(t), n₀(t))` rebuilt from the harmonics.
    pub fn populations_at(&self, t: f64) -> (f64, f64) {
        let n = self.order as i64;
        let mut a = 0.0;
        let mut b = 0.0;
        for k in -n..=n {
            let e = Complex64::from_polar(1.0, k as f64 * self.beat * t);
            a += (self.n1(k) * e).re;
            b += (self.n0(k) * e).re;
        }
        (a, b)
    }

    /// Largest violation of `ñ_i(−k) = conj(ñ_i(k))`.
    pub fn reality_defect(&self) -> f64 {
        let n = self.order as i64;
        (0..=n)
            .map(|k| {
                let a = (self.n1(-k) - self.n1(k).conj()).norm();
                let b = (self.n0(-k) - self.n0(k).conj()).norm();
                a.max(b)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `k, re_n1, im_n1, re_n0, im_n0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "re_n1", "im_n1", "re_n0", "im_n0"])?;
        let n = self.order as i64;
        for k in -n..=n {
            let (a, b) = (self.n1(k), self.n0(k));
            w.write_record(&[
                k.to_string(),
                a.re.to_string(),
                a.im.to_string(),
                b.re.to_string(),
                b.im.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scalar inputs shared by both kernel models, in units of γ.
struct Balance {
    beat_over_gamma: f64,
    epsilon: f64,
    n1_eq: f64,
    n0_eq: f64,
}

/// Assembles and solves the truncated system. `coupling(k)` returns the
/// coefficients of `Δ(k)`, `Δ(k+1)` and `Δ(k−1)` in the drive term `F(k)`.
fn assemble_and_solve(
    order: usize,
    b: &Balance,
    coupling: impl Fn(i64) -> [Complex64; 3],
) -> Result<(Vec<Complex64>, Vec<Complex64>, f64)> {
    let n = order as i64;
    let dim = 2 * (2 * order + 1);
    let idx = |k: i64, i: usize| 2 * (k + n) as usize + i;
    let mut a = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    let (g1, g0) = (1.0 + b.epsilon, 1.0 - b.epsilon);

    for k in -n..=n {
        let r1 = idx(k, 0);
        let r0 = idx(k, 1);
        let ikd = I * (k as f64 * b.beat_over_gamma);
        a[(r1, r1)] += ikd + g1;
        a[(r0, r0)] += ikd + g0;
        if k == 0 {
            rhs[r1] = Complex64::from(g1 * b.n1_eq);
            rhs[r0] = Complex64::from(g0 * b.n0_eq);
        }
        let [c0, cp, cm] = coupling(k);
        for (kk, c) in [(k, c0), (k + 1, cp), (k - 1, cm)] {
            if kk.abs() > n {
                continue;
            }
            // ±F/2 with Δ = ñ₁ − ñ₀
            let h = 0.5 * c;
            a[(r1, idx(kk, 0))] += h;
            a[(r1, idx(kk, 1))] -= h;
            a[(r0, idx(kk, 0))] -= h;
            a[(r0, idx(kk, 1))] += h;
        }
    }

    let lu = a.clone().lu();
    let diag = lu.u().diagonal();
    let (dmax, dmin) = diag
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), d| (hi.max(d.norm()), lo.min(d.norm())));
    let cond = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    let x = lu.solve(&rhs).ok_or(Error::Singular { condition_estimate: cond })?;

    let r = &a * &x - &rhs;
    let scale = a.norm() * x.norm() + rhs.norm();
    let residual = if scale > 0.0 { r.norm() / scale } else { 0.0 };
    if !residual.is_finite() || residual > RESIDUAL_TOL {
        return Err(Error::Singular { condition_estimate: cond });
    }
    let n1 = (0..=2 * order).map(|j| x[2 * j]).collect();
    let n0 = (0..=2 * order).map(|j| x[2 * j + 1]).collect();
    Ok((n1, n0, residual))
}

fn check_reality(sol: &HarmonicSolution) {
    let defect = sol.reality_defect();
    let scale = sol.n1(0).norm().max(sol.n0(0).norm()).max(1.0);
    if defect > 1e-10 * scale {
        log::warn!("harmonic solution violates reality symmetry by {defect:.3e}");
    }
}

/// Solves the exact harmonic-balance equations truncated at order `N`.
///
/// The drive term at harmonic `k` is
/// `F(k) = K Δ(k) + ½(L + iM) Δ(k+1) + ½(L − iM) Δ(k−1)`.
/// At δ = 0 all harmonics collapse onto the constant one, so the order is
/// forced to zero and `F = (K + L) Δ`.
pub fn solve_harmonic_balance(params: &SystemParams, order: usize) -> Result<HarmonicSolution> {
    let beat = params.beat();
    let b = Balance {
        beat_over_gamma: beat / params.gamma(),
        epsilon: params.epsilon(),
        n1_eq: params.n1_eq(),
        n0_eq: params.n0_eq(),
    };
    let (order, collapsed) = if beat == 0.0 { (0, true) } else { (order.max(1), false) };
    let (n1, n0, residual) = assemble_and_solve(order, &b, |k| {
        let (kk, l, m) = kernels(k, params);
        if collapsed {
            [kk + l, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            [kk, 0.5 * (l + I * m), 0.5 * (l - I * m)]
        }
    })?;
    let sol = HarmonicSolution {
        order,
        coeffs_n1: n1,
        coeffs_n0: n0,
        beat,
        kernel: KernelModel::Exact,
        params: ParamsSnapshot::System(*params),
        residual,
    };
    check_reality(&sol);
    Ok(sol)
}

/// Harmonic balance of the reduced two-population model, i.e. with the
/// adiabatic kernels `K = L = 2S`, `M = 0`.
pub fn solve_reduced_harmonic_balance(params: &ReducedParams, order: usize) -> Result<HarmonicSolution> {
    reduced_balance(params, order, true)
}

/// Same as [`solve_reduced_harmonic_balance`] but keeps the harmonics
/// distinct at δ = 0. The result is then the δ → 0 limit of the truncated
/// system, which is what the first-harmonic closed forms describe, rather
/// than the static drive `4S` a phase-locked pair of fields produces.
pub fn solve_reduced_harmonic_balance_continuous(params: &ReducedParams, order: usize) -> Result<HarmonicSolution> {
    reduced_balance(params, order, false)
}

fn reduced_balance(params: &ReducedParams, order: usize, collapse_zero_beat: bool) -> Result<HarmonicSolution> {
    let beat = params.beat();
    let b = Balance {
        beat_over_gamma: beat / params.gamma(),
        epsilon: params.epsilon(),
        n1_eq: params.n1_eq(),
        n0_eq: params.n0_eq(),
    };
    let s2 = Complex64::from(2.0 * params.saturation());
    let zero = Complex64::new(0.0, 0.0);
    let (order, collapsed) = if beat == 0.0 && collapse_zero_beat { (0, true) } else { (order.max(1), false) };
    let (n1, n0, residual) = assemble_and_solve(order, &b, |_| {
        if collapsed {
            [s2 + s2, zero, zero]
        } else {
            [s2, 0.5 * s2, 0.5 * s2]
        }
    })?;
    let sol = HarmonicSolution {
        order,
        coeffs_n1: n1,
        coeffs_n0: n0,
        beat,
        kernel: KernelModel::Adiabatic,
        params: ParamsSnapshot::Reduced(*params),
        residual,
    };
    check_reality(&sol);
    Ok(sol)
}

/// Coherence harmonics `ρ̃₁₀(k)` for `k = −N..=N`, rebuilt from the
/// population harmonics.
pub fn coherence_harmonics(sol: &HarmonicSolution, params: &SystemParams) -> Vec<Complex64> {
    let n = sol.order as i64;
    let w = params.detuning();
    (-n..=n)
        .map(|k| {
            let den = Complex64::new(params.gamma_coh(), k as f64 * sol.beat - w);
            0.5 * I * (params.rabi1() * sol.difference(k) + params.rabi2() * sol.difference(k - 1)) / den
        })
        .collect()
}

/// `ρ̃₀₁(k)` from its own Fourier equation; equals `conj(ρ̃₁₀(−k))` for a
/// real solution.
pub fn coherence_harmonics_conjugate(sol: &HarmonicSolution, params: &SystemParams) -> Vec<Complex64> {
    let n = sol.order as i64;
    let w = params.detuning();
    (-n..=n)
        .map(|k| {
            let den = Complex64::new(params.gamma_coh(), k as f64 * sol.beat + w);
            -0.5 * I * (params.rabi1() * sol.difference(k) + params.rabi2() * sol.difference(k + 1)) / den
        })
        .collect()
}

fn close(a: f64, b: f64, rel_tol: f64) -> bool {
    (a - b).abs() <= rel_tol * a.abs().max(b.abs()) + 1e-14
}

/// Smallest order `N` for which doubling `N` moves the DC population
/// difference and `|ñ₁(1)|` by less than `rel_tol` (relative). The search
/// doubles until converged and then bisects. Orders are capped at
/// `ceil(10 Γ/δ)`.
pub fn auto_truncation(params: &SystemParams, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0) {
        return Err(Error::param("rel_tol", format!("must be positive, got {rel_tol}")));
    }
    if params.beat() == 0.0 {
        return Ok(0);
    }
    let cap = ((10.0 * params.gamma_coh() / params.beat().abs()).ceil() as usize).max(1);
    let summary = |n: usize| -> Result<(f64, f64)> {
        let s = solve_harmonic_balance(params, n)?;
        Ok((s.dc_difference(), s.n1(1).norm()))
    };
    let converged = |n: usize| -> Result<bool> {
        let (d_a, h_a) = summary(n)?;
        let (d_b, h_b) = summary(2 * n)?;
        Ok(close(d_a, d_b, rel_tol) && close(h_a, h_b, rel_tol))
    };

    let mut hi = 1;
    while !converged(hi)? {
        if hi >= cap {
            return Err(Error::NonConvergence {
                what: "harmonic truncation",
                detail: format!("order cap {cap} reached at rel_tol {rel_tol:e}"),
            });
        }
        hi = (2 * hi).min(cap);
    }
    // smallest converged order in (hi/2, hi]
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if converged(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn generic() -> SystemParams {
        SystemParams::builder()
            .gamma(1.0)
            .epsilon(0.5)
            .gamma_coh(10.0)
            .omega0(0.0)
            .omega1(1.3)
            .omega2(0.3)
            .rabi1(2.0)
            .rabi2(1.5)
            .equilibrium(0.7, 0.3)
            .build()
            .unwrap()
    }

    #[test]
    fn resonant_kernels_at_k0() {
        let p = SystemParams::builder()
            .gamma(0.5)
            .gamma_coh(4.0)
            .rabi(3.0)
            .build()
            .unwrap();
        let (k, l, m) = kernels(0, &p);
        let expect = 2.0 * 9.0 / (0.5 * 4.0);
        assert!((k - c(expect, 0.0)).norm() < 1e-13);
        assert!((l - c(expect, 0.0)).norm() < 1e-13);
        assert_eq!(m, c(0.0, 0.0));
    }

    #[test]
    fn m_kernel_parity() {
        // the two terms of M cancel for equal detunings, not opposite ones
        let equal = SystemParams::builder()
            .gamma_coh(3.0)
            .omega0(1.0)
            .omega1(1.7)
            .omega2(1.7)
            .rabi(2.0)
            .build()
            .unwrap();
        assert_eq!(kernels(0, &equal).2, c(0.0, 0.0));
        let sym = SystemParams::builder()
            .gamma_coh(3.0)
            .omega0(1.0)
            .omega1(1.7)
            .omega2(0.3)
            .rabi(2.0)
            .build()
            .unwrap();
        let flipped = SystemParams::builder()
            .gamma_coh(3.0)
            .omega0(1.0)
            .omega1(0.3)
            .omega2(1.7)
            .rabi(2.0)
            .build()
            .unwrap();
        for k in -4..=4 {
            let m = kernels(k, &sym).2;
            assert!(m.norm() > 1e-3);
            // mirrored detunings with the beat reversed
            assert!((kernels(-k, &flipped).2 + m).norm() < 1e-15);
        }
    }

    #[test]
    fn generic_kernel_values() {
        // k = 3, Γ = 10, detunings 0.5 and −0.2 (so δ = 0.7), Ω₁ = 1, Ω₂ = 1.5;
        // reference values from a 30-digit evaluation of the closed forms
        let p = SystemParams::builder()
            .gamma_coh(10.0)
            .omega0(0.2)
            .omega1(0.7)
            .omega2(0.0)
            .rabi1(1.0)
            .rabi2(1.5)
            .build()
            .unwrap();
        let (k, l, m) = kernels(3, &p);
        assert!((k - c(0.311_013_977_004_419_5, -0.065_182_388_697_671_38)).norm() < 1e-14);
        assert!((l - c(0.286_997_626_594_862_9, -0.060_102_556_859_178_96)).norm() < 1e-14);
        assert!((m - c(-0.009_194_623_427_663_544, 0.004_031_894_134_272_417)).norm() < 1e-14);
    }

    #[test]
    fn undriven_solution_is_equilibrium() {
        let p = SystemParams::builder()
            .epsilon(0.3)
            .omega1(1.0)
            .equilibrium(0.8, 0.2)
            .build()
            .unwrap();
        let s = solve_harmonic_balance(&p, 4).unwrap();
        assert!((s.n1(0) - c(0.8, 0.0)).norm() < 1e-15);
        assert!((s.n0(0) - c(0.2, 0.0)).norm() < 1e-15);
        for k in 1..=4 {
            assert!(s.n1(k).norm() < 1e-15 && s.n0(-k).norm() < 1e-15);
        }
    }

    #[test]
    fn monochromatic_drive_is_saturated_two_level() {
        let p = SystemParams::builder()
            .gamma(1.0)
            .epsilon(0.4)
            .gamma_coh(5.0)
            .omega0(0.0)
            .omega1(1.0)
            .omega2(0.0)
            .rabi1(3.0)
            .rabi2(0.0)
            .equilibrium(0.9, 0.1)
            .build()
            .unwrap();
        let s = solve_harmonic_balance(&p, 3).unwrap();
        for k in 1..=3 {
            assert!(s.n1(k).norm() < 1e-14);
        }
        // rate R = Ω²Γ/(2γ(Γ² + Δ²)); stationary point of the rate equations
        let r = 9.0 * 5.0 / (2.0 * 26.0);
        let (a, b) = (1.4, 0.6);
        let det = a * b + r * (a + b);
        let n1 = (a * 0.9 * (b + r) + r * b * 0.1) / det;
        let n0 = (b * 0.1 * (a + r) + r * a * 0.9) / det;
        assert!((s.dc_difference() - (n1 - n0)).abs() < 1e-13);
    }

    #[test]
    fn closed_system_sum_is_constant() {
        let mut p = generic();
        p = p.with_epsilon(0.0).unwrap();
        let s = solve_harmonic_balance(&p, 6).unwrap();
        assert!((s.n1(0) + s.n0(0) - c(1.0, 0.0)).norm() < 1e-13);
        for k in 1..=6 {
            assert!((s.n1(k) + s.n0(k)).norm() < 1e-14);
        }
    }

    #[test]
    fn reality_and_residual() {
        let s = solve_harmonic_balance(&generic(), 12).unwrap();
        assert!(s.reality_defect() < 1e-12);
        assert!(s.residual < 1e-12);
        let d = s.dc_difference();
        assert!(d > 0.0 && d < 0.4);
    }

    #[test]
    fn coherence_conjugate_symmetry() {
        let p = generic();
        let s = solve_harmonic_balance(&p, 8).unwrap();
        let a = coherence_harmonics(&s, &p);
        let b = coherence_harmonics_conjugate(&s, &p);
        let n = a.len();
        for j in 0..n {
            assert!((b[j] - a[n - 1 - j].conj()).norm() < 1e-12);
        }
        let undriven = p.with_rabi(0.0).unwrap();
        let s0 = solve_harmonic_balance(&undriven, 3).unwrap();
        assert!(coherence_harmonics(&s0, &undriven).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_beat_collapses() {
        let p = SystemParams::builder()
            .gamma_coh(4.0)
            .omega1(0.5)
            .omega2(0.5)
            .rabi1(1.0)
            .rabi2(2.0)
            .epsilon(0.2)
            .build()
            .unwrap();
        let s = solve_harmonic_balance(&p, 5).unwrap();
        assert_eq!(s.order, 0);
        // constant field of amplitude Ω₁ + Ω₂ = 3
        let mono = SystemParams::builder()
            .gamma_coh(4.0)
            .omega1(0.5)
            .omega2(-7.0)
            .rabi1(3.0)
            .rabi2(0.0)
            .epsilon(0.2)
            .build()
            .unwrap();
        let m = solve_harmonic_balance(&mono, 2).unwrap();
        assert!((s.dc_difference() - m.dc_difference()).abs() < 1e-13);
    }

    #[test]
    fn continuous_variant_is_the_zero_beat_limit() {
        let p = ReducedParams::new(0.3, 0.5, 2.0, 0.0, 0.6, 0.4).unwrap();
        let at_zero = solve_reduced_harmonic_balance_continuous(&p, 1).unwrap();
        let near = solve_reduced_harmonic_balance(&p.with_beat(1e-9).unwrap(), 1).unwrap();
        assert_eq!(at_zero.order, 1);
        assert!((at_zero.dc_difference() - near.dc_difference()).abs() < 1e-12);
        let locked = solve_reduced_harmonic_balance(&p, 1).unwrap();
        assert!((locked.dc_difference() - at_zero.dc_difference()).abs() > 1e-2);
    }

    #[test]
    fn truncation_grows_with_drive() {
        let weak = generic().with_rabi(0.3).unwrap();
        assert!(auto_truncation(&weak, 1e-8).unwrap() <= 3);
        let undriven = generic().with_rabi(0.0).unwrap();
        assert_eq!(auto_truncation(&undriven, 1e-8).unwrap(), 1);
        let strong = SystemParams::builder()
            .gamma_coh(20.0)
            .epsilon(0.3)
            .rabi(14.0)
            .omega1(1.0)
            .build()
            .unwrap();
        let n = auto_truncation(&strong, 1e-8).unwrap();
        let a = solve_harmonic_balance(&strong, n).unwrap();
        let b = solve_harmonic_balance(&strong, 2 * n).unwrap();
        assert!(close(a.dc_difference(), b.dc_difference(), 1e-8));
        assert!(n > 3, "{n}");
        assert!(auto_truncation(&strong, 0.0).is_err());
    }

    #[test]
    fn csv_export() {
        let s = solve_harmonic_balance(&generic(), 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,re_n1,im_n1,re_n0,im_n0");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("-2,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reduced_solution_is_real_and_physical(
            s in 0.0f64..20.0, eps in -0.9f64..0.9, beat in 0.05f64..10.0, n1 in 0.0f64..1.0,
        ) {
            let rp = ReducedParams::new(1.0, eps, s, beat, n1, 1.0 - n1).unwrap();
            let sol = solve_reduced_harmonic_balance(&rp, 10).unwrap();
            prop_assert!(sol.reality_defect() < 1e-12);
            let (a, b) = (sol.n1(0).re, sol.n0(0).re);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&b));
        }

        #[test]
        fn solution_depends_on_beat_through_kernels_only(
            beat in 0.1f64..5.0, scale in 0.5f64..2.0,
        ) {
            // rescaling time (γ, Γ, all frequencies) leaves the solution unchanged
            let p = generic().with_beat(beat).unwrap();
            let q = SystemParams::builder()
                .gamma(scale * p.gamma()).epsilon(p.epsilon()).gamma_coh(scale * p.gamma_coh())
                .omega0(scale * p.omega0()).omega1(scale * p.omega1()).omega2(scale * p.omega2())
                .rabi1(scale * p.rabi1()).rabi2(scale * p.rabi2()).equilibrium(0.7, 0.3)
                .build().unwrap();
            let a = solve_harmonic_balance(&p, 6).unwrap();
            let b = solve_harmonic_balance(&q, 6).unwrap();
            for k in -6..=6 {
                prop_assert!((a.n1(k) - b.n1(k)).norm() < 1e-12);
            }
        }
    }
}
