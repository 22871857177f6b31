//! Covertness of EA communication against an adversary holding the
//! environment output.

use std::f64::consts::LN_2;

use crate::capacities::{classical_capacity, ea_capacity};
use crate::error::{domain, Result};
use crate::gaussian_core::ChannelParams;

/// Covert mode budget and the bits it carries with and without assistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovertBudget {
    pub delta: f64,
    /// N_δ from the exact relative-entropy constraint.
    pub n_modes_max: f64,
    /// 4δ²κN_B(κN_B+1)/N_S², the strong-noise, small-κ expansion.
    pub n_modes_closed_form: f64,
    pub bits_classical: f64,
    pub bits_ea: f64,
}

/// Mean photon numbers (n₀, n₁) of an environment-output mode without and
/// with communication.
pub fn env_means(ch: &ChannelParams) -> Result<(f64, f64)> {
    ch.validate()?;
    if ch.kappa >= 1.0 {
        return domain("env_means", "kappa = 1 leaves no environment port");
    }
    let n0 = ch.kappa * ch.n_b / (1.0 - ch.kappa);
    Ok((n0, n0 + (1.0 - ch.kappa) * ch.n_s))
}

/// Quantum Chernoff estimate ½·exp(−N N_S²/(8κ²N_B²)) of the adversary's
/// error over N modes. Meaningful only for κN_B ≫ 1; see
/// [`chernoff_regime_ok`].
pub fn adversary_chernoff_error(n: f64, ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    if !(n >= 0.0) {
        return domain("adversary_chernoff_error", format!("N = {n} must be >= 0"));
    }
    let kn = ch.kappa * ch.n_b;
    if kn == 0.0 {
        return Ok(if ch.n_s == 0.0 || n == 0.0 { 0.5 } else { 0.0 });
    }
    let x = n * ch.n_s * ch.n_s / (8.0 * kn * kn);
    Ok((0.5 * (-x).exp()).min(0.5))
}

/// Whether κN_B is large enough for the Chernoff estimate to be trusted.
pub fn chernoff_regime_ok(ch: &ChannelParams) -> bool {
    ch.kappa * ch.n_b >= 1.0
}

/// ln(1 + x) − x without cancellation near zero.
fn ln1p_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut term = -x * x / 2.0;
        let mut sum = term;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= -x * k / (k + 1.0);
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        x.ln_1p() - x
    }
}

/// D(ρ₀‖ρ₁) in bits between thermal states of means n₀ and n₁. Returns
/// `f64::INFINITY` when n₁ = 0 < n₀.
pub fn thermal_relative_entropy(n0: f64, n1: f64) -> Result<f64> {
    if !(n0 >= 0.0 && n1 >= 0.0) || !n0.is_finite() || !n1.is_finite() {
        return domain(
            "thermal_relative_entropy",
            format!("means ({n0}, {n1}) must be finite and >= 0"),
        );
    }
    if n0 == n1 {
        return Ok(0.0);
    }
    if n0 == 0.0 {
        return Ok(n1.ln_1p() / LN_2);
    }
    if n1 == 0.0 {
        return Ok(f64::INFINITY);
    }
    // (n₀+1)ln((n₁+1)/(n₀+1)) − n₀ln(n₁/n₀), with the linear parts cancelled.
    let e = n1 - n0;
    let d = (n0 + 1.0) * ln1p_minus_x(e / (n0 + 1.0)) - n0 * ln1p_minus_x(e / n0);
    Ok(d.max(0.0) / LN_2)
}

/// Largest N with N·D(ρ₀‖ρ₁) ≤ 2δ²/ln 2, paired with the closed-form
/// expansion 4δ²κN_B(κN_B+1)/N_S².
pub fn covert_mode_budget(delta: f64, ch: &ChannelParams) -> Result<(f64, f64)> {
    if !(0.0..0.5).contains(&delta) {
        return domain("covert_mode_budget", format!("delta = {delta} outside [0, 0.5)"));
    }
    if ch.n_s == 0.0 {
        return domain("covert_mode_budget", "n_s = 0 leaves the budget unbounded");
    }
    let (n0, n1) = env_means(ch)?;
    let d = thermal_relative_entropy(n0, n1)?;
    let exact = if delta == 0.0 {
        0.0
    } else {
        2.0 * delta * delta / (LN_2 * d)
    };
    let kn = ch.kappa * ch.n_b;
    let closed = 4.0 * delta * delta * kn * (kn + 1.0) / (ch.n_s * ch.n_s);
    Ok((exact, closed))
}

/// Leading-order N_δ without the small-κ simplification:
/// 4δ²n₀(n₀+1)/((1−κ)N_S)².
pub fn covert_mode_budget_leading_order(delta: f64, ch: &ChannelParams) -> Result<f64> {
    let (n0, n1) = env_means(ch)?;
    let e = n1 - n0;
    if e == 0.0 {
        return domain("covert_mode_budget_leading_order", "n_s = 0 leaves the budget unbounded");
    }
    Ok(4.0 * delta * delta * n0 * (n0 + 1.0) / (e * e))
}

pub fn covert_bits(delta: f64, ch: &ChannelParams) -> Result<CovertBudget> {
    let (n_modes_max, n_modes_closed_form) = covert_mode_budget(delta, ch)?;
    Ok(CovertBudget {
        delta,
        n_modes_max,
        n_modes_closed_form,
        bits_classical: n_modes_max * classical_capacity(ch)?,
        bits_ea: n_modes_max * ea_capacity(ch)?,
    })
}
