//! Closed-form capacities of the thermal-loss channel, in bits per mode.

use std::f64::consts::LN_2;

use crate::error::{domain, numerical, Result};
use crate::gaussian_core::{g, g_entropy_diff, ChannelParams};

/// All capacity figures for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityReport {
    pub c_classical: f64,
    pub c_ea: f64,
    pub c_hom: f64,
    pub c_het: f64,
    pub ratio_ea: f64,
    pub params: ChannelParams,
}

impl CapacityReport {
    pub fn compute(ch: &ChannelParams) -> Result<Self> {
        let c_classical = classical_capacity(ch)?;
        let c_ea = ea_capacity(ch)?;
        let (c_hom, c_het) = homodyne_heterodyne_rates(ch)?;
        let ratio_ea = if c_classical > 0.0 {
            c_ea / c_classical
        } else {
            f64::NAN
        };
        Ok(Self {
            c_classical,
            c_ea,
            c_hom,
            c_het,
            ratio_ea,
            params: *ch,
        })
    }
}

/// Unassisted classical capacity g(κN_S + N_B) − g(N_B).
pub fn classical_capacity(ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    Ok(g_entropy_diff(ch.n_b, ch.n_return()))
}

/// Rates of coherent-state coding with homodyne and heterodyne detection.
pub fn homodyne_heterodyne_rates(ch: &ChannelParams) -> Result<(f64, f64)> {
    ch.validate()?;
    let s = ch.kappa * ch.n_s;
    let hom = 0.5 * (4.0 * s / (1.0 + 2.0 * ch.n_b)).ln_1p() / LN_2;
    let het = (s / (1.0 + ch.n_b)).ln_1p() / LN_2;
    Ok((hom, het))
}

/// The two thermal numbers A₊, A₋ whose entropies sum to the joint entropy
/// of the returned signal and the idler.
pub fn joint_output_occupations(ch: &ChannelParams) -> Result<(f64, f64)> {
    ch.validate()?;
    let n_s = ch.n_s;
    let n_sp = ch.n_return();
    let s = n_s + n_sp + 1.0;
    let c2 = 4.0 * ch.kappa * n_s * (n_s + 1.0);
    let d = (s * s - c2).sqrt();
    let delta = c2 / (s + d);
    let a_plus = n_sp - 0.5 * delta;
    let a_minus = n_s - 0.5 * delta;
    let clamp = |a: f64| -> Result<f64> {
        if a >= 0.0 {
            Ok(a)
        } else if a >= -1e-12 {
            Ok(0.0)
        } else {
            numerical("ea_capacity", format!("negative occupation {a}"))
        }
    };
    Ok((clamp(a_plus)?, clamp(a_minus)?))
}

/// Entanglement-assisted capacity g(N_S) + g(N_S′) − g(A₊) − g(A₋).
pub fn ea_capacity(ch: &ChannelParams) -> Result<f64> {
    let (a_plus, a_minus) = joint_output_occupations(ch)?;
    Ok(g_entropy_diff(a_plus, ch.n_return()) + g_entropy_diff(a_minus, ch.n_s))
}

/// Joint entropy of the returned signal and the idler, g(A₊) + g(A₋).
pub fn joint_output_entropy(ch: &ChannelParams) -> Result<f64> {
    let (a_plus, a_minus) = joint_output_occupations(ch)?;
    Ok(g(a_plus) + g(a_minus))
}

/// Limit of C_E/C at large N_B: (1 + N_S) ln(1 + 1/N_S).
pub fn ea_ratio_limit(n_s: f64) -> Result<f64> {
    if !(n_s > 0.0) {
        return domain("ea_ratio_limit", format!("n_s = {n_s} must be positive"));
    }
    Ok((1.0 + n_s) * (1.0 / n_s).ln_1p())
}

/// EA capacity when the idler is stored through a pure loss κ₀; the source
/// is boosted to N_S/κ₀ so that the power entering the channel stays N_S.
pub fn preshared_loss_rate(kappa0: f64, ch: &ChannelParams) -> Result<f64> {
    if !(kappa0 > 0.0 && kappa0 <= 1.0) {
        return domain("preshared_loss_rate", format!("kappa0 = {kappa0} outside (0, 1]"));
    }
    let eff = ChannelParams::new(kappa0 * ch.kappa, ch.n_b, ch.n_s / kappa0)?;
    ea_capacity(&eff)
}
