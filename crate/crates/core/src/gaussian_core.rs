//! Gaussian states in the q = a + a† convention (vacuum covariance = identity).
//!
//! Quadratures are ordered (q₁, p₁, q₂, p₂, ...). Mode 0 of a TMSV pair is the
//! signal that goes through the channel, mode 1 the idler kept by the receiver.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};

/// Slack allowed below 1 on a symplectic eigenvalue.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Thermal-loss channel (κ, N_B) together with the source power N_S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub kappa: f64,
    pub n_b: f64,
    pub n_s: f64,
}

impl ChannelParams {
    pub fn new(kappa: f64, n_b: f64, n_s: f64) -> Result<Self> {
        let ch = Self { kappa, n_b, n_s };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::Validation(format!(
                "kappa = {} outside [0, 1]",
                self.kappa
            )));
        }
        if !(self.n_b >= 0.0) || !self.n_b.is_finite() {
            return Err(Error::Validation(format!("n_b = {} must be >= 0", self.n_b)));
        }
        if !(self.n_s >= 0.0) || !self.n_s.is_finite() {
            return Err(Error::Validation(format!("n_s = {} must be >= 0", self.n_s)));
        }
        Ok(())
    }

    /// Cross correlation √(κ N_S (N_S + 1)) after the channel.
    pub fn c_p(&self) -> f64 {
        (self.kappa * self.n_s * (self.n_s + 1.0)).sqrt()
    }

    /// Mean photon number of the returned signal, κN_S + N_B.
    pub fn n_return(&self) -> f64 {
        self.kappa * self.n_s + self.n_b
    }
}

/// Thermal entropy g(n) in bits.
pub fn g_entropy(n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return domain("g_entropy", format!("n = {n} is negative"));
    }
    Ok(g(n))
}

pub(crate) fn g(n: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else if n < 1e-300 {
        (n - n * n.ln()) / LN_2
    } else {
        (n.ln_1p() + n * (1.0 / n).ln_1p()) / LN_2
    }
}

/// g(b) − g(a) without cancellation when a and b are close.
///
/// For 0 < a < b < 2a the difference is evaluated as ∫ₐᵇ log₂(1 + 1/n) dn.
pub fn g_entropy_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -g_entropy_diff(b, a);
    }
    if a > 0.0 && b < 2.0 * a {
        let (nodes, weights) = gauss_legendre();
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let s: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(x, w)| w * (1.0 / (mid + half * x)).ln_1p())
            .sum();
        s * half / LN_2
    } else {
        g(b) - g(a)
    }
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(24))
}

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Mean vector and covariance of an n-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub n_modes: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Symplectic eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    pub mu: Vec<f64>,
}

impl GaussianState {
    /// Builds a state after checking symmetry, finiteness and physicality.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || dim % 2 != 0 || cov.ncols() != dim || mean.len() != dim {
            return Err(Error::Validation(format!(
                "inconsistent dimensions: mean {} cov {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite entries".into()));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Validation("covariance is not symmetric".into()));
        }
        let state = Self {
            n_modes: dim / 2,
            mean,
            cov,
        };
        symplectic_eigenvalues(&state)?;
        Ok(state)
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn thermal(n_bar: f64) -> Result<Self> {
        if !(n_bar >= 0.0) {
            return domain("thermal", format!("n_bar = {n_bar} is negative"));
        }
        Ok(Self {
            n_modes: 1,
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2) * (2.0 * n_bar + 1.0),
        })
    }

    fn check_mode(&self, op: &'static str, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return domain(
                op,
                format!("mode index {mode} out of range for {} modes", self.n_modes),
            );
        }
        Ok(())
    }
}

/// Two-mode squeezed vacuum with mean photon number N_S per mode.
pub fn tmsv_covariance(n_s: f64) -> Result<GaussianState> {
    if !(n_s >= 0.0) || !n_s.is_finite() {
        return domain("tmsv_covariance", format!("n_s = {n_s} must be >= 0"));
    }
    let a = 2.0 * n_s + 1.0;
    let c = 2.0 * (n_s * (n_s + 1.0)).sqrt();
    #[rustfmt::skip]
    let cov = DMatrix::from_row_slice(4, 4, &[
        a,   0.0, c,   0.0,
        0.0, a,   0.0, -c,
        c,   0.0, a,   0.0,
        0.0, -c,  0.0, a,
    ]);
    Ok(GaussianState {
        n_modes: 2,
        mean: DVector::zeros(4),
        cov,
    })
}

/// Sends one mode through the thermal-loss channel (κ, N_B).
pub fn apply_thermal_loss(
    state: &GaussianState,
    mode: usize,
    ch: &ChannelParams,
) -> Result<GaussianState> {
    state.check_mode("apply_thermal_loss", mode)?;
    ch.validate()?;
    let s = ch.kappa.sqrt();
    let mut out = state.clone();
    let (i, j) = (2 * mode, 2 * mode + 1);
    for idx in [i, j] {
        out.mean[idx] *= s;
        for k in 0..out.cov.ncols() {
            out.cov[(idx, k)] *= s;
            out.cov[(k, idx)] *= s;
        }
    }
    let add = 2.0 * ch.n_b + 1.0 - ch.kappa;
    out.cov[(i, i)] += add;
    out.cov[(j, j)] += add;
    Ok(out)
}

/// Rotates the quadratures of one mode by θ.
pub fn apply_phase(state: &GaussianState, mode: usize, theta: f64) -> Result<GaussianState> {
    state.check_mode("apply_phase", mode)?;
    let dim = 2 * state.n_modes;
    let (sin, cos) = theta.sin_cos();
    let mut rot = DMatrix::identity(dim, dim);
    let (i, j) = (2 * mode, 2 * mode + 1);
    rot[(i, i)] = cos;
    rot[(i, j)] = -sin;
    rot[(j, i)] = sin;
    rot[(j, j)] = cos;
    let cov = &rot * &state.cov * rot.transpose();
    let cov = 0.5 * (&cov + cov.transpose());
    Ok(GaussianState {
        n_modes: state.n_modes,
        mean: &rot * &state.mean,
        cov,
    })
}

/// TMSV(N_S) with the signal sent through the channel and phase-encoded with θ.
pub fn channel_output_state(ch: &ChannelParams, theta: f64) -> Result<GaussianState> {
    let s = tmsv_covariance(ch.n_s)?;
    let s = apply_thermal_loss(&s, 0, ch)?;
    apply_phase(&s, 0, theta)
}

/// Symplectic spectrum: closed forms for one and two modes, a dense
/// eigensolver otherwise.
pub fn symplectic_eigenvalues(state: &GaussianState) -> Result<SymplecticSpectrum> {
    let v = &state.cov;
    let mut mu = match state.n_modes {
        1 => vec![det2(v, 0, 0).max(0.0).sqrt()],
        2 => {
            let det_a = det2(v, 0, 0);
            let det_b = det2(v, 2, 2);
            let det_c = det2(v, 0, 2);
            let det_v = v.determinant();
            let delta = det_a + det_b + 2.0 * det_c;
            // Below its rounding floor the discriminant carries no information;
            // taking its root would split a degenerate pair by ~√ε.
            let disc2 = delta * delta - 4.0 * det_v;
            let mag = det_a.abs() + det_b.abs() + 2.0 * det_c.abs();
            let floor = 64.0 * f64::EPSILON * mag * mag;
            let disc = if disc2 > floor { disc2.sqrt() } else { 0.0 };
            let hi = 0.5 * (delta + disc);
            let lo = if hi > 0.0 { det_v / hi } else { 0.0 };
            vec![hi.max(0.0).sqrt(), lo.max(0.0).sqrt()]
        }
        _ => symplectic_eigenvalues_dense(v),
    };
    mu.sort_by(|a, b| b.total_cmp(a));
    if let Some(&m) = mu.iter().find(|&&m| m < 1.0 - PHYSICALITY_TOL || !m.is_finite()) {
        return Err(Error::Validation(format!(
            "unphysical covariance: symplectic eigenvalue {m}"
        )));
    }
    Ok(SymplecticSpectrum { mu })
}

/// Moduli of the eigenvalues of ΩV, each appearing twice, deduplicated.
pub fn symplectic_eigenvalues_dense(v: &DMatrix<f64>) -> Vec<f64> {
    let n = v.nrows() / 2;
    let omega = symplectic_form(n);
    let mut moduli: Vec<f64> = (omega * v)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli.into_iter().step_by(2).collect()
}

pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

fn det2(v: &DMatrix<f64>, r: usize, c: usize) -> f64 {
    v[(r, c)] * v[(r + 1, c + 1)] - v[(r, c + 1)] * v[(r + 1, c)]
}

/// Von Neumann entropy Σ g((μ − 1)/2) in bits.
pub fn von_neumann_entropy(state: &GaussianState) -> Result<f64> {
    let spec = symplectic_eigenvalues(state)?;
    Ok(spec.mu.iter().map(|m| g(((m - 1.0) / 2.0).max(0.0))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_values() {
        assert_eq!(g_entropy(0.0).unwrap(), 0.0);
        assert!((g_entropy(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(g_entropy(-1.0).is_err());
    }

    #[test]
    fn g_diff_matches_direct_when_well_conditioned() {
        for (a, b) in [(1.0, 1.5), (0.3, 0.31), (10.0, 19.0), (1e-3, 1.5e-3)] {
            let direct = g(b) - g(a);
            assert!((g_entropy_diff(a, b) - direct).abs() < 1e-13 * direct.abs().max(1e-300));
            assert!((g_entropy_diff(b, a) + direct).abs() < 1e-13 * direct.abs().max(1e-300));
        }
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = legendre_rule(24);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(46)).sum();
        assert!((s - 2.0 / 47.0).abs() < 1e-14);
    }

    #[test]
    fn tmsv_unit_spectrum() {
        let s = tmsv_covariance(1.0).unwrap();
        assert!((s.cov[(0, 0)] - 3.0).abs() < 1e-15);
        assert!((s.cov[(0, 2)] - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let mu = symplectic_eigenvalues(&s).unwrap().mu;
        assert!(mu.iter().all(|m| (m - 1.0).abs() < 1e-10));
    }

    #[test]
    fn unphysical_state_rejected() {
        let cov = DMatrix::identity(2, 2) * 0.5;
        assert!(GaussianState::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn bad_mode_index() {
        let s = GaussianState::vacuum(1);
        let ch = ChannelParams::new(0.5, 0.0, 0.0).unwrap();
        assert!(apply_thermal_loss(&s, 1, &ch).is_err());
        assert!(apply_phase(&s, 2, 0.1).is_err());
    }
}
