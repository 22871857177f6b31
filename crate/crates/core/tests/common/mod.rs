//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use ea_core::gaussian_core::channel_output_state;
use ea_core::receivers::{ln_negative_binomial, opa_mean_photon, OpaConfig};
use ea_core::ChannelParams;
use nalgebra::{Complex, DMatrix};
use std::sync::OnceLock;

fn ln_fact(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut t = vec![0.0; 1024];
        for k in 1..t.len() {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    });
    t[n]
}

/// ⟨j, n+m−j| U |n, m⟩ for the beam splitter a† → t a† + r e†, e† → −r a† + t e†.
fn beam_splitter_amp(n: usize, m: usize, j: usize, t: f64, r: f64) -> f64 {
    let k = n + m - j;
    let mut acc = 0.0;
    let lo = j.saturating_sub(m);
    for p in lo..=n.min(j) {
        let q = j - p;
        let ln_mag = ln_fact(n) - ln_fact(p) - ln_fact(n - p) + ln_fact(m) - ln_fact(q) - ln_fact(m - q)
            + (p + m - q) as f64 * t.ln()
            + (n - p + q) as f64 * r.ln();
        let sign = if q % 2 == 1 { -1.0 } else { 1.0 };
        acc += sign * ln_mag.exp();
    }
    acc * (0.5 * (ln_fact(j) + ln_fact(k) - ln_fact(n) - ln_fact(m))).exp()
}

/// Joint element of the channel output obtained by summing the Kraus
/// operators ⟨k|_E U |m⟩_E √p_m of the beam-splitter dilation with a thermal
/// environment of mean N_B/(1−κ).
pub fn kraus_joint_element(n1: usize, n2: usize, n1p: usize, n2p: usize, ch: &ChannelParams, env_max: usize) -> f64 {
    if n1 as i64 - n2 as i64 != n1p as i64 - n2p as i64 {
        return 0.0;
    }
    let (t, r) = (ch.kappa.sqrt(), (1.0 - ch.kappa).sqrt());
    let ne = ch.n_b / (1.0 - ch.kappa);
    let ns = ch.n_s;
    let c = |n: usize| {
        let ln_pow = if n == 0 { 0.0 } else { n as f64 * ns.ln() };
        (0.5 * (ln_pow - (n + 1) as f64 * ns.ln_1p())).exp()
    };
    let m_lo = n1.saturating_sub(n2);
    let mut acc = 0.0;
    for m in m_lo..=env_max {
        let pm = if ne == 0.0 {
            if m == 0 { 1.0 } else { 0.0 }
        } else {
            (m as f64 * (ne / (1.0 + ne)).ln() - ne.ln_1p()).exp()
        };
        if pm == 0.0 {
            continue;
        }
        acc += pm * beam_splitter_amp(n2, m, n1, t, r) * beam_splitter_amp(n2p, m, n1p, t, r);
    }
    c(n2) * c(n2p) * acc
}

/// Uhlmann fidelity (tr√(√ρσ√ρ))² of two zero-mean two-mode Gaussian states,
/// covariances in units where the vacuum is I/2.
pub fn gaussian_fidelity_two_mode(v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> f64 {
    let n = v1.nrows();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n / 2 {
        j[(2 * k, 2 * k + 1)] = 1.0;
        j[(2 * k + 1, 2 * k)] = -1.0;
    }
    let delta = (v1 + v2).determinant();
    let gamma = 16.0 * (&j * v1 * &j * v2 - DMatrix::identity(n, n) * 0.25).determinant();
    let cplx = |v: &DMatrix<f64>| -> f64 {
        let m = DMatrix::from_fn(n, n, |a, b| Complex::new(v[(a, b)], 0.5 * j[(a, b)]));
        m.determinant().re
    };
    let lambda = 16.0 * cplx(v1) * cplx(v2);
    let s = gamma.max(0.0).sqrt() + lambda.max(0.0).sqrt();
    1.0 / (s - (s * s - delta).max(0.0).sqrt())
}

/// QFI of the phase from 8(1−√F)/h², Richardson-extrapolated from h and h/2.
pub fn qfi_fidelity_oracle(ch: &ChannelParams, theta: f64) -> f64 {
    let v = |t: f64| channel_output_state(ch, t).unwrap().cov * 0.5;
    let at = |h: f64| {
        let f = gaussian_fidelity_two_mode(&v(theta), &v(theta + h));
        8.0 * (1.0 - f.sqrt()) / (h * h)
    };
    let (h, h2) = (1e-2, 5e-3);
    (4.0 * at(h2) - at(h)) / 3.0
}

/// Σ (∂_θ ln P)² P over the OPA count distribution, derivative by central
/// differences.
pub fn opa_fisher_fd(theta: f64, cfg: &OpaConfig) -> f64 {
    let h = 1e-5;
    let nb = |t: f64| opa_mean_photon(t, cfg, None).unwrap();
    let (n0, np, nm) = (nb(theta), nb(theta + h), nb(theta - h));
    let mut acc = 0.0;
    let mut mass = 0.0;
    let mut n = 0u64;
    while mass < 1.0 - 1e-15 && n < 1_000_000 {
        let lp = ln_negative_binomial(n, cfg.block_size, n0);
        let p = lp.exp();
        let d = (ln_negative_binomial(n, cfg.block_size, np) - ln_negative_binomial(n, cfg.block_size, nm)) / (2.0 * h);
        acc += d * d * p;
        mass += p;
        n += 1;
    }
    acc
}

/// ln of the terminating form of F(a,b;c;z)/Γ(c) for integers a, b ≥ c, from Euler's
/// transformation F(a,b;c;z) = (1−z)^{c−a−b} F(c−a, c−b; c; z).
pub fn ln_gauss_2f1_euler(a: u64, b: u64, c: u64, z: f64) -> f64 {
    assert!(a >= c && b >= c);
    let (ka, kb) = (a - c, b - c);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..ka.min(kb) {
        let kf = k as f64;
        term *= (ka as f64 - kf) * (kb as f64 - kf) / ((c as f64 + kf) * (kf + 1.0)) * z;
        sum += term;
    }
    let ln_gc = ln_fact(c as usize - 1);
    (c as f64 - a as f64 - b as f64) * (-z).ln_1p() + sum.ln() - ln_gc
}
