//! Scalar special functions: log-gamma, erfc and the two regularized
//! hypergeometric series used by the Fock-basis matrix elements.
//!
//! Both hypergeometric series have nonnegative terms for the integer
//! parameters used here, so they are accumulated in log space with a
//! rigorous geometric tail bound.

use crate::error::{domain, Error, Result};

/// Relative size of the tail at which a series is declared converged.
const SERIES_RTOL: f64 = 1e-16;
/// Hard cap on the number of series terms.
pub const MAX_SERIES_TERMS: usize = 1_000_000;

/// Value of a truncated positive series together with its tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    /// Sum of the retained terms. May be `inf` when only `ln_value` is representable.
    pub value: f64,
    /// Natural log of `value`, always finite for a converged series.
    pub ln_value: f64,
    pub terms_used: usize,
    /// Upper bound on the absolute error of `value` from dropping the tail.
    pub truncation_bound: f64,
}

/// ln Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain("log_gamma", format!("x = {x} must be positive and finite"));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// ln n! from an exact table for small n and log-gamma beyond it.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// ln of the binomial coefficient C(n, k), accurate to a few ulps of the
/// result even when n is huge and k is small.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    ln_rising((n - k + 1) as f64, k) - ln_factorial(k)
}

/// ln Γ(x + j) − ln Γ(x) for x ≥ 1.
pub fn ln_rising(x: f64, j: u64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let jf = j as f64;
    if x < 16.0 {
        if j < 64 {
            return (0..j).map(|i| (x + i as f64).ln()).sum();
        }
        return statrs::function::gamma::ln_gamma(x + jf) - statrs::function::gamma::ln_gamma(x);
    }
    let y = x + jf;
    (x - 0.5) * (jf / x).ln_1p() + jf * y.ln() - jf + stirling_tail(y) - stirling_tail(x)
}

/// ln Γ(x) − [(x − ½)ln x − x + ½ln 2π] for x ≥ 16.
fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    (1.0 / 12.0 - r * (1.0 / 360.0 - r * (1.0 / 1260.0 - r / 1680.0))) / x
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    statrs::function::erf::erfc(x)
}

/// Regularized Gauss hypergeometric F(a,b;c;z)/Γ(c) for positive integer
/// parameters and 0 ≤ z < 1.
pub fn gauss_2f1_regularized(a: u64, b: u64, c: u64, z: f64) -> Result<SeriesResult> {
    const OP: &str = "gauss_2f1_regularized";
    if a == 0 || b == 0 || c == 0 {
        return domain(OP, "parameters must be positive integers");
    }
    if !(0.0..1.0).contains(&z) {
        return domain(OP, format!("z = {z} outside [0, 1)"));
    }
    let (a, b, c) = (a as f64, b as f64, c as f64);
    let ln_t0 = -ln_factorial(c as u64 - 1);
    positive_series(
        OP,
        ln_t0,
        |k| z * (a + k) * (b + k) / ((k + 1.0) * (c + k)),
        |k| z * ((a + k) / (k + 1.0)).max(1.0) * ((b + k) / (c + k)).max(1.0),
    )
}

/// Regularized confluent hypergeometric ₁F₁(a;b;z)/Γ(b) for positive
/// integer parameters and z ≥ 0.
pub fn confluent_1f1_regularized(a: u64, b: u64, z: f64) -> Result<SeriesResult> {
    const OP: &str = "confluent_1f1_regularized";
    if a == 0 || b == 0 {
        return domain(OP, "parameters must be positive integers");
    }
    if !(z >= 0.0) || !z.is_finite() {
        return domain(OP, format!("z = {z} must be finite and nonnegative"));
    }
    let (a, b) = (a as f64, b as f64);
    let ln_t0 = -ln_factorial(b as u64 - 1);
    positive_series(
        OP,
        ln_t0,
        |k| z * (a + k) / ((k + 1.0) * (b + k)),
        |k| z * ((a + k) / (k + 1.0)).max(1.0) / (b + k),
    )
}

/// Sums t_0 + t_1 + ... with t_{k+1} = t_k · ratio(k), all terms ≥ 0.
/// `tail_ratio(k)` must bound ratio(j) for every j ≥ k.
fn positive_series(
    op: &'static str,
    ln_t0: f64,
    ratio: impl Fn(f64) -> f64,
    tail_ratio: impl Fn(f64) -> f64,
) -> Result<SeriesResult> {
    let mut ln_t = ln_t0;
    let mut scale = ln_t0;
    let mut sum = 1.0_f64;
    let mut terms = 1usize;
    let mut bound = f64::INFINITY;
    let mut converged = false;

    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        let rho = tail_ratio(kf);
        if rho == 0.0 {
            bound = 0.0;
            converged = true;
            break;
        }
        if rho < 1.0 {
            let ln_tail = ln_t + (rho / (1.0 - rho)).ln();
            if ln_tail - scale - sum.ln() < SERIES_RTOL.ln() {
                bound = ln_tail.exp();
                converged = true;
                break;
            }
        }
        let r = ratio(kf);
        if r == 0.0 {
            bound = 0.0;
            converged = true;
            break;
        }
        ln_t += r.ln();
        if ln_t > scale {
            sum = sum * (scale - ln_t).exp() + 1.0;
            scale = ln_t;
        } else {
            sum += (ln_t - scale).exp();
        }
        terms += 1;
    }

    let ln_value = scale + sum.ln();
    let result = SeriesResult {
        value: ln_value.exp(),
        ln_value,
        terms_used: terms,
        truncation_bound: bound,
    };
    if !converged {
        return Err(Error::Truncation {
            op,
            partial: result,
        });
    }
    Ok(result)
}
