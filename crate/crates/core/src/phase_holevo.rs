//! Fock-basis Holevo information of phase-encoded states.
//!
//! The joint state of the returned signal (photon number n₁) and the idler
//! (n₂) has matrix elements given by a regularized ₂F₁ series. Writing
//! X = −4N_S(1+N_B−κ), Y = −4N_B(N_S+1), W = −4N_S(N_B−κ) and cancelling the
//! common factors gives the form evaluated here, with all factors positive
//! and the series argument z = κ/(N_B(1+N_B−κ)). The series converges only
//! for N_B > κ.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::capacities::joint_output_entropy;
use crate::error::{domain, numerical, Error, Result};
use crate::gaussian_core::{g, ChannelParams};
use crate::special_fn::{gauss_2f1_regularized, ln_binomial, ln_factorial};

const LOG2_E: f64 = std::f64::consts::LOG2_E;
/// Captured probability mass required by auto-selected truncations.
pub const AUTO_MASS: f64 = 1.0 - 1e-10;
/// Minimum captured mass accepted for an explicit truncation.
pub const MIN_MASS: f64 = 1.0 - 1e-6;
/// Change in χ (bits) below which doubling the truncation stops.
pub const CHI_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 12;
/// Matrix elements below e^-650 are flushed to zero to keep dense
/// eigensolvers away from subnormal arithmetic.
const LN_NEGLIGIBLE: f64 = -650.0;
/// Rows of a block whose diagonal is below e^-92 (about 1e-40) of the
/// largest one are dropped before diagonalization.
const LN_BLOCK_RTOL: f64 = -92.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FockTruncation {
    /// Largest photon number kept, one entry per mode.
    pub n_max: Vec<usize>,
    pub captured_mass: f64,
}

/// Photon-number pmf, row-major over `dims` (one or two modes).
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub pmf: Vec<f64>,
    pub dims: Vec<usize>,
    pub truncation: FockTruncation,
}

impl PhotonDistribution {
    pub fn get(&self, idx: &[usize]) -> f64 {
        match *idx {
            [n] => self.pmf[n],
            [n1, n2] => self.pmf[n1 * self.dims[1] + n2],
            _ => panic!("index rank does not match"),
        }
    }

    pub fn mean(&self) -> f64 {
        assert_eq!(self.dims.len(), 1);
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        shannon_bits(self.pmf.iter().copied())
    }
}

/// Displaced thermal state with complex amplitude λ and thermal noise n_e.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacedThermal {
    pub amplitude: Complex64,
    pub noise: f64,
}

impl DisplacedThermal {
    pub fn new(amplitude: Complex64, noise: f64) -> Result<Self> {
        if !(noise >= 0.0) || !noise.is_finite() {
            return domain("DisplacedThermal", format!("noise = {noise} must be >= 0"));
        }
        if !amplitude.re.is_finite() || !amplitude.im.is_finite() {
            return domain("DisplacedThermal", "amplitude must be finite");
        }
        Ok(Self { amplitude, noise })
    }

    pub fn real(amplitude: f64, noise: f64) -> Result<Self> {
        Self::new(Complex64::new(amplitude, 0.0), noise)
    }

    pub fn mean_photons(&self) -> f64 {
        self.amplitude.norm_sqr() + self.noise
    }
}

/// Logs of the factors shared by every joint matrix element.
#[derive(Debug, Clone, Copy)]
struct JointKernel {
    ln_cp: f64,
    ln_ns: f64,
    ln_w: f64,
    ln_x: f64,
    ln_y: f64,
    z: f64,
    ch: ChannelParams,
}

impl JointKernel {
    fn new(ch: &ChannelParams) -> Result<Self> {
        ch.validate()?;
        let (k, nb, ns) = (ch.kappa, ch.n_b, ch.n_s);
        Ok(Self {
            ln_cp: ch.c_p().ln(),
            ln_ns: ns.ln(),
            ln_w: (nb - k).ln(),
            ln_x: (1.0 + nb - k).ln(),
            ln_y: nb.ln() + ns.ln_1p(),
            z: k / (nb * (1.0 + nb - k)),
            ch: *ch,
        })
    }

    fn element(&self, n1: usize, n2: usize, n1p: usize, n2p: usize) -> Result<f64> {
        if n1 as i64 - n1p as i64 != n2 as i64 - n2p as i64 {
            return Ok(0.0);
        }
        let (n1, n2, n1p, n2p) = if n2 >= n2p {
            (n1, n2, n1p, n2p)
        } else {
            (n1p, n2p, n1, n2)
        };
        let d = n2 - n2p;
        if self.ch.n_s == 0.0 {
            let nb = self.ch.n_b;
            return Ok(if n2 == 0 && n2p == 0 && n1 == n1p {
                thermal_prob(nb, n1)
            } else {
                0.0
            });
        }
        if d > 0 && self.ch.kappa == 0.0 {
            return Ok(0.0);
        }
        let f = gauss_2f1_regularized(1 + n1 as u64, 1 + n2 as u64, 1 + d as u64, self.z)?;
        let mut ln_v = 0.5
            * (ln_factorial(n1 as u64) + ln_factorial(n2 as u64)
                - ln_factorial(n1p as u64)
                - ln_factorial(n2p as u64))
            + (1 + n1p + n2) as f64 * self.ln_w
            - (1 + n1) as f64 * self.ln_x
            - (1 + n2) as f64 * self.ln_y
            + f.ln_value;
        if d > 0 {
            ln_v += d as f64 * self.ln_cp;
        }
        if n2p > 0 {
            ln_v += n2p as f64 * self.ln_ns;
        }
        if ln_v < LN_NEGLIGIBLE {
            return Ok(0.0);
        }
        Ok(ln_v.exp())
    }

    fn ln_diagonal(&self, n1: usize, n2: usize) -> Result<f64> {
        if self.ch.n_s == 0.0 {
            return Ok(if n2 == 0 {
                thermal_prob(self.ch.n_b, n1).ln()
            } else {
                f64::NEG_INFINITY
            });
        }
        let f = gauss_2f1_regularized(1 + n1 as u64, 1 + n2 as u64, 1, self.z)?;
        let mut ln_p = (1 + n1 + n2) as f64 * self.ln_w - (1 + n1) as f64 * self.ln_x
            - (1 + n2) as f64 * self.ln_y
            + f.ln_value;
        if n2 > 0 {
            ln_p += n2 as f64 * self.ln_ns;
        }
        Ok(ln_p)
    }
}

fn thermal_prob(n_bar: f64, n: usize) -> f64 {
    if n_bar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * (n_bar / (1.0 + n_bar)).ln() - n_bar.ln_1p()).exp()
}

/// ⟨n₁,n₂|ρ|n₁′,n₂′⟩ of the phase-free channel output; zero unless
/// n₁ − n₁′ = n₂ − n₂′.
pub fn joint_fock_element(
    n1: usize,
    n2: usize,
    n1p: usize,
    n2p: usize,
    ch: &ChannelParams,
) -> Result<f64> {
    JointKernel::new(ch)?.element(n1, n2, n1p, n2p)
}

/// Diagonal of the phase-averaged joint state on the grid 0..=n_max per mode.
pub fn phase_averaged_joint_pmf(
    ch: &ChannelParams,
    trunc: &FockTruncation,
) -> Result<PhotonDistribution> {
    let (pmf, _, mass) = joint_pmf_with_entropy(ch, trunc.n_max[0], trunc.n_max[1])?;
    if mass < MIN_MASS {
        return Err(Error::TruncationTooSmall {
            op: "phase_averaged_joint_pmf",
            msg: format!(
                "captured mass {mass:.3e} below {MIN_MASS}; increase n_max beyond {:?}",
                trunc.n_max
            ),
        });
    }
    Ok(PhotonDistribution {
        pmf,
        dims: vec![trunc.n_max[0] + 1, trunc.n_max[1] + 1],
        truncation: FockTruncation {
            n_max: trunc.n_max.clone(),
            captured_mass: mass,
        },
    })
}

fn joint_pmf_with_entropy(
    ch: &ChannelParams,
    n1_max: usize,
    n2_max: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let kernel = JointKernel::new(ch)?;
    let rows: Vec<(Vec<f64>, f64)> = (0..=n1_max)
        .into_par_iter()
        .map(|n1| -> Result<(Vec<f64>, f64)> {
            let mut row = Vec::with_capacity(n2_max + 1);
            let mut h = 0.0;
            for n2 in 0..=n2_max {
                let lp = kernel.ln_diagonal(n1, n2)?;
                let p = lp.exp();
                if p > 0.0 {
                    h -= p * lp;
                }
                row.push(p);
            }
            Ok((row, h))
        })
        .collect::<Result<_>>()?;
    let mut pmf = Vec::with_capacity((n1_max + 1) * (n2_max + 1));
    let mut h = 0.0;
    for (row, hr) in rows {
        pmf.extend(row);
        h += hr;
    }
    let mass = pmf.iter().sum();
    Ok((pmf, h * LOG2_E, mass))
}

fn initial_n_max(mean: f64) -> usize {
    (10.0 * (1.0 + mean)).ceil() as usize
}

/// Doubles the truncation until the captured mass and χ have both settled.
fn converge_truncation(
    op: &'static str,
    ch: &ChannelParams,
    mut chi_at: impl FnMut(usize, usize) -> Result<(f64, f64)>,
) -> Result<(f64, FockTruncation)> {
    let mut n1 = initial_n_max(ch.n_return());
    let mut n2 = initial_n_max(ch.n_s);
    let mut prev: Option<f64> = None;
    for _ in 0..MAX_DOUBLINGS {
        let (chi, mass) = chi_at(n1, n2)?;
        if let Some(p) = prev {
            if mass >= AUTO_MASS && (chi - p).abs() < CHI_TOL {
                return Ok((
                    chi,
                    FockTruncation {
                        n_max: vec![n1, n2],
                        captured_mass: mass,
                    },
                ));
            }
        }
        prev = Some(chi);
        n1 *= 2;
        n2 *= 2;
    }
    Err(Error::TruncationTooSmall {
        op,
        msg: format!("no convergence up to n_max = ({n1}, {n2})"),
    })
}

/// χ of the continuous uniform-phase ensemble, with its truncation.
pub fn holevo_continuous_phase_detailed(ch: &ChannelParams) -> Result<(f64, FockTruncation)> {
    ch.validate()?;
    if ch.n_s == 0.0 {
        return Ok((
            0.0,
            FockTruncation {
                n_max: vec![0, 0],
                captured_mass: 1.0,
            },
        ));
    }
    let s_cond = joint_output_entropy(ch)?;
    converge_truncation("holevo_continuous_phase", ch, |n1, n2| {
        let (_, h, mass) = joint_pmf_with_entropy(ch, n1, n2)?;
        Ok((h - s_cond, mass))
    })
}

/// Holevo information (bits per mode) of TMSV with uniform phase encoding.
pub fn holevo_continuous_phase(ch: &ChannelParams) -> Result<f64> {
    holevo_continuous_phase_detailed(ch).map(|(chi, _)| chi)
}

/// χ of the BPSK ensemble {0, π}, with its truncation.
pub fn holevo_bpsk_detailed(ch: &ChannelParams) -> Result<(f64, FockTruncation)> {
    ch.validate()?;
    if ch.n_s == 0.0 {
        return Ok((
            0.0,
            FockTruncation {
                n_max: vec![0, 0],
                captured_mass: 1.0,
            },
        ));
    }
    let s_cond = joint_output_entropy(ch)?;
    let kernel = JointKernel::new(ch)?;
    converge_truncation("holevo_bpsk", ch, |n1, n2| {
        let (s, mass) = bpsk_average_entropy(&kernel, n1, n2)?;
        Ok((s - s_cond, mass))
    })
}

/// Holevo information (bits per mode) of TMSV with BPSK encoding.
pub fn holevo_bpsk(ch: &ChannelParams) -> Result<f64> {
    holevo_bpsk_detailed(ch).map(|(chi, _)| chi)
}

/// Entropy of (ρ⁰ + ρ^π)/2, which splits into blocks of fixed n₁ − n₂ and
/// fixed parity of n₂.
fn bpsk_average_entropy(kernel: &JointKernel, n1_max: usize, n2_max: usize) -> Result<(f64, f64)> {
    let blocks: Vec<(i64, usize)> = (-(n2_max as i64)..=n1_max as i64)
        .flat_map(|d| [(d, 0), (d, 1)])
        .collect();
    let parts: Vec<(f64, f64)> = blocks
        .into_par_iter()
        .map(|(d, parity)| -> Result<(f64, f64)> {
            let lo = if d < 0 { (-d) as usize } else { 0 };
            let hi = n2_max.min((n1_max as i64 - d) as usize);
            let cand: Vec<usize> = (lo..=hi).filter(|n2| n2 % 2 == parity).collect();
            let diag = cand
                .iter()
                .map(|&a| kernel.ln_diagonal((a as i64 + d) as usize, a))
                .collect::<Result<Vec<f64>>>()?;
            let ln_max = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if ln_max == f64::NEG_INFINITY {
                return Ok((0.0, 0.0));
            }
            let idx: Vec<usize> = cand
                .iter()
                .zip(&diag)
                .filter(|(_, &l)| l - ln_max > LN_BLOCK_RTOL)
                .map(|(&a, _)| a)
                .collect();
            let scale = ln_max.exp();
            if scale == 0.0 {
                return Ok((0.0, 0.0));
            }
            let dim = idx.len();
            let mut m = DMatrix::zeros(dim, dim);
            for (i, &a) in idx.iter().enumerate() {
                for (j, &b) in idx.iter().enumerate().skip(i) {
                    let na = (a as i64 + d) as usize;
                    let nb = (b as i64 + d) as usize;
                    let v = kernel.element(na, a, nb, b)? / scale;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let eig = SymmetricEigen::new(m).eigenvalues;
            let mut s = 0.0;
            let mut tr = 0.0;
            for l in eig.iter().map(|l| l * scale) {
                if l < -1e-10 {
                    return numerical("holevo_bpsk", format!("negative eigenvalue {l:.3e}"));
                }
                if l > 0.0 {
                    s -= l * l.ln();
                    tr += l;
                }
            }
            Ok((s, tr))
        })
        .collect::<Result<_>>()?;
    let (s, mass) = parts
        .iter()
        .fold((0.0, 0.0), |(s, m), (a, b)| (s + a, m + b));
    Ok((s * LOG2_E, mass))
}

/// ⟨n|ρ|m⟩ of a displaced thermal state.
///
/// Kummer's transformation turns the ₁F̃₁ of the closed form into a finite
/// sum of positive terms, which stays exact down to n_e = 0.
pub fn dts_fock_element(d: &DisplacedThermal, n: usize, m: usize) -> Result<Complex64> {
    if m < n {
        return dts_fock_element(d, m, n).map(|c| c.conj());
    }
    let lam2 = d.amplitude.norm_sqr();
    let ne = d.noise;
    let ln_lam = 0.5 * lam2.ln();
    let ln_ne = ne.ln();
    let ln_1ne = ne.ln_1p();
    let dm = m - n;
    let mut terms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let pow_ne = n - k;
        let pow_lam = dm + 2 * k;
        if (pow_ne > 0 && ne == 0.0) || (pow_lam > 0 && lam2 == 0.0) {
            continue;
        }
        let mut t = ln_binomial(n as u64, k as u64) - k as f64 * ln_1ne - ln_factorial((dm + k) as u64);
        if pow_ne > 0 {
            t += pow_ne as f64 * ln_ne;
        }
        if pow_lam > 0 {
            t += pow_lam as f64 * ln_lam;
        }
        terms.push(t);
    }
    if terms.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let ln_mag = -lam2 / (1.0 + ne)
        + 0.5 * (ln_factorial(m as u64) - ln_factorial(n as u64))
        - (m + 1) as f64 * ln_1ne
        + log_sum_exp(&terms);
    if !ln_mag.is_finite() && ln_mag != f64::NEG_INFINITY {
        return numerical("dts_fock_element", "non-finite magnitude");
    }
    let phase = dm as f64 * d.amplitude.arg();
    Ok(Complex64::from_polar(ln_mag.exp(), phase))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Streams ln P(n) of the displaced-thermal photon-number distribution for
/// n = 0, 1, 2, ... using the three-term Laguerre recurrence.
#[derive(Debug, Clone)]
pub struct DtsPmfStream {
    n: usize,
    ln_prefactor: f64,
    ln_ratio_geo: f64,
    z: f64,
    ln_l: f64,
    ratio: f64,
    poisson: Option<(f64, f64)>,
}

impl DtsPmfStream {
    pub fn new(lam2: f64, ne: f64) -> Self {
        let z = lam2 / (ne * (1.0 + ne));
        let poisson = if ne == 0.0 || !z.is_finite() {
            Some((lam2, lam2.ln()))
        } else {
            None
        };
        Self {
            n: 0,
            ln_prefactor: -lam2 / (1.0 + ne) - ne.ln_1p(),
            ln_ratio_geo: (ne / (1.0 + ne)).ln(),
            z,
            ln_l: 0.0,
            ratio: 1.0,
            poisson,
        }
    }
}

impl Iterator for DtsPmfStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let n = self.n;
        self.n += 1;
        if let Some((lam2, ln_lam2)) = self.poisson {
            if lam2 == 0.0 {
                return Some(if n == 0 { 0.0 } else { f64::NEG_INFINITY });
            }
            return Some(-lam2 + n as f64 * ln_lam2 - ln_factorial(n as u64));
        }
        if n == 1 {
            self.ratio = 1.0 + self.z;
            self.ln_l = self.z.ln_1p();
        } else if n >= 2 {
            let k = (n - 1) as f64;
            self.ratio = ((2.0 * k + 1.0 + self.z) - k / self.ratio) / (k + 1.0);
            self.ln_l += self.ratio.ln();
        }
        let geo = if n == 0 { 0.0 } else { n as f64 * self.ln_ratio_geo };
        Some(self.ln_prefactor + geo + self.ln_l)
    }
}

/// Past the mean the DTS term ratio falls monotonically, so the remaining
/// mass is at most `p r / (1 - r)`. Summed mass alone cannot certify small
/// tails once rounding in the running sum exceeds the tolerance.
fn tail_below(n: usize, mean: f64, lp: f64, lp_prev: f64, mass: f64, tol: f64) -> bool {
    if (n as f64) <= mean {
        return false;
    }
    if 1.0 - mass < tol {
        return true;
    }
    let r = (lp - lp_prev).exp();
    r < 1.0 && lp.exp() * r / (1.0 - r) < tol
}

/// Photon-number distribution of a displaced thermal state. With
/// `n_max = None` the support is extended until the missing mass is < 1e-13.
pub fn dts_photon_pmf(d: &DisplacedThermal, n_max: Option<usize>) -> Result<PhotonDistribution> {
    let mean = d.mean_photons();
    let mut pmf = Vec::new();
    let mut mass = 0.0;
    let mut lp_prev = f64::NEG_INFINITY;
    for (n, lp) in DtsPmfStream::new(d.amplitude.norm_sqr(), d.noise).enumerate() {
        let p = lp.exp();
        pmf.push(p);
        mass += p;
        match n_max {
            Some(cap) if n >= cap => break,
            None if tail_below(n, mean, lp, lp_prev, mass, 1e-13) => break,
            _ => {}
        }
        lp_prev = lp;
        if n > 100_000_000 {
            return numerical("dts_photon_pmf", "support exceeds 1e8 photons");
        }
    }
    if mass < AUTO_MASS {
        return Err(Error::TruncationTooSmall {
            op: "dts_photon_pmf",
            msg: format!("captured mass {mass:.3e} with n_max = {}", pmf.len() - 1),
        });
    }
    let n = pmf.len();
    Ok(PhotonDistribution {
        pmf,
        dims: vec![n],
        truncation: FockTruncation {
            n_max: vec![n - 1],
            captured_mass: mass,
        },
    })
}

/// χ (total bits) of uniformly phase-encoded DTS with amplitude concentrated
/// from M modes: H[P_DTS(·; √M λ, n_e)] − g(n_e).
pub fn holevo_dts_ensemble(m_modes: u64, d: &DisplacedThermal) -> Result<f64> {
    if m_modes == 0 {
        return domain("holevo_dts_ensemble", "m_modes must be positive");
    }
    let lam2 = m_modes as f64 * d.amplitude.norm_sqr();
    if lam2 == 0.0 {
        return Ok(0.0);
    }
    let mean = lam2 + d.noise;
    let mut mass = 0.0;
    let mut h = Neumaier::default();
    let mut lp_prev = f64::NEG_INFINITY;
    for (n, lp) in DtsPmfStream::new(lam2, d.noise).enumerate() {
        let p = lp.exp();
        mass += p;
        if p > 0.0 {
            h.add(-p * lp);
        }
        if tail_below(n, mean, lp, lp_prev, mass, 1e-16) {
            break;
        }
        lp_prev = lp;
        if n > 1_000_000_000 {
            return numerical("holevo_dts_ensemble", "support exceeds 1e9 photons");
        }
    }
    Ok((h.sum() * LOG2_E - g(d.noise)).max(0.0))
}

/// Per-mode χ estimate of the FF-SFG effective ensemble:
/// |λ|² = κ(1−ε)M N_S(N_S+1)/(N_B+1), n_e = N_S ln(1/ε)/2, divided by M.
pub fn holevo_sfg_estimate(m_modes: u64, ch: &ChannelParams, epsilon: f64) -> Result<f64> {
    ch.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return domain("holevo_sfg_estimate", format!("epsilon = {epsilon} outside (0, 1)"));
    }
    if m_modes == 0 {
        return domain("holevo_sfg_estimate", "m_modes must be positive");
    }
    if ch.n_s == 0.0 {
        return Ok(0.0);
    }
    let m = m_modes as f64;
    let lam2 = ch.kappa * (1.0 - epsilon) * m * ch.n_s * (ch.n_s + 1.0) / (ch.n_b + 1.0);
    let ne = ch.n_s * (1.0 / epsilon).ln() / 2.0;
    let d = DisplacedThermal::real(lam2.sqrt(), ne)?;
    Ok(holevo_dts_ensemble(1, &d)? / m)
}

/// Shannon entropy in bits of a list of probabilities.
pub fn shannon_bits(p: impl Iterator<Item = f64>) -> f64 {
    let mut h = Neumaier::default();
    for x in p {
        if x > 0.0 {
            h.add(-x * x.ln());
        }
    }
    h.sum() * LOG2_E
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    s: f64,
    c: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.s + self.c
    }
}
