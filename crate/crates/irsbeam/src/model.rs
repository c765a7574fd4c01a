//! Shared physical and optimization quantities: the 1-bit phase model, the
//! PS-DPC power model, system power accounting, and SINR/rate evaluation.
//!
//! All rates are reported in bits/s/Hz (base-2 logarithm); the WMMSE
//! internals in [`crate::jpabf`] use natural logarithms, which does not change
//! any argmax. Powers are in watts; dBm conversion follows
//! `P[dBm] = 10 log10(P / 1 mW)`.

use crate::channel::ChannelRealization;
use crate::{C64, CMat};
use std::fmt;

/// System-level constants: array sizes, power constants, budget, tolerance.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Number of BS antennas (N).
    pub n_bs_antennas: usize,
    /// IRS elements along x (M_x).
    pub irs_x: usize,
    /// IRS elements along y (M_y).
    pub irs_y: usize,
    /// Number of single-antenna users (K).
    pub n_users: usize,
    /// Power drawn by one on-state PIN diode, watts.
    pub p_pin: f64,
    /// Noise power at each user, watts.
    pub noise_power: f64,
    /// Effective system power budget P0, watts (transmit + PS-DPC).
    pub p0: f64,
    /// BS control-circuit power, watts (static, excluded from P0).
    pub p_bs_circuits: f64,
    /// Per-RF-chain power at the BS, watts (static).
    pub p_bs_rf_per_chain: f64,
    /// Static IRS power, watts.
    pub p_irs_static: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    /// Convergence tolerance for the iterative solvers.
    pub convergence_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid system configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl SystemConfig {
    /// Configuration with the simulation-table constants: P_PIN = 12 mW,
    /// sigma^2 = -110 dBm, lambda = 0.07 m, tolerance 0.005, static terms 0.
    pub fn with_defaults(n: usize, irs_x: usize, irs_y: usize, k: usize, p0: f64) -> Self {
        SystemConfig {
            n_bs_antennas: n,
            irs_x,
            irs_y,
            n_users: k,
            p_pin: 0.012,
            noise_power: dbm_to_watts(-110.0),
            p0,
            p_bs_circuits: 0.0,
            p_bs_rf_per_chain: 0.0,
            p_irs_static: 0.0,
            wavelength: 0.07,
            convergence_tol: 0.005,
        }
    }

    /// Total IRS element count M = M_x * M_y.
    pub fn n_irs(&self) -> usize {
        self.irs_x * self.irs_y
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_bs_antennas < 1 || self.irs_x < 1 || self.irs_y < 1 || self.n_users < 1 {
            return Err(ConfigError("N, M_x, M_y, K must all be >= 1".into()));
        }
        let powers = [
            ("p_pin", self.p_pin),
            ("noise_power", self.noise_power),
            ("p0", self.p0),
            ("p_bs_circuits", self.p_bs_circuits),
            ("p_bs_rf_per_chain", self.p_bs_rf_per_chain),
            ("p_irs_static", self.p_irs_static),
        ];
        for (name, p) in powers {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(ConfigError(format!("{name} must be finite and >= 0, got {p}")));
            }
        }
        if !(self.convergence_tol > 0.0) {
            return Err(ConfigError("convergence_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// On/off state of the M PIN diodes; the discrete optimization variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PinVector {
    bits: Vec<bool>,
}

impl PinVector {
    pub fn all_off(m: usize) -> Self {
        PinVector { bits: vec![false; m] }
    }

    pub fn all_on(m: usize) -> Self {
        PinVector { bits: vec![true; m] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        PinVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, m: usize) -> bool {
        self.bits[m]
    }

    pub fn set(&mut self, m: usize, on: bool) {
        self.bits[m] = on;
    }

    pub fn count_on(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Reflection coefficient of element m: +1 when on, -1 when off.
    pub fn phase(&self, m: usize) -> f64 {
        if self.bits[m] {
            1.0
        } else {
            -1.0
        }
    }
}

/// The diagonal of the IRS phase matrix Phi = 2B - I: entry m is 2 b_m - 1.
pub fn phase_matrix(pins: &PinVector) -> Vec<f64> {
    pins.bits().iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

/// PS-DPC of the IRS: P_PIN times the number of on-state diodes.
pub fn ps_dpc(pins: &PinVector, p_pin: f64) -> f64 {
    p_pin * pins.count_on() as f64
}

/// Active beamforming matrix at the BS; column k serves user k.
#[derive(Debug, Clone)]
pub struct Precoder {
    pub f_cols: CMat,
}

impl Precoder {
    pub fn new(f_cols: CMat) -> Self {
        Precoder { f_cols }
    }

    pub fn zero(n: usize, k: usize) -> Self {
        Precoder { f_cols: CMat::zeros(n, k) }
    }

    /// Transmit power Tr(F^H F) = squared Frobenius norm.
    pub fn transmit_power(&self) -> f64 {
        self.f_cols.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Split of the beamforming-dependent system power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBreakdown {
    pub p_bs_transmit: f64,
    pub p_irs_ps: f64,
    pub p_total_effective: f64,
}

/// Beamforming-dependent power terms: Tr(F^H F) at the BS plus the PS-DPC.
pub fn system_power(precoder: &Precoder, pins: &PinVector, cfg: &SystemConfig) -> PowerBreakdown {
    let p_bs = precoder.transmit_power();
    let p_irs = ps_dpc(pins, cfg.p_pin);
    PowerBreakdown {
        p_bs_transmit: p_bs,
        p_irs_ps: p_irs,
        p_total_effective: p_bs + p_irs,
    }
}

/// Received-signal amplitudes a_{k,j} = h_k^H (2B - I) G f_j for all user /
/// stream pairs, computed with a single G F product.
fn amplitude_matrix(channels: &ChannelRealization, precoder: &Precoder, pins: &PinVector) -> CMat {
    let gf = &channels.g_mat * &precoder.f_cols; // M x K
    let k_users = channels.h_vecs.len();
    let n_streams = precoder.f_cols.ncols();
    CMat::from_fn(k_users, n_streams, |k, j| {
        let h = &channels.h_vecs[k];
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..h.len() {
            acc += h[m].conj() * pins.phase(m) * gf[(m, j)];
        }
        acc
    })
}

fn rate_from_amplitudes(a: &CMat, k: usize, noise_power: f64) -> (f64, f64) {
    let signal = a[(k, k)].norm_sqr();
    let interference: f64 = (0..a.ncols())
        .filter(|j| *j != k)
        .map(|j| a[(k, j)].norm_sqr())
        .sum();
    let gamma = interference + noise_power;
    ((1.0 + signal / gamma).log2(), gamma)
}

/// Rate of user k in bits/s/Hz and the interference-plus-noise power gamma_k.
pub fn user_rate(
    channels: &ChannelRealization,
    precoder: &Precoder,
    pins: &PinVector,
    k: usize,
    cfg: &SystemConfig,
) -> (f64, f64) {
    let n_users = precoder.f_cols.ncols();
    assert!(k < n_users, "user index {k} out of range for K={n_users}");
    let a = amplitude_matrix(channels, precoder, pins);
    rate_from_amplitudes(&a, k, cfg.noise_power)
}

/// Sum of `user_rate` over all users, bits/s/Hz.
pub fn sum_rate(
    channels: &ChannelRealization,
    precoder: &Precoder,
    pins: &PinVector,
    cfg: &SystemConfig,
) -> f64 {
    let a = amplitude_matrix(channels, precoder, pins);
    (0..precoder.f_cols.ncols())
        .map(|k| rate_from_amplitudes(&a, k, cfg.noise_power).0)
        .sum()
}

/// Single-user rate log2(1 + |(2b-1)^T H_c f|^2 / sigma^2) straight from the
/// cascaded channel, used by the single-user solvers.
pub fn single_user_rate(cascaded: &CMat, f: &crate::CVec, pins: &PinVector, noise_power: f64) -> f64 {
    let hcf = cascaded * f;
    let mut amp = C64::new(0.0, 0.0);
    for m in 0..hcf.len() {
        amp += pins.phase(m) * hcf[m];
    }
    (1.0 + amp.norm_sqr() / noise_power).log2()
}

/// Outcome of one solver run on one channel realization.
#[derive(Debug, Clone)]
pub struct Solution {
    pub precoder: Precoder,
    pub pins: PinVector,
    pub rate_per_user: Vec<f64>,
    pub sum_rate: f64,
    pub power: PowerBreakdown,
    pub iterations: usize,
    pub converged: bool,
}

impl Solution {
    /// Assemble a solution, evaluating rates and power from the realization.
    pub fn evaluate(
        channels: &ChannelRealization,
        precoder: Precoder,
        pins: PinVector,
        cfg: &SystemConfig,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let rate_per_user: Vec<f64> = (0..precoder.f_cols.ncols())
            .map(|k| user_rate(channels, &precoder, &pins, k, cfg).0)
            .collect();
        let sum_rate = rate_per_user.iter().sum();
        let power = system_power(&precoder, &pins, cfg);
        Solution {
            precoder,
            pins,
            rate_per_user,
            sum_rate,
            power,
            iterations,
            converged,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}
