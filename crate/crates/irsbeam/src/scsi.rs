//! Low-complexity single-user beamforming from statistical CSI: the BS/IRS
//! power split is fixed offline by a transcendental equation in t (the
//! arcsine of the scaled selection threshold), and only the phase selection
//! and MRT beamformer are computed online.
//!
//! The offline split maximizes the LoS-approximated SNR
//! `(4 |a_G a_h|^2 M^2 N / (pi^2 s^2)) (P0 - P_PIN M/2 + P_PIN M t / pi) cos^2 t`
//! whose stationary point solves `(2 pi P0 / (P_PIN M) - pi + 2t)^{-1} = tan t`
//! on the branch where the bracket is positive.

use crate::channel::{upa_response, ChannelGeometry, ChannelRealization};
use crate::model::{PinVector, Precoder, Solution, SystemConfig};
use crate::{C64, CMat, CVec};
use std::f64::consts::PI;

/// Offline power-allocation design quantities.
#[derive(Debug, Clone)]
pub struct ScsiDesign {
    /// Root of the power-split equation, in [0, pi/2).
    pub t_star: f64,
    /// Selection threshold tau = sin(t*) / M.
    pub tau: f64,
    /// Diode budget M_on = floor(M/2 - M t*/pi).
    pub m_on_budget: usize,
    /// Number of elements with positive real part in h_o.
    pub m_positive: usize,
    /// Actually selected diodes, min(M_p, M_on).
    pub m_on_actual: usize,
    /// Planned PS-DPC P_PIN (M/2 - M t*/pi), watts.
    pub p_irs_ps: f64,
    /// Planned BS transmit power P0 - p_irs_ps, watts.
    pub p_bs_t: f64,
    /// LoS amplitude factor of the BS-IRS channel.
    pub alpha_g: f64,
    /// LoS amplitude factor of the IRS-user channel.
    pub alpha_h: f64,
}

/// Solve `(2 pi P0/(P_PIN M) - pi + 2t)^{-1} = tan t` for the unique root on
/// the sub-interval of [0, pi/2) where the bracket is positive.
///
/// The left side decreases from +inf at the bracket's zero while tan t
/// increases to +inf at pi/2, so plain bisection cannot miss.
pub fn solve_t_star(p0: f64, p_pin: f64, m: usize) -> f64 {
    assert!(p0 > 0.0 && p_pin > 0.0 && m >= 1);
    let a = 2.0 * PI * p0 / (p_pin * m as f64);
    let t_min = ((PI - a) / 2.0).max(0.0);
    let mut lo = t_min;
    let mut hi = PI / 2.0;
    // residual sign: positive just above lo, negative just below hi
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at float resolution
        }
        let bracket = a - PI + 2.0 * mid;
        let positive = if bracket <= 0.0 {
            true // left of the admissible branch; move right
        } else {
            1.0 / bracket - mid.tan() > 0.0
        };
        if positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Statistical element response h_o: elementwise product of the user-side
/// steering vector and the conjugated IRS-arrival steering vector, so that
/// |[h_o]_m| = 1/M for every element.
pub fn build_h_o(aod_user: (f64, f64), aoa_irs: (f64, f64), m_x: usize, m_y: usize) -> CVec {
    let a_user = upa_response(m_x, m_y, aod_user.0, aod_user.1);
    let a_irs = upa_response(m_x, m_y, aoa_irs.0, aoa_irs.1);
    CVec::from_fn(m_x * m_y, |m, _| a_user[m] * a_irs[m].conj())
}

/// Turn on the diodes for the top min(M_p, budget) elements of Re(h_o),
/// sorted descending (ties broken toward the lower index).
pub fn select_phases(h_o: &CVec, m_on_budget: usize) -> PinVector {
    let m = h_o.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| h_o[j].re.total_cmp(&h_o[i].re).then_with(|| i.cmp(&j)));
    let m_positive = h_o.iter().filter(|v| v.re > 0.0).count();
    let take = m_positive.min(m_on_budget);
    let mut pins = PinVector::all_off(m);
    for &idx in order.iter().take(take) {
        pins.set(idx, true);
    }
    pins
}

/// MRT beamformer f = eps G^H Phi^H h scaled so ||f||^2 = p_bs_t exactly;
/// a vanishing effective channel yields the all-zero beamformer.
pub fn bs_beamformer(g_mat: &CMat, h_vec: &CVec, pins: &PinVector, p_bs_t: f64) -> CVec {
    let n = g_mat.ncols();
    if p_bs_t <= 0.0 {
        return CVec::zeros(n);
    }
    let phased = CVec::from_fn(g_mat.nrows(), |m, _| h_vec[m] * pins.phase(m));
    let v = g_mat.adjoint() * phased;
    let norm = v.norm();
    if norm == 0.0 {
        return CVec::zeros(n);
    }
    v.map(|x| x * C64::new(p_bs_t.sqrt() / norm, 0.0))
}

/// Closed-form LoS-approximated SNR as a function of the split parameter t.
pub fn predicted_snr(
    t: f64,
    cfg: &SystemConfig,
    alpha_g: f64,
    alpha_h: f64,
    m: usize,
    n: usize,
) -> f64 {
    let mf = m as f64;
    let gain =
        4.0 * (alpha_g * alpha_h).powi(2) * mf * mf * n as f64 / (PI * PI * cfg.noise_power);
    gain * (cfg.p0 - cfg.p_pin * mf / 2.0 + cfg.p_pin * mf * t / PI) * t.cos().powi(2)
}

fn los_amplitude(kappa: f64, pathloss: f64) -> f64 {
    if kappa.is_infinite() {
        pathloss.sqrt()
    } else {
        (kappa / (1.0 + kappa) * pathloss).sqrt()
    }
}

/// Offline design for a given geometry: power split, selection threshold, and
/// the LoS amplitudes used by the SNR prediction.
pub fn design(cfg: &SystemConfig, geom: &ChannelGeometry) -> ScsiDesign {
    let m = cfg.n_irs();
    // free diodes: the split degenerates to t* = 0, half the elements on
    let t_star = if cfg.p_pin > 0.0 {
        solve_t_star(cfg.p0, cfg.p_pin, m)
    } else {
        0.0
    };
    let p_irs_ps = cfg.p_pin * (m as f64 / 2.0 - m as f64 * t_star / PI);
    let m_on_budget = if cfg.p_pin > 0.0 {
        (p_irs_ps / cfg.p_pin).floor().max(0.0) as usize
    } else {
        m / 2
    };
    let h_o = build_h_o(
        (geom.aod_user_elev[0], geom.aod_user_azim[0]),
        (geom.aoa_irs_elev, geom.aoa_irs_azim),
        cfg.irs_x,
        cfg.irs_y,
    );
    let m_positive = h_o.iter().filter(|v| v.re > 0.0).count();
    ScsiDesign {
        t_star,
        tau: t_star.sin() / m as f64,
        m_on_budget,
        m_positive,
        m_on_actual: m_positive.min(m_on_budget),
        p_irs_ps,
        p_bs_t: cfg.p0 - p_irs_ps,
        alpha_g: los_amplitude(geom.rician_g, geom.pathloss_bs_irs()),
        alpha_h: los_amplitude(geom.rician_h[0], geom.pathloss_irs_user(0)),
    }
}

/// Run the statistical-CSI design against one channel realization: phases
/// from the LoS angles, MRT on the true channels, rate on the full
/// realization. Unused diode budget is returned to the BS.
pub fn run_scsi(
    channels: &ChannelRealization,
    geom: &ChannelGeometry,
    cfg: &SystemConfig,
) -> Solution {
    assert_eq!(cfg.n_users, 1, "the statistical-CSI design is single-user");
    let des = design(cfg, geom);
    let h_o = build_h_o(
        (geom.aod_user_elev[0], geom.aod_user_azim[0]),
        (geom.aoa_irs_elev, geom.aoa_irs_azim),
        cfg.irs_x,
        cfg.irs_y,
    );
    let pins = select_phases(&h_o, des.m_on_budget);
    let p_bs = cfg.p0 - cfg.p_pin * pins.count_on() as f64;
    let f = bs_beamformer(&channels.g_mat, &channels.h_vecs[0], &pins, p_bs);
    let precoder = Precoder::new(CMat::from_columns(&[f]));
    Solution::evaluate(channels, precoder, pins, cfg, 1, true)
}
