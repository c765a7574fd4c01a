//! Multi-user sum-rate maximization through the WMMSE reformulation, with
//! joint power-allocation / pin-vector optimization.
//!
//! Minimizing g = sum_k (psi_k e_k - ln psi_k) over the receive scalars w,
//! MSE weights psi, the factored precoder (zeta, F_hat) and the pin vector b
//! is equivalent to maximizing the sum rate. Each outer iteration performs
//! block updates:
//!
//! 1. closed-form MMSE update of (w, psi),
//! 2. a coordinate-descent sweep over the pin bits — either re-optimizing
//!    (zeta, F_hat) implicitly through the Woodbury-reduced objective g_tilde
//!    (`FOpt`), or only rescaling the previous precoder by a power factor rho
//!    (`FScale`),
//! 3. the KKT-optimal (zeta, F_hat) update, which spends the full remaining
//!    budget P0 - P_PIN 1^T b.
//!
//! Every step is non-increasing in g, so the outer loop converges
//! monotonically.

use crate::channel::ChannelRealization;
use crate::model::{PinVector, Precoder, Solution, SystemConfig};
use crate::{C64, CMat, CVec};
use std::f64::consts::PI;

/// Outer-iteration cap of the WMMSE loop.
pub const MAX_ITERATIONS: usize = 100;
/// Coordinate-descent sweep cap inside one outer iteration.
pub const MAX_CD_SWEEPS: usize = 10;
/// Phase rotations probed by the alignment initializer.
const INIT_ROTATIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JpabfVariant {
    FOpt,
    FScale,
}

/// Starting pin vector of the descent.
#[derive(Debug, Clone)]
pub enum JpabfInit {
    /// Deterministic rotated-prefix alignment scan (the default).
    AlignedPrefix,
    /// All diodes off.
    AllOff,
    /// Caller-supplied pins.
    Pins(PinVector),
}

/// Auxiliary WMMSE quantities after one outer iteration.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub w: Vec<C64>,
    pub psi: Vec<f64>,
    pub zeta: f64,
    pub f_hat: CMat,
    pub mse: Vec<f64>,
    pub g_value: f64,
}

/// Effective BS-to-user channels through the IRS: row k is
/// h_k^H (2B - I) G.
pub fn effective_channels(channels: &ChannelRealization, pins: &PinVector) -> CMat {
    let m = channels.g_mat.nrows();
    let n = channels.g_mat.ncols();
    let k = channels.h_vecs.len();
    let mut h_e = CMat::zeros(k, n);
    for (ki, h) in channels.h_vecs.iter().enumerate() {
        for mi in 0..m {
            let scale = h[mi].conj() * pins.phase(mi);
            for ni in 0..n {
                h_e[(ki, ni)] += scale * channels.g_mat[(mi, ni)];
            }
        }
    }
    h_e
}

/// Rank-one update of the effective channels for a single bit flip:
/// delta = +2 turns element m on, -2 turns it off.
fn flip_effective(h_e: &mut CMat, channels: &ChannelRealization, m: usize, delta: f64) {
    for (ki, h) in channels.h_vecs.iter().enumerate() {
        let scale = h[m].conj() * delta;
        for ni in 0..h_e.ncols() {
            h_e[(ki, ni)] += scale * channels.g_mat[(m, ni)];
        }
    }
}

/// MMSE receive scalars, the resulting per-user MSEs, and weights
/// psi_k = 1 / e_k, for the full precoder F = zeta * F_hat.
pub fn update_w_psi(
    h_e: &CMat,
    f_full: &CMat,
    zeta: f64,
    sigma2: f64,
) -> (Vec<C64>, Vec<f64>, Vec<f64>) {
    let k = h_e.nrows();
    let a = h_e * f_full; // a[k][j] = h_{e,k}^H f_j
    let mut w = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k);
    for ki in 0..k {
        let total: f64 = (0..k).map(|j| a[(ki, j)].norm_sqr()).sum::<f64>() + sigma2;
        let sig = a[(ki, ki)].norm_sqr();
        w.push(a[(ki, ki)] * C64::new(zeta / total, 0.0));
        e.push((1.0 - sig / total).max(f64::MIN_POSITIVE));
    }
    let psi = e.iter().map(|ek| 1.0 / ek).collect();
    (w, psi, e)
}

/// KKT-optimal factored precoder for fixed (w, psi, b):
/// F_hat = V^{-1} H_e^H W Psi with
/// V = (sigma^2 / P_rem) Tr(Psi W^H W) I + H_e^H W Psi W^H H_e,
/// and zeta chosen to spend the whole remaining budget.
pub fn update_f_zeta(
    pins: &PinVector,
    h_e: &CMat,
    w: &[C64],
    psi: &[f64],
    cfg: &SystemConfig,
) -> (CMat, f64) {
    let n = h_e.ncols();
    let k = h_e.nrows();
    let p_rem = cfg.p0 - cfg.p_pin * pins.count_on() as f64;
    if p_rem <= 0.0 {
        return (CMat::zeros(n, k), 0.0);
    }
    let tr_pww: f64 = (0..k).map(|ki| psi[ki] * w[ki].norm_sqr()).sum();
    if tr_pww <= 0.0 {
        return (CMat::zeros(n, k), 0.0);
    }
    let mut v = CMat::identity(n, n) * C64::new(cfg.noise_power / p_rem * tr_pww, 0.0);
    let mut rhs = CMat::zeros(n, k);
    for ki in 0..k {
        let hk = h_e.row(ki).adjoint(); // column vector h_{e,k}
        let weight = psi[ki] * w[ki].norm_sqr();
        v += &hk * hk.adjoint() * C64::new(weight, 0.0);
        let col_scale = w[ki] * psi[ki];
        for ni in 0..n {
            rhs[(ni, ki)] = hk[ni] * col_scale;
        }
    }
    let f_hat = v
        .lu()
        .solve(&rhs)
        .expect("V is positive definite for sigma^2 > 0");
    let norm = f_hat.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (f_hat, 0.0);
    }
    (f_hat, p_rem.sqrt() / norm)
}

fn g_tilde_from_he(h_e: &CMat, w: &[C64], psi: &[f64], p_rem: f64, sigma2: f64) -> f64 {
    let k = h_e.nrows();
    let sum_psi: f64 = psi.iter().sum();
    if p_rem <= 0.0 {
        return sum_psi;
    }
    let tr_pww: f64 = (0..k).map(|ki| psi[ki] * w[ki].norm_sqr()).sum();
    if tr_pww <= 0.0 {
        return sum_psi;
    }
    let coef = p_rem / (sigma2 * tr_pww);
    // T = Psi^{-1} + coef * W^H H_e H_e^H W
    let mut t = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut x = C64::new(0.0, 0.0);
            for nn in 0..h_e.ncols() {
                x += w[i].conj() * h_e[(i, nn)] * (w[j].conj() * h_e[(j, nn)]).conj();
            }
            t[(i, j)] = x * C64::new(coef, 0.0);
        }
        t[(i, i)] += C64::new(1.0 / psi[i], 0.0);
    }
    match t.try_inverse() {
        Some(inv) => (0..k).map(|i| inv[(i, i)].re).sum(),
        None => sum_psi,
    }
}

/// The Woodbury-reduced WMMSE objective as a function of the pin vector:
/// Tr((Psi^{-1} + (P_rem / (sigma^2 Tr(Psi W^H W))) W^H H_e H_e^H W)^{-1}),
/// with the zero-power limit Tr(Psi) when the remaining budget vanishes.
pub fn g_tilde(
    pins: &PinVector,
    w: &[C64],
    psi: &[f64],
    channels: &ChannelRealization,
    cfg: &SystemConfig,
) -> f64 {
    let h_e = effective_channels(channels, pins);
    let p_rem = cfg.p0 - cfg.p_pin * pins.count_on() as f64;
    g_tilde_from_he(&h_e, w, psi, p_rem, cfg.noise_power)
}

/// One-bit-at-a-time descent on g_tilde: each bit is set to the minimizing
/// value (ties toward off), sweeping in index order until a fixed point or
/// the sweep cap.
pub fn cd_b_fopt(
    pins: &PinVector,
    w: &[C64],
    psi: &[f64],
    channels: &ChannelRealization,
    cfg: &SystemConfig,
) -> PinVector {
    let m = pins.len();
    let mut pins = pins.clone();
    let mut h_e = effective_channels(channels, &pins);
    let mut n_on = pins.count_on();
    let sigma2 = cfg.noise_power;
    for _sweep in 0..MAX_CD_SWEEPS {
        let mut changed = false;
        for mi in 0..m {
            let was_on = pins.get(mi);
            if was_on {
                flip_effective(&mut h_e, channels, mi, -2.0);
            }
            let n_off = n_on - usize::from(was_on);
            let g_off = g_tilde_from_he(
                &h_e,
                w,
                psi,
                cfg.p0 - cfg.p_pin * n_off as f64,
                sigma2,
            );
            flip_effective(&mut h_e, channels, mi, 2.0);
            let g_on = g_tilde_from_he(
                &h_e,
                w,
                psi,
                cfg.p0 - cfg.p_pin * (n_off + 1) as f64,
                sigma2,
            );
            let turn_on = g_on < g_off; // tie keeps the diode off
            if turn_on {
                n_on = n_off + 1;
            } else {
                flip_effective(&mut h_e, channels, mi, -2.0);
                n_on = n_off;
            }
            if turn_on != was_on {
                changed = true;
                pins.set(mi, turn_on);
            }
        }
        if !changed {
            break;
        }
    }
    pins
}

/// Quadratic form of the power-scaled objective
/// g_hat(rho, b) = rho^2 (2b-1)^H Xi (2b-1) - 2 rho Re{rho_vec^H (2b-1)}.
#[derive(Debug, Clone)]
pub struct ScaleQuadratic {
    pub xi_mat: CMat,
    pub rho_vec: CVec,
    /// (2b-1)^H Xi (2b-1) at the pins the quadratic was built with.
    pub q: f64,
    /// Re{rho_vec^H (2b-1)} at those pins.
    pub r: f64,
    /// Budget bound on the scaling factor at those pins.
    pub rho_max: f64,
    /// zeta_p^2 Tr(F_hat_p^H F_hat_p): previous BS transmit power.
    pub prev_power: f64,
}

/// Alignment vector rho = diag(H^H W Psi F_hat_p^H G^H); its real part
/// measures the per-element gain of switching that diode on.
pub fn alignment_vector(
    channels: &ChannelRealization,
    w: &[C64],
    psi: &[f64],
    f_hat_prev: &CMat,
) -> CVec {
    let m = channels.g_mat.nrows();
    let gf = &channels.g_mat * f_hat_prev; // M x K
    CVec::from_fn(m, |mi, _| {
        let mut acc = C64::new(0.0, 0.0);
        for (ki, h) in channels.h_vecs.iter().enumerate() {
            acc += h[mi] * w[ki] * psi[ki] * gf[(mi, ki)].conj();
        }
        acc
    })
}

/// Assemble the scale quadratic for the current pins and previous precoder.
pub fn build_scale_quadratic(
    pins: &PinVector,
    w: &[C64],
    psi: &[f64],
    f_hat_prev: &CMat,
    zeta_prev: f64,
    channels: &ChannelRealization,
    cfg: &SystemConfig,
) -> ScaleQuadratic {
    let m = channels.g_mat.nrows();
    let k = channels.h_vecs.len();
    let gf = &channels.g_mat * f_hat_prev; // M x K
    // Xi = (H W Psi W^H H^H) o (G F F^H G^H)^T, entrywise X_ij * Y_ji
    let mut xi_mat = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut x = C64::new(0.0, 0.0);
            for ki in 0..k {
                let weight = psi[ki] * w[ki].norm_sqr();
                x += channels.h_vecs[ki][i] * channels.h_vecs[ki][j].conj()
                    * C64::new(weight, 0.0);
            }
            let mut y = C64::new(0.0, 0.0);
            for ki in 0..k {
                y += gf[(j, ki)] * gf[(i, ki)].conj(); // Y_{ji}
            }
            xi_mat[(i, j)] = x * y;
        }
    }
    let rho_vec = alignment_vector(channels, w, psi, f_hat_prev);
    let z = CVec::from_fn(m, |mi, _| C64::new(pins.phase(mi), 0.0));
    let xz = &xi_mat * &z;
    let q = (0..m).map(|mi| (z[mi].conj() * xz[mi]).re).sum();
    let r = (0..m).map(|mi| (rho_vec[mi].conj() * z[mi]).re).sum();
    let prev_power = zeta_prev * zeta_prev
        * f_hat_prev.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let p_rem = cfg.p0 - cfg.p_pin * pins.count_on() as f64;
    let rho_max = if prev_power > 0.0 {
        (p_rem.max(0.0) / prev_power).sqrt()
    } else {
        0.0
    };
    ScaleQuadratic { xi_mat, rho_vec, q, r, rho_max, prev_power }
}

/// Closed-form minimizer of q rho^2 - 2 r rho over [0, rho_max].
pub fn optimal_rho(q: f64, r: f64, rho_max: f64) -> f64 {
    if q > 0.0 {
        (r / q).clamp(0.0, rho_max)
    } else if r > 0.0 {
        rho_max
    } else {
        0.0
    }
}

fn g_hat_value(q: f64, r: f64, rho_max: f64) -> (f64, f64) {
    let rho = optimal_rho(q, r, rho_max);
    (q * rho * rho - 2.0 * r * rho, rho)
}

/// Coordinate descent on the scale quadratic: each bit compared with its
/// per-candidate re-optimized power scaling, ties toward off.
pub fn cd_b_fscale(
    pins: &PinVector,
    w: &[C64],
    psi: &[f64],
    f_hat_prev: &CMat,
    zeta_prev: f64,
    channels: &ChannelRealization,
    cfg: &SystemConfig,
) -> (PinVector, f64) {
    let m = pins.len();
    let mut pins = pins.clone();
    let quad = build_scale_quadratic(&pins, w, psi, f_hat_prev, zeta_prev, channels, cfg);
    let ScaleQuadratic { xi_mat, rho_vec, mut q, mut r, prev_power, .. } = quad;
    let mut n_on = pins.count_on();
    // running Xi z for O(M) single-flip updates of q
    let z = CVec::from_fn(m, |mi, _| C64::new(pins.phase(mi), 0.0));
    let mut xz = &xi_mat * &z;

    let rho_bound = |count: usize| -> f64 {
        let p_rem = cfg.p0 - cfg.p_pin * count as f64;
        if prev_power > 0.0 {
            (p_rem.max(0.0) / prev_power).sqrt()
        } else {
            0.0
        }
    };

    for _sweep in 0..MAX_CD_SWEEPS {
        let mut changed = false;
        for mi in 0..m {
            let was_on = pins.get(mi);
            let s = if was_on { 1.0 } else { -1.0 };
            // candidate values for the flipped state (delta = -2s on z_m)
            let delta = -2.0 * s;
            let q_flip = q + 2.0 * delta * xz[mi].re + delta * delta * xi_mat[(mi, mi)].re;
            let r_flip = r + delta * rho_vec[mi].re;
            let n_flip = if was_on { n_on - 1 } else { n_on + 1 };
            let (g_cur, _) = g_hat_value(q, r, rho_bound(n_on));
            let (g_flip, _) = g_hat_value(q_flip, r_flip, rho_bound(n_flip));
            let (g_off, g_on) = if was_on { (g_flip, g_cur) } else { (g_cur, g_flip) };
            let turn_on = g_on < g_off; // tie keeps the diode off
            if turn_on != was_on {
                changed = true;
                q = q_flip;
                r = r_flip;
                for i in 0..m {
                    xz[i] += xi_mat[(i, mi)] * C64::new(delta, 0.0);
                }
                pins.set(mi, turn_on);
                n_on = n_flip;
            }
        }
        if !changed {
            break;
        }
    }
    let (_, rho) = g_hat_value(q, r, rho_bound(n_on));
    (pins, rho)
}

/// Deterministic starting pins: probe prefixes of the alignment ordering
/// under a small grid of phase rotations and keep the g_tilde-best set.
pub fn aligned_prefix_init(channels: &ChannelRealization, cfg: &SystemConfig) -> PinVector {
    let m = channels.g_mat.nrows();
    let all_off = PinVector::all_off(m);
    let h_e0 = effective_channels(channels, &all_off);
    let f_hat0 = h_e0.adjoint();
    let norm0 = f_hat0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm0 == 0.0 || cfg.p0 <= 0.0 {
        return all_off;
    }
    let zeta0 = cfg.p0.sqrt() / norm0;
    let f_full = &f_hat0 * C64::new(zeta0, 0.0);
    let (w, psi, _) = update_w_psi(&h_e0, &f_full, zeta0, cfg.noise_power);
    let rho = alignment_vector(channels, &w, &psi, &f_hat0);

    let budget = if cfg.p_pin > 0.0 {
        ((cfg.p0 / cfg.p_pin).floor() as usize).min(m)
    } else {
        m
    };
    let mut best_g = g_tilde_from_he(&h_e0, &w, &psi, cfg.p0, cfg.noise_power);
    let mut best = all_off.clone();
    for ti in 0..INIT_ROTATIONS {
        let theta = 2.0 * PI * ti as f64 / INIT_ROTATIONS as f64;
        let rot = C64::from_polar(1.0, theta);
        let mut order: Vec<usize> = (0..m).collect();
        let proj: Vec<f64> = (0..m).map(|mi| (rho[mi] * rot).re).collect();
        order.sort_by(|&a, &b| proj[b].total_cmp(&proj[a]).then_with(|| a.cmp(&b)));
        let positive = proj.iter().filter(|p| **p > 0.0).count();
        let j_max = positive.min(budget);
        let mut h_e = h_e0.clone();
        let mut pins = all_off.clone();
        for j in 1..=j_max {
            let mi = order[j - 1];
            flip_effective(&mut h_e, channels, mi, 2.0);
            pins.set(mi, true);
            let p_rem = cfg.p0 - cfg.p_pin * j as f64;
            let g = g_tilde_from_he(&h_e, &w, &psi, p_rem, cfg.noise_power);
            if g < best_g - 1e-15 {
                best_g = g;
                best = pins.clone();
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct JpabfRun {
    pub solution: Solution,
    pub state: WmmseState,
    /// WMMSE objective after each (w, psi) update; nonincreasing.
    pub g_history: Vec<f64>,
    /// Power scaling reported by the last FScale bit sweep (1 for FOpt).
    pub last_rho: f64,
}

/// Run one JPABF variant to Delta-convergence of the WMMSE objective.
pub fn run_jpabf(
    variant: JpabfVariant,
    channels: &ChannelRealization,
    cfg: &SystemConfig,
    init: JpabfInit,
) -> Solution {
    run_jpabf_detailed(variant, channels, cfg, init).solution
}

pub fn run_jpabf_detailed(
    variant: JpabfVariant,
    channels: &ChannelRealization,
    cfg: &SystemConfig,
    init: JpabfInit,
) -> JpabfRun {
    let k = channels.h_vecs.len();
    assert!(k >= 1 && k == cfg.n_users);
    let mut pins = match init {
        JpabfInit::AlignedPrefix => aligned_prefix_init(channels, cfg),
        JpabfInit::AllOff => PinVector::all_off(channels.g_mat.nrows()),
        JpabfInit::Pins(p) => p,
    };
    let mut h_e = effective_channels(channels, &pins);
    // matched-filter start with the full residual budget
    let mut f_hat = h_e.adjoint();
    let norm = f_hat.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let p_rem0 = cfg.p0 - cfg.p_pin * pins.count_on() as f64;
    let mut zeta = if norm > 0.0 && p_rem0 > 0.0 {
        p_rem0.sqrt() / norm
    } else {
        0.0
    };

    let mut g_prev = f64::INFINITY;
    let mut g_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_rho = 1.0;
    let mut last = WmmseState {
        w: vec![C64::new(0.0, 0.0); k],
        psi: vec![1.0; k],
        zeta,
        f_hat: f_hat.clone(),
        mse: vec![1.0; k],
        g_value: f64::INFINITY,
    };

    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let f_full = &f_hat * C64::new(zeta, 0.0);
        let (w, psi, e) = update_w_psi(&h_e, &f_full, zeta, cfg.noise_power);
        let g = k as f64 + e.iter().map(|ek| ek.ln()).sum::<f64>();
        g_history.push(g);

        pins = match variant {
            JpabfVariant::FOpt => cd_b_fopt(&pins, &w, &psi, channels, cfg),
            JpabfVariant::FScale => {
                let (p, rho) = cd_b_fscale(&pins, &w, &psi, &f_hat, zeta, channels, cfg);
                last_rho = rho;
                p
            }
        };
        h_e = effective_channels(channels, &pins);
        let (fh, z) = update_f_zeta(&pins, &h_e, &w, &psi, cfg);
        f_hat = fh;
        zeta = z;

        last = WmmseState {
            w,
            psi,
            zeta,
            f_hat: f_hat.clone(),
            mse: e,
            g_value: g,
        };
        if g_prev - g <= cfg.convergence_tol {
            converged = true;
            break;
        }
        g_prev = g;
    }

    let precoder = Precoder::new(&f_hat * C64::new(zeta, 0.0));
    let solution = Solution::evaluate(channels, precoder, pins, cfg, iterations, converged);
    JpabfRun { solution, state: last, g_history, last_rho }
}
