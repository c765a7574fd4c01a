//! Rician BS-IRS and IRS-user channel generation with ULA/UPA array
//! responses, distance-based path loss, and seeded, splittable randomness.
//!
//! Randomness is derived from a 64-bit seed split per (purpose, user), so a
//! realization is bit-reproducible and adding users does not perturb the
//! streams of earlier users.

use crate::model::SystemConfig;
use crate::{C64, CMat, CVec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit combiner for deriving independent sub-seeds.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x6A09_E667_F3BC_C909u64;
    let mut out = 0u64;
    for &p in parts {
        state ^= p;
        out = splitmix64(&mut state);
    }
    out
}

const TAG_BS_GEOMETRY: u64 = 0x01;
const TAG_USER_GEOMETRY: u64 = 0x02;
const TAG_G_NLOS: u64 = 0x03;
const TAG_H_NLOS: u64 = 0x04;

/// Seeded random source for one channel realization, split per purpose/user.
#[derive(Debug, Clone, Copy)]
pub struct SplitRng {
    seed: u64,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        SplitRng { seed }
    }

    pub fn stream(&self, tag: u64, idx: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, tag, idx]))
    }
}

/// Long-term channel state: distances, angles, Rician factors, path loss law.
#[derive(Debug, Clone)]
pub struct ChannelGeometry {
    pub d_bs_irs: f64,
    pub d_irs_user: Vec<f64>,
    /// BS-side AoD of the LoS path (theta_t).
    pub aod_bs: f64,
    /// Elevation AoA at the IRS (theta_r); 0 encodes normal incidence.
    pub aoa_irs_elev: f64,
    /// Azimuth AoA at the IRS (varphi_r).
    pub aoa_irs_azim: f64,
    /// Per-user elevation AoD at the IRS.
    pub aod_user_elev: Vec<f64>,
    /// Per-user azimuth AoD at the IRS.
    pub aod_user_azim: Vec<f64>,
    pub rician_g: f64,
    pub rician_h: Vec<f64>,
    pub pathloss_coeff: f64,
    pub pathloss_exp: f64,
}

impl ChannelGeometry {
    pub fn pathloss_bs_irs(&self) -> f64 {
        self.pathloss_coeff * self.d_bs_irs.powf(-self.pathloss_exp)
    }

    pub fn pathloss_irs_user(&self, k: usize) -> f64 {
        self.pathloss_coeff * self.d_irs_user[k].powf(-self.pathloss_exp)
    }
}

/// Distribution constants behind `sample_geometry`.
#[derive(Debug, Clone)]
pub struct GeometryParams {
    pub d_bs_irs: f64,
    pub d_user_min: f64,
    pub d_user_max: f64,
    pub rician_g: f64,
    pub rician_h: f64,
    pub pathloss_coeff: f64,
    pub pathloss_exp: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            d_bs_irs: 20.0,
            d_user_min: 50.0,
            d_user_max: 70.0,
            rician_g: 8.0,
            rician_h: 8.0,
            pathloss_coeff: 1e-4,
            pathloss_exp: 2.2,
        }
    }
}

/// ULA response a(n, x): element i is e^{j pi i x} / sqrt(n).
pub fn ula_response(n: usize, x: f64) -> CVec {
    let scale = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |i, _| C64::from_polar(scale, PI * i as f64 * x))
}

/// UPA response at the IRS: Kronecker product of the two axis ULA responses
/// with spatial frequencies -sin(elev)sin(azim) and -sin(elev)cos(azim).
pub fn upa_response(m_x: usize, m_y: usize, elev: f64, azim: f64) -> CVec {
    let ax = ula_response(m_x, -elev.sin() * azim.sin());
    let ay = ula_response(m_y, -elev.sin() * azim.cos());
    let mut out = CVec::zeros(m_x * m_y);
    for i in 0..m_x {
        for l in 0..m_y {
            out[i * m_y + l] = ax[i] * ay[l];
        }
    }
    out
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    // unit variance per complex entry: two N(0, 1/2) components
    let re: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
    let im: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
    C64::new(re, im) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

/// Rician mixing weights, handling the pure-LoS limit kappa = inf.
fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

/// BS-IRS channel G: Rician mixture of a plane-wave LoS component and an
/// i.i.d. complex-Gaussian NLoS component, both scaled by the path loss.
pub fn gen_bs_irs(geom: &ChannelGeometry, cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> CMat {
    let m = cfg.n_irs();
    let n = cfg.n_bs_antennas;
    let pl = geom.pathloss_bs_irs();
    let (w_los, w_nlos) = rician_weights(geom.rician_g);
    let a_i = upa_response(cfg.irs_x, cfg.irs_y, geom.aoa_irs_elev, geom.aoa_irs_azim);
    let a_bs = ula_response(n, geom.aod_bs.cos());
    let los_scale = (pl * m as f64 * n as f64).sqrt();
    let nlos_scale = pl.sqrt();
    CMat::from_fn(m, n, |r, c| {
        let los = a_i[r] * a_bs[c].conj() * los_scale;
        los * w_los
    }) + {
        let mut nlos = CMat::zeros(m, n);
        if w_nlos > 0.0 {
            for r in 0..m {
                for c in 0..n {
                    nlos[(r, c)] = complex_gaussian(rng) * nlos_scale * w_nlos;
                }
            }
        }
        nlos
    }
}

/// IRS-user channel h_k (column vector; the physical row channel is h_k^H).
pub fn gen_irs_user(geom: &ChannelGeometry, cfg: &SystemConfig, k: usize, rng: &mut ChaCha8Rng) -> CVec {
    let m = cfg.n_irs();
    let pl = geom.pathloss_irs_user(k);
    let (w_los, w_nlos) = rician_weights(geom.rician_h[k]);
    let a_i = upa_response(cfg.irs_x, cfg.irs_y, geom.aod_user_elev[k], geom.aod_user_azim[k]);
    let los_scale = (pl * m as f64).sqrt();
    let nlos_scale = pl.sqrt();
    CVec::from_fn(m, |i, _| {
        let mut v = a_i[i] * los_scale * w_los;
        if w_nlos > 0.0 {
            v += complex_gaussian(rng) * nlos_scale * w_nlos;
        }
        v
    })
}

/// Cascaded channel H_c = diag(h^H) G: row m of G scaled by conj(h[m]).
pub fn cascade(h: &CVec, g_mat: &CMat) -> CMat {
    let mut out = g_mat.clone();
    for m in 0..g_mat.nrows() {
        let scale = h[m].conj();
        for n in 0..g_mat.ncols() {
            out[(m, n)] *= scale;
        }
    }
    out
}

/// Draw the per-realization geometry: user distances uniform in
/// [d_min, d_max), user AoDs uniform in [0, pi/4] x [0, 2pi), BS at normal
/// incidence (theta_r = 0) with theta_t uniform in [0, pi).
pub fn sample_geometry(cfg: &SystemConfig, params: &GeometryParams, rng: &SplitRng) -> ChannelGeometry {
    let mut bs_rng = rng.stream(TAG_BS_GEOMETRY, 0);
    let aod_bs = bs_rng.gen_range(0.0..PI);
    let k = cfg.n_users;
    let mut d_irs_user = Vec::with_capacity(k);
    let mut elev = Vec::with_capacity(k);
    let mut azim = Vec::with_capacity(k);
    for user in 0..k {
        let mut u = rng.stream(TAG_USER_GEOMETRY, user as u64);
        d_irs_user.push(u.gen_range(params.d_user_min..params.d_user_max));
        elev.push(u.gen_range(0.0..PI / 4.0));
        azim.push(u.gen_range(0.0..2.0 * PI));
    }
    ChannelGeometry {
        d_bs_irs: params.d_bs_irs,
        d_irs_user,
        aod_bs,
        aoa_irs_elev: 0.0,
        aoa_irs_azim: 0.0,
        aod_user_elev: elev,
        aod_user_azim: azim,
        rician_g: params.rician_g,
        rician_h: vec![params.rician_h; k],
        pathloss_coeff: params.pathloss_coeff,
        pathloss_exp: params.pathloss_exp,
    }
}

/// One channel draw: G, the per-user vectors h_k, and the cascaded matrices.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub g_mat: CMat,
    pub h_vecs: Vec<CVec>,
    pub cascaded: Vec<CMat>,
}

impl ChannelRealization {
    /// Generate the fast-fading realization for a fixed geometry.
    pub fn generate(cfg: &SystemConfig, geom: &ChannelGeometry, rng: &SplitRng) -> Self {
        let g_mat = gen_bs_irs(geom, cfg, &mut rng.stream(TAG_G_NLOS, 0));
        let h_vecs: Vec<CVec> = (0..cfg.n_users)
            .map(|k| gen_irs_user(geom, cfg, k, &mut rng.stream(TAG_H_NLOS, k as u64)))
            .collect();
        let cascaded = h_vecs.iter().map(|h| cascade(h, &g_mat)).collect();
        ChannelRealization { g_mat, h_vecs, cascaded }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cfg(mx: usize, my: usize, n: usize, k: usize) -> SystemConfig {
        SystemConfig::with_defaults(n, mx, my, k, 1.0)
    }

    #[test]
    fn ula_basics() {
        let a = ula_response(1, 0.7);
        assert_eq!(a.len(), 1);
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-15);

        let a = ula_response(2, 1.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((a[1] - C64::new(-s, 0.0)).norm() < 1e-12);

        for &(n, x) in &[(3usize, 0.3), (8, -1.7), (16, 0.0)] {
            let a = ula_response(n, x);
            let norm: f64 = a.iter().map(|c| c.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn upa_basics() {
        let a = upa_response(1, 1, 0.4, 1.1);
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-15);

        // elev = 0 -> both spatial frequencies 0 -> uniform vector
        let a = upa_response(3, 4, 0.0, 2.3);
        let expect = 1.0 / 12f64.sqrt();
        for v in a.iter() {
            assert!((v - C64::new(expect, 0.0)).norm() < 1e-12);
        }

        // direct Kronecker expansion for 2x2, elev = pi/2, azim = 0
        let a = upa_response(2, 2, PI / 2.0, 0.0);
        let ax = ula_response(2, 0.0);
        let ay = ula_response(2, -1.0);
        for i in 0..2 {
            for l in 0..2 {
                assert!((a[i * 2 + l] - ax[i] * ay[l]).norm() < 1e-12);
            }
        }
        let norm: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    fn fixed_geometry(cfg: &SystemConfig, kappa_g: f64, kappa_h: f64) -> ChannelGeometry {
        ChannelGeometry {
            d_bs_irs: 20.0,
            d_irs_user: vec![60.0; cfg.n_users],
            aod_bs: 1.0,
            aoa_irs_elev: 0.0,
            aoa_irs_azim: 0.0,
            aod_user_elev: vec![0.5; cfg.n_users],
            aod_user_azim: vec![1.3; cfg.n_users],
            rician_g: kappa_g,
            rician_h: vec![kappa_h; cfg.n_users],
            pathloss_coeff: 1e-4,
            pathloss_exp: 2.2,
        }
    }

    #[test]
    fn los_component_is_rank_one_with_exact_frobenius_norm() {
        let cfg = test_cfg(3, 2, 4, 1);
        let geom = fixed_geometry(&cfg, f64::INFINITY, f64::INFINITY);
        let mut rng = SplitRng::new(9).stream(0x99, 0);
        let g = gen_bs_irs(&geom, &cfg, &mut rng);
        let frob: f64 = g.iter().map(|c| c.norm_sqr()).sum();
        let expect = geom.pathloss_bs_irs() * 6.0 * 4.0;
        assert!((frob - expect).abs() < 1e-12 * expect);
        // rank 1: all 2x2 minors vanish
        for r in 0..5 {
            for c in 0..3 {
                let det = g[(r, c)] * g[(r + 1, c + 1)] - g[(r, c + 1)] * g[(r + 1, c)];
                assert!(det.norm() < 1e-12 * expect);
            }
        }
    }

    #[test]
    fn rician_mixture_mean_energy() {
        // E ||G||_F^2 = PL * M * N for any kappa; check kappa = 0 and 8.
        let cfg = test_cfg(2, 2, 2, 1);
        let expect = {
            let geom = fixed_geometry(&cfg, 0.0, 0.0);
            geom.pathloss_bs_irs() * 4.0 * 2.0
        };
        for kappa in [0.0, 8.0] {
            let geom = fixed_geometry(&cfg, kappa, kappa);
            let split = SplitRng::new(31);
            let mut acc = 0.0;
            let n_draws = 10_000;
            for i in 0..n_draws {
                let mut rng = split.stream(0x50, i);
                let g = gen_bs_irs(&geom, &cfg, &mut rng);
                acc += g.iter().map(|c| c.norm_sqr()).sum::<f64>();
            }
            let mean = acc / n_draws as f64;
            assert!(
                (mean - expect).abs() < 0.03 * expect,
                "kappa={kappa}: mean {mean} vs expected {expect}"
            );
        }
    }

    #[test]
    fn irs_user_mean_energy_and_los_norm() {
        let cfg = test_cfg(2, 3, 2, 1);
        let geom = fixed_geometry(&cfg, f64::INFINITY, f64::INFINITY);
        let mut rng = SplitRng::new(5).stream(0x51, 0);
        let h = gen_irs_user(&geom, &cfg, 0, &mut rng);
        let expect = geom.pathloss_irs_user(0) * 6.0;
        let norm: f64 = h.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - expect).abs() < 1e-12 * expect);

        let geom = fixed_geometry(&cfg, 8.0, 8.0);
        let split = SplitRng::new(77);
        let mut acc = 0.0;
        let n_draws = 10_000;
        for i in 0..n_draws {
            let mut rng = split.stream(0x52, i);
            let h = gen_irs_user(&geom, &cfg, 0, &mut rng);
            acc += h.iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        let mean = acc / n_draws as f64;
        assert!((mean - expect).abs() < 0.03 * expect);
    }

    #[test]
    fn cascade_matches_elementwise_definition() {
        let cfg = test_cfg(2, 2, 3, 1);
        let geom = fixed_geometry(&cfg, 8.0, 8.0);
        let split = SplitRng::new(123);
        let g = gen_bs_irs(&geom, &cfg, &mut split.stream(1, 0));
        let ones = CVec::from_element(4, C64::new(1.0, 0.0));
        let hc = cascade(&ones, &g);
        assert!((&hc - &g).iter().all(|d| d.norm() < 1e-15));

        let h = gen_irs_user(&geom, &cfg, 0, &mut split.stream(2, 0));
        let hc = cascade(&h, &g);
        for m in 0..4 {
            for n in 0..3 {
                let expect = h[m].conj() * g[(m, n)];
                assert!((hc[(m, n)] - expect).norm() < 1e-15);
            }
        }

        // associativity: cascade(h, G) f == diag(h^H) (G f)
        let f = CVec::from_fn(3, |i, _| C64::new(0.3 + i as f64, -0.2));
        let lhs = &hc * &f;
        let gf = &g * &f;
        for m in 0..4 {
            let rhs = h[m].conj() * gf[m];
            assert!((lhs[m] - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn geometry_sampling_is_deterministic_and_in_range() {
        let cfg = test_cfg(2, 2, 3, 3);
        let params = GeometryParams::default();
        let g1 = sample_geometry(&cfg, &params, &SplitRng::new(42));
        let g2 = sample_geometry(&cfg, &params, &SplitRng::new(42));
        assert_eq!(g1.d_irs_user, g2.d_irs_user);
        assert_eq!(g1.aod_bs, g2.aod_bs);
        assert_eq!(g1.aod_user_azim, g2.aod_user_azim);

        for k in 0..3 {
            assert!(g1.d_irs_user[k] >= 50.0 && g1.d_irs_user[k] < 70.0);
            assert!(g1.aod_user_elev[k] >= 0.0 && g1.aod_user_elev[k] <= PI / 4.0);
            assert!(g1.aod_user_azim[k] >= 0.0 && g1.aod_user_azim[k] < 2.0 * PI);
        }
        assert_eq!(g1.aoa_irs_elev, 0.0);
    }

    #[test]
    fn adding_users_keeps_earlier_streams() {
        let params = GeometryParams::default();
        let cfg2 = test_cfg(2, 2, 3, 2);
        let cfg3 = test_cfg(2, 2, 3, 3);
        let g2 = sample_geometry(&cfg2, &params, &SplitRng::new(7));
        let g3 = sample_geometry(&cfg3, &params, &SplitRng::new(7));
        assert_eq!(g2.d_irs_user[..], g3.d_irs_user[..2]);
        assert_eq!(g2.aod_user_elev[..], g3.aod_user_elev[..2]);
    }

    #[test]
    fn user_distance_mean_near_sixty() {
        let cfg = test_cfg(2, 2, 2, 1);
        let params = GeometryParams::default();
        let mut acc = 0.0;
        let n = 10_000;
        for seed in 0..n {
            let geom = sample_geometry(&cfg, &params, &SplitRng::new(seed));
            acc += geom.d_irs_user[0];
        }
        let mean = acc / n as f64;
        assert!((mean - 60.0).abs() < 0.6, "mean {mean}");
    }

    #[test]
    fn realization_bit_reproducible() {
        let cfg = test_cfg(3, 3, 4, 2);
        let params = GeometryParams::default();
        let geom = sample_geometry(&cfg, &params, &SplitRng::new(11));
        let r1 = ChannelRealization::generate(&cfg, &geom, &SplitRng::new(12));
        let r2 = ChannelRealization::generate(&cfg, &geom, &SplitRng::new(12));
        assert_eq!(r1.g_mat, r2.g_mat);
        assert_eq!(r1.h_vecs, r2.h_vecs);
        assert_eq!(r1.cascaded[0], r2.cascaded[0]);
    }
}
