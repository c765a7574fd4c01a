//! Experiment driver: loads sweep configurations, runs seeded Monte-Carlo
//! sweeps over budget/IRS-size/method grids on a worker pool, and writes CSV
//! result tables plus an aggregate summary.
//!
//! Determinism: channels are seeded by hash(master_seed, realization) and
//! method-internal randomness by hash(master_seed, realization, method), so
//! reruns produce identical results regardless of the thread count, methods
//! are compared on paired channel draws, and editing the method list does not
//! perturb the other methods' streams. The `wall_ms` column is measured
//! wall-clock time and is the one field that varies between runs.

use crate::baselines::{run_ao, run_ignore_psdpc, AoInit, IgnoreMethod};
use crate::channel::{derive_seed, sample_geometry, ChannelRealization, GeometryParams, SplitRng};
use crate::gbd::run_gbd;
use crate::jpabf::{run_jpabf, JpabfInit, JpabfVariant};
use crate::model::{dbm_to_watts, watts_to_dbm, PinVector, Solution, SystemConfig};
use crate::scsi::run_scsi;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

const SEED_TAG_CHANNEL: u64 = 0xC0;
const SEED_TAG_METHOD: u64 = 0xD0;

/// Default cap on the IRS size for the exponential-master GBD method.
pub const DEFAULT_GBD_M_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    PowerBudget,
    IrsSize,
    Convergence,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Gbd,
    Scsi,
    JpabfFOpt,
    JpabfFScale,
    AoRand,
    AoZero,
    IgnoreFOpt,
    IgnoreFScale,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Gbd,
        Method::Scsi,
        Method::JpabfFOpt,
        Method::JpabfFScale,
        Method::AoRand,
        Method::AoZero,
        Method::IgnoreFOpt,
        Method::IgnoreFScale,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gbd => "gbd",
            Method::Scsi => "scsi",
            Method::JpabfFOpt => "jpabf-fopt",
            Method::JpabfFScale => "jpabf-fscale",
            Method::AoRand => "ao-rand",
            Method::AoZero => "ao-zero",
            Method::IgnoreFOpt => "ignore-fopt",
            Method::IgnoreFScale => "ignore-fscale",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.name() == s)
    }

    /// Stable id folded into the per-run seed derivation.
    fn id(&self) -> u64 {
        match self {
            Method::Gbd => 1,
            Method::Scsi => 2,
            Method::JpabfFOpt => 3,
            Method::JpabfFScale => 4,
            Method::AoRand => 5,
            Method::AoZero => 6,
            Method::IgnoreFOpt => 7,
            Method::IgnoreFScale => 8,
        }
    }

    fn single_user_only(&self) -> bool {
        matches!(self, Method::Gbd | Method::Scsi)
    }
}

#[derive(Debug)]
pub enum HarnessError {
    Config(String),
    MethodIntractable(String),
    Io(std::io::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "config error: {msg}"),
            HarnessError::MethodIntractable(msg) => write!(f, "method intractable: {msg}"),
            HarnessError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

/// One grid point of a sweep: an effective budget and an IRS layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub p0_w: f64,
    pub p0_dbm: f64,
    pub irs_x: usize,
    pub irs_y: usize,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sweep: SweepKind,
    pub methods: Vec<Method>,
    pub p0_grid_dbm: Vec<(f64, f64)>, // (watts, dBm)
    pub m_grid: Vec<(usize, usize)>,
    pub k: usize,
    pub n_realizations: usize,
    pub seed: u64,
    pub output_path: PathBuf,
    pub n_bs_antennas: usize,
    pub p_pin: f64,
    pub noise_power: f64,
    pub p_bs_circuits: f64,
    pub p_bs_rf_per_chain: f64,
    pub p_irs_static: f64,
    pub wavelength: f64,
    pub convergence_tol: f64,
    pub geometry: GeometryParams,
    pub gbd_m_cap: usize,
}

impl ExperimentSpec {
    /// Grid points actually exercised by the chosen sweep kind.
    pub fn grid(&self) -> Vec<GridPoint> {
        let point = |&(w, dbm): &(f64, f64), &(x, y): &(usize, usize)| GridPoint {
            p0_w: w,
            p0_dbm: dbm,
            irs_x: x,
            irs_y: y,
        };
        match self.sweep {
            SweepKind::PowerBudget => self
                .p0_grid_dbm
                .iter()
                .map(|p| point(p, &self.m_grid[0]))
                .collect(),
            SweepKind::IrsSize => self
                .m_grid
                .iter()
                .map(|m| point(&self.p0_grid_dbm[0], m))
                .collect(),
            SweepKind::Convergence | SweepKind::Single => {
                vec![point(&self.p0_grid_dbm[0], &self.m_grid[0])]
            }
        }
    }

    pub fn system_config(&self, gp: &GridPoint) -> SystemConfig {
        SystemConfig {
            n_bs_antennas: self.n_bs_antennas,
            irs_x: gp.irs_x,
            irs_y: gp.irs_y,
            n_users: self.k,
            p_pin: self.p_pin,
            noise_power: self.noise_power,
            p0: gp.p0_w,
            p_bs_circuits: self.p_bs_circuits,
            p_bs_rf_per_chain: self.p_bs_rf_per_chain,
            p_irs_static: self.p_irs_static,
            wavelength: self.wavelength,
            convergence_tol: self.convergence_tol,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.p0_grid_dbm.is_empty() || self.m_grid.is_empty() {
            return Err(HarnessError::Config("empty p0 or IRS grid".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Config("no methods selected".into()));
        }
        if self.n_realizations < 1 {
            return Err(HarnessError::Config("n_realizations must be >= 1".into()));
        }
        for method in &self.methods {
            if method.single_user_only() && self.k != 1 {
                return Err(HarnessError::Config(format!(
                    "method {} is single-user but k = {}",
                    method.name(),
                    self.k
                )));
            }
        }
        if self.methods.contains(&Method::Gbd) {
            for gp in self.grid() {
                let m = gp.irs_x * gp.irs_y;
                if m > self.gbd_m_cap {
                    return Err(HarnessError::MethodIntractable(format!(
                        "gbd at M = {m} exceeds the cap of {} (the master is a 2^M search)",
                        self.gbd_m_cap
                    )));
                }
            }
        }
        for gp in self.grid() {
            self.system_config(&gp)
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One result row; serialized as one CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub realization: usize,
    pub p0_dbm: f64,
    pub m: usize,
    pub k: usize,
    pub sum_rate_bps_hz: f64,
    pub p_bs_w: f64,
    pub p_irs_ps_w: f64,
    pub n_diodes_on: usize,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
    pub infeasible: bool,
}

pub const CSV_HEADER: &str = "method,seed,realization,p0_dbm,m,k,sum_rate_bps_hz,p_bs_w,p_irs_ps_w,n_diodes_on,iterations,converged,wall_ms,infeasible";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{}",
            self.method.name(),
            self.seed,
            self.realization,
            self.p0_dbm,
            self.m,
            self.k,
            self.sum_rate_bps_hz,
            self.p_bs_w,
            self.p_irs_ps_w,
            self.n_diodes_on,
            self.iterations,
            self.converged,
            self.wall_ms,
            self.infeasible
        )
    }
}

fn run_one(
    spec: &ExperimentSpec,
    gp: &GridPoint,
    method: Method,
    realization: usize,
) -> ResultRow {
    let cfg = spec.system_config(gp);
    let channel_seed = derive_seed(&[spec.seed, SEED_TAG_CHANNEL, realization as u64]);
    let method_seed = derive_seed(&[
        spec.seed,
        SEED_TAG_METHOD,
        realization as u64,
        method.id(),
    ]);
    let split = SplitRng::new(channel_seed);
    let geom = sample_geometry(&cfg, &spec.geometry, &split);
    let channels = ChannelRealization::generate(&cfg, &geom, &split);
    let mut rng = ChaCha8Rng::seed_from_u64(method_seed);

    let started = Instant::now();
    let outcome: Result<Solution, crate::baselines::IgnoreInfeasible> = match method {
        Method::Gbd => Ok(run_gbd(
            &channels.cascaded[0],
            &cfg,
            &PinVector::all_off(cfg.n_irs()),
        )),
        Method::Scsi => Ok(run_scsi(&channels, &geom, &cfg)),
        Method::JpabfFOpt => Ok(run_jpabf(
            JpabfVariant::FOpt,
            &channels,
            &cfg,
            JpabfInit::AlignedPrefix,
        )),
        Method::JpabfFScale => Ok(run_jpabf(
            JpabfVariant::FScale,
            &channels,
            &cfg,
            JpabfInit::AlignedPrefix,
        )),
        Method::AoRand => Ok(run_ao(AoInit::RandomFeasible, &channels, &cfg, &mut rng)),
        Method::AoZero => Ok(run_ao(AoInit::AllOff, &channels, &cfg, &mut rng)),
        Method::IgnoreFOpt => {
            run_ignore_psdpc(IgnoreMethod::JpabfFOpt, &channels, Some(&geom), &cfg, &mut rng)
        }
        Method::IgnoreFScale => {
            run_ignore_psdpc(IgnoreMethod::JpabfFScale, &channels, Some(&geom), &cfg, &mut rng)
        }
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    match outcome {
        Ok(sol) => ResultRow {
            method,
            seed: method_seed,
            realization,
            p0_dbm: gp.p0_dbm,
            m: cfg.n_irs(),
            k: cfg.n_users,
            sum_rate_bps_hz: sol.sum_rate,
            p_bs_w: sol.power.p_bs_transmit,
            p_irs_ps_w: sol.power.p_irs_ps,
            n_diodes_on: sol.pins.count_on(),
            iterations: sol.iterations,
            converged: sol.converged,
            wall_ms,
            infeasible: false,
        },
        Err(infeasible) => ResultRow {
            method,
            seed: method_seed,
            realization,
            p0_dbm: gp.p0_dbm,
            m: cfg.n_irs(),
            k: cfg.n_users,
            sum_rate_bps_hz: 0.0,
            p_bs_w: 0.0,
            p_irs_ps_w: infeasible.p_irs_ps,
            n_diodes_on: (infeasible.p_irs_ps / cfg.p_pin.max(f64::MIN_POSITIVE)).round() as usize,
            iterations: 0,
            converged: true,
            wall_ms,
            infeasible: true,
        },
    }
}

/// Run the whole sweep on the current rayon pool. Rows come back in
/// deterministic (grid, realization, method) order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    let grid = spec.grid();
    let mut tasks = Vec::new();
    for gp in &grid {
        for realization in 0..spec.n_realizations {
            for &method in &spec.methods {
                tasks.push((*gp, method, realization));
            }
        }
    }
    let rows: Vec<ResultRow> = tasks
        .par_iter()
        .map(|(gp, method, realization)| run_one(spec, gp, *method, *realization))
        .collect();
    Ok(rows)
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Per-(method, grid point) aggregate of a result table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub p0_dbm: f64,
    pub m: usize,
    pub n: usize,
    pub mean_rate: f64,
    pub stderr_rate: f64,
    pub mean_p_bs_w: f64,
    pub mean_p_irs_ps_w: f64,
    pub mean_iterations: f64,
    pub mean_wall_ms: f64,
    pub n_infeasible: usize,
}

/// Group rows by (method, p0, m) preserving first-seen order; the standard
/// error uses the n-1 sample variance (zero for a single row).
pub fn summarize(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Method, u64, usize)> = Vec::new();
    let mut groups: Vec<Vec<&ResultRow>> = Vec::new();
    for row in rows {
        let key = (row.method, row.p0_dbm.to_bits(), row.m);
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(row),
            None => {
                keys.push(key);
                groups.push(vec![row]);
            }
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let n = g.len();
            let nf = n as f64;
            let mean = |f: &dyn Fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / nf;
            let mean_rate = mean(&|r| r.sum_rate_bps_hz);
            let var = if n > 1 {
                g.iter()
                    .map(|r| (r.sum_rate_bps_hz - mean_rate).powi(2))
                    .sum::<f64>()
                    / (nf - 1.0)
            } else {
                0.0
            };
            AggregateRow {
                method: g[0].method,
                p0_dbm: g[0].p0_dbm,
                m: g[0].m,
                n,
                mean_rate,
                stderr_rate: (var / nf).sqrt(),
                mean_p_bs_w: mean(&|r| r.p_bs_w),
                mean_p_irs_ps_w: mean(&|r| r.p_irs_ps_w),
                mean_iterations: mean(&|r| r.iterations as f64),
                mean_wall_ms: mean(&|r| r.wall_ms),
                n_infeasible: g.iter().filter(|r| r.infeasible).count(),
            }
        })
        .collect()
}

pub fn format_summary(aggs: &[AggregateRow]) -> String {
    let mut s = String::from(
        "method        p0_dbm        m     n  mean_rate  stderr   p_bs_w   p_irs_w  iters   wall_ms  infeas\n",
    );
    for a in aggs {
        s.push_str(&format!(
            "{:<13} {:>8.3} {:>6} {:>5} {:>10.4} {:>7.4} {:>8.4} {:>9.4} {:>6.1} {:>9.2} {:>7}\n",
            a.method.name(),
            a.p0_dbm,
            a.m,
            a.n,
            a.mean_rate,
            a.stderr_rate,
            a.mean_p_bs_w,
            a.mean_p_irs_ps_w,
            a.mean_iterations,
            a.mean_wall_ms,
            a.n_infeasible
        ));
    }
    s
}

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    methods: Vec<String>,
    p0_grid: Vec<String>,
    m_grid: Vec<[usize; 2]>,
    k: usize,
    n_realizations: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    gbd_m_cap: Option<usize>,
    #[serde(default)]
    system: Option<RawSystem>,
    #[serde(default)]
    channel: Option<RawChannel>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n_bs_antennas: Option<usize>,
    p_pin: Option<String>,
    noise_power: Option<String>,
    p_bs_circuits: Option<String>,
    p_bs_rf_per_chain: Option<String>,
    p_irs_static: Option<String>,
    wavelength_m: Option<f64>,
    convergence_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    kappa_g: Option<f64>,
    kappa_h: Option<f64>,
    d_bs_irs_m: Option<f64>,
    d_user_range_m: Option<[f64; 2]>,
    pathloss_coeff: Option<f64>,
    pathloss_exp: Option<f64>,
}

/// Parse a power with an explicit unit: "25 dBm", "0.5 W" or "12 mW".
/// Returns watts and, when the input was in dBm, the original dBm value.
pub fn parse_power(s: &str) -> Result<(f64, Option<f64>), HarnessError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(HarnessError::Config(format!(
            "power '{s}' must be '<value> <unit>' with unit dBm, W or mW"
        )));
    }
    let value: f64 = parts[0]
        .parse()
        .map_err(|_| HarnessError::Config(format!("bad power value in '{s}'")))?;
    match parts[1] {
        "dBm" | "dbm" => Ok((dbm_to_watts(value), Some(value))),
        "W" | "w" => Ok((value, None)),
        "mW" | "mw" => Ok((value * 1e-3, None)),
        unit => Err(HarnessError::Config(format!("unknown power unit '{unit}' in '{s}'"))),
    }
}

/// Build the experiment spec from a TOML config string; `sweep` comes from
/// the CLI subcommand, and `seed`/`output` may be overridden by flags.
pub fn spec_from_toml(
    toml_text: &str,
    sweep: SweepKind,
    seed_override: Option<u64>,
    output_override: Option<PathBuf>,
) -> Result<ExperimentSpec, HarnessError> {
    let raw: RawConfig = toml::from_str(toml_text)
        .map_err(|e| HarnessError::Config(format!("cannot parse config: {e}")))?;

    let mut methods = Vec::new();
    for name in &raw.methods {
        let method = Method::parse(name).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown method '{name}' (expected one of {})",
                Method::ALL.map(|m| m.name()).join(", ")
            ))
        })?;
        methods.push(method);
    }

    let mut p0_grid = Vec::new();
    for entry in &raw.p0_grid {
        let (w, dbm) = parse_power(entry)?;
        p0_grid.push((w, dbm.unwrap_or_else(|| watts_to_dbm(w))));
    }

    let sys = raw.system.unwrap_or_default();
    let chn = raw.channel.unwrap_or_default();
    let opt_power = |field: &Option<String>, default: f64| -> Result<f64, HarnessError> {
        match field {
            Some(s) => Ok(parse_power(s)?.0),
            None => Ok(default),
        }
    };

    let defaults = GeometryParams::default();
    let d_range = chn.d_user_range_m.unwrap_or([defaults.d_user_min, defaults.d_user_max]);
    let spec = ExperimentSpec {
        sweep,
        methods,
        p0_grid_dbm: p0_grid,
        m_grid: raw.m_grid.iter().map(|[x, y]| (*x, *y)).collect(),
        k: raw.k,
        n_realizations: raw.n_realizations,
        seed: seed_override.or(raw.seed).unwrap_or(0),
        output_path: output_override
            .or_else(|| raw.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results.csv")),
        n_bs_antennas: sys.n_bs_antennas.unwrap_or(5),
        p_pin: opt_power(&sys.p_pin, 0.012)?,
        noise_power: opt_power(&sys.noise_power, dbm_to_watts(-110.0))?,
        p_bs_circuits: opt_power(&sys.p_bs_circuits, 0.0)?,
        p_bs_rf_per_chain: opt_power(&sys.p_bs_rf_per_chain, 0.0)?,
        p_irs_static: opt_power(&sys.p_irs_static, 0.0)?,
        wavelength: sys.wavelength_m.unwrap_or(0.07),
        convergence_tol: sys.convergence_tol.unwrap_or(0.005),
        geometry: GeometryParams {
            d_bs_irs: chn.d_bs_irs_m.unwrap_or(defaults.d_bs_irs),
            d_user_min: d_range[0],
            d_user_max: d_range[1],
            rician_g: chn.kappa_g.unwrap_or(defaults.rician_g),
            rician_h: chn.kappa_h.unwrap_or(defaults.rician_h),
            pathloss_coeff: chn.pathloss_coeff.unwrap_or(defaults.pathloss_coeff),
            pathloss_exp: chn.pathloss_exp.unwrap_or(defaults.pathloss_exp),
        },
        gbd_m_cap: raw.gbd_m_cap.unwrap_or(DEFAULT_GBD_M_CAP),
    };
    spec.validate()?;
    Ok(spec)
}
