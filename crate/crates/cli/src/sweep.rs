//! Benchmark sweeps over (pilot length, SNR) grids with common random
//! numbers: every method at every grid point sees the same per-trial channel,
//! so method comparisons are paired and re-running with the same seed
//! reproduces the CSV byte for byte (wall time aside).

use anyhow::{bail, Context, Result};
use prmiso_core::baselines::{
    first_estimate_then_optimize, optimize_polarization_iterative, random_baseline, DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
};
use prmiso_core::channel::{achievable_rate, beamforming_gain, sample_channel, NoiseSpec};
use prmiso_core::neural::{gnb_forward, loss, ue_forward, MlpModel, Scenario};
use prmiso_core::pilots::{
    flatten_downlink, flatten_uplink, run_downlink_frame, run_uplink_frame, RandomizationPolicy,
};
use prmiso_core::rng::{derive_seed, labels, RngStream};
use std::path::Path;
use std::time::Instant;

/// Alignment strategies the harness compares. The derived order matches the
/// CSV row order (alphabetical by name).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Dnn,
    Ls,
    Pcsi,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dnn, Method::Ls, Method::Pcsi, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dnn => "dnn",
            Method::Ls => "ls",
            Method::Pcsi => "pcsi",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "dnn" => Ok(Method::Dnn),
            "ls" => Ok(Method::Ls),
            "pcsi" => Ok(Method::Pcsi),
            "random" => Ok(Method::Random),
            other => bail!("unknown method `{other}` (expected dnn, ls, pcsi, or random)"),
        }
    }
}

/// One benchmark request: a (pilot length x SNR) grid evaluated for every
/// listed method with `n_trials` common channels per point.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n_t: usize,
    pub methods: Vec<Method>,
    pub pilot_lengths: Vec<usize>,
    pub snrs_db: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.n_t == 0 {
            bail!("need at least one antenna");
        }
        if self.methods.is_empty() || self.pilot_lengths.is_empty() || self.snrs_db.is_empty() {
            bail!("methods, pilot lengths, and SNR lists must be nonempty");
        }
        if self.pilot_lengths.iter().any(|&l| l == 0) {
            bail!("pilot lengths must be at least 1");
        }
        if self.snrs_db.iter().any(|s| !s.is_finite()) {
            bail!("SNR values must be finite");
        }
        if self.n_trials == 0 {
            bail!("need at least one trial");
        }
        Ok(())
    }
}

/// One CSV row: a method at one grid point.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub method: Method,
    pub n_t: usize,
    pub l: usize,
    pub snr_db: f64,
    pub gain_mean: f64,
    pub gain_se: f64,
    pub rate_mean: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub wall_s: f64,
}

/// Supplies the trained model pair for a dnn grid point; only consulted when
/// the method list contains `dnn`.
pub type ModelProvider<'a> = dyn FnMut(Scenario) -> Result<(MlpModel, MlpModel)> + 'a;

fn summarize(gains: &[f64], rates: &[f64]) -> (f64, f64, f64) {
    let n = gains.len() as f64;
    let gain_mean = gains.iter().sum::<f64>() / n;
    let rate_mean = rates.iter().sum::<f64>() / n;
    let gain_se = if gains.len() > 1 {
        let var = gains.iter().map(|g| (g - gain_mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    (gain_mean, gain_se, rate_mean)
}

/// Runs the full grid. Per-trial channels derive from (seed, trial) only, so
/// every method, pilot length, and SNR sees identical channels; pilot noise
/// derives from the grid point, identically for every method at that point.
pub fn run_sweep(spec: &SweepSpec, models: &mut ModelProvider) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let ch_base = derive_seed(spec.seed, labels::CHANNEL);
    let channels: Vec<_> = (0..spec.n_trials)
        .map(|t| sample_channel(&mut RngStream::new(derive_seed(ch_base, t as u64)), spec.n_t))
        .collect::<prmiso_core::Result<_>>()?;

    let mut methods = spec.methods.clone();
    methods.sort_unstable();
    methods.dedup();

    let mut rows = Vec::new();
    for &l in &spec.pilot_lengths {
        for &snr_db in &spec.snrs_db {
            let noise = NoiseSpec::from_snr_db(snr_db);
            let point_base = derive_seed(
                derive_seed(derive_seed(spec.seed, labels::SWEEP_POINT), l as u64),
                snr_db.to_bits(),
            );
            let pair = if methods.contains(&Method::Dnn) {
                let scenario = Scenario::new(spec.n_t, l, snr_db)?;
                Some(models(scenario).with_context(|| {
                    format!("dnn models for n_t={}, L={l}, SNR {snr_db} dB", spec.n_t)
                })?)
            } else {
                None
            };

            for &method in &methods {
                let start = Instant::now();
                let mut gains = Vec::with_capacity(spec.n_trials);
                let mut rates = Vec::with_capacity(spec.n_trials);
                for (trial, h) in channels.iter().enumerate() {
                    let t_base = derive_seed(point_base, trial as u64);
                    let gain = match method {
                        Method::Pcsi => {
                            let sol = optimize_polarization_iterative(h, DEFAULT_TOL, DEFAULT_MAX_ITERS)?
                                .solution;
                            beamforming_gain(h, &sol.config, &sol.w)?
                        }
                        Method::Ls => {
                            let mut rng = RngStream::new(derive_seed(t_base, 1));
                            let uf = run_uplink_frame(
                                &mut rng,
                                h,
                                l,
                                RandomizationPolicy::PerSlot,
                                &noise,
                            )?;
                            let df = run_downlink_frame(
                                &mut rng,
                                h,
                                l,
                                RandomizationPolicy::PerSlot,
                                &noise,
                            )?;
                            let sol = first_estimate_then_optimize(&uf, &df)?;
                            beamforming_gain(h, &sol.config, &sol.w)?
                        }
                        Method::Dnn => {
                            let (gnb, ue) = pair.as_ref().expect("models resolved above");
                            let mut rng = RngStream::new(derive_seed(t_base, 0));
                            let uf = run_uplink_frame(
                                &mut rng,
                                h,
                                l,
                                RandomizationPolicy::FrameFixed,
                                &noise,
                            )?;
                            let df = run_downlink_frame(
                                &mut rng,
                                h,
                                l,
                                RandomizationPolicy::FrameFixed,
                                &noise,
                            )?;
                            let head = gnb_forward(gnb, &(flatten_uplink(&uf) / uf.sqrt_rho()))?;
                            let theta_ue = ue_forward(ue, &(flatten_downlink(&df) / df.sqrt_rho()))?;
                            -loss(h, &head, theta_ue)?
                        }
                        Method::Random => {
                            let mut rng = RngStream::new(derive_seed(t_base, 2));
                            let sol = random_baseline(&mut rng, spec.n_t)?;
                            beamforming_gain(h, &sol.config, &sol.w)?
                        }
                    };
                    gains.push(gain);
                    rates.push(achievable_rate(gain, noise.sigma2_ue)?);
                }
                let (gain_mean, gain_se, rate_mean) = summarize(&gains, &rates);
                rows.push(ResultRow {
                    method,
                    n_t: spec.n_t,
                    l,
                    snr_db,
                    gain_mean,
                    gain_se,
                    rate_mean,
                    n_trials: spec.n_trials,
                    seed: spec.seed,
                    wall_s: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "method,n_t,L,snr_db,gain_mean,gain_se,rate_mean,n_trials,seed,wall_s";

/// Renders the table in deterministic order (method, L, SNR ascending).
/// Floats print in shortest round-trip form, so parsing the CSV back
/// reproduces the exact values.
pub fn render_results(table: &[ResultRow]) -> Result<String> {
    if table.is_empty() {
        bail!("refusing to render an empty result table");
    }
    let mut rows: Vec<&ResultRow> = table.iter().collect();
    rows.sort_by(|a, b| {
        (a.method, a.l)
            .cmp(&(b.method, b.l))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.method.name(),
            r.n_t,
            r.l,
            r.snr_db,
            r.gain_mean,
            r.gain_se,
            r.rate_mean,
            r.n_trials,
            r.seed,
            r.wall_s
        ));
    }
    Ok(out)
}

/// Writes the rendered table to `path`.
pub fn emit_results(table: &[ResultRow], path: &Path) -> Result<()> {
    let text = render_results(table)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// No-op provider for sweeps that do not request the dnn method.
pub fn no_models(scenario: Scenario) -> Result<(MlpModel, MlpModel)> {
    bail!(
        "no dnn models available for n_t={}, L={}, SNR {} dB",
        scenario.n_t,
        scenario.l,
        scenario.snr_db
    )
}
