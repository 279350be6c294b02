//! Command-line surface: subcommands, flag parsing, config-file merging, and
//! dispatch into the sweep/training plumbing. Every value can come from an
//! explicit flag or from a `key=value` config file, with flags winning.

use crate::io::{
    load_checkpoint, parse_config_file, save_channels, save_checkpoint, write_training_log,
    Checkpoint,
};
use crate::sweep::{emit_results, run_sweep, Method, SweepSpec};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use prmiso_core::baselines::{
    brute_force_polarization, optimize_polarization_iterative, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use prmiso_core::channel::sample_channel;
use prmiso_core::neural::{evaluate, train, MlpModel, Scenario, TrainConfig};
use prmiso_core::rng::{derive_seed, labels, RngStream};
use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(
    name = "prmiso",
    about = "Polarization-reconfigurable MISO downlink alignment benchmarks",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Draw i.i.d. Rayleigh depolarized channels and write a dataset file.
    GenChannels(GenChannelsArgs),
    /// Train the gNB/UE network pair for one scenario and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint on fresh channels.
    Eval(EvalArgs),
    /// Mean beamforming gain vs pilot length at fixed SNR (CSV output).
    SweepPilots(SweepPilotsArgs),
    /// Mean beamforming gain vs SNR at fixed pilot length (CSV output).
    SweepSnr(SweepSnrArgs),
    /// Compare the iterative perfect-CSI optimizer against the brute-force
    /// grid oracle and print the largest objective deviation.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value config file (# comments); explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenChannelsArgs {
    #[command(flatten)]
    common: Common,
    /// Number of transmit antennas.
    #[arg(long)]
    nt: Option<usize>,
    /// Number of channel realizations to draw.
    #[arg(long)]
    trials: Option<usize>,
    /// Output dataset path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Number of transmit antennas.
    #[arg(long)]
    nt: Option<usize>,
    /// Pilot length L (slots per link direction).
    #[arg(long)]
    pilots: Option<usize>,
    /// Pilot SNR in dB (both link directions).
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Training steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Minibatch size (fresh channels per step).
    #[arg(long)]
    batch: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden layer widths, comma-separated.
    #[arg(long)]
    hidden: Option<String>,
    /// Checkpoint output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional training-log CSV path (step, loss, mean gain).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of evaluation trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepPilotsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sweep: SweepCommon,
    /// Pilot lengths to sweep, comma-separated (e.g. 3,4,5).
    #[arg(long)]
    pilots: Option<String>,
    /// Fixed pilot SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepSnrArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sweep: SweepCommon,
    /// Fixed pilot length L.
    #[arg(long)]
    pilots: Option<usize>,
    /// SNR values in dB to sweep, comma-separated (e.g. -20,-10,0).
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
}

#[derive(Debug, Args)]
struct SweepCommon {
    /// Number of transmit antennas.
    #[arg(long)]
    nt: Option<usize>,
    /// Trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Methods to compare, comma-separated subset of dnn,ls,pcsi,random.
    #[arg(long)]
    methods: Option<String>,
    /// Directory holding dnn checkpoints (ckpt_nt<n>_l<L>_snr<snr>.bin);
    /// inline-trained models are saved here too.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Train missing dnn models inline instead of failing.
    #[arg(long)]
    train_inline: bool,
    /// Inline-training steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Inline-training minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Inline-training learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Inline-training hidden widths, comma-separated.
    #[arg(long)]
    hidden: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleCheckArgs {
    #[command(flatten)]
    common: Common,
    /// Number of transmit antennas.
    #[arg(long)]
    nt: Option<usize>,
    /// Number of random channels to check.
    #[arg(long)]
    trials: Option<usize>,
    /// Brute-force grid step in degrees.
    #[arg(long)]
    grid_step: Option<f64>,
}

const KNOWN_KEYS: &[&str] = &[
    "nt", "pilots", "snr-db", "trials", "seed", "out", "checkpoint", "methods", "steps", "batch",
    "lr", "hidden", "log", "grid-step", "train-inline",
];

/// Flag-over-config-over-default resolution for one subcommand invocation.
struct Resolver {
    cfg: HashMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&Path>) -> Result<Self> {
        let cfg = match config {
            Some(path) => parse_config_file(path)?,
            None => HashMap::new(),
        };
        for key in cfg.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("unknown config key `{key}` (known: {})", KNOWN_KEYS.join(", "));
            }
        }
        Ok(Resolver { cfg })
    }

    fn lookup<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.cfg.get(key) {
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key {key}={raw}: {e}"),
            },
            None => Ok(None),
        }
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.lookup(flag, key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.lookup(flag, key)?
            .ok_or_else(|| anyhow::anyhow!("missing --{key} (flag or config file)"))
    }

    fn flag(&self, set: bool, key: &str) -> Result<bool> {
        if set {
            return Ok(true);
        }
        self.get(None, key, false)
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<T>().map_err(|e| anyhow::anyhow!("{what} entry `{part}`: {e}"))?);
    }
    if out.is_empty() {
        bail!("{what} list is empty");
    }
    Ok(out)
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',').map(|p| Method::parse(p.trim())).collect()
}

/// File name a sweep expects for a grid point's trained pair.
pub fn checkpoint_name(scenario: &Scenario) -> String {
    format!("ckpt_nt{}_l{}_snr{}.bin", scenario.n_t, scenario.l, scenario.snr_db)
}

/// Parses argv and runs the requested command, returning the process exit
/// code (0 success, 1 runtime error, 2 usage error).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let run = match cli.cmd {
        Cmd::GenChannels(a) => gen_channels(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::SweepPilots(a) => sweep_pilots(a),
        Cmd::SweepSnr(a) => sweep_snr(a),
        Cmd::OracleCheck(a) => oracle_check(a),
    };
    match run {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn gen_channels(a: GenChannelsArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_deref())?;
    let n_t = r.require(a.nt, "nt")?;
    let count: usize = r.get(a.trials, "trials", 2000)?;
    let seed = r.get(a.common.seed, "seed", 0)?;
    let out: PathBuf = r.require(a.out, "out")?;
    if count == 0 {
        bail!("need at least one realization");
    }
    let base = derive_seed(seed, labels::CHANNEL);
    let channels: Vec<_> = (0..count)
        .map(|t| sample_channel(&mut RngStream::new(derive_seed(base, t as u64)), n_t))
        .collect::<prmiso_core::Result<_>>()?;
    save_channels(&out, &channels, seed)?;
    println!("wrote {count} channels (n_t={n_t}, seed {seed}) to {}", out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_deref())?;
    let n_t = r.require(a.nt, "nt")?;
    let l = r.require(a.pilots, "pilots")?;
    let snr_db = r.require(a.snr_db, "snr-db")?;
    let seed = r.get(a.common.seed, "seed", 0)?;
    let out: PathBuf = r.require(a.out, "out")?;
    let scenario = Scenario::new(n_t, l, snr_db)?;
    let mut cfg = TrainConfig::new(scenario, r.get(a.steps, "steps", 6000)?, seed);
    cfg.batch = r.get(a.batch, "batch", cfg.batch)?;
    cfg.lr = r.get(a.lr, "lr", cfg.lr)?;
    if let Some(h) = r.lookup(a.hidden, "hidden")? {
        cfg.hidden = parse_list(&h, "hidden")?;
    }

    let start = Instant::now();
    let trained = train(&cfg)?;
    let tail = trained.log.iter().rev().take(100.min(trained.log.len()));
    let tail_gain =
        tail.clone().map(|rec| rec.mean_gain).sum::<f64>() / tail.count().max(1) as f64;
    save_checkpoint(&out, &Checkpoint {
        scenario,
        seed,
        gnb: trained.gnb,
        ue: trained.ue,
    })?;
    if let Some(log_path) = r.lookup(a.log, "log")? {
        write_training_log(&log_path, &trained.log)?;
    }
    println!(
        "trained n_t={n_t} L={l} SNR {snr_db} dB for {} steps in {:.1} s; \
         mean gain over last 100 steps {:.4}; checkpoint {}",
        cfg.steps,
        start.elapsed().as_secs_f64(),
        tail_gain,
        out.display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_deref())?;
    let path: PathBuf = r.require(a.checkpoint, "checkpoint")?;
    let trials = r.get(a.trials, "trials", 2000)?;
    let seed = r.get(a.common.seed, "seed", 0)?;
    let ck = load_checkpoint(&path)?;
    let mut rng = RngStream::new(derive_seed(seed, labels::EVAL));
    let s = evaluate(&ck.gnb, &ck.ue, &mut rng, trials, &ck.scenario)?;
    println!(
        "n_t={} L={} SNR {} dB: mean gain {} (SE {}), mean rate {} over {} trials",
        ck.scenario.n_t, ck.scenario.l, ck.scenario.snr_db, s.mean_gain, s.se_gain, s.mean_rate,
        s.n_trials
    );
    Ok(())
}

struct SweepSettings {
    spec: SweepSpec,
    out: PathBuf,
    checkpoint_dir: Option<PathBuf>,
    train_inline: bool,
    steps: usize,
    batch: usize,
    lr: f64,
    hidden: Vec<usize>,
}

fn sweep_settings(
    r: &Resolver,
    c: &SweepCommon,
    seed_flag: Option<u64>,
    pilot_lengths: Vec<usize>,
    snrs_db: Vec<f64>,
) -> Result<SweepSettings> {
    let methods = match r.lookup(c.methods.clone(), "methods")? {
        Some(s) => parse_methods(&s)?,
        None => vec![Method::Pcsi, Method::Ls, Method::Random],
    };
    let defaults = TrainConfig::new(Scenario::new(1, 1, 0.0)?, 0, 0);
    Ok(SweepSettings {
        spec: SweepSpec {
            n_t: r.get(c.nt, "nt", 16)?,
            methods,
            pilot_lengths,
            snrs_db,
            n_trials: r.get(c.trials, "trials", 2000)?,
            seed: r.get(seed_flag, "seed", 0)?,
        },
        out: r.require(c.out.clone(), "out")?,
        checkpoint_dir: r.lookup(c.checkpoint.clone(), "checkpoint")?,
        train_inline: r.flag(c.train_inline, "train-inline")?,
        steps: r.get(c.steps, "steps", 6000)?,
        batch: r.get(c.batch, "batch", defaults.batch)?,
        lr: r.get(c.lr, "lr", defaults.lr)?,
        hidden: match r.lookup(c.hidden.clone(), "hidden")? {
            Some(h) => parse_list(&h, "hidden")?,
            None => defaults.hidden,
        },
    })
}

fn run_sweep_settings(s: SweepSettings) -> Result<()> {
    let SweepSettings { spec, out, checkpoint_dir, train_inline, steps, batch, lr, hidden } = s;
    let master_seed = spec.seed;
    let mut provider = |scenario: Scenario| -> Result<(MlpModel, MlpModel)> {
        if let Some(dir) = &checkpoint_dir {
            let path = dir.join(checkpoint_name(&scenario));
            if path.exists() {
                let ck = load_checkpoint(&path)?;
                if ck.scenario != scenario {
                    bail!(
                        "checkpoint {} holds n_t={} L={} SNR {} dB, grid point needs n_t={} L={} SNR {} dB",
                        path.display(),
                        ck.scenario.n_t, ck.scenario.l, ck.scenario.snr_db,
                        scenario.n_t, scenario.l, scenario.snr_db
                    );
                }
                return Ok((ck.gnb, ck.ue));
            }
            if !train_inline {
                bail!(
                    "missing checkpoint {}; train it (`prmiso train`) or pass --train-inline",
                    path.display()
                );
            }
        } else if !train_inline {
            bail!(
                "the dnn method needs --checkpoint <dir> (expected file {}) or --train-inline",
                checkpoint_name(&scenario)
            );
        }
        let train_seed = derive_seed(
            derive_seed(derive_seed(master_seed, labels::TRAIN_INLINE), scenario.l as u64),
            scenario.snr_db.to_bits(),
        );
        let mut cfg = TrainConfig::new(scenario, steps, train_seed);
        cfg.batch = batch;
        cfg.lr = lr;
        cfg.hidden = hidden.clone();
        eprintln!(
            "training dnn for n_t={} L={} SNR {} dB ({} steps, batch {})...",
            scenario.n_t, scenario.l, scenario.snr_db, cfg.steps, cfg.batch
        );
        let trained = train(&cfg).context("inline training")?;
        if let Some(dir) = &checkpoint_dir {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            save_checkpoint(&dir.join(checkpoint_name(&scenario)), &Checkpoint {
                scenario,
                seed: train_seed,
                gnb: trained.gnb.clone(),
                ue: trained.ue.clone(),
            })?;
        }
        Ok((trained.gnb, trained.ue))
    };
    let rows = run_sweep(&spec, &mut provider)?;
    emit_results(&rows, &out)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn sweep_pilots(a: SweepPilotsArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_deref())?;
    let pilots: String = r.require(a.pilots, "pilots")?;
    let pilot_lengths = parse_list(&pilots, "pilots")?;
    let snr_db = r.require(a.snr_db, "snr-db")?;
    let settings = sweep_settings(&r, &a.sweep, a.common.seed, pilot_lengths, vec![snr_db])?;
    run_sweep_settings(settings)
}

fn sweep_snr(a: SweepSnrArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_deref())?;
    let l = r.require(a.pilots, "pilots")?;
    let snrs: String = r.require(a.snr_db, "snr-db")?;
    let snrs_db = parse_list(&snrs, "snr-db")?;
    let settings = sweep_settings(&r, &a.sweep, a.common.seed, vec![l], snrs_db)?;
    run_sweep_settings(settings)
}

fn oracle_check(a: OracleCheckArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_deref())?;
    let n_t = r.get(a.nt, "nt", 2)?;
    let trials = r.get(a.trials, "trials", 100)?;
    let step = r.get(a.grid_step, "grid-step", 0.25)?;
    let seed = r.get(a.common.seed, "seed", 0)?;
    if trials == 0 {
        bail!("need at least one trial");
    }
    let base = derive_seed(seed, labels::CHANNEL);
    let mut max_dev = 0.0f64;
    for t in 0..trials {
        let mut rng = RngStream::new(derive_seed(base, t as u64));
        let h = sample_channel(&mut rng, n_t)?;
        let item = optimize_polarization_iterative(&h, DEFAULT_TOL, DEFAULT_MAX_ITERS)?
            .solution
            .gain_predicted;
        let grid = brute_force_polarization(&h, step)?.gain_predicted;
        max_dev = max_dev.max((1.0 - item / grid).abs());
    }
    println!(
        "max iterative-vs-grid objective deviation over {trials} channels \
         (n_t={n_t}, {step} deg grid): {max_dev:.3e}"
    );
    Ok(())
}
