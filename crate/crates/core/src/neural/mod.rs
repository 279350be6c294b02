//! Learned pilot-to-configuration pipeline: one MLP at the gNB mapping its
//! received uplink pilots to every antenna angle plus the beamformer, one MLP
//! at the UE mapping its received downlink pilots to the UE angle. Both are
//! trained jointly and unsupervised against a single loss, the negated
//! beamforming gain, with exact reverse-mode gradients computed here (no
//! autodiff dependency).
//!
//! The differentiable path runs loss -> gain -> (angles, beamformer) ->
//! sigmoid / normalization heads -> linear layers. The channel realizations
//! and pilot observations are data, not parameters: training samples fresh
//! channels every step, so the channel distribution itself is the dataset.

mod mlp;

pub use mlp::{mlp_backward, Activation, AdamState, MlpGradients, MlpModel, MlpTape};

use crate::channel::{
    achievable_rate, pol_vector, pol_vector_deriv, quad_form, sample_channel, Beamformer,
    DepolarizedChannel, PolarizationConfig,
};
use crate::error::{Error, Result};
use crate::numerics::{C64, CMat, RMat, RVec};
use crate::pilots::{
    flatten_downlink, flatten_uplink, run_downlink_frame, run_uplink_frame, DownlinkPilotFrame,
    RandomizationPolicy, UplinkPilotFrame,
};
use crate::rng::{derive_seed, labels, RngStream};
use core::f64::consts::FRAC_PI_2;

/// Floor in the beamformer normalization denominator, guarding the
/// measure-zero all-zero tail without breaking differentiability elsewhere.
pub const NORM_EPS: f64 = 1e-12;

/// Physical evaluation point: array size, pilot length, and the symmetric
/// SNR that fixes both pilot noise variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub n_t: usize,
    pub l: usize,
    pub snr_db: f64,
}

impl Scenario {
    pub fn new(n_t: usize, l: usize, snr_db: f64) -> Result<Self> {
        if n_t == 0 || l == 0 {
            return Err(Error::domain("scenario needs n_t >= 1 and l >= 1"));
        }
        if !snr_db.is_finite() {
            return Err(Error::domain(format!("SNR must be finite, got {snr_db}")));
        }
        Ok(Scenario { n_t, l, snr_db })
    }

    pub fn noise(&self) -> crate::channel::NoiseSpec {
        crate::channel::NoiseSpec::from_snr_db(self.snr_db)
    }

    /// gNB network dims: `2 L n_t` inputs through the hidden stack to
    /// `3 n_t` raw outputs (angles plus beamformer real/imaginary parts).
    pub fn gnb_dims(&self, hidden: &[usize]) -> Vec<usize> {
        let mut dims = vec![2 * self.l * self.n_t];
        dims.extend_from_slice(hidden);
        dims.push(3 * self.n_t);
        dims
    }

    /// UE network dims: `2 L` inputs to one raw output.
    pub fn ue_dims(&self, hidden: &[usize]) -> Vec<usize> {
        let mut dims = vec![2 * self.l];
        dims.extend_from_slice(hidden);
        dims.push(1);
        dims
    }
}

/// Everything a training run needs. Defaults match the benchmark protocol:
/// hidden stack 256x256, batch 1024 fresh channels per step, adaptive-moment
/// updates at rate 1e-3 with decays (0.9, 0.999) and epsilon 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scenario: Scenario,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(scenario: Scenario, steps: usize, seed: u64) -> Self {
        TrainConfig {
            scenario,
            hidden: vec![256, 256],
            batch: 1024,
            steps,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::domain("batch size must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::domain(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::domain(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::domain("adam epsilon must be positive"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::domain("hidden layers need at least one unit"));
        }
        Ok(())
    }
}

/// gNB head outputs. `w` is unit-norm whenever the raw network tail clears
/// the `NORM_EPS` floor; the all-zero tail (e.g. a zero-initialized network)
/// yields the guarded, shorter vector instead of a division by zero.
#[derive(Debug, Clone)]
pub struct GnbHeadOutput {
    pub theta_gnb: Vec<f64>,
    pub w: crate::numerics::CVec,
}

impl GnbHeadOutput {
    /// Validated unit-norm beamformer; errors if the epsilon guard fired.
    pub fn beamformer(&self) -> Result<Beamformer> {
        Beamformer::new(self.w.clone())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

struct GnbHead {
    theta: Vec<f64>,
    sig: Vec<f64>,
    w: Vec<C64>,
    raw_norm: f64,
}

/// Sigmoid and normalization heads applied to one raw gNB output vector of
/// length `3 n_t`: angles from the first block, the beamformer from the
/// remaining two interpreted as real and imaginary parts.
fn gnb_head(z: &[f64], n_t: usize) -> GnbHead {
    let mut theta = Vec::with_capacity(n_t);
    let mut sig = Vec::with_capacity(n_t);
    for &zk in &z[..n_t] {
        let s = sigmoid(zk);
        sig.push(s);
        theta.push(s * FRAC_PI_2);
    }
    let tail = &z[n_t..];
    let raw_norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = raw_norm.max(NORM_EPS);
    let w = (0..n_t).map(|k| C64::new(tail[k] / denom, tail[n_t + k] / denom)).collect();
    GnbHead { theta, sig, w, raw_norm }
}

/// Single-observation gNB inference: raw network output through the heads.
pub fn gnb_forward(model: &MlpModel, y_flat: &RVec) -> Result<GnbHeadOutput> {
    if model.output_dim() % 3 != 0 {
        return Err(Error::contract(format!(
            "gNB model output dim {} is not 3 n_t",
            model.output_dim()
        )));
    }
    let n_t = model.output_dim() / 3;
    let x = RMat::from_column_slice(y_flat.len(), 1, y_flat.as_slice());
    let tape = model.forward_batch(&x)?;
    let z: Vec<f64> = tape.output().column(0).iter().copied().collect();
    let head = gnb_head(&z, n_t);
    Ok(GnbHeadOutput {
        theta_gnb: head.theta,
        w: crate::numerics::CVec::from_vec(head.w),
    })
}

/// Single-observation UE inference: one raw output through the sigmoid head.
pub fn ue_forward(model: &MlpModel, y_flat: &RVec) -> Result<f64> {
    if model.output_dim() != 1 {
        return Err(Error::contract(format!(
            "UE model must have one output, has {}",
            model.output_dim()
        )));
    }
    let x = RMat::from_column_slice(y_flat.len(), 1, y_flat.as_slice());
    let tape = model.forward_batch(&x)?;
    Ok(sigmoid(tape.output()[(0, 0)]) * FRAC_PI_2)
}

/// Per-sample training loss: the negated beamforming gain under the head
/// outputs (batch averaging happens in the pipeline).
pub fn loss(h: &DepolarizedChannel, gnb_out: &GnbHeadOutput, theta_ue: f64) -> Result<f64> {
    if gnb_out.theta_gnb.len() != h.n_t() || gnb_out.w.len() != h.n_t() {
        return Err(Error::contract(format!(
            "head outputs sized for {} antennas, channel has {}",
            gnb_out.theta_gnb.len(),
            h.n_t()
        )));
    }
    let p_ue = pol_vector(theta_ue)?;
    let mut s = C64::new(0.0, 0.0);
    for k in 0..h.n_t() {
        let p_k = pol_vector(gnb_out.theta_gnb[k])?;
        s += quad_form(&p_ue, &h.block(k), &p_k) * gnb_out.w[k];
    }
    Ok(-s.norm_sqr())
}

/// One training minibatch: channels plus both standardized pilot inputs,
/// one sample per column.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    channels: Vec<DepolarizedChannel>,
    x_gnb: RMat,
    x_ue: RMat,
}

impl TrainingBatch {
    /// Assembles a batch from explicit parts (used by gradient checks that
    /// need pinned inputs).
    pub fn from_parts(channels: Vec<DepolarizedChannel>, x_gnb: RMat, x_ue: RMat) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::contract("empty batch".to_string()));
        }
        let n_t = channels[0].n_t();
        if channels.iter().any(|h| h.n_t() != n_t) {
            return Err(Error::contract("mixed antenna counts in one batch".to_string()));
        }
        if x_gnb.ncols() != channels.len() || x_ue.ncols() != channels.len() {
            return Err(Error::contract(format!(
                "batch of {} channels with {} gNB and {} UE input columns",
                channels.len(),
                x_gnb.ncols(),
                x_ue.ncols()
            )));
        }
        Ok(TrainingBatch { channels, x_gnb, x_ue })
    }

    pub fn batch_size(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[DepolarizedChannel] {
        &self.channels
    }
}

/// Draws the minibatch for one training step: per-sample derived streams
/// (so the draw is independent of batch iteration order), fresh channel,
/// one frame-fixed frame per link, inputs standardized by `1/sqrt(rho)`.
pub fn sample_training_batch(config: &TrainConfig, step: usize) -> Result<TrainingBatch> {
    let sc = &config.scenario;
    let noise = sc.noise();
    let step_base = derive_seed(derive_seed(config.seed, labels::TRAIN_STEP), step as u64);

    let mut channels = Vec::with_capacity(config.batch);
    let mut x_gnb = RMat::zeros(2 * sc.l * sc.n_t, config.batch);
    let mut x_ue = RMat::zeros(2 * sc.l, config.batch);
    for k in 0..config.batch {
        let mut rng = RngStream::new(derive_seed(step_base, k as u64));
        let h = sample_channel(&mut rng, sc.n_t)?;
        let uf = run_uplink_frame(&mut rng, &h, sc.l, RandomizationPolicy::FrameFixed, &noise)?;
        let df = run_downlink_frame(&mut rng, &h, sc.l, RandomizationPolicy::FrameFixed, &noise)?;
        x_gnb.set_column(k, &(flatten_uplink(&uf) / uf.sqrt_rho()));
        x_ue.set_column(k, &(flatten_downlink(&df) / df.sqrt_rho()));
        channels.push(h);
    }
    Ok(TrainingBatch { channels, x_gnb, x_ue })
}

/// Recorded forward intermediates of one batch, sufficient for the reverse
/// pass when paired with the batch that produced them.
#[derive(Debug, Clone)]
pub struct PipelineTape {
    gnb_tape: MlpTape,
    ue_tape: MlpTape,
    theta: RMat,
    theta_ue: RVec,
    sig_gnb: RMat,
    sig_ue: RVec,
    raw_tail_norm: RVec,
    w: CMat,
    h_eff: CMat,
    s: crate::numerics::CVec,
    loss: f64,
}

impl PipelineTape {
    /// Batch loss: negated mean gain.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn mean_gain(&self) -> f64 {
        -self.loss
    }
}

/// Joint forward pass of both networks, heads, and the gain physics.
pub fn forward_pipeline(
    gnb: &MlpModel,
    ue: &MlpModel,
    batch: &TrainingBatch,
) -> Result<PipelineTape> {
    let b = batch.batch_size();
    let n_t = batch.channels[0].n_t();
    if gnb.output_dim() != 3 * n_t {
        return Err(Error::contract(format!(
            "gNB model emits {} outputs, scenario needs {}",
            gnb.output_dim(),
            3 * n_t
        )));
    }
    if ue.output_dim() != 1 {
        return Err(Error::contract("UE model must emit one output".to_string()));
    }
    let gnb_tape = gnb.forward_batch(&batch.x_gnb)?;
    let ue_tape = ue.forward_batch(&batch.x_ue)?;

    let mut theta = RMat::zeros(n_t, b);
    let mut theta_ue = RVec::zeros(b);
    let mut sig_gnb = RMat::zeros(n_t, b);
    let mut sig_ue = RVec::zeros(b);
    let mut raw_tail_norm = RVec::zeros(b);
    let mut w = CMat::zeros(n_t, b);
    let mut h_eff = CMat::zeros(n_t, b);
    let mut s = crate::numerics::CVec::zeros(b);
    let mut gain_sum = 0.0;

    for j in 0..b {
        let z: Vec<f64> = gnb_tape.output().column(j).iter().copied().collect();
        let head = gnb_head(&z, n_t);
        let su = sigmoid(ue_tape.output()[(0, j)]);
        sig_ue[j] = su;
        theta_ue[j] = su * FRAC_PI_2;
        raw_tail_norm[j] = head.raw_norm;

        let p_ue = pol_vector(theta_ue[j])?;
        let h = &batch.channels[j];
        let mut s_j = C64::new(0.0, 0.0);
        for k in 0..n_t {
            theta[(k, j)] = head.theta[k];
            sig_gnb[(k, j)] = head.sig[k];
            w[(k, j)] = head.w[k];
            let p_k = pol_vector(head.theta[k])?;
            let u = quad_form(&p_ue, &h.block(k), &p_k);
            h_eff[(k, j)] = u;
            s_j += u * head.w[k];
        }
        s[j] = s_j;
        gain_sum += s_j.norm_sqr();
    }

    Ok(PipelineTape {
        gnb_tape,
        ue_tape,
        theta,
        theta_ue,
        sig_gnb,
        sig_ue,
        raw_tail_norm,
        w,
        h_eff,
        s,
        loss: -gain_sum / b as f64,
    })
}

/// Reverse pass: exact gradients of the batch loss for every parameter of
/// both models. `batch` must be the one that produced `tape`.
pub fn backward_pipeline(
    gnb: &MlpModel,
    ue: &MlpModel,
    batch: &TrainingBatch,
    tape: &PipelineTape,
) -> Result<(MlpGradients, MlpGradients)> {
    let b = batch.batch_size();
    let n_t = batch.channels[0].n_t();
    if tape.s.len() != b || tape.theta.nrows() != n_t {
        return Err(Error::contract(
            "tape does not belong to this batch".to_string(),
        ));
    }
    let factor = -1.0 / b as f64;

    let mut dz_gnb = RMat::zeros(3 * n_t, b);
    let mut dz_ue = RMat::zeros(1, b);
    let mut g_w = vec![0.0; 2 * n_t];
    for j in 0..b {
        let s_bar = tape.s[j].conj();
        let h = &batch.channels[j];
        let p_ue = pol_vector(tape.theta_ue[j])?;
        let dp_ue = pol_vector_deriv(tape.theta_ue[j]);

        // Beamformer path: gain gradient in the real/imaginary parts of w,
        // then pulled back through the normalization.
        for k in 0..n_t {
            let su = s_bar * tape.h_eff[(k, j)];
            g_w[k] = 2.0 * su.re * factor;
            g_w[n_t + k] = -2.0 * su.im * factor;
        }
        let raw = tape.raw_tail_norm[j];
        if raw > NORM_EPS {
            let mut t_dot_g = 0.0;
            for (i, g) in g_w.iter().enumerate() {
                t_dot_g += tape.gnb_tape.output()[(n_t + i, j)] * g;
            }
            let inv_n = 1.0 / raw;
            let scale = t_dot_g * inv_n * inv_n;
            for i in 0..2 * n_t {
                let t_i = tape.gnb_tape.output()[(n_t + i, j)];
                dz_gnb[(n_t + i, j)] = (g_w[i] - t_i * scale) * inv_n;
            }
        } else {
            for i in 0..2 * n_t {
                dz_gnb[(n_t + i, j)] = g_w[i] / NORM_EPS;
            }
        }

        // Angle paths through the sigmoid heads.
        let mut s_ue_deriv = C64::new(0.0, 0.0);
        for k in 0..n_t {
            let block = h.block(k);
            let p_k = pol_vector(tape.theta[(k, j)])?;
            let dp_k = pol_vector_deriv(tape.theta[(k, j)]);
            let du = quad_form(&p_ue, &block, &dp_k);
            let g_theta = 2.0 * (s_bar * du * tape.w[(k, j)]).re * factor;
            let sig = tape.sig_gnb[(k, j)];
            dz_gnb[(k, j)] = g_theta * FRAC_PI_2 * sig * (1.0 - sig);
            s_ue_deriv += quad_form(&dp_ue, &block, &p_k) * tape.w[(k, j)];
        }
        let g_theta_ue = 2.0 * (s_bar * s_ue_deriv).re * factor;
        let sig = tape.sig_ue[j];
        dz_ue[(0, j)] = g_theta_ue * FRAC_PI_2 * sig * (1.0 - sig);
    }

    let g_gnb = mlp_backward(gnb, &tape.gnb_tape, &dz_gnb)?;
    let g_ue = mlp_backward(ue, &tape.ue_tape, &dz_ue)?;
    Ok((g_gnb, g_ue))
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub mean_gain: f64,
}

/// Trained models plus the per-step log.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub gnb: MlpModel,
    pub ue: MlpModel,
    pub log: Vec<StepRecord>,
}

/// Unsupervised joint training: fresh minibatch per step, forward, exact
/// backward, adaptive-moment update of both models. All randomness derives
/// from `config.seed`, so equal configs give bitwise-equal runs. A
/// non-finite loss aborts with the diverging step in the error.
pub fn train(config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let sc = &config.scenario;
    let mut init_rng = RngStream::new(derive_seed(config.seed, labels::WEIGHT_INIT));
    let mut gnb = MlpModel::new(&sc.gnb_dims(&config.hidden), Activation::Relu, &mut init_rng)?;
    let mut ue = MlpModel::new(&sc.ue_dims(&config.hidden), Activation::Relu, &mut init_rng)?;
    let mut adam_gnb = AdamState::new(&gnb);
    let mut adam_ue = AdamState::new(&ue);

    let mut log = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = sample_training_batch(config, step)?;
        let tape = forward_pipeline(&gnb, &ue, &batch)?;
        let loss = tape.loss();
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let (grad_gnb, grad_ue) = backward_pipeline(&gnb, &ue, &batch, &tape)?;
        adam_gnb.step(&mut gnb, &grad_gnb, config.lr, config.beta1, config.beta2, config.adam_eps)?;
        adam_ue.step(&mut ue, &grad_ue, config.lr, config.beta1, config.beta2, config.adam_eps)?;
        log.push(StepRecord { step, loss, mean_gain: -loss });
    }
    Ok(TrainOutput { gnb, ue, log })
}

/// Applies trained models to one pair of pilot frames, producing the
/// configuration and beamformer the two sides would deploy.
pub fn apply_models(
    gnb: &MlpModel,
    ue: &MlpModel,
    uplink: &UplinkPilotFrame,
    downlink: &DownlinkPilotFrame,
) -> Result<(PolarizationConfig, Beamformer)> {
    if uplink.sqrt_rho() <= 0.0 || downlink.sqrt_rho() <= 0.0 {
        return Err(Error::domain("cannot standardize pilots with zero power"));
    }
    let x_gnb = flatten_uplink(uplink) / uplink.sqrt_rho();
    let x_ue = flatten_downlink(downlink) / downlink.sqrt_rho();
    if x_gnb.len() != gnb.input_dim() {
        return Err(Error::contract(format!(
            "gNB model expects {} inputs, frame provides {}",
            gnb.input_dim(),
            x_gnb.len()
        )));
    }
    if x_ue.len() != ue.input_dim() {
        return Err(Error::contract(format!(
            "UE model expects {} inputs, frame provides {}",
            ue.input_dim(),
            x_ue.len()
        )));
    }
    let head = gnb_forward(gnb, &x_gnb)?;
    let theta_ue = ue_forward(ue, &x_ue)?;
    let config = PolarizationConfig::new(head.theta_gnb.clone(), theta_ue)?;
    Ok((config, head.beamformer()?))
}

/// One evaluation draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub gain: f64,
    pub rate: f64,
}

/// Aggregated evaluation results.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub mean_gain: f64,
    pub se_gain: f64,
    pub mean_rate: f64,
    pub n_trials: usize,
    pub records: Vec<EvalRecord>,
}

/// Monte-Carlo evaluation on fresh channels: per-trial derived streams draw
/// a channel and both frame-fixed frames, the models pick the alignment, and
/// the gain is scored against the true channel noiselessly. Scoring uses the
/// raw head beamformer (identical to the training objective), so a guarded
/// near-zero tail scores as a vanishing gain instead of aborting the run.
pub fn evaluate(
    gnb: &MlpModel,
    ue: &MlpModel,
    rng: &mut RngStream,
    n_trials: usize,
    scenario: &Scenario,
) -> Result<EvalSummary> {
    if n_trials == 0 {
        return Err(Error::contract("need at least one trial".to_string()));
    }
    if gnb.input_dim() != 2 * scenario.l * scenario.n_t
        || gnb.output_dim() != 3 * scenario.n_t
        || ue.input_dim() != 2 * scenario.l
        || ue.output_dim() != 1
    {
        return Err(Error::contract(format!(
            "models trained for a different scenario than n_t={}, l={}",
            scenario.n_t, scenario.l
        )));
    }
    let noise = scenario.noise();
    let base = rng.next_u64();
    let mut records = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let mut st = RngStream::new(derive_seed(base, trial as u64));
        let h = sample_channel(&mut st, scenario.n_t)?;
        let uf = run_uplink_frame(&mut st, &h, scenario.l, RandomizationPolicy::FrameFixed, &noise)?;
        let df =
            run_downlink_frame(&mut st, &h, scenario.l, RandomizationPolicy::FrameFixed, &noise)?;
        let head = gnb_forward(gnb, &(flatten_uplink(&uf) / uf.sqrt_rho()))?;
        let theta_ue = ue_forward(ue, &(flatten_downlink(&df) / df.sqrt_rho()))?;
        let gain = -loss(&h, &head, theta_ue)?;
        let rate = achievable_rate(gain, noise.sigma2_ue)?;
        records.push(EvalRecord { gain, rate });
    }
    let mean_gain = records.iter().map(|r| r.gain).sum::<f64>() / n_trials as f64;
    let mean_rate = records.iter().map(|r| r.rate).sum::<f64>() / n_trials as f64;
    let se_gain = if n_trials > 1 {
        let var = records.iter().map(|r| (r.gain - mean_gain).powi(2)).sum::<f64>()
            / (n_trials - 1) as f64;
        (var / n_trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(EvalSummary { mean_gain, se_gain, mean_rate, n_trials, records })
}
