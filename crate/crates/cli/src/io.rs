//! File formats: model checkpoints, channel datasets, flat key=value config
//! files, and the training-log CSV. Binary layouts are little-endian and
//! documented field by field in the README.

use anyhow::{bail, Context, Result};
use prmiso_core::channel::DepolarizedChannel;
use prmiso_core::neural::{Activation, MlpModel, Scenario, StepRecord};
use prmiso_core::numerics::{C64, CMat, RMat, RVec};
use std::collections::HashMap;
use std::path::Path;

const CHECKPOINT_MAGIC: &[u8; 8] = b"PRMISOCK";
const DATASET_MAGIC: &[u8; 8] = b"PRMISOCH";
const FORMAT_VERSION: u32 = 1;

/// A trained gNB/UE pair plus the scenario it was trained for and the seed
/// that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub scenario: Scenario,
    pub seed: u64,
    pub gnb: MlpModel,
    pub ue: MlpModel,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        let mut w = Writer { buf };
        w.u32(FORMAT_VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 8]) -> Result<Self> {
        if buf.len() < 12 || &buf[..8] != magic {
            bail!("not a {} file", String::from_utf8_lossy(magic));
        }
        let mut r = Reader { buf, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            bail!("unsupported format version {version}");
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            bail!("truncated file: needed {n} bytes at offset {}", self.pos);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            bail!("{} trailing bytes after payload", self.buf.len() - self.pos);
        }
        Ok(())
    }
}

fn write_model(w: &mut Writer, model: &MlpModel) {
    w.u32(match model.activation() {
        Activation::Relu => 0,
    });
    w.u32(model.dims().len() as u32);
    for &d in model.dims() {
        w.u32(d as u32);
    }
    for layer in 0..model.dims().len() - 1 {
        for &v in model.weights()[layer].as_slice() {
            w.f64(v);
        }
        for &v in model.biases()[layer].as_slice() {
            w.f64(v);
        }
    }
}

fn read_model(r: &mut Reader) -> Result<MlpModel> {
    let activation = match r.u32()? {
        0 => Activation::Relu,
        tag => bail!("unknown activation tag {tag}"),
    };
    let n_dims = r.u32()? as usize;
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(r.u32()? as usize);
    }
    let mut weights = Vec::with_capacity(n_dims.saturating_sub(1));
    let mut biases = Vec::with_capacity(n_dims.saturating_sub(1));
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut wv = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            wv.push(r.f64()?);
        }
        weights.push(RMat::from_column_slice(fan_out, fan_in, &wv));
        let mut bv = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            bv.push(r.f64()?);
        }
        biases.push(RVec::from_vec(bv));
    }
    Ok(MlpModel::from_parts(dims, weights, biases, activation)?)
}

/// Checkpoint layout after the magic/version prefix: scenario (n_t u32,
/// l u32, snr_db f64), seed u64, then the gNB and UE models. Each model is
/// its activation tag (u32), layer count (u32), layer widths (u32 each), and
/// per layer the weight matrix (f64, column-major) followed by the bias.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    w.u32(ck.scenario.n_t as u32);
    w.u32(ck.scenario.l as u32);
    w.f64(ck.scenario.snr_db);
    w.u64(ck.seed);
    write_model(&mut w, &ck.gnb);
    write_model(&mut w, &ck.ue);
    std::fs::write(path, &w.buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader::new(&buf, CHECKPOINT_MAGIC)
        .with_context(|| format!("parsing {}", path.display()))?;
    let n_t = r.u32()? as usize;
    let l = r.u32()? as usize;
    let snr_db = r.f64()?;
    let seed = r.u64()?;
    let scenario = Scenario::new(n_t, l, snr_db)?;
    let gnb = read_model(&mut r)?;
    let ue = read_model(&mut r)?;
    r.done()?;
    if gnb.input_dim() != 2 * l * n_t || gnb.output_dim() != 3 * n_t {
        bail!(
            "checkpoint gNB model is {}->{}, scenario n_t={n_t}, l={l} needs {}->{}",
            gnb.input_dim(),
            gnb.output_dim(),
            2 * l * n_t,
            3 * n_t
        );
    }
    if ue.input_dim() != 2 * l || ue.output_dim() != 1 {
        bail!("checkpoint UE model is {}->{}, expected {}->1", ue.input_dim(), ue.output_dim(), 2 * l);
    }
    Ok(Checkpoint { scenario, seed, gnb, ue })
}

/// Dataset layout after the magic/version prefix: n_t u32, count u64,
/// seed u64, then per realization `8 n_t` doubles: for each antenna block in
/// order, its 2x2 entries row-major with real and imaginary parts
/// interleaved.
pub fn save_channels(path: &Path, channels: &[DepolarizedChannel], seed: u64) -> Result<()> {
    if channels.is_empty() {
        bail!("refusing to write an empty dataset");
    }
    let n_t = channels[0].n_t();
    if channels.iter().any(|h| h.n_t() != n_t) {
        bail!("mixed antenna counts in one dataset");
    }
    let mut w = Writer::new(DATASET_MAGIC);
    w.u32(n_t as u32);
    w.u64(channels.len() as u64);
    w.u64(seed);
    for h in channels {
        for i in 0..n_t {
            let b = h.block(i);
            for row in 0..2 {
                for col in 0..2 {
                    w.f64(b[(row, col)].re);
                    w.f64(b[(row, col)].im);
                }
            }
        }
    }
    std::fs::write(path, &w.buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_channels(path: &Path) -> Result<(Vec<DepolarizedChannel>, u64)> {
    let buf = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r =
        Reader::new(&buf, DATASET_MAGIC).with_context(|| format!("parsing {}", path.display()))?;
    let n_t = r.u32()? as usize;
    let count = r.u64()? as usize;
    let seed = r.u64()?;
    let mut channels = Vec::with_capacity(count);
    for _ in 0..count {
        let mut m = CMat::zeros(2, 2 * n_t);
        for i in 0..n_t {
            for row in 0..2 {
                for col in 0..2 {
                    let re = r.f64()?;
                    let im = r.f64()?;
                    m[(row, 2 * i + col)] = C64::new(re, im);
                }
            }
        }
        channels.push(DepolarizedChannel::from_matrix(m)?);
    }
    r.done()?;
    Ok((channels, seed))
}

/// Parses a flat config file: one `key=value` per line, `#` starts a comment,
/// blank lines ignored. Later lines override earlier ones.
pub fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, got `{raw}`", path.display(), lineno + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Writes the per-step training log as CSV.
pub fn write_training_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut out = String::from("step,loss,mean_gain\n");
    for r in log {
        out.push_str(&format!("{},{},{}\n", r.step, r.loss, r.mean_gain));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
