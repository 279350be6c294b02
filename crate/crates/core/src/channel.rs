//! Depolarized channel model, effective channel, beamforming gain, and rate.
//!
//! The downlink channel between a gNB with `n_t` polarization-reconfigurable
//! antennas and a single-antenna UE is a `2 x 2n_t` complex matrix of per-
//! antenna `2x2` polarization-basis blocks. Each side steers a real unit
//! polarization vector `p(theta) = (cos theta, sin theta)` with `theta` on the
//! quarter circle `[0, pi/2]`; together with a unit beamformer `w` this
//! collapses the channel to the scalar `p_ue^T H P w` whose squared magnitude
//! is the beamforming gain.

use crate::error::{Error, Result};
use crate::numerics::{CMat, CVec, C64};
use crate::rng::{sample_complex_gaussian, RngStream};
use nalgebra::Vector2;

/// Depolarized channel: `n_t` horizontally stacked `2x2` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DepolarizedChannel {
    h: CMat,
}

impl DepolarizedChannel {
    /// Wraps an existing `2 x 2n_t` matrix.
    pub fn from_matrix(h: CMat) -> Result<Self> {
        if h.nrows() != 2 || h.ncols() == 0 || h.ncols() % 2 != 0 {
            return Err(Error::contract(format!(
                "depolarized channel must be 2 x 2*n_t, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        Ok(DepolarizedChannel { h })
    }

    pub fn n_t(&self) -> usize {
        self.h.ncols() / 2
    }

    pub fn matrix(&self) -> &CMat {
        &self.h
    }

    /// The `2x2` block of antenna `i`.
    pub fn block(&self, i: usize) -> nalgebra::Matrix2<C64> {
        debug_assert!(i < self.n_t());
        let c = 2 * i;
        nalgebra::Matrix2::new(
            self.h[(0, c)],
            self.h[(0, c + 1)],
            self.h[(1, c)],
            self.h[(1, c + 1)],
        )
    }
}

/// Quarter-circle polarization angles for every gNB antenna plus the UE.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationConfig {
    theta_gnb: Vec<f64>,
    theta_ue: f64,
}

impl PolarizationConfig {
    pub fn new(theta_gnb: Vec<f64>, theta_ue: f64) -> Result<Self> {
        if theta_gnb.is_empty() {
            return Err(Error::domain("need at least one gNB angle"));
        }
        for (i, &t) in theta_gnb.iter().enumerate() {
            check_angle(t).map_err(|_| {
                Error::domain(format!("gNB angle {i} = {t} outside [0, pi/2]"))
            })?;
        }
        check_angle(theta_ue)
            .map_err(|_| Error::domain(format!("UE angle {theta_ue} outside [0, pi/2]")))?;
        Ok(PolarizationConfig { theta_gnb, theta_ue })
    }

    pub fn n_t(&self) -> usize {
        self.theta_gnb.len()
    }

    pub fn theta_gnb(&self) -> &[f64] {
        &self.theta_gnb
    }

    pub fn theta_ue(&self) -> f64 {
        self.theta_ue
    }
}

/// Unit-norm transmit beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    w: CVec,
}

impl Beamformer {
    /// Accepts `w` with `||w|| = 1` within `1e-9`.
    pub fn new(w: CVec) -> Result<Self> {
        let nrm = w.norm();
        if (nrm - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "beamformer norm {nrm} is not 1 within 1e-9"
            )));
        }
        Ok(Beamformer { w })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn from_unnormalized(w: CVec) -> Result<Self> {
        let nrm = w.norm();
        if nrm < 1e-300 {
            return Err(Error::degenerate("cannot normalize a zero beamformer"));
        }
        Ok(Beamformer { w: w / C64::new(nrm, 0.0) })
    }

    pub fn vector(&self) -> &CVec {
        &self.w
    }

    pub fn n_t(&self) -> usize {
        self.w.len()
    }
}

/// Pilot powers and noise variances for both link directions.
///
/// SNR is the dimensionless ratio `rho / sigma^2` for the matching direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma2_ue: f64,
    pub sigma2_gnb: f64,
    pub rho_gnb: f64,
    pub rho_ue: f64,
}

impl NoiseSpec {
    pub fn new(sigma2_ue: f64, sigma2_gnb: f64, rho_gnb: f64, rho_ue: f64) -> Result<Self> {
        for (name, v) in [
            ("sigma2_ue", sigma2_ue),
            ("sigma2_gnb", sigma2_gnb),
            ("rho_gnb", rho_gnb),
            ("rho_ue", rho_ue),
        ] {
            if !(v >= 0.0) {
                return Err(Error::domain(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(NoiseSpec { sigma2_ue, sigma2_gnb, rho_gnb, rho_ue })
    }

    /// Symmetric convention used by the benchmarks: `rho = 1` on both sides
    /// and `sigma^2 = 10^(-snr_db/10)` on both sides.
    pub fn from_snr_db(snr_db: f64) -> Self {
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        NoiseSpec { sigma2_ue: sigma2, sigma2_gnb: sigma2, rho_gnb: 1.0, rho_ue: 1.0 }
    }

    /// Noise-free pilots at unit power.
    pub fn noiseless() -> Self {
        NoiseSpec { sigma2_ue: 0.0, sigma2_gnb: 0.0, rho_gnb: 1.0, rho_ue: 1.0 }
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if theta.is_finite() && (0.0..=core::f64::consts::FRAC_PI_2).contains(&theta) {
        Ok(())
    } else {
        Err(Error::domain(format!("angle {theta} outside [0, pi/2]")))
    }
}

/// I.i.d. CN(0,1) channel draw (one coherence block, no temporal correlation).
pub fn sample_channel(rng: &mut RngStream, n_t: usize) -> Result<DepolarizedChannel> {
    if n_t == 0 {
        return Err(Error::domain("channel needs at least one antenna"));
    }
    let h = sample_complex_gaussian(rng, 2, 2 * n_t, 1.0)?;
    Ok(DepolarizedChannel { h })
}

/// Real unit polarization vector `(cos theta, sin theta)`.
pub fn pol_vector(theta: f64) -> Result<Vector2<f64>> {
    check_angle(theta)?;
    Ok(Vector2::new(theta.cos(), theta.sin()))
}

/// Derivative of [`pol_vector`] with respect to the angle.
///
/// Not range-checked: used by gradient code that may probe the boundary.
pub fn pol_vector_deriv(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.sin(), theta.cos())
}

/// Block-diagonal polarization matrix `P` (2n_t x n_t, real entries): column
/// `i` carries `p(theta_i)` in rows `2i, 2i+1`.
pub fn block_diag_pol(theta_gnb: &[f64]) -> Result<CMat> {
    let n_t = theta_gnb.len();
    if n_t == 0 {
        return Err(Error::domain("need at least one gNB angle"));
    }
    let mut p = CMat::zeros(2 * n_t, n_t);
    for (i, &t) in theta_gnb.iter().enumerate() {
        let v = pol_vector(t)?;
        p[(2 * i, i)] = C64::new(v.x, 0.0);
        p[(2 * i + 1, i)] = C64::new(v.y, 0.0);
    }
    Ok(p)
}

/// Quadratic form `a^T B b` for real 2-vectors around a complex `2x2` block.
#[inline]
pub(crate) fn quad_form(a: &Vector2<f64>, block: &nalgebra::Matrix2<C64>, b: &Vector2<f64>) -> C64 {
    block[(0, 0)] * (a.x * b.x)
        + block[(0, 1)] * (a.x * b.y)
        + block[(1, 0)] * (a.y * b.x)
        + block[(1, 1)] * (a.y * b.y)
}

/// Effective channel row `h_eff` (1 x n_t): entry `i = p_ue^T H_i p_i`.
pub fn effective_channel(h: &DepolarizedChannel, config: &PolarizationConfig) -> Result<CMat> {
    if h.n_t() != config.n_t() {
        return Err(Error::contract(format!(
            "channel has {} antennas, config has {}",
            h.n_t(),
            config.n_t()
        )));
    }
    let p_ue = pol_vector(config.theta_ue())?;
    let mut row = CMat::zeros(1, h.n_t());
    for i in 0..h.n_t() {
        let p_i = pol_vector(config.theta_gnb()[i])?;
        row[(0, i)] = quad_form(&p_ue, &h.block(i), &p_i);
    }
    Ok(row)
}

/// Same effective channel via the full matrix product `p_ue^T H P`.
///
/// Slower than [`effective_channel`]; kept as an independent route so tests
/// can cross-check the two formulations.
pub fn effective_channel_matrix_form(
    h: &DepolarizedChannel,
    config: &PolarizationConfig,
) -> Result<CMat> {
    if h.n_t() != config.n_t() {
        return Err(Error::contract(format!(
            "channel has {} antennas, config has {}",
            h.n_t(),
            config.n_t()
        )));
    }
    let p_ue = pol_vector(config.theta_ue())?;
    let p = block_diag_pol(config.theta_gnb())?;
    let pu = CMat::from_row_slice(1, 2, &[C64::new(p_ue.x, 0.0), C64::new(p_ue.y, 0.0)]);
    Ok(pu * h.matrix() * p)
}

/// Beamforming gain `|h_eff w|^2`.
pub fn beamforming_gain(
    h: &DepolarizedChannel,
    config: &PolarizationConfig,
    w: &Beamformer,
) -> Result<f64> {
    if w.n_t() != h.n_t() {
        return Err(Error::contract(format!(
            "beamformer has {} entries, channel has {} antennas",
            w.n_t(),
            h.n_t()
        )));
    }
    let h_eff = effective_channel(h, config)?;
    let s: C64 = (0..h.n_t()).map(|i| h_eff[(0, i)] * w.vector()[i]).sum();
    Ok(s.norm_sqr())
}

/// Achievable rate `log2(1 + gain / sigma2)` in bits per channel use.
pub fn achievable_rate(gain: f64, sigma2_ue: f64) -> Result<f64> {
    if !(sigma2_ue > 0.0) {
        return Err(Error::domain(format!(
            "rate needs a positive noise variance, got {sigma2_ue}"
        )));
    }
    if !(gain >= 0.0) {
        return Err(Error::domain(format!("gain must be nonnegative, got {gain}")));
    }
    Ok((1.0 + gain / sigma2_ue).log2())
}
