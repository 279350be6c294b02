//! Double-side pilot protocol under TDD reciprocity.
//!
//! In each coherence block the UE first sends `L` uplink pilots through the
//! reciprocal channel `H^H` while the gNB cycles its polarization matrix, then
//! the gNB sends `L` downlink pilots with per-slot random beamformers. Both
//! sides observe their pilots under randomized polarization states and must
//! infer a good data-time configuration from them.
//!
//! Two randomization modes exist because the protocol text and the estimator
//! theory want different things:
//!
//! - [`RandomizationPolicy::FrameFixed`]: the UE polarization is drawn once
//!   per frame (uplink), and the downlink fixes both the UE polarization and
//!   the gNB angles across slots, varying only `w_l`. This drives the learned
//!   pipeline.
//! - [`RandomizationPolicy::PerSlot`]: every polarization is redrawn each
//!   slot. With a fixed UE polarization the observable subspace has dimension
//!   `2n_t`, half of the `4n_t` unknowns, so the least-squares estimators use
//!   this mode to make the full channel identifiable.
//!
//! Every frame records its randomization so estimators can rebuild the exact
//! linear operator that produced it.

use crate::channel::{pol_vector, DepolarizedChannel, NoiseSpec};
use crate::error::{Error, Result};
use crate::numerics::{flatten_ri, CMat, CVec, RMat, RVec};
use crate::rng::RngStream;

/// Slot randomization mode; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomizationPolicy {
    FrameFixed,
    PerSlot,
}

/// Uplink observations `Y_gnb` (n_t x L) plus the randomization that made them.
///
/// Column `l` is `P_l^T H^H p_ue,l * sqrt(rho_ue) + n_l`.
#[derive(Debug, Clone)]
pub struct UplinkPilotFrame {
    y_gnb: CMat,
    /// Per-slot gNB angles, `(i, l)` indexed (n_t x L).
    theta_gnb: RMat,
    /// Per-slot UE angle (constant across slots under frame-fixed mode).
    theta_ue: RVec,
    sqrt_rho: f64,
    policy: RandomizationPolicy,
}

/// Downlink observations `y_ue` (L entries) plus their randomization.
///
/// Entry `l` is `p_ue,l^T H P_l w_l * sqrt(rho_gnb) + n_l`.
#[derive(Debug, Clone)]
pub struct DownlinkPilotFrame {
    y_ue: CVec,
    /// Per-slot beamformers, column `l` is `w_l` (n_t x L), each unit-norm.
    w: CMat,
    theta_gnb: RMat,
    theta_ue: RVec,
    sqrt_rho: f64,
    policy: RandomizationPolicy,
}

macro_rules! frame_accessors {
    ($ty:ident) => {
        impl $ty {
            pub fn l(&self) -> usize {
                self.theta_ue.len()
            }
            pub fn n_t(&self) -> usize {
                self.theta_gnb.nrows()
            }
            /// Per-slot gNB angles, `(antenna, slot)` indexed.
            pub fn theta_gnb(&self) -> &RMat {
                &self.theta_gnb
            }
            /// Per-slot UE angles.
            pub fn theta_ue(&self) -> &RVec {
                &self.theta_ue
            }
            /// Pilot amplitude `sqrt(rho)`.
            pub fn sqrt_rho(&self) -> f64 {
                self.sqrt_rho
            }
            pub fn policy(&self) -> RandomizationPolicy {
                self.policy
            }
        }
    };
}

frame_accessors!(UplinkPilotFrame);
frame_accessors!(DownlinkPilotFrame);

impl UplinkPilotFrame {
    pub fn y_gnb(&self) -> &CMat {
        &self.y_gnb
    }
}

impl DownlinkPilotFrame {
    pub fn y_ue(&self) -> &CVec {
        &self.y_ue
    }
    /// Per-slot beamformers as matrix columns.
    pub fn w(&self) -> &CMat {
        &self.w
    }
}

fn validate(l: usize, n_t: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::domain("pilot frame needs at least one slot"));
    }
    if n_t == 0 {
        return Err(Error::domain("pilot frame needs at least one antenna"));
    }
    Ok(())
}

/// Runs the uplink pilot frame.
///
/// Draw order per slot: slot randomization first (UE angle if per-slot, then
/// the `n_t` gNB angles), then the `n_t` noise samples. Under frame-fixed mode
/// the UE angle is drawn once before the first slot.
pub fn run_uplink_frame(
    rng: &mut RngStream,
    h: &DepolarizedChannel,
    l: usize,
    policy: RandomizationPolicy,
    noise: &NoiseSpec,
) -> Result<UplinkPilotFrame> {
    let n_t = h.n_t();
    validate(l, n_t)?;
    let sqrt_rho = noise.rho_ue.sqrt();

    let fixed_ue = match policy {
        RandomizationPolicy::FrameFixed => Some(rng.next_angle()),
        RandomizationPolicy::PerSlot => None,
    };
    let mut theta_ue = RVec::zeros(l);
    let mut theta_gnb = RMat::zeros(n_t, l);
    let mut y = CMat::zeros(n_t, l);
    for slot in 0..l {
        theta_ue[slot] = fixed_ue.unwrap_or_else(|| rng.next_angle());
        for i in 0..n_t {
            theta_gnb[(i, slot)] = rng.next_angle();
        }
        let p_ue = pol_vector(theta_ue[slot])?;
        for i in 0..n_t {
            let p_i = pol_vector(theta_gnb[(i, slot)])?;
            // p_i^T H_i^H p_ue = conj(p_ue^T H_i p_i) for real polarizations.
            let sig = crate::channel::quad_form(&p_ue, &h.block(i), &p_i).conj();
            y[(i, slot)] = sig * sqrt_rho + rng.next_cn(noise.sigma2_gnb);
        }
    }
    Ok(UplinkPilotFrame { y_gnb: y, theta_gnb, theta_ue, sqrt_rho, policy })
}

/// Runs the downlink pilot frame.
///
/// Draw order: under frame-fixed mode the UE angle and the `n_t` gNB angles
/// are drawn once up front; then per slot the randomization (per-slot angles
/// if applicable, then `w_l`), then one noise sample.
pub fn run_downlink_frame(
    rng: &mut RngStream,
    h: &DepolarizedChannel,
    l: usize,
    policy: RandomizationPolicy,
    noise: &NoiseSpec,
) -> Result<DownlinkPilotFrame> {
    let n_t = h.n_t();
    validate(l, n_t)?;
    let sqrt_rho = noise.rho_gnb.sqrt();

    let fixed = match policy {
        RandomizationPolicy::FrameFixed => {
            let ue = rng.next_angle();
            let gnb: Vec<f64> = (0..n_t).map(|_| rng.next_angle()).collect();
            Some((ue, gnb))
        }
        RandomizationPolicy::PerSlot => None,
    };

    let mut theta_ue = RVec::zeros(l);
    let mut theta_gnb = RMat::zeros(n_t, l);
    let mut w = CMat::zeros(n_t, l);
    let mut y = CVec::zeros(l);
    for slot in 0..l {
        match &fixed {
            Some((ue, gnb)) => {
                theta_ue[slot] = *ue;
                for i in 0..n_t {
                    theta_gnb[(i, slot)] = gnb[i];
                }
            }
            None => {
                theta_ue[slot] = rng.next_angle();
                for i in 0..n_t {
                    theta_gnb[(i, slot)] = rng.next_angle();
                }
            }
        }
        let w_l = rng.next_unit_cvector(n_t);
        w.set_column(slot, &w_l);

        let p_ue = pol_vector(theta_ue[slot])?;
        let mut sig = crate::numerics::C64::new(0.0, 0.0);
        for i in 0..n_t {
            let p_i = pol_vector(theta_gnb[(i, slot)])?;
            sig += crate::channel::quad_form(&p_ue, &h.block(i), &p_i) * w_l[i];
        }
        y[slot] = sig * sqrt_rho + rng.next_cn(noise.sigma2_ue);
    }
    Ok(DownlinkPilotFrame { y_ue: y, w, theta_gnb, theta_ue, sqrt_rho, policy })
}

/// Noiseless uplink signal rebuilt from the frame's recorded randomization.
pub fn uplink_signal(h: &DepolarizedChannel, frame: &UplinkPilotFrame) -> Result<CMat> {
    if h.n_t() != frame.n_t() {
        return Err(Error::contract(format!(
            "channel has {} antennas, frame has {}",
            h.n_t(),
            frame.n_t()
        )));
    }
    let mut y = CMat::zeros(frame.n_t(), frame.l());
    for slot in 0..frame.l() {
        let p_ue = pol_vector(frame.theta_ue[slot])?;
        for i in 0..frame.n_t() {
            let p_i = pol_vector(frame.theta_gnb[(i, slot)])?;
            y[(i, slot)] =
                crate::channel::quad_form(&p_ue, &h.block(i), &p_i).conj() * frame.sqrt_rho;
        }
    }
    Ok(y)
}

/// Noiseless downlink signal rebuilt from the frame's recorded randomization.
pub fn downlink_signal(h: &DepolarizedChannel, frame: &DownlinkPilotFrame) -> Result<CVec> {
    if h.n_t() != frame.n_t() {
        return Err(Error::contract(format!(
            "channel has {} antennas, frame has {}",
            h.n_t(),
            frame.n_t()
        )));
    }
    let mut y = CVec::zeros(frame.l());
    for slot in 0..frame.l() {
        let p_ue = pol_vector(frame.theta_ue[slot])?;
        let mut sig = crate::numerics::C64::new(0.0, 0.0);
        for i in 0..frame.n_t() {
            let p_i = pol_vector(frame.theta_gnb[(i, slot)])?;
            sig += crate::channel::quad_form(&p_ue, &h.block(i), &p_i) * frame.w[(i, slot)];
        }
        y[slot] = sig * frame.sqrt_rho;
    }
    Ok(y)
}

/// Flattens uplink observations to the real layout the gNB network consumes:
/// `[vec(Re Y); vec(Im Y)]`, column-major, length `2 L n_t`.
pub fn flatten_uplink(frame: &UplinkPilotFrame) -> RVec {
    flatten_ri(&frame.y_gnb)
}

/// Flattens downlink observations for the UE network: `[Re y; Im y]`,
/// length `2L`.
pub fn flatten_downlink(frame: &DownlinkPilotFrame) -> RVec {
    let as_mat = CMat::from_column_slice(frame.y_ue.len(), 1, frame.y_ue.as_slice());
    flatten_ri(&as_mat)
}
