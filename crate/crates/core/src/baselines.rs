//! Benchmark anchors: least-squares channel estimation, the alternating
//! perfect-CSI polarization optimizer with its brute-force grid oracle, the
//! random baseline, and the conventional first-estimate-then-optimize
//! pipeline that competes with the learned approach.
//!
//! The alternating optimizer exploits the fact that the alignment objective
//! `||h_eff||^2` is a real quadratic form over each polarization vector when
//! all the others are held fixed, so every block update has a closed-form
//! quarter-circle maximizer and the objective never decreases.

use crate::channel::{
    effective_channel, pol_vector, Beamformer, DepolarizedChannel, PolarizationConfig,
};
use crate::error::{Error, Result};
use crate::numerics::{solve_min_norm_ls, C64, CMat, CVec};
use crate::pilots::{DownlinkPilotFrame, UplinkPilotFrame};
use crate::rng::RngStream;
use core::f64::consts::FRAC_PI_2;
use nalgebra::Vector2;

/// Convergence tolerance the pipeline uses when no caller override exists.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Iteration cap the pipeline uses when no caller override exists.
pub const DEFAULT_MAX_ITERS: usize = 200;

/// Which pilot direction produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    Uplink,
    Downlink,
}

/// Least-squares channel estimate.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub h_hat: DepolarizedChannel,
    pub source: EstimateSource,
    /// Attained LS objective, the squared Euclidean residual norm
    /// `||A x_hat - b||^2` (summed over per-antenna subsystems on the uplink).
    pub residual: f64,
}

/// A complete alignment decision: all polarization angles plus the beamformer.
#[derive(Debug, Clone)]
pub struct AlignmentSolution {
    pub config: PolarizationConfig,
    pub w: Beamformer,
    /// Gain the designing side predicts from the channel information it
    /// optimized against; the attained gain must be evaluated against the
    /// true channel. Zero for the random baseline, which predicts nothing.
    pub gain_predicted: f64,
}

/// Result of the alternating optimizer, flagged if the iteration cap hit
/// before the improvement dropped below tolerance.
#[derive(Debug, Clone)]
pub struct IterativeOutcome {
    pub solution: AlignmentSolution,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each full alternating pass.
    pub objective_trace: Vec<f64>,
}

/// Maximizer of `p(t)^T M p(t)` over the quarter circle, for symmetric `M`
/// given by its entries. Returns `(t, value)`. The unconstrained optimum of
/// the underlying sinusoid is clamped into `[0, pi/2]` and compared with both
/// endpoints; ties resolve to the smallest angle.
fn quarter_circle_argmax(m00: f64, m01: f64, m11: f64) -> (f64, f64) {
    let eval = |t: f64| {
        let c = libm::cos(t);
        let s = libm::sin(t);
        m00 * c * c + 2.0 * m01 * s * c + m11 * s * s
    };
    let interior = (0.5 * libm::atan2(2.0 * m01, m00 - m11)).clamp(0.0, FRAC_PI_2);
    let mut best = (0.0, m00);
    for t in [interior, FRAC_PI_2] {
        let v = eval(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// Maximum of `p(t)^T M p(t)` over the quarter circle without computing the
/// maximizer: the full-circle peak `tr/2 + sqrt((delta/2)^2 + m01^2)` lands
/// inside `[0, pi/2]` exactly when `m01 >= 0`, otherwise the quarter-circle
/// restriction peaks at an endpoint.
fn quarter_circle_max_value(m00: f64, m01: f64, m11: f64) -> f64 {
    if m01 >= 0.0 {
        0.5 * (m00 + m11) + libm::hypot(0.5 * (m00 - m11), m01)
    } else {
        m00.max(m11)
    }
}

/// `M = Re{v v^H}` entries for the quadratic form `|v^T p|^2 = p^T M p`.
fn rank_one_form(v0: C64, v1: C64) -> (f64, f64, f64) {
    (v0.norm_sqr(), (v0 * v1.conj()).re, v1.norm_sqr())
}

/// `H_i^T p_ue` for a real polarization vector.
fn back_projected(block: &nalgebra::Matrix2<C64>, p_ue: &Vector2<f64>) -> (C64, C64) {
    (
        block[(0, 0)] * p_ue.x + block[(1, 0)] * p_ue.y,
        block[(0, 1)] * p_ue.x + block[(1, 1)] * p_ue.y,
    )
}

/// Estimates the full depolarized channel from uplink pilots.
///
/// With the observations conjugated, slot `l` of antenna `i` reads
/// `sqrt(rho) * p_ue,l^T H_i p_i,l + noise`, linear in the four entries of
/// `H_i`, so the problem decouples into `n_t` independent `L x 4` systems
/// solved by minimum-norm least squares. Per-slot randomization with
/// `L >= 4` makes recovery exact in the noiseless case; the frame-fixed mode
/// leaves half the parameters unobservable no matter how large `L` gets.
pub fn ls_estimate_uplink(frame: &UplinkPilotFrame) -> Result<ChannelEstimate> {
    let n_t = frame.n_t();
    let l = frame.l();
    let sqrt_rho = frame.sqrt_rho();
    let p_ue: Vec<Vector2<f64>> =
        (0..l).map(|s| pol_vector(frame.theta_ue()[s])).collect::<Result<_>>()?;

    let mut h = CMat::zeros(2, 2 * n_t);
    let mut residual = 0.0;
    for i in 0..n_t {
        let mut a = CMat::zeros(l, 4);
        let mut b = CVec::zeros(l);
        for slot in 0..l {
            let p_i = pol_vector(frame.theta_gnb()[(i, slot)])?;
            for col in 0..2 {
                for row in 0..2 {
                    a[(slot, 2 * col + row)] =
                        C64::new(sqrt_rho * p_ue[slot][row] * p_i[col], 0.0);
                }
            }
            b[slot] = frame.y_gnb()[(i, slot)].conj();
        }
        let x = solve_min_norm_ls(&a, &b)?;
        residual += (&a * &x - &b).norm_squared();
        for col in 0..2 {
            for row in 0..2 {
                h[(row, 2 * i + col)] = x[2 * col + row];
            }
        }
    }
    Ok(ChannelEstimate {
        h_hat: DepolarizedChannel::from_matrix(h)?,
        source: EstimateSource::Uplink,
        residual,
    })
}

/// Estimates the full depolarized channel from downlink pilots.
///
/// Each slot contributes one scalar equation
/// `y_l = sqrt(rho) * sum_i w_l[i] * p_ue,l^T H_i p_i,l + noise`, so all
/// `4 n_t` unknowns couple into a single `L x 4n_t` system and noiseless
/// exact recovery needs `L >= 4 n_t` under per-slot randomization.
pub fn ls_estimate_downlink(frame: &DownlinkPilotFrame) -> Result<ChannelEstimate> {
    let n_t = frame.n_t();
    let l = frame.l();
    let sqrt_rho = frame.sqrt_rho();

    let mut a = CMat::zeros(l, 4 * n_t);
    for slot in 0..l {
        let p_ue = pol_vector(frame.theta_ue()[slot])?;
        for i in 0..n_t {
            let p_i = pol_vector(frame.theta_gnb()[(i, slot)])?;
            let w_li = frame.w()[(i, slot)];
            for col in 0..2 {
                for row in 0..2 {
                    a[(slot, 4 * i + 2 * col + row)] =
                        w_li * (sqrt_rho * p_ue[row] * p_i[col]);
                }
            }
        }
    }
    let x = solve_min_norm_ls(&a, frame.y_ue())?;
    let residual = (&a * &x - frame.y_ue()).norm_squared();

    let mut h = CMat::zeros(2, 2 * n_t);
    for i in 0..n_t {
        for col in 0..2 {
            for row in 0..2 {
                h[(row, 2 * i + col)] = x[4 * i + 2 * col + row];
            }
        }
    }
    Ok(ChannelEstimate {
        h_hat: DepolarizedChannel::from_matrix(h)?,
        source: EstimateSource::Downlink,
        residual,
    })
}

/// Phase-matched beamformer `w = h_eff^H / ||h_eff||`, the gain-optimal
/// choice attaining `||h_eff||^2`.
pub fn phase_matched_beamformer(h_eff: &CMat) -> Result<Beamformer> {
    if h_eff.nrows() != 1 || h_eff.ncols() == 0 {
        return Err(Error::contract(format!(
            "effective channel must be a nonempty row, got {}x{}",
            h_eff.nrows(),
            h_eff.ncols()
        )));
    }
    let nrm = h_eff.norm();
    if !(nrm > 0.0) {
        return Err(Error::degenerate("phase matching needs a nonzero effective channel"));
    }
    let w = CVec::from_fn(h_eff.ncols(), |i, _| h_eff[(0, i)].conj() / nrm);
    Beamformer::new(w)
}

/// Step resolution of the UE-angle initialization scan, in degrees.
const INIT_SCAN_STEP_DEG: f64 = 0.25;

/// Alternating maximization of `||h_eff||^2` over all polarization angles.
///
/// Each pass first maximizes every gNB angle in closed form given the UE
/// angle (the objective decouples across antennas), then maximizes the UE
/// angle in closed form given the gNB angles; both steps are exact
/// quarter-circle maximizations of `2x2` quadratic forms, so the objective
/// trace is nondecreasing. Stops when a full pass improves the objective by
/// less than `tol`, and returns the last (best) iterate flagged unconverged
/// if the cap hits first. The beamformer is phase-matched to the final
/// effective channel.
///
/// Alternating ascent from a fixed start can stall in a secondary basin (the
/// objective in `theta_ue` alone is a sum of clamped rank-one maxima with up
/// to a handful of local peaks), so the starting UE angle comes from a
/// deterministic closed-form scan: for each grid value of `theta_ue` the
/// per-antenna maxima have an explicit eigenvalue form, and the best grid
/// point seeds the alternating passes.
pub fn optimize_polarization_iterative(
    h: &DepolarizedChannel,
    tol: f64,
    max_iters: usize,
) -> Result<IterativeOutcome> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::domain("need at least one iteration"));
    }
    if !(h.matrix().norm() > 0.0) {
        return Err(Error::degenerate("cannot align a zero channel"));
    }

    let n_t = h.n_t();
    let mut theta_ue = 0.0;
    let mut scan_best = f64::NEG_INFINITY;
    for t_ue in quarter_grid(INIT_SCAN_STEP_DEG) {
        let p_ue = Vector2::new(libm::cos(t_ue), libm::sin(t_ue));
        let mut objective = 0.0;
        for i in 0..n_t {
            let (v0, v1) = back_projected(&h.block(i), &p_ue);
            let (m00, m01, m11) = rank_one_form(v0, v1);
            objective += quarter_circle_max_value(m00, m01, m11);
        }
        if objective > scan_best {
            scan_best = objective;
            theta_ue = t_ue;
        }
    }
    let mut theta = vec![0.0; n_t];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let p_ue = pol_vector(theta_ue)?;
        for (i, t) in theta.iter_mut().enumerate() {
            let (v0, v1) = back_projected(&h.block(i), &p_ue);
            let (m00, m01, m11) = rank_one_form(v0, v1);
            *t = quarter_circle_argmax(m00, m01, m11).0;
        }

        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for (i, t) in theta.iter().enumerate() {
            let block = h.block(i);
            let p = pol_vector(*t)?;
            let u0 = block[(0, 0)] * p.x + block[(0, 1)] * p.y;
            let u1 = block[(1, 0)] * p.x + block[(1, 1)] * p.y;
            s00 += u0.norm_sqr();
            s01 += (u0 * u1.conj()).re;
            s11 += u1.norm_sqr();
        }
        let (t_ue, objective) = quarter_circle_argmax(s00, s01, s11);
        theta_ue = t_ue;
        trace.push(objective);
        if objective - prev < tol {
            converged = true;
            break;
        }
        prev = objective;
    }

    let config = PolarizationConfig::new(theta, theta_ue)?;
    let h_eff = effective_channel(h, &config)?;
    let w = phase_matched_beamformer(&h_eff)?;
    Ok(IterativeOutcome {
        solution: AlignmentSolution { config, w, gain_predicted: h_eff.norm_squared() },
        converged,
        iterations,
        objective_trace: trace,
    })
}

/// Quarter-circle grid in radians: multiples of `step_deg` plus the exact
/// endpoint `pi/2`.
fn quarter_grid(step_deg: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let deg = k as f64 * step_deg;
        if deg >= 90.0 {
            break;
        }
        grid.push(deg.to_radians());
        k += 1;
    }
    grid.push(FRAC_PI_2);
    grid
}

/// Exhaustive grid oracle for the alternating optimizer.
///
/// Scans `theta_ue` over the grid; inside each scan the objective decouples
/// across antennas, so every antenna takes an independent 1-D grid maximum.
/// Ties resolve to the smallest angle. Intended for small `n_t`; cost grows
/// as `grid^2 * n_t`.
pub fn brute_force_polarization(
    h: &DepolarizedChannel,
    grid_step_deg: f64,
) -> Result<AlignmentSolution> {
    if !(grid_step_deg > 0.0 && grid_step_deg <= 90.0) {
        return Err(Error::domain(format!(
            "grid step must be in (0, 90] degrees, got {grid_step_deg}"
        )));
    }
    let grid = quarter_grid(grid_step_deg);
    let trig: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&t| {
            let c = libm::cos(t);
            let s = libm::sin(t);
            (c * c, c * s, s * s)
        })
        .collect();

    let n_t = h.n_t();
    let mut best_obj = f64::NEG_INFINITY;
    let mut best_ue = 0.0;
    let mut best_theta = vec![0.0; n_t];
    let mut theta = vec![0.0; n_t];
    for &t_ue in &grid {
        let p_ue = Vector2::new(libm::cos(t_ue), libm::sin(t_ue));
        let mut objective = 0.0;
        for (i, t) in theta.iter_mut().enumerate() {
            let (v0, v1) = back_projected(&h.block(i), &p_ue);
            let (m00, m01, m11) = rank_one_form(v0, v1);
            let mut best_i = (0usize, f64::NEG_INFINITY);
            for (k, &(cc, cs, ss)) in trig.iter().enumerate() {
                let val = m00 * cc + 2.0 * m01 * cs + m11 * ss;
                if val > best_i.1 {
                    best_i = (k, val);
                }
            }
            *t = grid[best_i.0];
            objective += best_i.1;
        }
        if objective > best_obj {
            best_obj = objective;
            best_ue = t_ue;
            best_theta.copy_from_slice(&theta);
        }
    }

    let config = PolarizationConfig::new(best_theta, best_ue)?;
    let h_eff = effective_channel(h, &config)?;
    let w = phase_matched_beamformer(&h_eff)?;
    Ok(AlignmentSolution { config, w, gain_predicted: h_eff.norm_squared() })
}

/// Uninformed baseline: uniform angles, isotropic unit beamformer.
///
/// Draw order: `n_t` gNB angles, the UE angle, then the beamformer.
pub fn random_baseline(rng: &mut RngStream, n_t: usize) -> Result<AlignmentSolution> {
    if n_t == 0 {
        return Err(Error::domain("need at least one antenna"));
    }
    let theta: Vec<f64> = (0..n_t).map(|_| rng.next_angle()).collect();
    let theta_ue = rng.next_angle();
    let config = PolarizationConfig::new(theta, theta_ue)?;
    let w = Beamformer::new(rng.next_unit_cvector(n_t))?;
    Ok(AlignmentSolution { config, w, gain_predicted: 0.0 })
}

/// Conventional estimate-then-optimize pipeline run from both pilot frames.
///
/// The gNB optimizes its angles and beamformer against its uplink estimate.
/// The UE cannot see that estimate, so it reruns the same deterministic
/// optimizer against its own downlink estimate and keeps only the UE angle,
/// whose final update is exactly the closed-form quarter-circle maximization
/// given the gNB choices recomputed on its side. `gain_predicted` is the gNB
/// side's predicted objective.
pub fn first_estimate_then_optimize(
    uplink: &UplinkPilotFrame,
    downlink: &DownlinkPilotFrame,
) -> Result<AlignmentSolution> {
    if uplink.n_t() != downlink.n_t() {
        return Err(Error::contract(format!(
            "uplink frame has {} antennas, downlink frame has {}",
            uplink.n_t(),
            downlink.n_t()
        )));
    }
    let est_ul = ls_estimate_uplink(uplink)?;
    let est_dl = ls_estimate_downlink(downlink)?;
    let gnb = optimize_polarization_iterative(&est_ul.h_hat, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let ue = optimize_polarization_iterative(&est_dl.h_hat, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;

    let config = PolarizationConfig::new(
        gnb.solution.config.theta_gnb().to_vec(),
        ue.solution.config.theta_ue(),
    )?;
    Ok(AlignmentSolution {
        config,
        w: gnb.solution.w,
        gain_predicted: gnb.solution.gain_predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{beamforming_gain, sample_channel, NoiseSpec};
    use crate::pilots::{run_downlink_frame, run_uplink_frame, RandomizationPolicy};
    use crate::rng::RngStream;

    fn rel_err(h_hat: &DepolarizedChannel, h: &DepolarizedChannel) -> f64 {
        (h_hat.matrix() - h.matrix()).norm() / h.matrix().norm()
    }

    fn uplink(
        seed: u64,
        n_t: usize,
        l: usize,
        policy: RandomizationPolicy,
        noise: &NoiseSpec,
    ) -> (DepolarizedChannel, UplinkPilotFrame) {
        let mut rng = RngStream::new(seed);
        let h = sample_channel(&mut rng, n_t).unwrap();
        let f = run_uplink_frame(&mut rng, &h, l, policy, noise).unwrap();
        (h, f)
    }

    #[test]
    fn uplink_exact_recovery_at_four_pilots() {
        let (h, f) =
            uplink(11, 8, 4, RandomizationPolicy::PerSlot, &NoiseSpec::noiseless());
        let est = ls_estimate_uplink(&f).unwrap();
        let err = rel_err(&est.h_hat, &h);
        assert!(err < 1e-8, "relative recovery error {err} at L=4");
        assert_eq!(est.source, EstimateSource::Uplink);
        assert!(est.residual < 1e-18, "noiseless residual {}", est.residual);
    }

    #[test]
    fn uplink_underdetermined_two_pilots() {
        let (h, f) =
            uplink(12, 3, 2, RandomizationPolicy::PerSlot, &NoiseSpec::noiseless());
        let est = ls_estimate_uplink(&f).unwrap();
        assert!(est.residual < 1e-18, "min-norm residual {}", est.residual);
        assert!(
            rel_err(&est.h_hat, &h) > 1e-3,
            "an underdetermined system cannot identify the channel"
        );
    }

    #[test]
    fn uplink_zero_channel_estimate_vanishes_with_noise() {
        let h = DepolarizedChannel::from_matrix(CMat::zeros(2, 4)).unwrap();
        let norm_at = |sigma2: f64| {
            let mut rng = RngStream::new(13);
            let noise = NoiseSpec::new(0.0, sigma2, 1.0, 1.0).unwrap();
            let f =
                run_uplink_frame(&mut rng, &h, 6, RandomizationPolicy::PerSlot, &noise).unwrap();
            ls_estimate_uplink(&f).unwrap().h_hat.matrix().norm()
        };
        let coarse = norm_at(1e-2);
        let fine = norm_at(1e-6);
        assert!(fine < coarse, "estimate should shrink with the noise");
        assert!(fine < 1e-2, "estimate {fine} should approach zero");
    }

    #[test]
    fn uplink_matches_stacked_full_system() {
        // Independent route: one big block-diagonal system over all 4 n_t
        // unknowns must give the same estimate as the per-antenna solves,
        // both underdetermined (min-norm) and overdetermined (noisy, unique).
        for (l, noise) in [(2, NoiseSpec::noiseless()), (8, NoiseSpec::from_snr_db(10.0))] {
            let (_, f) = uplink(14, 3, l, RandomizationPolicy::PerSlot, &noise);
            let n_t = f.n_t();
            let mut a = CMat::zeros(n_t * l, 4 * n_t);
            let mut b = CVec::zeros(n_t * l);
            for i in 0..n_t {
                for slot in 0..l {
                    let p_ue = pol_vector(f.theta_ue()[slot]).unwrap();
                    let p_i = pol_vector(f.theta_gnb()[(i, slot)]).unwrap();
                    for col in 0..2 {
                        for row in 0..2 {
                            a[(i * l + slot, 4 * i + 2 * col + row)] =
                                C64::new(f.sqrt_rho() * p_ue[row] * p_i[col], 0.0);
                        }
                    }
                    b[i * l + slot] = f.y_gnb()[(i, slot)].conj();
                }
            }
            let x = solve_min_norm_ls(&a, &b).unwrap();
            let est = ls_estimate_uplink(&f).unwrap();
            let mut dev: f64 = 0.0;
            for i in 0..n_t {
                for col in 0..2 {
                    for row in 0..2 {
                        let via_stack = x[4 * i + 2 * col + row];
                        let via_prod = est.h_hat.matrix()[(row, 2 * i + col)];
                        dev = dev.max((via_stack - via_prod).norm());
                    }
                }
            }
            assert!(dev < 1e-10, "stacked and per-antenna estimates differ by {dev}");
        }
    }

    #[test]
    fn downlink_exact_recovery_at_4nt_pilots() {
        let mut rng = RngStream::new(15);
        let h = sample_channel(&mut rng, 4).unwrap();
        let f = run_downlink_frame(&mut rng, &h, 16, RandomizationPolicy::PerSlot, &NoiseSpec::noiseless())
            .unwrap();
        let est = ls_estimate_downlink(&f).unwrap();
        let err = rel_err(&est.h_hat, &h);
        assert!(err < 1e-8, "relative recovery error {err} at L=4n_t");
        assert_eq!(est.source, EstimateSource::Downlink);
    }

    #[test]
    fn downlink_one_pilot_short_fails_generically() {
        let mut rng = RngStream::new(16);
        let h = sample_channel(&mut rng, 2).unwrap();
        let f = run_downlink_frame(&mut rng, &h, 7, RandomizationPolicy::PerSlot, &NoiseSpec::noiseless())
            .unwrap();
        let est = ls_estimate_downlink(&f).unwrap();
        assert!(
            rel_err(&est.h_hat, &h) > 1e-3,
            "4n_t - 1 pilots cannot identify the channel"
        );
    }

    #[test]
    fn downlink_single_pilot_min_norm_consistent() {
        let mut rng = RngStream::new(17);
        let h = sample_channel(&mut rng, 3).unwrap();
        let f = run_downlink_frame(&mut rng, &h, 1, RandomizationPolicy::PerSlot, &NoiseSpec::noiseless())
            .unwrap();
        let est = ls_estimate_downlink(&f).unwrap();
        assert!(est.residual < 1e-18, "residual {}", est.residual);
        // The estimate reproduces the observation through the recorded
        // randomization even though it cannot match the channel.
        let y = crate::pilots::downlink_signal(&est.h_hat, &f).unwrap();
        assert!((y - f.y_ue()).norm() < 1e-10);
    }

    #[test]
    fn phase_matching_examples() {
        let ones = CMat::from_element(1, 4, C64::new(1.0, 0.0));
        let w = phase_matched_beamformer(&ones).unwrap();
        for i in 0..4 {
            assert!((w.vector()[i] - C64::new(0.5, 0.0)).norm() < 1e-15);
        }

        let mut rng = RngStream::new(18);
        for _ in 0..1000 {
            let h_eff = crate::rng::sample_complex_gaussian(&mut rng, 1, 5, 1.0).unwrap();
            let w = phase_matched_beamformer(&h_eff).unwrap();
            let gain = {
                let s: C64 = (0..5).map(|i| h_eff[(0, i)] * w.vector()[i]).sum();
                s.norm_sqr()
            };
            assert!((gain - h_eff.norm_squared()).abs() < 1e-12 * h_eff.norm_squared().max(1.0));

            let rival = rng.next_unit_cvector(5);
            let rival_gain: f64 = {
                let s: C64 = (0..5).map(|i| h_eff[(0, i)] * rival[i]).sum();
                s.norm_sqr()
            };
            assert!(rival_gain <= gain + 1e-12, "a unit competitor beat phase matching");
        }

        assert!(matches!(
            phase_matched_beamformer(&CMat::zeros(1, 3)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn quarter_circle_argmax_against_dense_scan() {
        let mut rng = RngStream::new(19);
        for _ in 0..200 {
            let a = rng.next_f64() * 4.0 - 2.0;
            let b = rng.next_f64() * 4.0 - 2.0;
            let c = rng.next_f64() * 4.0 - 2.0;
            let (t, v) = quarter_circle_argmax(a, b, c);
            assert!((0.0..=FRAC_PI_2).contains(&t));
            let mut scan_best = f64::NEG_INFINITY;
            for k in 0..=2000 {
                let tt = FRAC_PI_2 * k as f64 / 2000.0;
                let vv = a * tt.cos().powi(2)
                    + 2.0 * b * tt.sin() * tt.cos()
                    + c * tt.sin().powi(2);
                scan_best = scan_best.max(vv);
            }
            assert!(
                v >= scan_best - 1e-6,
                "closed form {v} lost to dense scan {scan_best}"
            );
        }
    }

    #[test]
    fn iterative_identity_blocks_reaches_n_t() {
        for n_t in [1usize, 3] {
            let mut m = CMat::zeros(2, 2 * n_t);
            for i in 0..n_t {
                m[(0, 2 * i)] = C64::new(1.0, 0.0);
                m[(1, 2 * i + 1)] = C64::new(1.0, 0.0);
            }
            let h = DepolarizedChannel::from_matrix(m).unwrap();
            let out = optimize_polarization_iterative(&h, 1e-9, 200).unwrap();
            // Identity blocks give |cos(t_ue - t_i)|^2 per antenna, so any
            // aligned family is optimal with gain exactly n_t.
            assert!(out.converged, "degenerate optimum family should converge");
            assert!(
                (out.solution.gain_predicted - n_t as f64).abs() < 1e-9,
                "gain {} expected {n_t}",
                out.solution.gain_predicted
            );
            let brute = brute_force_polarization(&h, 0.5).unwrap();
            assert!(
                (brute.gain_predicted - out.solution.gain_predicted).abs() < 1e-6,
                "grid oracle disagrees on the degenerate family"
            );
        }
    }

    #[test]
    fn iterative_matches_grid_oracle_nt2() {
        let mut rng = RngStream::new(20);
        for _ in 0..5 {
            let h = sample_channel(&mut rng, 2).unwrap();
            let it = optimize_polarization_iterative(&h, 1e-9, 200).unwrap();
            let bf = brute_force_polarization(&h, 0.25).unwrap();
            let ratio = it.solution.gain_predicted.min(bf.gain_predicted)
                / it.solution.gain_predicted.max(bf.gain_predicted);
            assert!(ratio >= 0.999, "iterative and grid objectives diverge: ratio {ratio}");
        }
    }

    #[test]
    fn iterative_objective_monotone() {
        let mut rng = RngStream::new(21);
        for _ in 0..100 {
            let h = sample_channel(&mut rng, 4).unwrap();
            let out = optimize_polarization_iterative(&h, 1e-12, 300).unwrap();
            for pair in out.objective_trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-12,
                    "objective decreased from {} to {}",
                    pair[0],
                    pair[1]
                );
            }
            assert!(!out.objective_trace.is_empty());
            assert_eq!(out.iterations, out.objective_trace.len());
        }
    }

    #[test]
    fn iterative_fixed_point_locally_optimal() {
        let mut rng = RngStream::new(22);
        let delta = 0.1f64.to_radians();
        for _ in 0..20 {
            let h = sample_channel(&mut rng, 3).unwrap();
            let out = optimize_polarization_iterative(&h, 1e-12, 500).unwrap();
            let base = out.solution.gain_predicted;
            let cfg = &out.solution.config;
            let objective = |theta: &[f64], t_ue: f64| {
                let c = PolarizationConfig::new(theta.to_vec(), t_ue).unwrap();
                effective_channel(&h, &c).unwrap().norm_squared()
            };
            for coord in 0..=h.n_t() {
                for sign in [-1.0, 1.0] {
                    let mut theta = cfg.theta_gnb().to_vec();
                    let mut t_ue = cfg.theta_ue();
                    if coord < h.n_t() {
                        theta[coord] = (theta[coord] + sign * delta).clamp(0.0, FRAC_PI_2);
                    } else {
                        t_ue = (t_ue + sign * delta).clamp(0.0, FRAC_PI_2);
                    }
                    let perturbed = objective(&theta, t_ue);
                    assert!(
                        perturbed <= base + 1e-6,
                        "single-angle nudge improved the objective by {}",
                        perturbed - base
                    );
                }
            }
        }
    }

    #[test]
    fn brute_force_single_antenna_matches_closed_form() {
        let mut rng = RngStream::new(23);
        for _ in 0..50 {
            let h = sample_channel(&mut rng, 1).unwrap();
            let it = optimize_polarization_iterative(&h, 1e-12, 500).unwrap();
            let bf = brute_force_polarization(&h, 0.1).unwrap();
            let ratio = it.solution.gain_predicted.min(bf.gain_predicted)
                / it.solution.gain_predicted.max(bf.gain_predicted);
            assert!(ratio >= 0.9999, "single-antenna grid vs closed form: ratio {ratio}");
        }
    }

    #[test]
    fn brute_force_refinement_never_worse() {
        let mut rng = RngStream::new(24);
        let h = sample_channel(&mut rng, 2).unwrap();
        // Each grid nests inside the next finer one, so the best value can
        // only improve.
        let coarse = brute_force_polarization(&h, 1.0).unwrap().gain_predicted;
        let mid = brute_force_polarization(&h, 0.5).unwrap().gain_predicted;
        let fine = brute_force_polarization(&h, 0.25).unwrap().gain_predicted;
        assert!(mid >= coarse && fine >= mid, "refinement lost ground: {coarse} {mid} {fine}");
    }

    #[test]
    fn random_baseline_contracts() {
        let mut rng = RngStream::new(25);
        let sol = random_baseline(&mut rng, 6).unwrap();
        assert_eq!(sol.config.n_t(), 6);
        assert_eq!(sol.w.n_t(), 6);
        assert_eq!(sol.gain_predicted, 0.0);

        let again = random_baseline(&mut RngStream::new(25), 6).unwrap();
        assert_eq!(sol.config, again.config, "same seed must reproduce the draw");
        assert_eq!(sol.w, again.w);

        assert!(random_baseline(&mut rng, 0).is_err());
    }

    #[test]
    fn random_far_below_pcsi_at_large_array() {
        let mut rng = RngStream::new(26);
        let n_t = 64;
        let trials = 10_000;
        let mut sum_random = 0.0;
        let mut sum_pcsi = 0.0;
        for _ in 0..trials {
            let h = sample_channel(&mut rng, n_t).unwrap();
            let sol = random_baseline(&mut rng, n_t).unwrap();
            sum_random += beamforming_gain(&h, &sol.config, &sol.w).unwrap();
            sum_pcsi += optimize_polarization_iterative(&h, 1e-9, 200)
                .unwrap()
                .solution
                .gain_predicted;
        }
        let mean_random = sum_random / trials as f64;
        let mean_pcsi = sum_pcsi / trials as f64;
        assert!(
            mean_random < 0.05 * mean_pcsi,
            "random mean {mean_random} not far below PCSI mean {mean_pcsi}"
        );
    }

    #[test]
    fn feto_with_exact_estimates_matches_pcsi() {
        let mut rng = RngStream::new(27);
        for n_t in [2usize, 4] {
            let h = sample_channel(&mut rng, n_t).unwrap();
            let noise = NoiseSpec::noiseless();
            let ul =
                run_uplink_frame(&mut rng, &h, 4, RandomizationPolicy::PerSlot, &noise).unwrap();
            let dl =
                run_downlink_frame(&mut rng, &h, 4 * n_t, RandomizationPolicy::PerSlot, &noise)
                    .unwrap();
            let feto = first_estimate_then_optimize(&ul, &dl).unwrap();
            let pcsi = optimize_polarization_iterative(&h, DEFAULT_TOL, DEFAULT_MAX_ITERS)
                .unwrap()
                .solution;
            let feto_gain = beamforming_gain(&h, &feto.config, &feto.w).unwrap();
            let pcsi_gain = beamforming_gain(&h, &pcsi.config, &pcsi.w).unwrap();
            assert!(
                (feto_gain - pcsi_gain).abs() <= 1e-3 * pcsi_gain,
                "exact estimates should reproduce PCSI: {feto_gain} vs {pcsi_gain}"
            );
        }
    }

    #[test]
    fn feto_rejects_mismatched_frames() {
        let mut rng = RngStream::new(28);
        let h2 = sample_channel(&mut rng, 2).unwrap();
        let h3 = sample_channel(&mut rng, 3).unwrap();
        let noise = NoiseSpec::from_snr_db(0.0);
        let ul = run_uplink_frame(&mut rng, &h2, 4, RandomizationPolicy::PerSlot, &noise).unwrap();
        let dl =
            run_downlink_frame(&mut rng, &h3, 12, RandomizationPolicy::PerSlot, &noise).unwrap();
        assert!(matches!(
            first_estimate_then_optimize(&ul, &dl),
            Err(Error::Contract(_))
        ));
    }
}
