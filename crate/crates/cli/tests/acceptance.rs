//! Acceptance gate: one test per criterion, named `criterion_<n>_...` so the
//! harness result line doubles as the pass/fail line. Each test also prints
//! its measured numbers (visible with `--nocapture`, or automatically for a
//! failing criterion).
//!
//! Criteria 5-7 share one expensive artifact (three trained model pairs plus
//! a common-random-number sweep), built once behind a `OnceLock`.

use prmiso_cli::sweep::{run_sweep, Method, ResultRow, SweepSpec};
use prmiso_core::baselines::{
    brute_force_polarization, ls_estimate_downlink, ls_estimate_uplink,
    optimize_polarization_iterative, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use prmiso_core::channel::{sample_channel, NoiseSpec};
use prmiso_core::neural::{
    backward_pipeline, forward_pipeline, gnb_forward, sample_training_batch, train, ue_forward,
    MlpModel, Scenario, TrainConfig,
};
use prmiso_core::numerics::RVec;
use prmiso_core::pilots::{run_downlink_frame, run_uplink_frame, RandomizationPolicy};
use prmiso_core::rng::{derive_seed, labels, RngStream};
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;
use std::time::Instant;

#[test]
fn criterion_1_iterative_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut worst = 1.0f64;
    for n_t in [1usize, 2, 4] {
        let mut rng = RngStream::new(derive_seed(101, n_t as u64));
        for _ in 0..100 {
            let h = sample_channel(&mut rng, n_t).unwrap();
            let iter = optimize_polarization_iterative(&h, DEFAULT_TOL, DEFAULT_MAX_ITERS)
                .unwrap()
                .solution
                .gain_predicted;
            let grid = brute_force_polarization(&h, 0.25).unwrap().gain_predicted;
            let agreement = iter.min(grid) / iter.max(grid);
            worst = worst.min(agreement);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst >= 0.999 && secs < 120.0;
    println!(
        "criterion 1: {} - worst iterative/grid agreement {worst:.6} (need >= 0.999) over \
         100 channels x N_t in {{1,2,4}}, {secs:.1} s (budget 120 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion 1 failed: agreement {worst}, {secs:.1} s");
}

fn rel_frobenius(est: &prmiso_core::channel::DepolarizedChannel, truth: &prmiso_core::channel::DepolarizedChannel) -> f64 {
    (est.matrix() - truth.matrix()).norm() / truth.matrix().norm()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn criterion_2_ls_identifiability_thresholds() {
    let start = Instant::now();
    let noise = NoiseSpec::noiseless();
    let trials = 31;
    let mut max_at_threshold = 0.0f64;
    let mut min_median_below = f64::INFINITY;

    for n_t in [4usize, 8, 16] {
        let mut rng = RngStream::new(derive_seed(202, n_t as u64));
        let mut short_errs = Vec::new();
        for _ in 0..trials {
            let h = sample_channel(&mut rng, n_t).unwrap();
            let uf = run_uplink_frame(&mut rng, &h, 4, RandomizationPolicy::PerSlot, &noise).unwrap();
            let est = ls_estimate_uplink(&uf).unwrap();
            max_at_threshold = max_at_threshold.max(rel_frobenius(&est.h_hat, &h));
            let uf3 =
                run_uplink_frame(&mut rng, &h, 3, RandomizationPolicy::PerSlot, &noise).unwrap();
            short_errs.push(rel_frobenius(&ls_estimate_uplink(&uf3).unwrap().h_hat, &h));
        }
        min_median_below = min_median_below.min(median(short_errs));
    }

    for n_t in [2usize, 4] {
        let mut rng = RngStream::new(derive_seed(203, n_t as u64));
        let mut short_errs = Vec::new();
        for _ in 0..trials {
            let h = sample_channel(&mut rng, n_t).unwrap();
            let df =
                run_downlink_frame(&mut rng, &h, 4 * n_t, RandomizationPolicy::PerSlot, &noise)
                    .unwrap();
            let est = ls_estimate_downlink(&df).unwrap();
            max_at_threshold = max_at_threshold.max(rel_frobenius(&est.h_hat, &h));
            let df_short =
                run_downlink_frame(&mut rng, &h, 4 * n_t - 1, RandomizationPolicy::PerSlot, &noise)
                    .unwrap();
            short_errs.push(rel_frobenius(&ls_estimate_downlink(&df_short).unwrap().h_hat, &h));
        }
        min_median_below = min_median_below.min(median(short_errs));
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = max_at_threshold < 1e-8 && min_median_below > 1e-3 && secs < 60.0;
    println!(
        "criterion 2: {} - max recovery error at threshold {max_at_threshold:.2e} (need < 1e-8), \
         min median error one pilot short {min_median_below:.2e} (need > 1e-3), {secs:.1} s (budget 60 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion 2 failed");
}

#[test]
fn criterion_3_gradients_match_finite_differences() {
    let start = Instant::now();
    let scen = Scenario::new(4, 2, -10.0).unwrap();
    let mut rng = RngStream::new(303);
    let gnb = MlpModel::new(&scen.gnb_dims(&[256, 256]), prmiso_core::neural::Activation::Relu, &mut rng)
        .unwrap();
    let ue = MlpModel::new(&scen.ue_dims(&[256, 256]), prmiso_core::neural::Activation::Relu, &mut rng)
        .unwrap();
    let cfg = TrainConfig {
        batch: 4,
        hidden: vec![256, 256],
        ..TrainConfig::new(scen, 0, 304)
    };
    let batch = sample_training_batch(&cfg, 0).unwrap();
    let tape = forward_pipeline(&gnb, &ue, &batch).unwrap();
    let (g_gnb, g_ue) = backward_pipeline(&gnb, &ue, &batch, &tape).unwrap();

    let h = 1e-5;
    let mut probe = RngStream::new(305);
    let mut worst = 0.0f64;
    for net in 0..2 {
        let (model, grads) = if net == 0 { (&gnb, &g_gnb) } else { (&ue, &g_ue) };
        for layer in 0..model.weights().len() {
            let n_w = model.weights()[layer].len();
            let n_b = model.biases()[layer].len();
            for _ in 0..20 {
                let idx = (probe.next_u64() as usize) % (n_w + n_b);
                let analytic = if idx < n_w {
                    grads.weights[layer].as_slice()[idx]
                } else {
                    grads.biases[layer].as_slice()[idx - n_w]
                };
                let eval_at = |delta: f64| -> f64 {
                    let mut m = model.clone();
                    if idx < n_w {
                        m.weights_mut()[layer].as_mut_slice()[idx] += delta;
                    } else {
                        m.biases_mut()[layer].as_mut_slice()[idx - n_w] += delta;
                    }
                    let (g, u) = if net == 0 { (&m, &ue) } else { (&gnb, &m) };
                    forward_pipeline(g, u, &batch).unwrap().loss()
                };
                let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-5 && secs < 60.0;
    println!(
        "criterion 3: {} - max relative gradient error {worst:.2e} (need < 1e-5) over 20 \
         coordinates per layer, both networks, {secs:.1} s (budget 60 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion 3 failed: worst {worst}");
}

#[test]
fn criterion_4_head_constraints_under_fuzz() {
    let start = Instant::now();
    let scen = Scenario::new(16, 3, -10.0).unwrap();
    let mut rng = RngStream::new(404);
    let mut checked = 0usize;
    for _ in 0..10 {
        let gnb = MlpModel::new(&scen.gnb_dims(&[64, 64]), prmiso_core::neural::Activation::Relu, &mut rng)
            .unwrap();
        let ue = MlpModel::new(&scen.ue_dims(&[64, 64]), prmiso_core::neural::Activation::Relu, &mut rng)
            .unwrap();
        for _ in 0..1000 {
            let scale = 10f64.powf(6.0 * rng.next_f64() - 3.0);
            let xg = RVec::from_fn(gnb.input_dim(), |_, _| scale * (2.0 * rng.next_f64() - 1.0));
            let xu = RVec::from_fn(ue.input_dim(), |_, _| scale * (2.0 * rng.next_f64() - 1.0));
            let head = gnb_forward(&gnb, &xg).unwrap();
            let norm = head.w.norm();
            assert!(
                (norm - 1.0).abs() <= 1e-9,
                "criterion 4: FAIL - ||w|| = {norm} outside 1 +- 1e-9"
            );
            for &t in &head.theta_gnb {
                assert!(
                    (0.0..=FRAC_PI_2).contains(&t),
                    "criterion 4: FAIL - gNB angle {t} outside [0, pi/2]"
                );
            }
            let t_ue = ue_forward(&ue, &xu).unwrap();
            assert!(
                (0.0..=FRAC_PI_2).contains(&t_ue),
                "criterion 4: FAIL - UE angle {t_ue} outside [0, pi/2]"
            );
            checked += 1;
        }
    }
    println!(
        "criterion 4: PASS - {checked} fuzzed passes kept ||w|| within 1 +- 1e-9 and all \
         angles in [0, pi/2], {:.1} s",
        start.elapsed().as_secs_f64()
    );
    assert_eq!(checked, 10_000);
}

/// Shared artifact for criteria 5-7: three trained pairs (L = 3, 5, 20) at
/// n_t = 16, SNR -10 dB, plus the common-random-number sweep of all four
/// methods over those grid points.
struct Grid {
    rows: Vec<ResultRow>,
    train_steps: usize,
    build_secs: f64,
}

static GRID: OnceLock<Grid> = OnceLock::new();

const GRID_NT: usize = 16;
const GRID_SNR: f64 = -10.0;
const GRID_LS: [usize; 3] = [3, 5, 20];
const GRID_TRIALS: usize = 2000;

fn grid() -> &'static Grid {
    GRID.get_or_init(|| {
        let start = Instant::now();
        let steps = 5000;
        let mut pairs: HashMap<usize, (MlpModel, MlpModel)> = HashMap::new();
        for l in GRID_LS {
            let scen = Scenario::new(GRID_NT, l, GRID_SNR).unwrap();
            let mut cfg = TrainConfig::new(
                scen,
                steps,
                derive_seed(derive_seed(9001, labels::TRAIN_INLINE), l as u64),
            );
            cfg.hidden = vec![128, 128];
            cfg.batch = 256;
            let out = train(&cfg).unwrap();
            eprintln!(
                "  trained L={l}: mean gain over last 500 steps {:.3} ({:.0} s elapsed)",
                out.log[steps - 500..].iter().map(|r| r.mean_gain).sum::<f64>() / 500.0,
                start.elapsed().as_secs_f64()
            );
            pairs.insert(l, (out.gnb, out.ue));
        }
        let spec = SweepSpec {
            n_t: GRID_NT,
            methods: Method::ALL.to_vec(),
            pilot_lengths: GRID_LS.to_vec(),
            snrs_db: vec![GRID_SNR],
            n_trials: GRID_TRIALS,
            seed: 9001,
        };
        let mut provider = |scen: Scenario| {
            let (gnb, ue) = pairs
                .get(&scen.l)
                .unwrap_or_else(|| panic!("no trained pair for L={}", scen.l));
            Ok((gnb.clone(), ue.clone()))
        };
        let rows = run_sweep(&spec, &mut provider).unwrap();
        Grid { rows, train_steps: steps, build_secs: start.elapsed().as_secs_f64() }
    })
}

fn grid_gain(rows: &[ResultRow], method: Method, l: usize) -> f64 {
    rows.iter()
        .find(|r| r.method == method && r.l == l)
        .unwrap_or_else(|| panic!("missing row {method:?} L={l}"))
        .gain_mean
}

#[test]
fn criterion_5_pilot_ratio_claims_at_desk_scale() {
    let g = grid();
    let ratio3 = grid_gain(&g.rows, Method::Dnn, 3) / grid_gain(&g.rows, Method::Ls, 3);
    let ratio5 = grid_gain(&g.rows, Method::Dnn, 5) / grid_gain(&g.rows, Method::Ls, 5);
    let clause1 = ratio3 >= 1.10;
    let clause2 = ratio5 < ratio3;
    let budget_ok = g.train_steps <= 50_000 && g.build_secs < 3600.0;
    println!(
        "criterion 5: {} - clause 1 {}: dnn/ls at L=3 = {ratio3:.3} (need >= 1.10); clause 2 {}: \
         dnn/ls at L=5 = {ratio5:.3} (need < ratio at L=3); {} training steps per point \
         (cap 50000), {} trials, artifact build {:.0} s (budget 3600 s)",
        if clause1 && clause2 && budget_ok { "PASS" } else { "FAIL" },
        if clause1 { "PASS" } else { "FAIL" },
        if clause2 { "PASS" } else { "FAIL" },
        g.train_steps,
        GRID_TRIALS,
        g.build_secs,
    );
    assert!(budget_ok, "criterion 5 exceeded its compute budget");
    assert!(clause1, "criterion 5 clause 1 failed: dnn/ls at L=3 = {ratio3:.3} < 1.10");
    assert!(
        clause2,
        "criterion 5 clause 2 failed: dnn/ls at L=5 = {ratio5:.3} is not smaller than at L=3 \
         ({ratio3:.3}); with SNR = rho/sigma^2 pinned at -10 dB the LS estimate is noise-bound \
         at both pilot lengths (ls means stay near the random baseline) while the learned \
         estimator keeps improving with L, so the advantage ratio grows instead of shrinking"
    );
}

#[test]
fn criterion_6_pilot_efficiency_crossover() {
    let g = grid();
    let dnn5 = grid_gain(&g.rows, Method::Dnn, 5);
    let ls20 = grid_gain(&g.rows, Method::Ls, 20);
    let pass = dnn5 >= 0.95 * ls20;
    println!(
        "criterion 6: {} - dnn at L=5 = {dnn5:.3} vs 0.95 x ls at L=20 = {:.3} (same run as \
         criterion 5)",
        if pass { "PASS" } else { "FAIL" },
        0.95 * ls20
    );
    assert!(pass, "criterion 6 failed: dnn@5 {dnn5:.3} < 0.95 * ls@20 {ls20:.3}");
}

#[test]
fn criterion_7_benchmark_ordering_at_every_point() {
    let g = grid();
    let mut all_ok = true;
    let mut detail = String::new();
    for l in GRID_LS {
        let pcsi = grid_gain(&g.rows, Method::Pcsi, l);
        let dnn = grid_gain(&g.rows, Method::Dnn, l);
        let ls = grid_gain(&g.rows, Method::Ls, l);
        let random = grid_gain(&g.rows, Method::Random, l);
        let ok = pcsi >= dnn && pcsi >= ls && ls >= random && dnn >= random;
        all_ok &= ok;
        detail.push_str(&format!(
            " [L={l}: pcsi {pcsi:.3} dnn {dnn:.3} ls {ls:.3} random {random:.3}{}]",
            if ok { "" } else { " VIOLATED" }
        ));
    }
    println!(
        "criterion 7: {} - population means over {GRID_TRIALS} paired trials;{detail}",
        if all_ok { "PASS" } else { "FAIL" }
    );
    assert!(all_ok, "criterion 7 ordering violated:{detail}");
}

#[test]
fn criterion_8_identical_seed_identical_csv() {
    let start = Instant::now();
    let spec = SweepSpec {
        n_t: 4,
        methods: Method::ALL.to_vec(),
        pilot_lengths: vec![2, 3],
        snrs_db: vec![-10.0, 0.0],
        n_trials: 40,
        seed: 808,
    };
    let run_once = || {
        let mut provider = |scen: Scenario| {
            let mut cfg = TrainConfig::new(
                scen,
                50,
                derive_seed(derive_seed(spec.seed, labels::TRAIN_INLINE), scen.l as u64),
            );
            cfg.hidden = vec![16];
            cfg.batch = 16;
            let out = train(&cfg)?;
            Ok((out.gnb, out.ue))
        };
        let rows = run_sweep(&spec, &mut provider).unwrap();
        prmiso_cli::sweep::render_results(&rows).unwrap()
    };
    let strip_wall = |csv: &str| {
        csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>()
    };
    let a = run_once();
    let b = run_once();
    let pass = strip_wall(&a) == strip_wall(&b);
    println!(
        "criterion 8: {} - two sweeps with seed {} produced {} CSV (wall-time column excluded), \
         {:.1} s",
        if pass { "PASS" } else { "FAIL" },
        spec.seed,
        if pass { "identical" } else { "DIFFERING" },
        start.elapsed().as_secs_f64()
    );
    assert!(pass, "criterion 8 failed: CSVs differ beyond the wall-time column");
}

/// Full full-scale replica (n_t = 64, 10^4 trials, L in {3,4,5,10,20}),
/// reported without a pass/fail gate. Run explicitly with
/// `cargo test -p prmiso-cli --test acceptance -- --ignored --nocapture`.
#[test]
#[ignore]
fn full_scale_figure_replica_no_gate() {
    let steps = 8000;
    let mut pairs: HashMap<usize, (MlpModel, MlpModel)> = HashMap::new();
    for l in [3usize, 4, 5, 10, 20] {
        let scen = Scenario::new(64, l, -10.0).unwrap();
        let mut cfg = TrainConfig::new(
            scen,
            steps,
            derive_seed(derive_seed(640_001, labels::TRAIN_INLINE), l as u64),
        );
        cfg.hidden = vec![256, 256];
        cfg.batch = 128;
        let out = train(&cfg).unwrap();
        eprintln!(
            "trained L={l}: mean gain over last 500 steps {:.3}",
            out.log[steps - 500..].iter().map(|r| r.mean_gain).sum::<f64>() / 500.0
        );
        pairs.insert(l, (out.gnb, out.ue));
    }
    eprintln!("sweeping 4 methods x 5 pilot lengths x 10000 trials...");
    let spec = SweepSpec {
        n_t: 64,
        methods: Method::ALL.to_vec(),
        pilot_lengths: vec![3, 4, 5, 10, 20],
        snrs_db: vec![-10.0],
        n_trials: 10_000,
        seed: 640_001,
    };
    let mut provider = |scen: Scenario| {
        let (gnb, ue) = pairs.get(&scen.l).expect("trained above");
        Ok((gnb.clone(), ue.clone()))
    };
    let rows = run_sweep(&spec, &mut provider).unwrap();
    println!("{}", prmiso_cli::sweep::render_results(&rows).unwrap());
    for l in [3usize, 4, 5, 10, 20] {
        println!(
            "L={l}: dnn/ls mean-gain ratio = {:.3}",
            grid_gain(&rows, Method::Dnn, l) / grid_gain(&rows, Method::Ls, l)
        );
    }
}
