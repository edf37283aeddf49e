//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout (so it shows up even with output capture on) and
//! then asserts.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use admot::bpsk::{matched_filter, synthesize_received, BpskMedium, CarrierConfig, PolarGains};
use admot::channel::{ChannelState, NoiseModel};
use admot::experiment::{
    emit_plot_data, run_all_stabilities, run_general_trial, sweep_scaling, validate_lemma3, validate_theorem2,
    write_rounds_csv, ExperimentConfig, GeneralConfig, PlotKind, SweepConfig, Theorem2Config,
};
use admot::network::{build_node_views, Duplex, NodeId, Topology};
use admot::probe::{Alphabet, ProbeMatrix};
use admot::round::{admot_round, estimation_error, RoundConfig, SimulatedMedium};
use admot::solver::{convex_opt, SolverOptions, SolverProblem};

use common::{chi_square_sf_even, chi_square_sf_simpson, l1_min_ball, l1_min_equality, phase_gap};

fn report(id: u32, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id}: {tag}  {detail}").unwrap();
    out.flush().unwrap();
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rademacher(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn signed(rng: &mut ChaCha8Rng, magnitude: f64) -> f64 {
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_solver_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let opts = SolverOptions {
        feasibility_tol: Some(1e-6),
        ..Default::default()
    };
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_resid = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for inst in 0..50 {
        let n = 2 + inst % 2;
        let m = 1 + (inst / 2) % 2;
        let sigma = if (inst / 4) % 2 == 0 { 0.0 } else { 0.5 };
        let a = rademacher(&mut rng, m, n);
        let x0 = DVector::from_fn(n, |_, _| if rng.random_range(0.0..1.0) < 0.5 { 0.0 } else { rng.random_range(-2.0..2.0) });
        let mut y = &a * &x0;
        if sigma > 0.0 {
            for v in y.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let oracle = if sigma == 0.0 {
            l1_min_equality(&a, &y).expect("consistent by construction").0
        } else {
            l1_min_ball(&a, &y, sigma)
        };
        let p = SolverProblem::with_options(a, y, sigma, opts).unwrap();
        let s = convex_opt(&p).unwrap();
        let resid_excess = p.residual_norm(&s.x_star) - sigma;
        let excess = s.l1_norm - oracle;
        worst_excess = worst_excess.max(excess);
        worst_resid = worst_resid.max(resid_excess);
        if resid_excess > 1e-6 || excess > 1e-2 {
            bad.push(inst);
        }
    }
    let ok = bad.is_empty();
    report(
        1,
        ok,
        &format!("50 instances, worst l1 excess {worst_excess:.2e}, worst residual excess {worst_resid:.2e}, failing {bad:?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_noise_norm_tail() {
    let oracle = chi_square_sf_even(20, 40.0);
    assert!((oracle - chi_square_sf_simpson(20, 40.0)).abs() < 1e-9);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [20usize, 40] {
        let r = validate_lemma3(m, 100_000, 2024).unwrap();
        let bound = (-0.15 * m as f64).exp();
        ok &= r.frequency <= bound;
        if m == 20 {
            ok &= (r.frequency - oracle).abs() <= 0.0010;
        }
        parts.push(format!("m={m}: {:.5} (bound {bound:.5})", r.frequency));
    }
    report(2, ok, &format!("{}; chi-square oracle for m=20 {oracle:.5}", parts.join(", ")));
    assert!(ok);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_holdout_thresholds() {
    let cfg = Theorem2Config {
        ds: vec![16, 32, 64],
        phis: vec![0.0, 4.0, 8.0],
        trials: 10_000,
        n: 64,
        seed: 77,
        envelope: 5.0,
    };
    let rows = validate_theorem2(&cfg).unwrap();
    assert_eq!(rows.len(), 9);
    let mut ok = true;
    let mut worst = 0.0f64;
    for r in &rows {
        let env = 5.0 * (-0.15 * r.d as f64).exp();
        let lower = r.lower_frequency.unwrap_or(0.0);
        ok &= r.upper_frequency <= env && lower <= env;
        worst = worst.max(r.upper_frequency.max(lower) / env);
        // the lower threshold exists exactly when φ > 2√2
        assert_eq!(r.lower_frequency.is_some(), r.phi > 2.0 * 2f64.sqrt());
    }
    for phi in &cfg.phis {
        let series: Vec<_> = cfg.ds.iter().map(|d| rows.iter().find(|r| r.d == *d && r.phi == *phi).unwrap()).collect();
        for w in series.windows(2) {
            ok &= w[1].upper_frequency <= w[0].upper_frequency;
            ok &= w[1].lower_frequency.unwrap_or(0.0) <= w[0].lower_frequency.unwrap_or(0.0);
        }
    }
    report(3, ok, &format!("9 (d, phi) cells x 1e4 trials, worst frequency / envelope {worst:.3}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 4

/// Prior entries of magnitude 10 (20 dB against unit noise) with uniform
/// phase, plus `k` entries moved by ±100 in each part.
fn sparse_change_instance(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (ChannelState, ChannelState, Vec<usize>) {
    let prior: Vec<Complex64> = (0..n).map(|_| Complex64::from_polar(10.0, rng.random_range(-PI..PI))).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    let mut truth = prior.clone();
    for &i in &idx {
        truth[i] += Complex64::new(signed(rng, 100.0), signed(rng, 100.0));
    }
    (ChannelState::new(prior).unwrap(), ChannelState::new(truth).unwrap(), idx)
}

fn criterion_4_run() -> (usize, f64, Vec<u8>) {
    let (n, k, m) = (128, 3, 60);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "relative_error"]).unwrap();
    let mut good = 0;
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + t);
        let (prior, truth, _) = sparse_change_instance(&mut rng, n, k);
        let phi = ProbeMatrix::generate(400 + t, m, n, Alphabet::Rademacher).unwrap();
        let medium = SimulatedMedium::new(truth.clone(), NoiseModel::new(true, 40_000 + t));
        let res = admot_round(&prior, &phi, &RoundConfig::new(m).with_round(t), &medium).unwrap();
        let rel = estimation_error(&res.h_star, &truth).unwrap() / truth.norm();
        worst = worst.max(rel);
        if rel <= 0.05 {
            good += 1;
        }
        w.write_record([t.to_string(), rel.to_string()]).unwrap();
    }
    (good, worst, w.into_inner().unwrap())
}

#[test]
fn criterion_4_stable_recovery() {
    let (good, worst, _) = criterion_4_run();
    let ok = good >= 95;
    report(4, ok, &format!("{good}/100 trials within 5% relative error, worst {worst:.4}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_scaling_trend() {
    let text = std::fs::read_to_string(configs_dir().join("sweep.toml")).unwrap();
    let mut table: toml::Table = toml::from_str(&text).unwrap();
    table.remove("spread");
    let cfg: SweepConfig = table.try_into().unwrap();
    assert_eq!((cfg.n, cfg.ks.as_slice(), cfg.snr_db), (256, &[2usize, 4, 8, 16][..], None));
    let points = sweep_scaling(&cfg).unwrap();
    let n = cfg.n as f64;
    let mut ratios = Vec::new();
    let mut ok = true;
    for p in &points {
        match p.m_min {
            Some(m) => {
                ok &= m < cfg.n;
                let k = p.k as f64;
                ratios.push(m as f64 / (k * ((n + 1.0) / k).log2()));
            }
            None => ok = false,
        }
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    ok &= ratios.len() == points.len() && hi <= 3.0 * lo;
    let mins: Vec<_> = points.iter().map(|p| (p.k, p.m_min)).collect();
    report(5, ok, &format!("(k, m_min) {mins:?}, normalized ratios {ratios:.3?}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 6

fn desk_outputs(config: &ExperimentConfig, dir: &Path) -> Vec<admot::experiment::RoundLog> {
    let logs = run_all_stabilities(config).unwrap();
    for log in &logs {
        let rounds = std::fs::File::create(dir.join(format!("rounds_x{}.csv", log.stability))).unwrap();
        let trace = std::fs::File::create(dir.join(format!("adaptation_x{}.csv", log.stability))).unwrap();
        write_rounds_csv(log, rounds, trace).unwrap();
    }
    for kind in [PlotKind::Overhead, PlotKind::Slots, PlotKind::Error] {
        emit_plot_data(&logs, kind, dir).unwrap();
    }
    logs
}

#[test]
fn criterion_6_desk_reproduction() {
    let config = ExperimentConfig::desk();
    let from_file = ExperimentConfig::load(&configs_dir().join("desk.toml")).unwrap();
    assert_eq!(from_file.n, config.n);
    assert_eq!(from_file.capacity(), config.capacity());
    assert_eq!(from_file.adaptation, config.adaptation);
    let dir = tempfile::tempdir().unwrap();
    let logs = desk_outputs(&config, dir.path());
    let n = config.n as f64;
    let avg: Vec<f64> = logs.iter().map(|l| l.average_slots()).collect();
    // averages recomputed from the per-round slot counts
    for (l, a) in logs.iter().zip(&avg) {
        let direct = l.records.iter().map(|r| r.m as f64).sum::<f64>() / l.records.len() as f64;
        assert!((direct - a).abs() < 1e-9);
        assert_eq!(l.records.len(), 50);
    }
    let ordered = avg.windows(2).all(|w| w[0] > w[1]);
    let below = logs.iter().all(|l| l.records[1..].iter().map(|r| r.m as f64).sum::<f64>() / 49.0 < n);
    let first = logs.iter().all(|l| l.records[0].m as f64 >= 0.9 * n);
    let ok = ordered && below && first && logs.iter().all(|l| l.failures() == 0);
    let stab: Vec<f64> = logs.iter().map(|l| l.stability).collect();
    report(
        6,
        ok,
        &format!("stabilities {stab:?}: average slots {avg:.1?}, round-1 slots {:?}", logs.iter().map(|l| l.records[0].m).collect::<Vec<_>>()),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 7

#[test]
#[ignore = "full-scale run takes tens of minutes; run with --ignored"]
fn criterion_7_full_scale_reproduction() {
    let config = ExperimentConfig::load(&configs_dir().join("full.toml")).unwrap();
    assert_eq!(config.n, 500);
    let logs = run_all_stabilities(&config).unwrap();
    let want = [320.0, 252.0, 140.0];
    let avg: Vec<f64> = logs.iter().map(|l| l.average_slots()).collect();
    let ok = avg.iter().zip(want).all(|(a, w)| (a - w).abs() <= 0.3 * w);
    report(7, ok, &format!("average slots {avg:.1?} against {want:?} (+-30%), non-gating"));
    assert!(ok);
}

#[test]
fn criterion_7_status_line() {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion 7: SKIPPED  non-gating full-scale run; cargo test -p admot --test acceptance -- --ignored criterion_7").unwrap();
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_bpsk_round_trip() {
    let carrier = CarrierConfig::default();
    let (n, k, m) = (32, 2, 128);

    // noiseless matched filter against the closed forms
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let amps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
    let phases: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
    let phi = ProbeMatrix::generate(81, 24, n, Alphabet::Rademacher).unwrap().row_slice(24).unwrap();
    let g = PolarGains::new(amps.clone(), phases.clone()).unwrap();
    let wave = synthesize_received(&phi, &g, &carrier, &NoiseModel::off(), 0).unwrap();
    let (yc, ys) = matched_filter(&wave, &carrier, 24).unwrap();
    let mut closed_err = 0.0f64;
    for r in 0..24 {
        let c: f64 = (0..n).map(|i| amps[i] * phases[i].cos() * phi[(r, i)]).sum();
        let s: f64 = (0..n).map(|i| amps[i] * phases[i].sin() * phi[(r, i)]).sum();
        closed_err = closed_err.max((yc[r] - c).abs()).max((ys[r] - s).abs());
    }
    let mut ok = closed_err <= 1e-3;

    // noisy rounds over the waveform medium
    let trials = 40u64;
    let (mut worst_a, mut worst_t) = (0.0f64, 0.0f64);
    let mut failed = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + t);
        let (prior, truth, varied) = sparse_change_instance(&mut rng, n, k);
        // H = A e^{-jθ}
        let amp: Vec<f64> = truth.gains().iter().map(|h| h.norm()).collect();
        let theta: Vec<f64> = truth.gains().iter().map(|h| -h.arg()).collect();
        let medium = BpskMedium::new(PolarGains::new(amp.clone(), theta.clone()).unwrap(), carrier, NoiseModel::new(true, 80 + t)).unwrap();
        let phi = ProbeMatrix::generate(800 + t, m, n, Alphabet::Rademacher).unwrap();
        let res = admot_round(&prior, &phi, &RoundConfig::new(m).with_round(t), &medium).unwrap();
        let est = PolarGains::from_state(&res.h_star);
        let mut trial_ok = true;
        for &i in &varied {
            let ea = (est.amplitudes[i] - amp[i]).abs() / amp[i];
            let et = phase_gap(est.phases[i], theta[i]);
            worst_a = worst_a.max(ea);
            worst_t = worst_t.max(et);
            trial_ok &= ea <= 0.05 && et <= 0.05;
        }
        if !trial_ok {
            failed += 1;
        }
    }
    ok &= failed == 0;
    report(
        8,
        ok,
        &format!(
            "closed-form error {closed_err:.2e}; {failed}/{trials} trials out of tolerance, worst amplitude {worst_a:.4}, worst phase {worst_t:.4} rad"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 9

fn fig4_config(m: usize, seed: u64) -> GeneralConfig {
    GeneralConfig::parse(&format!(
        "m = {m}\ntrials = 1\nseed = {seed}\n[sigma]\nkind = \"fixed\"\nvalue = 0.0\n[topology]\nsources = 1\nrelays = 2\nreceivers = 1\nduplex = \"half\"\n"
    ))
    .unwrap()
}

#[test]
fn criterion_9_general_network() {
    let topology = Topology::with_zero_priors(1, 2, 1, Duplex::Half).unwrap();
    let width = topology.width();

    // small noiseless instances; exact recovery required wherever the
    // enumeration oracle certifies the truth as the unique minimizer
    let (mut certified, mut recovered, mut self_nonzero, mut checked) = (0, 0, 0, 0);
    for m in [2usize, 3, 4] {
        for t in 0..150 {
            let cfg = fig4_config(m, 9000 + t as u64);
            let run = run_general_trial(&cfg, &topology, t).unwrap();
            for (o, h) in run.outcomes.iter().zip(&run.truth) {
                checked += 1;
                let self_col = topology.self_column(o.node());
                if let (Some(c), Ok(r)) = (self_col, &o.result) {
                    if r.delta_star[c] != Complex64::new(0.0, 0.0) {
                        self_nonzero += 1;
                    }
                }
                if o.view.m_beta() == 0 {
                    continue;
                }
                let free: Vec<usize> = (0..width).filter(|&i| Some(i) != self_col).collect();
                let a = o.view.phi.select_columns(&free);
                let unique_truth = |part: &dyn Fn(&Complex64) -> f64| {
                    let x = DVector::from_iterator(free.len(), free.iter().map(|&i| part(&h.gains()[i])));
                    let (_, mins) = l1_min_equality(&a, &(&a * &x)).unwrap();
                    mins.len() == 1 && (&mins[0] - &x).norm() <= 1e-9 * x.norm().max(1.0)
                };
                if unique_truth(&|c: &Complex64| c.re) && unique_truth(&|c: &Complex64| c.im) {
                    certified += 1;
                    if let Ok(r) = &o.result {
                        if estimation_error(&r.h_star, h).unwrap() <= 1e-6 * h.norm().max(1.0) {
                            recovered += 1;
                        }
                    }
                }
            }
        }
    }
    let exact_ok = certified >= 100 && recovered == certified;

    // listening-slot counts at m = 300
    let (m, trials) = (300, 2000u64);
    let mut good = 0;
    for t in 0..trials {
        let phi = ProbeMatrix::generate(90_000 + t, m, width, Alphabet::Ternary).unwrap();
        let views = build_node_views(&phi, m, &topology).unwrap();
        if views.iter().filter(|v| matches!(v.node, NodeId::Relay(_))).all(|v| 3 * v.m_beta() >= m) {
            good += 1;
        }
    }
    let frac = good as f64 / trials as f64;
    let ok = exact_ok && self_nonzero == 0 && frac >= 0.999;
    report(
        9,
        ok,
        &format!(
            "{recovered}/{certified} certified node estimates exact ({checked} checked), {self_nonzero} nonzero self-channels, m_beta >= m/3 in {frac:.4} of {trials} trials at m=300"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_determinism() {
    let (_, _, a) = criterion_4_run();
    let (_, _, b) = criterion_4_run();
    let mut same = a == b;
    let config = ExperimentConfig::desk();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    desk_outputs(&config, d1.path());
    desk_outputs(&config, d2.path());
    let mut names: Vec<_> = std::fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        let x = std::fs::read(d1.path().join(name)).unwrap();
        let y = std::fs::read(d2.path().join(name)).unwrap();
        same &= x == y && !x.is_empty();
    }
    report(10, same, &format!("criterion 4 CSV and {} monitoring CSVs byte-identical across runs", names.len()));
    assert!(same);
}
