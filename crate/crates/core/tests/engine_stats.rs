use std::time::Instant;

use hbt_core::analytics::{joint_click_probability_split, joint_count_pmf_conditional, joint_count_pmf_split};
use hbt_core::{
    estimate_gamma, run, run_split_mode, CoincidenceHistogram, DetectorParams, Discriminator, ExperimentConfig,
    QuadratureSettings, SourceSpec,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn config(source: SourceSpec, v_t: f64, n_pulses: u64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::symmetric(source, DetectorParams::reference(), Discriminator::threshold(v_t));
    cfg.n_pulses = n_pulses;
    cfg.seed = seed;
    cfg.shards = 8;
    cfg
}

fn accidental_bins(hist: &CoincidenceHistogram) -> Vec<u64> {
    hist.iter().filter(|&(d, _)| d != 0).map(|(_, c)| c).collect()
}

/// Chi-square p-value for bins sharing one expected count.
fn flatness_p(bins: &[u64], expected: f64, dof: usize) -> f64 {
    let stat: f64 = bins.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

#[test]
fn poisson_histogram_is_flat() {
    let hist = run(&config(SourceSpec::poisson(2.6).unwrap(), 0.065, 4_000_000, 1)).unwrap();
    let all: Vec<u64> = hist.counts.clone();
    let mean = all.iter().sum::<u64>() as f64 / all.len() as f64;
    assert!(flatness_p(&all, mean, all.len() - 1) > 1e-3);
    let peak = hist.count(0) as f64;
    let acc = accidental_bins(&hist);
    let acc_mean = acc.iter().sum::<u64>() as f64 / acc.len() as f64;
    assert!((peak - acc_mean).abs() < 3.0 * (peak + acc_mean / acc.len() as f64).sqrt());
}

#[test]
fn accidentals_match_singles_product() {
    let src = SourceSpec::mix_from_mu_g2(2.8, 1.2).unwrap();
    let cfg = config(src, 0.19, 4_000_000, 2);
    let hist = run(&cfg).unwrap();
    let clicks = joint_click_probability_split(
        &src,
        &cfg.det1,
        &cfg.det2,
        &cfg.disc1,
        &cfg.disc2,
        0.5,
        &QuadratureSettings::default(),
    )
    .unwrap();
    let n = cfg.n_pulses as f64;
    // pairs at delay d exist for n - |d| pulses
    for (d, c) in hist.iter().filter(|&(d, _)| d != 0) {
        let expected = clicks.singles1 * clicks.singles2 * (n - d.unsigned_abs() as f64);
        assert!(
            (c as f64 - expected).abs() < 3.0 * expected.sqrt() + 1.0,
            "d={d}: {c} vs {expected}"
        );
    }
    for (s, p) in [(hist.singles1, clicks.singles1), (hist.singles2, clicks.singles2)] {
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((s as f64 - n * p).abs() < 3.0 * sd);
    }
}

#[test]
fn symmetric_detectors_give_symmetric_histogram() {
    let cfg = config(SourceSpec::thermal(1.0).unwrap(), 0.065, 4_000_000, 3);
    let hist = run(&cfg).unwrap();
    for d in 1..=cfg.max_delay as i64 {
        let (a, b) = (hist.count(d) as f64, hist.count(-d) as f64);
        assert!((a - b).abs() < 3.0 * (a + b).sqrt(), "d={d}: {a} vs {b}");
    }
}

#[test]
fn split_mode_agrees_with_conditional_arms() {
    let src = SourceSpec::mix_from_mu_g2(2.8, 1.2).unwrap();
    let cfg = config(src, 0.19, 4_000_000, 4);
    let a = estimate_gamma(&run(&cfg).unwrap()).unwrap();
    let b = estimate_gamma(&run_split_mode(&cfg).unwrap()).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.gamma - b.gamma).abs() < 3.0 * se, "{a:?} {b:?}");
}

#[test]
fn split_mode_ideal_detector_singles() {
    let det = DetectorParams {
        eta: 1.0,
        ..DetectorParams::reference()
    }
    .ideal();
    let mut cfg = ExperimentConfig::symmetric(SourceSpec::poisson(2.0).unwrap(), det, Discriminator::threshold(0.065));
    cfg.n_pulses = 2_000_000;
    cfg.seed = 5;
    let hist = run_split_mode(&cfg).unwrap();
    let p = 1.0 - (-1.0f64).exp();
    let n = cfg.n_pulses as f64;
    for s in [hist.singles1, hist.singles2] {
        assert!((s as f64 / n - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
    }
}

#[test]
fn split_and_conditional_joint_pmfs_agree() {
    let quad = QuadratureSettings {
        rel_tol: 1e-14,
        start_nodes: 16,
        max_nodes: 512,
    };
    for src in [
        SourceSpec::mix_from_mu_g2(2.8, 1.2).unwrap(),
        SourceSpec::thermal(1.0).unwrap(),
        SourceSpec::poisson(2.6).unwrap(),
    ] {
        let split = joint_count_pmf_split(&src, 0.17, 0.3, 0.4, 90).unwrap();
        let cond = joint_count_pmf_conditional(&src, 0.17, 0.3, 0.4, 8, &quad).unwrap();
        for k1 in 0..=8 {
            for k2 in 0..=8 {
                assert!((split[k1][k2] - cond[k1][k2]).abs() < 1e-10, "{src:?} ({k1},{k2})");
            }
        }
    }
}

#[test]
fn bunching_grows_with_threshold() {
    let src = SourceSpec::mix_from_mu_g2(2.8, 1.2).unwrap();
    let low = estimate_gamma(&run(&config(src, 0.065, 4_000_000, 6)).unwrap()).unwrap();
    let high = estimate_gamma(&run(&config(src, 0.3, 4_000_000, 6)).unwrap()).unwrap();
    assert!(low.gamma > 1.0 + 3.0 * low.stderr);
    assert!(high.gamma - 3.0 * high.stderr > 1.2, "{high:?}");
    assert!(high.gamma - low.gamma > 3.0 * (high.stderr.powi(2) + low.stderr.powi(2)).sqrt());
}

#[test]
fn throughput_per_worker() {
    let mut cfg = config(SourceSpec::mix_from_mu_g2(2.8, 1.2).unwrap(), 0.19, 4_000_000, 7);
    cfg.shards = 1;
    // warm the code path, then time a single worker
    run(&ExperimentConfig {
        n_pulses: 100_000,
        ..cfg.clone()
    })
    .unwrap();
    let start = Instant::now();
    run(&cfg).unwrap();
    let rate = cfg.n_pulses as f64 / start.elapsed().as_secs_f64();
    println!("throughput: {rate:.3e} pulses/s on one worker");
    assert!(rate >= 1e6, "{rate:.3e} pulses/s");
}
