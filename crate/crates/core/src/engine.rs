//! Pulse-by-pulse Monte Carlo of the two-detector coincidence experiment.
//!
//! Each clock cycle draws a pulse intensity, photon counts for both arms,
//! avalanche voltages and discriminator decisions. A coincidence at delay
//! `d` is a click on detector 1 at pulse `i` together with a click on
//! detector 2 at pulse `i + d`.
//!
//! Random numbers come from one ChaCha8 stream per block of
//! [`BLOCK_PULSES`] pulses, so the simulated pulse train does not depend on
//! how blocks are distributed over workers. A worker starting at pulse `a`
//! re-simulates the `max_delay` pulses before `a` as warm-up: they complete
//! the delay pairs straddling the boundary and are not counted otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::detector::{thin, DetectorParams, Discriminator};
use crate::error::{Error, Result};
use crate::source::SourceSpec;

/// Pulses per random stream.
pub const BLOCK_PULSES: u64 = 1 << 14;

/// Largest supported delay window (click history is a 128-bit register).
pub const MAX_DELAY_LIMIT: usize = 127;

/// Recorded in output metadata.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = pulse / 16384";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceSpec<f64>,
    pub det1: DetectorParams<f64>,
    pub det2: DetectorParams<f64>,
    pub disc1: Discriminator<f64>,
    pub disc2: Discriminator<f64>,
    /// Beamsplitter transmission towards detector 1.
    pub split: f64,
    pub n_pulses: u64,
    /// Delays `-max_delay..=max_delay` (in clock periods) are recorded.
    pub max_delay: usize,
    pub seed: u64,
    pub shards: usize,
}

impl ExperimentConfig {
    /// Identical detectors and discriminators on both arms, 50:50 split,
    /// 10^6 pulses, delays up to 10.
    pub fn symmetric(source: SourceSpec<f64>, det: DetectorParams<f64>, disc: Discriminator<f64>) -> Self {
        ExperimentConfig {
            source,
            det1: det,
            det2: det,
            disc1: disc,
            disc2: disc,
            split: 0.5,
            n_pulses: 1_000_000,
            max_delay: 10,
            seed: 0,
            shards: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.source.validate().map_err(wrap)?;
        self.det1.validate().map_err(wrap)?;
        self.det2.validate().map_err(wrap)?;
        self.disc1.validate().map_err(wrap)?;
        self.disc2.validate().map_err(wrap)?;
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split must lie in (0, 1), got {}", self.split)));
        }
        if self.max_delay < 1 || self.max_delay > MAX_DELAY_LIMIT {
            return Err(Error::Config(format!(
                "max_delay must lie in 1..={MAX_DELAY_LIMIT}, got {}",
                self.max_delay
            )));
        }
        let min_pulses = 10 * (2 * self.max_delay as u64 + 1);
        if self.n_pulses < min_pulses {
            return Err(Error::Config(format!(
                "n_pulses must be at least {min_pulses} for max_delay {}, got {}",
                self.max_delay, self.n_pulses
            )));
        }
        if self.shards < 1 {
            return Err(Error::Config("shards must be at least 1".into()));
        }
        Ok(())
    }
}

/// Coincidence counts per relative delay plus singles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceHistogram {
    pub max_delay: usize,
    /// `counts[d + max_delay]` for `d` in `-max_delay..=max_delay`.
    pub counts: Vec<u64>,
    pub singles1: u64,
    pub singles2: u64,
    pub n_pulses: u64,
}

impl CoincidenceHistogram {
    pub fn empty(max_delay: usize, n_pulses: u64) -> Self {
        CoincidenceHistogram {
            max_delay,
            counts: vec![0; 2 * max_delay + 1],
            singles1: 0,
            singles2: 0,
            n_pulses,
        }
    }

    pub fn count(&self, delay: i64) -> u64 {
        self.counts[(delay + self.max_delay as i64) as usize]
    }

    /// `(delay, count)` pairs in increasing delay.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        let offset = self.max_delay as i64;
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as i64 - offset, c))
    }

    fn absorb(&mut self, other: &CoincidenceHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.singles1 += other.singles1;
        self.singles2 += other.singles2;
    }
}

/// Ratio of zero-delay coincidences to the mean accidental level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaResult {
    pub gamma: f64,
    /// One standard deviation from Poisson counting statistics.
    pub stderr: f64,
    pub peak_count: u64,
    pub accidental_mean: f64,
    pub accidental_bins: usize,
    pub n_pulses: u64,
}

/// Produces detected photon counts `(k1, k2)` for one pulse.
trait PulseModel: Sync {
    fn detected_counts<R: Rng>(&self, rng: &mut R) -> (u64, u64);
}

/// Arms drawn as independent Poisson variables given the pulse intensity.
struct ConditionalArms {
    source: SourceSpec<f64>,
    rate1: f64,
    rate2: f64,
}

impl PulseModel for ConditionalArms {
    fn detected_counts<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        let w = self.source.sample_intensity(rng);
        (poisson_count(self.rate1 * w, rng), poisson_count(self.rate2 * w, rng))
    }
}

/// Total photon number, binomial beamsplitter, binomial loss per arm.
struct ExplicitSplit {
    source: SourceSpec<f64>,
    split: f64,
    eta1: f64,
    eta2: f64,
}

impl PulseModel for ExplicitSplit {
    fn detected_counts<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        let w = self.source.sample_intensity(rng);
        let n = poisson_count(w, rng);
        let n1 = thin(n, self.split, rng);
        (thin(n1, self.eta1, rng), thin(n - n1, self.eta2, rng))
    }
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Runs the experiment with arms drawn conditionally independent given the
/// pulse intensity.
pub fn run(config: &ExperimentConfig) -> Result<CoincidenceHistogram> {
    config.validate()?;
    let model = ConditionalArms {
        source: config.source,
        rate1: config.det1.eta * config.split,
        rate2: config.det2.eta * (1.0 - config.split),
    };
    Ok(run_with(config, &model))
}

/// Same experiment, drawing the total photon number and splitting it
/// explicitly. Distributionally identical to [`run`]; used to cross-check it.
pub fn run_split_mode(config: &ExperimentConfig) -> Result<CoincidenceHistogram> {
    config.validate()?;
    let model = ExplicitSplit {
        source: config.source,
        split: config.split,
        eta1: config.det1.eta,
        eta2: config.det2.eta,
    };
    Ok(run_with(config, &model))
}

fn run_with<M: PulseModel>(config: &ExperimentConfig, model: &M) -> CoincidenceHistogram {
    let n_blocks = config.n_pulses.div_ceil(BLOCK_PULSES);
    let shards = config.shards as u64;
    let partials: Vec<CoincidenceHistogram> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let first = s * n_blocks / shards;
            let last = (s + 1) * n_blocks / shards;
            simulate_blocks(config, model, first, last)
        })
        .collect();
    let mut hist = CoincidenceHistogram::empty(config.max_delay, config.n_pulses);
    for part in &partials {
        hist.absorb(part);
    }
    hist
}

fn simulate_blocks<M: PulseModel>(
    config: &ExperimentConfig,
    model: &M,
    first_block: u64,
    end_block: u64,
) -> CoincidenceHistogram {
    let d = config.max_delay;
    let mut hist = CoincidenceHistogram::empty(d, 0);
    let start = first_block * BLOCK_PULSES;
    let end = (end_block * BLOCK_PULSES).min(config.n_pulses);
    if start >= end {
        return hist;
    }
    let warm_start = start.saturating_sub(d as u64);
    let lag_mask: u128 = if d + 1 >= 128 { !0 } else { (1u128 << (d + 1)) - 1 };
    let mut history1: u128 = 0;
    let mut history2: u128 = 0;

    for block in warm_start / BLOCK_PULSES..end_block {
        let mut rng = block_rng(config.seed, block);
        let lo = block * BLOCK_PULSES;
        let hi = (lo + BLOCK_PULSES).min(config.n_pulses);
        for pulse in lo..hi {
            // always draw so the stream position matches the pulse index
            let (k1, k2) = model.detected_counts(&mut rng);
            let v1 = config.det1.avalanche_voltage(k1 as usize, &mut rng);
            let v2 = config.det2.avalanche_voltage(k2 as usize, &mut rng);
            if pulse < warm_start {
                continue;
            }
            let click1 = config.disc1.accepts(v1);
            let click2 = config.disc2.accepts(v2);
            history1 = (history1 << 1) | click1 as u128;
            history2 = (history2 << 1) | click2 as u128;
            if pulse < start {
                continue;
            }
            hist.singles1 += click1 as u64;
            hist.singles2 += click2 as u64;
            if click2 {
                // detector 1 clicked `lag` pulses earlier: delay +lag
                let mut bits = history1 & lag_mask;
                while bits != 0 {
                    let lag = bits.trailing_zeros() as usize;
                    hist.counts[d + lag] += 1;
                    bits &= bits - 1;
                }
            }
            if click1 {
                // detector 2 clicked `lag >= 1` pulses earlier: delay -lag
                let mut bits = (history2 >> 1) & (lag_mask >> 1);
                while bits != 0 {
                    let lag = bits.trailing_zeros() as usize + 1;
                    hist.counts[d - lag] += 1;
                    bits &= bits - 1;
                }
            }
        }
    }
    hist
}

/// Zero-delay peak over the mean of all nonzero-delay bins, with a
/// first-order error estimate treating every bin as Poisson.
pub fn estimate_gamma(hist: &CoincidenceHistogram) -> Result<GammaResult> {
    let bins = 2 * hist.max_delay;
    let accidental_total: u64 = hist.iter().filter(|&(d, _)| d != 0).map(|(_, c)| c).sum();
    if bins == 0 || accidental_total == 0 {
        return Err(Error::InsufficientStatistics("no coincidences at nonzero delay".into()));
    }
    let peak = hist.count(0);
    let mean = accidental_total as f64 / bins as f64;
    let gamma = peak as f64 / mean;
    // var(peak) ~ peak (at least one count), var(mean) ~ mean / bins
    let var = (peak.max(1) as f64) / (mean * mean) + gamma * gamma / accidental_total as f64;
    Ok(GammaResult {
        gamma,
        stderr: var.sqrt(),
        peak_count: peak,
        accidental_mean: mean,
        accidental_bins: bins,
        n_pulses: hist.n_pulses,
    })
}
