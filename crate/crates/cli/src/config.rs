//! TOML experiment description (`schema_version = 1`).
//!
//! A file describes one or more sources, the two detectors and their
//! discriminators, Monte Carlo run settings, the avalanche-density grid, an
//! optional sweep and quadrature controls. `[detector]` and `[disc]` apply to
//! both arms unless `[detector1]`/`[detector2]` or `[disc1]`/`[disc2]` are
//! given.

use std::path::Path;

use hbt_core::detector::calibrate_saturation;
use hbt_core::{DetectorParams, Discriminator, QuadratureSettings, Quench, SourceSpec};
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const PRESETS: [(&str, &str); 4] = [
    ("fml", include_str!("../presets/fml.toml")),
    ("lnt", include_str!("../presets/lnt.toml")),
    ("lat", include_str!("../presets/lat.toml")),
    ("ladder", include_str!("../presets/ladder.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema_version: u32,
    name: Option<String>,
    source: Option<SourceBlock>,
    #[serde(default)]
    sources: Vec<SourceBlock>,
    detector: Option<DetectorBlock>,
    detector1: Option<DetectorBlock>,
    detector2: Option<DetectorBlock>,
    disc: Option<DiscBlock>,
    disc1: Option<DiscBlock>,
    disc2: Option<DiscBlock>,
    #[serde(default)]
    run: RunBlock,
    #[serde(default)]
    avalanche: AvalancheBlock,
    sweep: Option<SweepBlock>,
    #[serde(default)]
    numerics: NumericsBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceBlock {
    name: Option<String>,
    kind: String,
    mu: Option<f64>,
    g2: Option<f64>,
    mu_s: Option<f64>,
    mu_n: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorBlock {
    eta: Option<f64>,
    v1_volts: Option<f64>,
    sigma1_volts: Option<f64>,
    sigma0_volts: Option<f64>,
    n_max: Option<usize>,
    quench: Option<QuenchBlock>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum QuenchBlock {
    Named(QuenchName),
    Saturating(SaturatingBlock),
    Calibrated(CalibratedBlock),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum QuenchName {
    Linear,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaturatingBlock {
    v_sat_volts: f64,
}

/// Saturation chosen so that an avalanche of `linear_volts` (linear model)
/// comes out at `observed_volts`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibratedBlock {
    linear_volts: f64,
    observed_volts: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscBlock {
    kind: DiscKind,
    v_t_volts: Option<f64>,
    v_lo_volts: Option<f64>,
    v_hi_volts: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DiscKind {
    Threshold,
    Window,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBlock {
    split: Option<f64>,
    n_pulses: Option<u64>,
    max_delay: Option<usize>,
    seed: Option<u64>,
    shards: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AvalancheBlock {
    v_min_volts: Option<f64>,
    v_max_volts: Option<f64>,
    step_volts: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepBlock {
    mode: Option<String>,
    fixed_n: Option<usize>,
    #[serde(default)]
    settings: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsBlock {
    quadrature_rel_tol: Option<f64>,
    quadrature_start_nodes: Option<usize>,
    quadrature_max_nodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    ThresholdApprox,
    WindowExact,
    Voltage,
    MonteCarlo,
}

impl SweepMode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "threshold-approx" => Ok(SweepMode::ThresholdApprox),
            "window-exact" => Ok(SweepMode::WindowExact),
            "voltage" => Ok(SweepMode::Voltage),
            "monte-carlo" => Ok(SweepMode::MonteCarlo),
            other => Err(CliError::Config(format!(
                "unknown sweep mode '{other}' (expected threshold-approx, window-exact, voltage or monte-carlo)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepMode::ThresholdApprox => "threshold-approx",
            SweepMode::WindowExact => "window-exact",
            SweepMode::Voltage => "voltage",
            SweepMode::MonteCarlo => "monte-carlo",
        }
    }

    /// Whether settings are detector-2 photon numbers (otherwise volts).
    pub fn counts_photons(self) -> bool {
        matches!(self, SweepMode::ThresholdApprox | SweepMode::WindowExact)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedSource {
    pub name: String,
    pub spec: SourceSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub mode: Option<SweepMode>,
    /// Detector-1 photon number (window) or lowest accepted number (threshold).
    pub fixed_n: Option<usize>,
    pub settings: Vec<f64>,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub sources: Vec<NamedSource>,
    pub det1: DetectorParams,
    pub det2: DetectorParams,
    pub disc1: Discriminator,
    pub disc2: Discriminator,
    pub split: f64,
    pub n_pulses: u64,
    pub max_delay: usize,
    pub seed: Option<u64>,
    pub shards: Option<usize>,
    pub grid: Vec<f64>,
    pub sweep: SweepPlan,
    pub quad: QuadratureSettings,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, stem)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = preset_text(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset '{name}' (available: {})",
                preset_names().join(", ")
            ))
        })?;
        Self::parse(text, name)
    }

    /// `default_name` is used when the file has no `name` key.
    pub fn parse(text: &str, default_name: &str) -> Result<Self, CliError> {
        let raw: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let name = raw.name.clone().unwrap_or_else(|| default_name.to_string());
        check_name(&name)?;

        let blocks: Vec<&SourceBlock> = match (&raw.source, raw.sources.is_empty()) {
            (Some(_), false) => return Err(CliError::Config("give either [source] or [[sources]], not both".into())),
            (None, true) => return Err(CliError::Config("no source given".into())),
            (Some(s), true) => vec![s],
            (None, false) => raw.sources.iter().collect(),
        };
        let mut sources = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            let label = b.name.clone().unwrap_or_else(|| {
                if blocks.len() == 1 {
                    name.clone()
                } else {
                    format!("source{}", i + 1)
                }
            });
            check_name(&label)?;
            if sources.iter().any(|s: &NamedSource| s.name == label) {
                return Err(CliError::Config(format!("duplicate source name '{label}'")));
            }
            sources.push(NamedSource {
                spec: source_spec(b, &label)?,
                name: label,
            });
        }

        let (d1, d2) = pair(raw.detector, raw.detector1, raw.detector2, "detector")?;
        let det1 = detector(d1.unwrap_or_default(), "detector1")?;
        let det2 = detector(d2.unwrap_or_default(), "detector2")?;
        let (c1, c2) = pair(raw.disc, raw.disc1, raw.disc2, "disc")?;
        let disc1 = c1
            .map(|b| disc(b, "disc1"))
            .transpose()?
            .unwrap_or(Discriminator::threshold(det1.v1 / 2.0));
        let disc2 = c2
            .map(|b| disc(b, "disc2"))
            .transpose()?
            .unwrap_or(Discriminator::threshold(det2.v1 / 2.0));

        let run = &raw.run;
        let split = run.split.unwrap_or(0.5);
        if !(split > 0.0 && split < 1.0) {
            return Err(CliError::Config(format!("run.split must lie in (0, 1), got {split}")));
        }
        if run.shards == Some(0) {
            return Err(CliError::Config("run.shards must be at least 1".into()));
        }

        let grid = grid(&raw.avalanche)?;
        let sweep = match &raw.sweep {
            None => SweepPlan {
                mode: None,
                fixed_n: None,
                settings: Vec::new(),
            },
            Some(s) => SweepPlan {
                mode: s.mode.as_deref().map(SweepMode::parse).transpose()?,
                fixed_n: s.fixed_n,
                settings: s.settings.clone(),
            },
        };

        let defaults = QuadratureSettings::default();
        let quad = QuadratureSettings {
            rel_tol: raw.numerics.quadrature_rel_tol.unwrap_or(defaults.rel_tol),
            start_nodes: raw.numerics.quadrature_start_nodes.unwrap_or(defaults.start_nodes),
            max_nodes: raw.numerics.quadrature_max_nodes.unwrap_or(defaults.max_nodes),
        };
        if !(quad.rel_tol > 0.0) || quad.start_nodes < 2 || quad.max_nodes < quad.start_nodes {
            return Err(CliError::Config(
                "numerics: need quadrature_rel_tol > 0 and 2 <= quadrature_start_nodes <= quadrature_max_nodes".into(),
            ));
        }

        let exp = Experiment {
            name,
            sources,
            det1,
            det2,
            disc1,
            disc2,
            split,
            n_pulses: run.n_pulses.unwrap_or(1_000_000),
            max_delay: run.max_delay.unwrap_or(10),
            seed: run.seed,
            shards: run.shards,
            grid,
            sweep,
            quad,
        };
        // surface engine invariants as config errors before any command runs
        exp.engine_config(&exp.sources[0].spec, 0, 1).validate()?;
        Ok(exp)
    }

    pub fn engine_config(&self, source: &SourceSpec, seed: u64, shards: usize) -> hbt_core::ExperimentConfig {
        hbt_core::ExperimentConfig {
            source: *source,
            det1: self.det1,
            det2: self.det2,
            disc1: self.disc1,
            disc2: self.disc2,
            split: self.split,
            n_pulses: self.n_pulses,
            max_delay: self.max_delay,
            seed,
            shards,
        }
    }

    /// File-name stem for outputs of one source.
    pub fn stem(&self, source: &NamedSource) -> String {
        if self.sources.len() == 1 && source.name == self.name {
            self.name.clone()
        } else {
            format!("{}_{}", self.name, source.name)
        }
    }
}

fn check_name(name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "name '{name}' must use only letters, digits, '-', '_' or '.'"
        )))
    }
}

fn pair<T: Copy>(
    both: Option<T>,
    first: Option<T>,
    second: Option<T>,
    what: &str,
) -> Result<(Option<T>, Option<T>), CliError> {
    match (both, first, second) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(CliError::Config(format!(
            "[{what}] cannot be combined with [{what}1]/[{what}2]"
        ))),
        (Some(b), None, None) => Ok((Some(b), Some(b))),
        (None, a, b) => Ok((a, b)),
    }
}

fn source_spec(b: &SourceBlock, label: &str) -> Result<SourceSpec, CliError> {
    let ctx = |e: hbt_core::Error| CliError::Config(format!("source '{label}': {e}"));
    let need_mu = || {
        b.mu.ok_or_else(|| CliError::Config(format!("source '{label}': mu is required")))
    };
    let only_mu = || {
        if b.g2.is_some() || b.mu_s.is_some() || b.mu_n.is_some() {
            Err(CliError::Config(format!(
                "source '{label}': only mu applies to kind '{}'",
                b.kind
            )))
        } else {
            Ok(())
        }
    };
    match b.kind.as_str() {
        "poisson" => {
            only_mu()?;
            SourceSpec::poisson(need_mu()?).map_err(ctx)
        }
        "thermal" => {
            only_mu()?;
            SourceSpec::thermal(need_mu()?).map_err(ctx)
        }
        "mix" => match (b.mu, b.g2, b.mu_s, b.mu_n) {
            (Some(mu), Some(g2), None, None) => SourceSpec::mix_from_mu_g2(mu, g2).map_err(ctx),
            (None, None, Some(s), Some(n)) => SourceSpec::mix(s, n).map_err(ctx),
            _ => Err(CliError::Config(format!(
                "source '{label}': kind 'mix' takes either mu and g2, or mu_s and mu_n"
            ))),
        },
        other => Err(CliError::Config(format!(
            "source '{label}': unknown kind '{other}' (expected poisson, thermal or mix)"
        ))),
    }
}

fn detector(b: DetectorBlock, label: &str) -> Result<DetectorParams, CliError> {
    let r = DetectorParams::reference();
    let sigma1 = b.sigma1_volts.unwrap_or(r.sigma1);
    let quench = match b.quench {
        None | Some(QuenchBlock::Named(QuenchName::Linear)) => Quench::Linear,
        Some(QuenchBlock::Saturating(s)) => Quench::Saturating { v_sat: s.v_sat_volts },
        Some(QuenchBlock::Calibrated(c)) => Quench::Saturating {
            v_sat: calibrate_saturation(c.linear_volts, c.observed_volts)
                .map_err(|e| CliError::Config(format!("{label}.quench: {e}")))?,
        },
    };
    DetectorParams::new(
        b.eta.unwrap_or(r.eta),
        b.v1_volts.unwrap_or(r.v1),
        sigma1,
        b.sigma0_volts.unwrap_or(sigma1 / 2.0),
        b.n_max.unwrap_or(r.n_max),
        quench,
    )
    .map_err(|e| CliError::Config(format!("{label}: {e}")))
}

fn disc(b: DiscBlock, label: &str) -> Result<Discriminator, CliError> {
    let missing = |k: &str| CliError::Config(format!("{label}: {k} is required"));
    let d = match b.kind {
        DiscKind::Threshold => {
            if b.v_lo_volts.is_some() || b.v_hi_volts.is_some() {
                return Err(CliError::Config(format!("{label}: a threshold takes only v_t_volts")));
            }
            Discriminator::threshold(b.v_t_volts.ok_or_else(|| missing("v_t_volts"))?)
        }
        DiscKind::Window => {
            if b.v_t_volts.is_some() {
                return Err(CliError::Config(format!(
                    "{label}: a window takes v_lo_volts and v_hi_volts"
                )));
            }
            let lo = b.v_lo_volts.ok_or_else(|| missing("v_lo_volts"))?;
            let hi = b.v_hi_volts.ok_or_else(|| missing("v_hi_volts"))?;
            Discriminator::window(lo, hi).map_err(|e| CliError::Config(format!("{label}: {e}")))?
        }
    };
    d.validate().map_err(|e| CliError::Config(format!("{label}: {e}")))?;
    Ok(d)
}

fn grid(b: &AvalancheBlock) -> Result<Vec<f64>, CliError> {
    let lo = b.v_min_volts.unwrap_or(0.0);
    let hi = b.v_max_volts.unwrap_or(0.75);
    let step = b.step_volts.unwrap_or(0.001);
    if !(step > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(CliError::Config(format!(
            "avalanche grid [{lo}, {hi}] with step {step} is empty"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return Err(CliError::Config(format!("avalanche grid has {n} points")));
    }
    // snap to picovolts so 1 mV steps print as 0.001, 0.002, ...
    Ok((0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "schema_version = 1\n[source]\nkind = \"poisson\"\nmu = 1.0\n";

    fn parse(extra: &str) -> Result<Experiment, CliError> {
        Experiment::parse(&format!("{MIN}{extra}"), "t")
    }

    #[test]
    fn defaults() {
        let e = parse("").unwrap();
        assert_eq!(e.name, "t");
        assert_eq!(e.det1, DetectorParams::reference());
        assert_eq!(e.disc1, Discriminator::threshold(0.065));
        assert_eq!(e.grid.len(), 751);
        assert_eq!(e.grid[260], 0.26);
        assert_eq!((e.split, e.max_delay, e.seed), (0.5, 10, None));
    }

    #[test]
    fn quench_forms() {
        let e = parse("[detector]\nquench = { v_sat_volts = 0.5 }\n").unwrap();
        assert_eq!(e.det1.quench, Quench::Saturating { v_sat: 0.5 });
        let e = parse("[detector]\nquench = { linear_volts = 0.26, observed_volts = 0.18 }\n").unwrap();
        assert!((e.det2.peak_center(2).unwrap() - 0.18).abs() < 1e-9);
        assert!(parse("[detector]\nquench = \"cubic\"\n").is_err());
    }

    #[test]
    fn per_arm_blocks() {
        let e =
            parse("[detector2]\neta = 0.3\n[disc2]\nkind = \"window\"\nv_lo_volts = 0.2\nv_hi_volts = 0.3\n").unwrap();
        assert_eq!(e.det1.eta, 0.17);
        assert_eq!(e.det2.eta, 0.3);
        assert!(matches!(e.disc2, Discriminator::Window { .. }));
        assert!(parse("[detector]\neta = 0.2\n[detector1]\neta = 0.3\n").is_err());
        assert!(parse("[disc]\nkind = \"threshold\"\n").is_err());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(Experiment::parse("schema_version = 2\n[source]\nkind = \"poisson\"\nmu = 1.0\n", "t").is_err());
        assert!(parse("typo = 1\n").is_err());
        assert!(parse("[[sources]]\nkind = \"thermal\"\nmu = 1.0\n").is_err());
        assert!(parse("[run]\nsplit = 1.0\n").is_err());
        assert!(parse("[run]\nmax_delay = 200\n").is_err());
        assert!(Experiment::parse("schema_version = 1\n[source]\nkind = \"mix\"\nmu = 1.0\n", "t").is_err());
        assert!(Experiment::parse(
            "schema_version = 1\n[source]\nkind = \"mix\"\nmu = 1.0\ng2 = 2.5\n",
            "t"
        )
        .is_err());
    }

    #[test]
    fn presets_parse() {
        for name in preset_names() {
            let e = Experiment::preset(name).unwrap();
            assert_eq!(e.name, name);
        }
        assert_eq!(Experiment::preset("ladder").unwrap().sources.len(), 3);
    }

    #[test]
    fn sweep_mode_names() {
        for m in [
            SweepMode::ThresholdApprox,
            SweepMode::WindowExact,
            SweepMode::Voltage,
            SweepMode::MonteCarlo,
        ] {
            assert_eq!(SweepMode::parse(m.name()).unwrap(), m);
        }
    }
}
