use std::path::{Path, PathBuf};
use std::time::Instant;

use hbt_core::analytics::{g_order, gamma_threshold, gamma_window, joint_click_probability_split, sweep_gamma};
use hbt_core::engine::GENERATOR;
use hbt_core::fixtures::render_fixtures;
use hbt_core::io::{
    curve_metadata, curve_table, density_table, describe_detector, describe_disc, describe_source, gamma_summary,
    histogram_metadata, histogram_table, Metadata, Table,
};
use hbt_core::{estimate_gamma, run, Discriminator, GammaCurve, Sweep};
use serde::Serialize;

use crate::config::{Experiment, NamedSource, SweepMode};
use crate::error::CliError;

/// Where the seed of a run came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedOrigin {
    Flag,
    Config,
    Entropy,
}

impl SeedOrigin {
    fn name(self) -> &'static str {
        match self {
            SeedOrigin::Flag => "flag",
            SeedOrigin::Config => "config",
            SeedOrigin::Entropy => "entropy",
        }
    }
}

/// Shared state of one command invocation: resolved settings plus the list
/// of files written so far.
pub struct Session {
    pub command: &'static str,
    pub config_label: String,
    pub exp: Experiment,
    pub out: PathBuf,
    pub seed: u64,
    pub seed_origin: SeedOrigin,
    pub shards: usize,
    outputs: Vec<PathBuf>,
    started: Instant,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a str,
    seed: u64,
    seed_origin: &'a str,
    shards: usize,
    version: &'a str,
    duration_seconds: f64,
    outputs: Vec<String>,
}

impl Session {
    pub fn new(
        command: &'static str,
        config_label: String,
        exp: Experiment,
        out: PathBuf,
        seed_flag: Option<u64>,
        shards_flag: Option<usize>,
    ) -> Self {
        let (seed, seed_origin) = match (seed_flag, exp.seed) {
            (Some(s), _) => (s, SeedOrigin::Flag),
            (None, Some(s)) => (s, SeedOrigin::Config),
            (None, None) => (rand::random::<u64>() >> 1, SeedOrigin::Entropy),
        };
        let shards = shards_flag
            .or(exp.shards)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
        Session {
            command,
            config_label,
            exp,
            out,
            seed,
            seed_origin,
            shards,
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        write_file(&path, text)?;
        self.outputs.push(path);
        Ok(())
    }

    /// Writes `<stem>.csv` and its `<stem>.meta` sidecar.
    fn write_pair(&mut self, stem: &str, table: &Table, meta: &Metadata) -> Result<(), CliError> {
        self.write(&format!("{stem}.csv"), &table.to_text())?;
        self.write(&format!("{stem}.meta"), &meta.to_text())?;
        println!("wrote {}", self.out.join(format!("{stem}.csv")).display());
        Ok(())
    }

    /// Writes the manifest; call only after every output is on disk.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            command: self.command,
            config: &self.config_label,
            seed: self.seed,
            seed_origin: self.seed_origin.name(),
            shards: self.shards,
            version: hbt_core::VERSION,
            duration_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        let path = self
            .out
            .join(format!("{}_{}_manifest.toml", self.exp.name, self.command));
        write_file(&path, &text)?;
        Ok(path)
    }
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn source_meta(s: &Session, src: &NamedSource) -> Metadata {
    let mut m = Metadata::new();
    m.insert("artifact", "hbt");
    m.insert("version", hbt_core::VERSION);
    m.insert("command", s.command);
    m.insert("config", &s.config_label);
    m.insert("source.name", &src.name);
    describe_source(&src.spec, &mut m, "source.");
    m
}

pub fn avalanche_hist(s: &mut Session) -> Result<(), CliError> {
    let exp = s.exp.clone();
    for src in &exp.sources {
        let pmf = src.spec.pmf_default()?;
        let density = exp.det1.avalanche_density(&pmf, &exp.grid)?;
        let mut meta = source_meta(s, src);
        describe_detector(&exp.det1, &mut meta, "detector.");
        meta.insert("grid.v_min_volts", exp.grid[0]);
        meta.insert("grid.v_max_volts", exp.grid[exp.grid.len() - 1]);
        meta.insert("grid.points", exp.grid.len());
        meta.insert("pmf.truncation", pmf.n_trunc());
        meta.insert("pmf.tail_mass", pmf.tail_mass);
        s.write_pair(
            &format!("{}_avalanche", exp.stem(src)),
            &density_table(&exp.grid, &density),
            &meta,
        )?;
    }
    Ok(())
}

pub fn simulate(s: &mut Session) -> Result<(), CliError> {
    let exp = s.exp.clone();
    for src in &exp.sources {
        let cfg = exp.engine_config(&src.spec, s.seed, s.shards);
        let hist = run(&cfg)?;
        let mut meta = histogram_metadata(&cfg, &hist);
        meta.insert("config", &s.config_label);
        meta.insert("source.name", &src.name);
        let estimate = estimate_gamma(&hist);
        if let Ok(g) = &estimate {
            meta.insert("gamma", g.gamma);
            meta.insert("gamma_stderr", g.stderr);
        }
        // the histogram is kept even when no gamma can be formed from it
        s.write_pair(&format!("{}_histogram", exp.stem(src)), &histogram_table(&hist), &meta)?;
        println!("{}", gamma_summary(&src.name, &estimate?));
    }
    Ok(())
}

pub fn sweep(s: &mut Session, mode_flag: Option<SweepMode>) -> Result<(), CliError> {
    let exp = s.exp.clone();
    let mode = mode_flag
        .or(exp.sweep.mode)
        .ok_or_else(|| CliError::Config("no sweep mode: pass --mode or set [sweep] mode".into()))?;
    let n_max = exp.det1.n_max.min(exp.det2.n_max);
    let fixed_n = exp.sweep.fixed_n.unwrap_or(exp.det1.n_max);
    let settings = if exp.sweep.settings.is_empty() {
        if mode.counts_photons() {
            (1..=n_max).map(|n| n as f64).collect()
        } else {
            (1..2 * n_max).map(|k| k as f64 * exp.det2.v1 / 2.0).collect()
        }
    } else {
        exp.sweep.settings.clone()
    };
    let photon_numbers = || -> Result<Vec<usize>, CliError> {
        settings
            .iter()
            .map(|&x| {
                if x >= 1.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(CliError::Config(format!(
                        "sweep setting {x} is not a photon number >= 1"
                    )))
                }
            })
            .collect()
    };

    for src in &exp.sources {
        let mut meta = source_meta(s, src);
        describe_detector(&exp.det1, &mut meta, "det1.");
        describe_detector(&exp.det2, &mut meta, "det2.");
        meta.insert("split", exp.split);
        let (curve, stderr) = match mode {
            SweepMode::ThresholdApprox | SweepMode::WindowExact => {
                let n2 = photon_numbers()?;
                let sweep = if mode == SweepMode::ThresholdApprox {
                    Sweep::Threshold {
                        n1_min: fixed_n,
                        n2_min: n2,
                    }
                } else {
                    Sweep::Window { n1: fixed_n, n2 }
                };
                meta.insert("fixed_n", fixed_n);
                (
                    sweep_gamma(&src.spec, &exp.det1, &exp.det2, exp.split, &sweep, &exp.quad)?,
                    None,
                )
            }
            SweepMode::Voltage => {
                let sweep = Sweep::Voltage {
                    disc1: exp.disc1,
                    thresholds2: settings.clone(),
                };
                meta.insert("disc1", describe_disc(&exp.disc1));
                (
                    sweep_gamma(&src.spec, &exp.det1, &exp.det2, exp.split, &sweep, &exp.quad)?,
                    None,
                )
            }
            SweepMode::MonteCarlo => {
                let mut points = Vec::with_capacity(settings.len());
                let mut errs = Vec::with_capacity(settings.len());
                for (i, &v) in settings.iter().enumerate() {
                    let mut cfg = exp.engine_config(&src.spec, s.seed.wrapping_add(i as u64), s.shards);
                    cfg.disc2 = Discriminator::threshold(v);
                    let g = estimate_gamma(&run(&cfg)?)?;
                    points.push((v, g.gamma));
                    errs.push(g.stderr);
                }
                meta.insert("disc1", describe_disc(&exp.disc1));
                meta.insert("generator", GENERATOR);
                meta.insert("seed", s.seed);
                meta.insert("seed_rule", "setting i uses seed + i");
                meta.insert("n_pulses", exp.n_pulses);
                meta.insert("max_delay", exp.max_delay);
                let curve = GammaCurve {
                    mode: hbt_core::CurveMode::VoltageModel,
                    points,
                };
                (curve, Some(errs))
            }
        };
        let mut full = curve_metadata(&curve);
        full.insert("mode", mode.name());
        full.extend(&meta);
        let table = curve_table(&curve.points, stderr.as_deref());
        s.write_pair(&format!("{}_{}", exp.stem(src), mode.name()), &table, &full)?;
        let shown: Vec<String> = curve.points.iter().map(|(x, g)| format!("{x}:{g:.4}")).collect();
        println!("{} {}: {}", src.name, mode.name(), shown.join(" "));
    }
    Ok(())
}

pub fn analytic(s: &mut Session) -> Result<(), CliError> {
    let exp = s.exp.clone();
    let n_max = exp.det1.n_max.min(exp.det2.n_max);
    for src in &exp.sources {
        let mut table = Table::new(&["quantity", "n1", "n2", "value"]);
        let mut row = |q: &str, a: Option<usize>, b: Option<usize>, v: f64| {
            let cell = |x: Option<usize>| x.map(|x| x.to_string()).unwrap_or_default();
            table.push(vec![q.to_string(), cell(a), cell(b), v.to_string()]);
        };
        for k in 1..=2 * n_max {
            row("g", Some(k), None, g_order(&src.spec, k)?);
        }
        for n1 in 1..=n_max {
            for n2 in 1..=n_max {
                row("gamma_window", Some(n1), Some(n2), gamma_window(&src.spec, n1, n2)?);
            }
        }
        for n1 in 1..=n_max {
            for n2 in 1..=n_max {
                let g = gamma_threshold(&src.spec, exp.det1.eta, exp.det2.eta, n1, n2, n_max)?;
                row("gamma_threshold", Some(n1), Some(n2), g);
            }
        }
        let clicks = joint_click_probability_split(
            &src.spec, &exp.det1, &exp.det2, &exp.disc1, &exp.disc2, exp.split, &exp.quad,
        )?;
        row("click_singles1", None, None, clicks.singles1);
        row("click_singles2", None, None, clicks.singles2);
        row("click_coincidence", None, None, clicks.coincidence);
        let gamma = clicks.gamma();
        if let Ok(g) = gamma {
            row("gamma_clicks", None, None, g);
        }

        let mut meta = source_meta(s, src);
        describe_detector(&exp.det1, &mut meta, "det1.");
        describe_detector(&exp.det2, &mut meta, "det2.");
        meta.insert("disc1", describe_disc(&exp.disc1));
        meta.insert("disc2", describe_disc(&exp.disc2));
        meta.insert("split", exp.split);
        meta.insert("quadrature_rel_tol", exp.quad.rel_tol);
        meta.insert("quadrature_max_nodes", exp.quad.max_nodes);
        s.write_pair(&format!("{}_analytic", exp.stem(src)), &table, &meta)?;
        println!(
            "{}: g(2) = {:.6}, gamma_window(2,2) = {:.6}, gamma from clicks = {:.6}",
            src.name,
            g_order(&src.spec, 2)?,
            gamma_window(&src.spec, 2, 2)?,
            gamma?
        );
    }
    Ok(())
}

/// Golden fixtures. Writes no manifest so that reruns leave the directory
/// byte-identical.
pub fn fixtures(out: &Path) -> Result<(), CliError> {
    prepare_dir(out)?;
    for (name, text) in render_fixtures()? {
        let path = out.join(name);
        write_file(&path, &text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
