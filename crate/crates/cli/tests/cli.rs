use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hbt_core::io::{curve_from_table, histogram_from_parts, histogram_metadata, histogram_table, Metadata, Table};
use tempfile::TempDir;

fn hbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbt"))
        .args(args)
        .output()
        .expect("spawn hbt")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, format!("schema_version = 1\n{body}")).unwrap();
    path
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn meta(path: impl AsRef<Path>) -> Metadata {
    Metadata::parse(read(path).as_bytes()).unwrap()
}

fn table(path: impl AsRef<Path>) -> Table {
    Table::parse(read(path).as_bytes()).unwrap()
}

const POISSON: &str = r#"
[source]
kind = "poisson"
mu = 2.6

[disc]
kind = "threshold"
v_t_volts = 0.065

[run]
n_pulses = 2_000_000
seed = 9
"#;

#[test]
fn exit_code_per_error_class() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = dir.join("out");
    let out_s = out.to_str().unwrap();

    // usage
    assert_eq!(code(&hbt(&["simulate", "--bogus"])), 2);
    // seeds must fit a TOML integer
    assert_eq!(code(&hbt(&["--seed", "18446744073709551615", "analytic"])), 2);

    // config: malformed file, bad values, unknown preset
    let bad = write_config(dir, "bad", "[source]\nkind = \"laser\"\nmu = 1.0\n");
    assert_eq!(
        code(&hbt(&["--config", bad.to_str().unwrap(), "--out", out_s, "analytic"])),
        3
    );
    let neg = write_config(dir, "neg", "[source]\nkind = \"thermal\"\nmu = -1.0\n");
    assert_eq!(
        code(&hbt(&["--config", neg.to_str().unwrap(), "--out", out_s, "analytic"])),
        3
    );
    let syntax = write_config(dir, "syntax", "[source\n");
    assert_eq!(
        code(&hbt(&[
            "--config",
            syntax.to_str().unwrap(),
            "--out",
            out_s,
            "analytic"
        ])),
        3
    );
    assert_eq!(code(&hbt(&["--preset", "nope", "--out", out_s, "analytic"])), 3);
    let missing = dir.join("missing.toml");
    assert_eq!(code(&hbt(&["--config", missing.to_str().unwrap(), "analytic"])), 3);

    // numeric convergence: a single quadrature level can never be confirmed
    let coarse = write_config(
        dir,
        "coarse",
        "[source]\nkind = \"thermal\"\nmu = 2.0\n[numerics]\nquadrature_start_nodes = 16\nquadrature_max_nodes = 16\n",
    );
    let r = hbt(&["--config", coarse.to_str().unwrap(), "--out", out_s, "analytic"]);
    assert_eq!(code(&r), 4, "{}", String::from_utf8_lossy(&r.stderr));

    // insufficient statistics: nothing ever crosses a 5 V threshold
    let blind = write_config(
        dir,
        "blind",
        "[source]\nkind = \"poisson\"\nmu = 1.0\n[disc]\nkind = \"threshold\"\nv_t_volts = 5.0\n[run]\nn_pulses = 10000\nseed = 1\n",
    );
    let r = hbt(&["--config", blind.to_str().unwrap(), "--out", out_s, "simulate"]);
    assert_eq!(code(&r), 5, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(!out.join("blind_simulate_manifest.toml").exists());

    // I/O: output directory below a regular file
    let file = dir.join("plain");
    fs::write(&file, "x").unwrap();
    let under = file.join("sub");
    let good = write_config(dir, "good", POISSON);
    let r = hbt(&[
        "--config",
        good.to_str().unwrap(),
        "--out",
        under.to_str().unwrap(),
        "analytic",
    ]);
    assert_eq!(code(&r), 6);

    assert_eq!(
        code(&hbt(&["--config", good.to_str().unwrap(), "--out", out_s, "analytic"])),
        0
    );
}

#[test]
fn simulate_is_deterministic_across_shards() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "poisson", POISSON);
    let cfg = cfg.to_str().unwrap();
    let mut outputs = Vec::new();
    for (i, shards) in ["1", "1", "3", "8"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let r = hbt(&[
            "--config",
            cfg,
            "--out",
            dir.to_str().unwrap(),
            "--shards",
            shards,
            "simulate",
        ]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        outputs.push((
            read(dir.join("poisson_histogram.csv")),
            read(dir.join("poisson_histogram.meta")),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    // flat histogram and gamma = 1 for coherent light
    let m = meta(tmp.path().join("run0/poisson_histogram.meta"));
    let gamma: f64 = m.get("gamma").unwrap().parse().unwrap();
    let stderr: f64 = m.get("gamma_stderr").unwrap().parse().unwrap();
    assert!((gamma - 1.0).abs() < 3.0 * stderr, "{gamma} +/- {stderr}");
}

#[test]
fn seed_precedence_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "poisson", POISSON);
    let cfg = cfg.to_str().unwrap();

    let a = tmp.path().join("a");
    assert_eq!(
        code(&hbt(&["--config", cfg, "--out", a.to_str().unwrap(), "simulate"])),
        0
    );
    let manifest: toml::Table = read(a.join("poisson_simulate_manifest.toml")).parse().unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(9));
    assert_eq!(manifest["seed_origin"].as_str(), Some("config"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        assert!(Path::new(o.as_str().unwrap()).exists());
    }

    let b = tmp.path().join("b");
    assert_eq!(
        code(&hbt(&[
            "--config",
            cfg,
            "--out",
            b.to_str().unwrap(),
            "--seed",
            "10",
            "simulate"
        ])),
        0
    );
    assert_eq!(meta(b.join("poisson_histogram.meta")).get("seed"), Some("10"));
    assert_ne!(
        read(a.join("poisson_histogram.csv")),
        read(b.join("poisson_histogram.csv"))
    );

    // no seed anywhere: drawn from entropy and recorded
    let unseeded = write_config(tmp.path(), "unseeded", &POISSON.replace("seed = 9\n", ""));
    let c = tmp.path().join("c");
    assert_eq!(
        code(&hbt(&[
            "--config",
            unseeded.to_str().unwrap(),
            "--out",
            c.to_str().unwrap(),
            "simulate"
        ])),
        0
    );
    let manifest: toml::Table = read(c.join("unseeded_simulate_manifest.toml")).parse().unwrap();
    assert_eq!(manifest["seed_origin"].as_str(), Some("entropy"));
    let seed = manifest["seed"].as_integer().unwrap() as u64;
    assert_eq!(
        meta(c.join("unseeded_histogram.meta")).get("seed"),
        Some(seed.to_string().as_str())
    );
}

#[test]
fn outputs_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "poisson", POISSON);
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    assert_eq!(
        code(&hbt(&["--config", cfg.to_str().unwrap(), "--out", out_s, "simulate"])),
        0
    );

    let csv = read(out.join("poisson_histogram.csv"));
    let sidecar = read(out.join("poisson_histogram.meta"));
    let t = Table::parse(csv.as_bytes()).unwrap();
    let m = Metadata::parse(sidecar.as_bytes()).unwrap();
    assert_eq!(t.to_text(), csv);
    assert_eq!(m.to_text(), sidecar);
    let hist = histogram_from_parts(&t, &m).unwrap();
    assert_eq!(histogram_table(&hist).to_text(), csv);
    assert_eq!(hist.counts.len(), 21);
    // rebuilding the sidecar from the parsed histogram reproduces the engine fields
    let mut rebuilt_cfg = hbt_core::ExperimentConfig::symmetric(
        hbt_core::SourceSpec::poisson(2.6).unwrap(),
        hbt_core::DetectorParams::reference(),
        hbt_core::Discriminator::threshold(0.065),
    );
    rebuilt_cfg.n_pulses = 2_000_000;
    rebuilt_cfg.seed = 9;
    let rebuilt = histogram_metadata(&rebuilt_cfg, &hist);
    for (k, v) in rebuilt.entries() {
        assert_eq!(m.get(k), Some(v.as_str()), "{k}");
    }

    let sweep_cfg = write_config(
        tmp.path(),
        "sw",
        "[source]\nkind = \"thermal\"\nmu = 1.0\n[sweep]\nmode = \"window-exact\"\nfixed_n = 2\nsettings = [1, 2, 3]\n",
    );
    assert_eq!(
        code(&hbt(&[
            "--config",
            sweep_cfg.to_str().unwrap(),
            "--out",
            out_s,
            "sweep"
        ])),
        0
    );
    let text = read(out.join("sw_window-exact.csv"));
    let t = Table::parse(text.as_bytes()).unwrap();
    assert_eq!(t.to_text(), text);
    let (points, err) = curve_from_table(&t).unwrap();
    assert!(err.is_none());
    // thermal light: binomial coefficients C(2 + n, 2)
    for ((n, g), want) in points.iter().zip([3.0, 6.0, 10.0]) {
        assert!((g - want).abs() < 1e-9, "n={n}: {g}");
    }
    assert_eq!(meta(out.join("sw_window-exact.meta")).get("mode"), Some("window-exact"));
}

#[test]
fn fixtures_are_idempotent_and_committed() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&hbt(&["fixtures", "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&hbt(&["fixtures", "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&hbt(&["fixtures", "--out", b.to_str().unwrap()])), 0);
    let committed = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(read(a.join(&n)), read(b.join(&n)));
        assert_eq!(read(a.join(&n)), read(committed.join(&n)));
    }
    assert!(read(a.join("thermal.csv")).contains("\ngamma_window,2,2,6.00000e0\n"));
}

#[test]
fn presets_match_library_parameters() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    for p in hbt_core::presets::presets() {
        let r = hbt(&["--preset", p.name, "--out", out, "analytic"]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        let m = meta(tmp.path().join(format!("{}_analytic.meta", p.name)));
        let (mu_s, mu_n) = p.source.components();
        assert_eq!(m.get("source.mu_s"), Some(mu_s.to_string().as_str()));
        assert_eq!(m.get("source.mu_n"), Some(mu_n.to_string().as_str()));
        assert_eq!(m.get("det1.eta"), Some(p.detector.eta.to_string().as_str()));
        assert_eq!(m.get("det1.v1_volts"), Some(p.detector.v1.to_string().as_str()));
        assert_eq!(m.get("det1.n_max"), Some(p.detector.n_max.to_string().as_str()));
    }
}

fn curve(path: impl AsRef<Path>) -> (Vec<(f64, f64)>, Option<Vec<f64>>) {
    curve_from_table(&table(path)).unwrap()
}

#[test]
fn ladder_sweep_ordering() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path();
    let r = hbt(&["--preset", "ladder", "--out", out.to_str().unwrap(), "sweep"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let g: Vec<Vec<f64>> = ["fml", "lnt", "lat"]
        .iter()
        .map(|s| {
            curve(out.join(format!("ladder_{s}_threshold-approx.csv")))
                .0
                .iter()
                .map(|p| p.1)
                .collect()
        })
        .collect();
    assert_eq!(g[0].len(), 7);
    for ((a, b), c) in g[0].iter().zip(&g[1]).zip(&g[2]) {
        assert!(a > b && b > c);
    }
}

#[test]
fn poisson_sweeps_are_flat() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "coh", POISSON);
    for mode in ["threshold-approx", "window-exact", "voltage"] {
        let r = hbt(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
            "sweep",
            "--mode",
            mode,
        ]);
        assert_eq!(code(&r), 0, "{mode}: {}", String::from_utf8_lossy(&r.stderr));
        let (points, _) = curve(tmp.path().join(format!("coh_{mode}.csv")));
        assert!(!points.is_empty());
        for (_, g) in points {
            assert!((g - 1.0).abs() < 1e-10, "{mode}: {g}");
        }
    }
}

#[test]
fn monte_carlo_sweep_matches_voltage_model() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "mc",
        r#"
[source]
kind = "mix"
mu = 2.8
g2 = 1.2

[disc1]
kind = "threshold"
v_t_volts = 0.19

[disc2]
kind = "threshold"
v_t_volts = 0.19

[run]
n_pulses = 3_000_000
seed = 4

[sweep]
settings = [0.065, 0.12, 0.19, 0.26]
"#,
    );
    let out = tmp.path().to_str().unwrap();
    for mode in ["voltage", "monte-carlo"] {
        let r = hbt(&["--config", cfg.to_str().unwrap(), "--out", out, "sweep", "--mode", mode]);
        assert_eq!(code(&r), 0, "{mode}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let (exact, none) = curve(tmp.path().join("mc_voltage.csv"));
    let (mc, err) = curve(tmp.path().join("mc_monte-carlo.csv"));
    assert!(none.is_none());
    let err = err.expect("stderr column");
    for i in 0..exact.len() {
        assert_eq!(exact[i].0, mc[i].0);
        assert!(
            (exact[i].1 - mc[i].1).abs() < 3.0 * err[i],
            "{:?} vs {:?} +/- {}",
            exact[i],
            mc[i],
            err[i]
        );
    }
}

#[test]
fn avalanche_histograms() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let body = |kind: &str| {
        format!(
            "[source]\nkind = \"{kind}\"\nmu = 2.8\n{}\n[detector]\nsigma1_volts = 0.0\nsigma0_volts = 0.0\n",
            if kind == "mix" { "g2 = 1.2" } else { "" }
        )
    };
    let ideal = write_config(tmp.path(), "ideal", &body("mix"));
    assert_eq!(
        code(&hbt(&[
            "--config",
            ideal.to_str().unwrap(),
            "--out",
            out,
            "avalanche-hist"
        ])),
        0
    );
    let t = table(tmp.path().join("ideal_avalanche.csv"));
    let rows: Vec<(f64, f64)> = t
        .rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert_eq!(rows.len(), 751);
    assert_eq!(rows[750].0, 0.75);
    // all mass sits on the grid points at the peak centres k * 0.13 V
    for &(v, f) in &rows {
        if f > 0.0 {
            let k = (v / 0.13).round();
            assert!((v - k * 0.13).abs() <= 0.0005 + 1e-12, "mass at {v}");
        }
    }
    let total: f64 = rows
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    // peaks above 0.75 V lie off the grid
    assert!(total > 0.999 && total <= 1.0 + 1e-9, "{total}");

    // broadened peaks: the mixture's 0-photon peak is higher than Poisson's at equal mu
    let mix = write_config(tmp.path(), "mix", "[source]\nkind = \"mix\"\nmu = 2.8\ng2 = 1.2\n");
    let poi = write_config(tmp.path(), "poi", "[source]\nkind = \"poisson\"\nmu = 2.8\n");
    for c in [&mix, &poi] {
        assert_eq!(
            code(&hbt(&["--config", c.to_str().unwrap(), "--out", out, "avalanche-hist"])),
            0
        );
    }
    let first = |name: &str| -> f64 { table(tmp.path().join(name)).rows[0][1].parse().unwrap() };
    assert!(first("mix_avalanche.csv") > first("poi_avalanche.csv"));
}

#[test]
fn high_thresholds_show_bunching_peak() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let r = hbt(&["--preset", "fml", "--seed", "1", "--out", out, "simulate"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let m = meta(tmp.path().join("fml_histogram.meta"));
    let gamma: f64 = m.get("gamma").unwrap().parse().unwrap();
    let stderr: f64 = m.get("gamma_stderr").unwrap().parse().unwrap();
    assert!(gamma - 3.0 * stderr > 1.2, "{gamma} +/- {stderr}");
    assert!(String::from_utf8_lossy(&r.stdout).contains("fml: gamma = "));
}
