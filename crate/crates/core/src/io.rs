//! Plain-text outputs: comma-separated tables and `key=value` metadata
//! sidecars.
//!
//! Numbers are written with Rust's shortest round-trip formatting, `.` as
//! decimal separator and `\n` line endings, independent of locale.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::analytics::GammaCurve;
use crate::detector::{DetectorParams, Discriminator, Quench};
use crate::engine::{CoincidenceHistogram, ExperimentConfig, GammaResult, GENERATOR};
use crate::error::{Error, Result};
use crate::source::SourceSpec;

/// Ordered key-value metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value.
    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string().replace(['\n', '\r'], " ");
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, other: &Metadata) {
        for (k, v) in &other.entries {
            self.insert(k.clone(), v);
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("metadata is utf-8")
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut meta = Metadata::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("metadata line {}: missing '='", lineno + 1)))?;
            meta.insert(k, v);
        }
        Ok(meta)
    }

    fn parse_field<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Parse(format!("metadata key '{key}' missing")))?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("metadata key '{key}': bad value '{raw}'")))
    }
}

/// A header plus string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    /// Reads a table, skipping `#` comment lines before the header.
    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.starts_with('#') {
                        break line;
                    }
                }
                None => return Err(Error::Parse("empty table".into())),
            }
        };
        let header: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row '{line}' has {} cells, expected {}",
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header != expected {
            return Err(Error::Parse(format!(
                "expected header {expected:?}, got {:?}",
                self.header
            )));
        }
        Ok(())
    }

    fn column<T: std::str::FromStr>(&self, col: usize) -> Result<Vec<T>> {
        self.rows
            .iter()
            .map(|r| {
                r[col]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad cell '{}'", r[col])))
            })
            .collect()
    }
}

/// `delay,count` table.
pub fn histogram_table(hist: &CoincidenceHistogram) -> Table {
    let mut t = Table::new(&["delay", "count"]);
    for (d, c) in hist.iter() {
        t.push(vec![d.to_string(), c.to_string()]);
    }
    t
}

/// Rebuilds a histogram from its table and sidecar.
pub fn histogram_from_parts(table: &Table, meta: &Metadata) -> Result<CoincidenceHistogram> {
    table.expect_header(&["delay", "count"])?;
    let delays: Vec<i64> = table.column(0)?;
    let counts: Vec<u64> = table.column(1)?;
    let max_delay: usize = meta.parse_field("max_delay")?;
    let expected: Vec<i64> = (-(max_delay as i64)..=max_delay as i64).collect();
    if delays != expected {
        return Err(Error::Parse(
            "histogram delays do not cover -max_delay..=max_delay".into(),
        ));
    }
    Ok(CoincidenceHistogram {
        max_delay,
        counts,
        singles1: meta.parse_field("singles1")?,
        singles2: meta.parse_field("singles2")?,
        n_pulses: meta.parse_field("n_pulses")?,
    })
}

pub fn describe_source(source: &SourceSpec<f64>, meta: &mut Metadata, prefix: &str) {
    meta.insert(format!("{prefix}kind"), source.kind());
    let (mu_s, mu_n) = source.components();
    meta.insert(format!("{prefix}mu"), source.mean());
    meta.insert(format!("{prefix}mu_s"), mu_s);
    meta.insert(format!("{prefix}mu_n"), mu_n);
}

pub fn describe_detector(det: &DetectorParams<f64>, meta: &mut Metadata, prefix: &str) {
    meta.insert(format!("{prefix}eta"), det.eta);
    meta.insert(format!("{prefix}v1_volts"), det.v1);
    meta.insert(format!("{prefix}sigma1_volts"), det.sigma1);
    meta.insert(format!("{prefix}sigma0_volts"), det.sigma0);
    meta.insert(format!("{prefix}n_max"), det.n_max);
    let quench = match det.quench {
        Quench::Linear => "linear".to_string(),
        Quench::Saturating { v_sat } => format!("saturating:{v_sat}"),
    };
    meta.insert(format!("{prefix}quench"), quench);
}

pub fn describe_disc(disc: &Discriminator<f64>) -> String {
    match *disc {
        Discriminator::Threshold { v_t } => format!("threshold:{v_t}"),
        Discriminator::Window { v_lo, v_hi } => format!("window:{v_lo}:{v_hi}"),
    }
}

/// Sidecar for a simulated histogram.
pub fn histogram_metadata(config: &ExperimentConfig, hist: &CoincidenceHistogram) -> Metadata {
    let mut m = Metadata::new();
    m.insert("artifact", "hbt");
    m.insert("version", crate::VERSION);
    m.insert("generator", GENERATOR);
    m.insert("seed", config.seed);
    m.insert("n_pulses", hist.n_pulses);
    m.insert("max_delay", hist.max_delay);
    m.insert("singles1", hist.singles1);
    m.insert("singles2", hist.singles2);
    m.insert("split", config.split);
    describe_source(&config.source, &mut m, "source.");
    describe_detector(&config.det1, &mut m, "det1.");
    describe_detector(&config.det2, &mut m, "det2.");
    m.insert("disc1", describe_disc(&config.disc1));
    m.insert("disc2", describe_disc(&config.disc2));
    m
}

/// One-line summary of an estimate.
pub fn gamma_summary(label: &str, g: &GammaResult) -> String {
    let mut s = String::new();
    write!(
        s,
        "{label}: gamma = {:.6} +/- {:.6} (peak {}, accidental mean {:.3} over {} bins, {} pulses)",
        g.gamma, g.stderr, g.peak_count, g.accidental_mean, g.accidental_bins, g.n_pulses
    )
    .expect("formatting to string");
    s
}

/// `setting,gamma` or `setting,gamma,stderr` table.
pub fn curve_table(points: &[(f64, f64)], stderr: Option<&[f64]>) -> Table {
    let mut t = match stderr {
        Some(_) => Table::new(&["setting", "gamma", "stderr"]),
        None => Table::new(&["setting", "gamma"]),
    };
    for (i, (s, g)) in points.iter().enumerate() {
        let mut row = vec![s.to_string(), g.to_string()];
        if let Some(e) = stderr {
            row.push(e[i].to_string());
        }
        t.push(row);
    }
    t
}

/// `(setting, gamma)` points and the optional stderr column.
pub type CurveColumns = (Vec<(f64, f64)>, Option<Vec<f64>>);

pub fn curve_from_table(table: &Table) -> Result<CurveColumns> {
    let with_err = table.header.len() == 3;
    if with_err {
        table.expect_header(&["setting", "gamma", "stderr"])?;
    } else {
        table.expect_header(&["setting", "gamma"])?;
    }
    let s: Vec<f64> = table.column(0)?;
    let g: Vec<f64> = table.column(1)?;
    let e = if with_err { Some(table.column(2)?) } else { None };
    Ok((s.into_iter().zip(g).collect(), e))
}

pub fn curve_metadata(curve: &GammaCurve<f64>) -> Metadata {
    let mut m = Metadata::new();
    m.insert("artifact", "hbt");
    m.insert("version", crate::VERSION);
    m.insert("mode", curve.mode.name());
    let axis = match curve.mode {
        crate::analytics::CurveMode::VoltageModel => "detector-2 threshold, volts",
        _ => "detector-2 photon number",
    };
    m.insert("setting_axis", axis);
    m.insert(
        "plot_hint",
        "reciprocal setting axis compresses the high-photon-number end",
    );
    m
}

pub fn density_table(grid: &[f64], density: &[f64]) -> Table {
    let mut t = Table::new(&["voltage", "density"]);
    for (v, f) in grid.iter().zip(density) {
        t.push(vec![v.to_string(), f.to_string()]);
    }
    t
}
