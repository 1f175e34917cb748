//! Golden reference values computed by brute-force sums over truncated
//! photon-number distributions (never through the closed-form moments).

use crate::error::Result;
use crate::presets::presets;
use crate::source::SourceSpec;

/// Truncation used for the committed fixtures.
pub const FIXTURE_TRUNCATION: usize = 200;

/// Efficiency and photon-number cap of the threshold-sweep fixtures.
pub const FIXTURE_ETA: f64 = 0.17;
pub const FIXTURE_N_MAX: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSource {
    pub name: &'static str,
    pub source: SourceSpec<f64>,
    /// Largest photon number per detector in the window table.
    pub window_max: usize,
    pub threshold_sweep: bool,
}

pub fn fixture_sources() -> Vec<FixtureSource> {
    let mut out = vec![
        FixtureSource {
            name: "thermal",
            source: SourceSpec::Thermal { mu: 1.0 },
            window_max: 4,
            threshold_sweep: false,
        },
        FixtureSource {
            name: "poisson",
            source: SourceSpec::Poisson { mu: 2.6 },
            window_max: 4,
            threshold_sweep: false,
        },
    ];
    out.extend(presets().into_iter().map(|p| FixtureSource {
        name: p.name,
        source: p.source,
        window_max: 7,
        threshold_sweep: true,
    }));
    out
}

/// One fixture row: quantity, first index, optional second index, value.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureValue {
    pub quantity: &'static str,
    pub a: usize,
    pub b: Option<usize>,
    pub value: f64,
}

/// Brute-force values for one source at truncation `n_trunc`.
pub fn fixture_values(fs: &FixtureSource, n_trunc: usize) -> Result<Vec<FixtureValue>> {
    let pmf = fs.source.pmf(n_trunc)?;
    let top = 2 * fs.window_max.max(FIXTURE_N_MAX);
    let moments: Vec<f64> = (0..=top).map(|k| pmf.factorial_moment(k)).collect();
    let g = |k: usize| moments[k] / moments[1].powi(k as i32);

    let mut out = Vec::new();
    for (k, &m) in moments.iter().enumerate().take(2 * fs.window_max + 1).skip(1) {
        out.push(FixtureValue {
            quantity: "factorial_moment",
            a: k,
            b: None,
            value: m,
        });
    }
    for k in 1..=2 * fs.window_max {
        out.push(FixtureValue {
            quantity: "g",
            a: k,
            b: None,
            value: g(k),
        });
    }
    for n1 in 1..=fs.window_max {
        for n2 in 1..=fs.window_max {
            let value = g(n1 + n2) / (g(n1) * g(n2));
            out.push(FixtureValue {
                quantity: "gamma_window",
                a: n1,
                b: Some(n2),
                value,
            });
        }
    }
    if fs.threshold_sweep {
        let n1_min = FIXTURE_N_MAX;
        for n2_min in 1..=FIXTURE_N_MAX {
            let (mut num, mut den) = (0.0, 0.0);
            for n1 in n1_min..=FIXTURE_N_MAX {
                for n2 in n2_min..=FIXTURE_N_MAX {
                    let w = FIXTURE_ETA.powi((n1 + n2) as i32);
                    num += moments[n1 + n2] * w;
                    den += moments[n1] * moments[n2] * w;
                }
            }
            out.push(FixtureValue {
                quantity: "gamma_threshold",
                a: n1_min,
                b: Some(n2_min),
                value: num / den,
            });
        }
    }
    Ok(out)
}

/// Six significant figures.
pub fn format_sig6(v: f64) -> String {
    format!("{v:.5e}")
}

/// `(file name, contents)` for every fixture file.
pub fn render_fixtures() -> Result<Vec<(String, String)>> {
    fixture_sources()
        .iter()
        .map(|fs| {
            let (mu_s, mu_n) = fs.source.components();
            let mut text = format!(
                "# hbt golden fixture '{}' (hbt-core {})\n\
                 # source: kind={} mu_s={} mu_n={}\n\
                 # provenance: brute-force sums over the pmf truncated at n={}; \
                 gamma_threshold uses eta={} n_max={} n1_min={}; 6 significant figures\n\
                 quantity,n1,n2,value\n",
                fs.name,
                crate::VERSION,
                fs.source.kind(),
                mu_s,
                mu_n,
                FIXTURE_TRUNCATION,
                FIXTURE_ETA,
                FIXTURE_N_MAX,
                FIXTURE_N_MAX,
            );
            for v in fixture_values(fs, FIXTURE_TRUNCATION)? {
                let b = v.b.map(|b| b.to_string()).unwrap_or_default();
                text.push_str(&format!("{},{},{},{}\n", v.quantity, v.a, b, format_sig6(v.value)));
            }
            Ok((format!("{}.csv", fs.name), text))
        })
        .collect()
}
