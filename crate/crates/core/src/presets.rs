//! Named source/detector parameter sets for the three measured sources.

use crate::detector::DetectorParams;
use crate::source::SourceSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub mu: f64,
    pub g2: f64,
    pub source: SourceSpec<f64>,
    pub detector: DetectorParams<f64>,
}

const TABLE: [(&str, f64, f64); 3] = [
    ("fml", 2.8, 1.2),
    // the mean photon number of this source is not stated; assumed equal to lat
    ("lnt", 2.6, 1.075),
    ("lat", 2.6, 1.001),
];

pub fn presets() -> Vec<Preset> {
    TABLE
        .iter()
        .map(|&(name, mu, g2)| Preset {
            name,
            mu,
            g2,
            source: SourceSpec::mix_from_mu_g2(mu, g2).expect("valid preset"),
            detector: DetectorParams::reference(),
        })
        .collect()
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
