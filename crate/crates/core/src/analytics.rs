//! Closed-form correlation functions and exact click statistics.
//!
//! These are the reference values the Monte Carlo is checked against:
//! normalized correlations `g(n)`, the higher-order coincidence
//! `gamma(n1 + n2) = g(n1 + n2) / (g(n1) g(n2))`, its efficiency-weighted
//! threshold form, and exact single/coincidence click probabilities of the
//! two-detector interferometer.

use rayon::prelude::*;

use crate::detector::{DetectorParams, Discriminator};
use crate::error::{Error, Result};
use crate::quadrature::{expect_over_intensity, QuadratureSettings};
use crate::scalar::{from_usize, ln_factorial, Real};
use crate::source::SourceSpec;

/// Normalized, normally ordered correlation `<a^dag^n a^n> / <a^dag a>^n`.
pub fn g_order<T: Real>(source: &SourceSpec<T>, n: usize) -> Result<T> {
    source.validate()?;
    if n == 0 {
        return Err(Error::Domain("correlation order must be >= 1".into()));
    }
    let mean = source.mean();
    if mean <= T::zero() {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(source.factorial_moment(n) / mean.powi(n as i32))
}

/// Higher-order coincidence for window discriminators centred on `n1` and
/// `n2` photons.
pub fn gamma_window<T: Real>(source: &SourceSpec<T>, n1: usize, n2: usize) -> Result<T> {
    let joint = g_order(source, n1 + n2)?;
    Ok(joint / (g_order(source, n1)? * g_order(source, n2)?))
}

/// Higher-order coincidence for threshold discriminators: every photon
/// number from `n_min` up to `n_max` is accepted, each weighted by
/// `eta^n`. Reduces to [`gamma_window`] at the lowest accepted numbers as the
/// efficiencies go to zero.
pub fn gamma_threshold<T: Real>(
    source: &SourceSpec<T>,
    eta1: T,
    eta2: T,
    n1_min: usize,
    n2_min: usize,
    n_max: usize,
) -> Result<T> {
    source.validate()?;
    if n1_min < 1 || n2_min < 1 || n1_min > n_max || n2_min > n_max {
        return Err(Error::Domain(format!(
            "empty summation range: n1_min={n1_min}, n2_min={n2_min}, n_max={n_max}"
        )));
    }
    for eta in [eta1, eta2] {
        if !(eta > T::zero() && eta <= T::one()) {
            return Err(Error::Domain(format!("efficiency must lie in (0, 1], got {eta}")));
        }
    }
    let moments: Vec<T> = (0..=2 * n_max).map(|k| source.factorial_moment(k)).collect();
    let mut numerator = T::zero();
    let mut denominator = T::zero();
    for n1 in n1_min..=n_max {
        for n2 in n2_min..=n_max {
            let weight = eta1.powi(n1 as i32) * eta2.powi(n2 as i32);
            numerator = numerator + moments[n1 + n2] * weight;
            denominator = denominator + moments[n1] * moments[n2] * weight;
        }
    }
    if denominator <= T::zero() {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(numerator / denominator)
}

/// Same-pulse coincidence and singles click probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbabilities<T> {
    pub coincidence: T,
    pub singles1: T,
    pub singles2: T,
}

impl<T: Real> ClickProbabilities<T> {
    pub fn gamma(&self) -> Result<T> {
        gamma_from_clicks(self.coincidence, self.singles1, self.singles2)
    }
}

/// One arm of the interferometer: its detector, discriminator and the
/// fraction of the beam reaching it.
#[derive(Debug, Clone, Copy)]
pub struct Arm<'a, T> {
    pub detector: &'a DetectorParams<T>,
    pub disc: &'a Discriminator<T>,
    pub transmission: T,
}

impl<T: Real> Arm<'_, T> {
    fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.disc.validate()
    }

    /// Mean detected photons per unit intensity.
    fn rate(&self) -> T {
        self.detector.eta * self.transmission
    }

    fn masses(&self) -> Vec<T> {
        (0..=self.detector.n_max)
            .map(|k| self.detector.peak_mass(k, self.disc))
            .collect()
    }
}

/// Click probability of one arm for a Poisson mean `m` of detected photons;
/// counts at or beyond `n_max` share the last mass entry.
fn conditional_click<T: Real>(m: T, masses: &[T]) -> T {
    let n_max = masses.len() - 1;
    if m <= T::zero() {
        return masses[0];
    }
    let mut term = (-m).exp();
    let mut below = T::zero();
    let mut click = T::zero();
    for (k, &mass) in masses.iter().enumerate().take(n_max) {
        below = below + term;
        click = click + term * mass;
        term = term * m / from_usize(k + 1);
    }
    // direct upper-tail sum keeps precision when only the top peak clicks
    let mut tail = T::zero();
    let mut k = n_max;
    loop {
        tail = tail + term;
        k += 1;
        term = term * m / from_usize(k);
        if (from_usize::<T>(k) > m && term <= tail * T::epsilon()) || term == T::zero() || k > 100_000 {
            break;
        }
    }
    let tail = tail.min(T::one() - below).max(T::zero());
    click + tail * masses[n_max]
}

/// Exact click probabilities of the interferometer.
///
/// Given the pulse intensity `W`, the detected counts of the two arms are
/// independent Poisson variables with means `eta_i t_i W` (the total count
/// split binomially and thinned binomially), so each arm clicks with a
/// Poisson-weighted sum of Gaussian discriminator masses. Non-Poisson
/// sources are averaged over `W` by quadrature.
pub fn joint_click_probability<T: Real>(
    source: &SourceSpec<T>,
    arm1: Arm<'_, T>,
    arm2: Arm<'_, T>,
    quad: &QuadratureSettings,
) -> Result<ClickProbabilities<T>> {
    arm1.validate()?;
    arm2.validate()?;
    let (m1, m2) = (arm1.masses(), arm2.masses());
    let (r1, r2) = (arm1.rate(), arm2.rate());
    let values = expect_over_intensity(source, quad, 3, T::zero(), |w, out| {
        let c1 = conditional_click(r1 * w, &m1);
        let c2 = conditional_click(r2 * w, &m2);
        out[0] = c1 * c2;
        out[1] = c1;
        out[2] = c2;
    })?;
    Ok(ClickProbabilities {
        coincidence: values[0],
        singles1: values[1],
        singles2: values[2],
    })
}

/// Convenience wrapper for a beamsplitter with transmission `split` into arm 1.
#[allow(clippy::too_many_arguments)]
pub fn joint_click_probability_split<T: Real>(
    source: &SourceSpec<T>,
    det1: &DetectorParams<T>,
    det2: &DetectorParams<T>,
    disc1: &Discriminator<T>,
    disc2: &Discriminator<T>,
    split: T,
    quad: &QuadratureSettings,
) -> Result<ClickProbabilities<T>> {
    if !(split > T::zero() && split < T::one()) {
        return Err(Error::Domain(format!(
            "beamsplitter transmission must lie in (0, 1), got {split}"
        )));
    }
    joint_click_probability(
        source,
        Arm {
            detector: det1,
            disc: disc1,
            transmission: split,
        },
        Arm {
            detector: det2,
            disc: disc2,
            transmission: T::one() - split,
        },
        quad,
    )
}

/// Zero-delay coincidences over accidentals: `P_coinc / (P1 P2)`.
pub fn gamma_from_clicks<T: Real>(coincidence: T, singles1: T, singles2: T) -> Result<T> {
    let denom = singles1 * singles2;
    if !(denom > T::zero()) {
        return Err(Error::InsufficientStatistics(
            "singles probability product is zero".into(),
        ));
    }
    Ok(coincidence / denom)
}

/// `[k1][k2]` joint detected-count distribution by explicit enumeration:
/// total photon number from the truncated pmf, binomial beamsplitter, then
/// binomial loss on each arm. Entries run over `0..=n_trunc` for both arms.
pub fn joint_count_pmf_split<T: Real>(
    source: &SourceSpec<T>,
    eta1: T,
    eta2: T,
    split: T,
    n_trunc: usize,
) -> Result<Vec<Vec<T>>> {
    let pmf = source.pmf(n_trunc)?;
    let ln_fact: Vec<T> = (0..=n_trunc).map(ln_factorial::<T>).collect();
    let binom_row = |n: usize, p: T| -> Vec<T> {
        if p <= T::zero() {
            let mut row = vec![T::zero(); n + 1];
            row[0] = T::one();
            return row;
        }
        if p >= T::one() {
            let mut row = vec![T::zero(); n + 1];
            row[n] = T::one();
            return row;
        }
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        (0..=n)
            .map(|k| {
                (ln_fact[n] - ln_fact[k] - ln_fact[n - k] + from_usize::<T>(k) * lp + from_usize::<T>(n - k) * lq).exp()
            })
            .collect()
    };
    let thin1: Vec<Vec<T>> = (0..=n_trunc).map(|n| binom_row(n, eta1)).collect();
    let thin2: Vec<Vec<T>> = (0..=n_trunc).map(|n| binom_row(n, eta2)).collect();

    let mut joint = vec![vec![T::zero(); n_trunc + 1]; n_trunc + 1];
    for (n, &p) in pmf.probs.iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        for (n1, &b) in binom_row(n, split).iter().enumerate() {
            let w = p * b;
            if w == T::zero() {
                continue;
            }
            let (a1, a2) = (&thin1[n1], &thin2[n - n1]);
            for (k1, &x) in a1.iter().enumerate() {
                let wx = w * x;
                for (k2, &y) in a2.iter().enumerate() {
                    joint[k1][k2] = joint[k1][k2] + wx * y;
                }
            }
        }
    }
    Ok(joint)
}

/// `[k1][k2]` joint detected-count distribution from the conditional
/// independence of the arms given the intensity: `E_W[Pois(k1; eta1 t W)
/// Pois(k2; eta2 (1-t) W)]` for `k1, k2 <= k_max`. Quadrature convergence is
/// measured in absolute probability.
pub fn joint_count_pmf_conditional<T: Real>(
    source: &SourceSpec<T>,
    eta1: T,
    eta2: T,
    split: T,
    k_max: usize,
    quad: &QuadratureSettings,
) -> Result<Vec<Vec<T>>> {
    let (r1, r2) = (eta1 * split, eta2 * (T::one() - split));
    let side = k_max + 1;
    let poisson_row = |m: T| -> Vec<T> {
        let mut row = Vec::with_capacity(side);
        let mut p = (-m).exp();
        for k in 0..side {
            row.push(p);
            p = p * m / from_usize(k + 1);
        }
        row
    };
    let flat = expect_over_intensity(source, quad, side * side, T::one(), |w, out| {
        let a = poisson_row(r1 * w);
        let b = poisson_row(r2 * w);
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i * side + j] = x * y;
            }
        }
    })?;
    Ok(flat.chunks(side).map(|row| row.to_vec()).collect())
}

/// How a [`GammaCurve`] was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveMode {
    /// [`gamma_window`] against the photon-number index of detector 2.
    WindowExact,
    /// [`gamma_threshold`] against the lowest accepted photon number of detector 2.
    ThresholdApprox,
    /// Exact click probabilities against the detector-2 threshold voltage.
    VoltageModel,
}

impl CurveMode {
    pub fn name(&self) -> &'static str {
        match self {
            CurveMode::WindowExact => "window-exact",
            CurveMode::ThresholdApprox => "threshold-approx",
            CurveMode::VoltageModel => "voltage",
        }
    }
}

/// Sweep definition: detector 1 is held fixed, detector 2 runs over a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep<T> {
    Window {
        n1: usize,
        n2: Vec<usize>,
    },
    Threshold {
        n1_min: usize,
        n2_min: Vec<usize>,
    },
    Voltage {
        disc1: Discriminator<T>,
        thresholds2: Vec<T>,
    },
}

impl<T> Sweep<T> {
    pub fn mode(&self) -> CurveMode {
        match self {
            Sweep::Window { .. } => CurveMode::WindowExact,
            Sweep::Threshold { .. } => CurveMode::ThresholdApprox,
            Sweep::Voltage { .. } => CurveMode::VoltageModel,
        }
    }

    fn len(&self) -> usize {
        match self {
            Sweep::Window { n2, .. } => n2.len(),
            Sweep::Threshold { n2_min, .. } => n2_min.len(),
            Sweep::Voltage { thresholds2, .. } => thresholds2.len(),
        }
    }
}

/// `(setting, gamma)` pairs ordered by setting.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCurve<T> {
    pub mode: CurveMode,
    pub points: Vec<(T, T)>,
}

impl<T: Real> GammaCurve<T> {
    pub fn gammas(&self) -> Vec<T> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

/// Evaluates a gamma curve; grid points are computed in parallel and
/// returned in setting order.
pub fn sweep_gamma<T: Real>(
    source: &SourceSpec<T>,
    det1: &DetectorParams<T>,
    det2: &DetectorParams<T>,
    split: T,
    sweep: &Sweep<T>,
    quad: &QuadratureSettings,
) -> Result<GammaCurve<T>> {
    if sweep.len() == 0 {
        return Err(Error::Domain("sweep grid is empty".into()));
    }
    let mut points: Vec<(T, T)> = match sweep {
        Sweep::Window { n1, n2 } => n2
            .par_iter()
            .map(|&n| Ok((from_usize(n), gamma_window(source, *n1, n)?)))
            .collect::<Result<_>>()?,
        Sweep::Threshold { n1_min, n2_min } => {
            let n_max = det1.n_max.min(det2.n_max);
            n2_min
                .par_iter()
                .map(|&n| {
                    let g = gamma_threshold(source, det1.eta, det2.eta, *n1_min, n, n_max)?;
                    Ok((from_usize(n), g))
                })
                .collect::<Result<_>>()?
        }
        Sweep::Voltage { disc1, thresholds2 } => thresholds2
            .par_iter()
            .map(|&v| {
                let disc2 = Discriminator::threshold(v);
                let clicks = joint_click_probability_split(source, det1, det2, disc1, &disc2, split, quad)?;
                Ok((v, clicks.gamma()?))
            })
            .collect::<Result<_>>()?,
    };
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(GammaCurve {
        mode: sweep.mode(),
        points,
    })
}
