//! Photon-number-resolving APD response: binomial loss, avalanche-voltage
//! peaks and discriminator decisions.
//!
//! A detected count `k` produces an avalanche whose height is Gaussian around
//! [`DetectorParams::peak_center`] with width `sigma1 * sqrt(k)` (the `k = 0`
//! electronic noise peak has width `sigma0`). Counts above `n_max` land on
//! the `n_max` peak.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, ln_factorial, Real};
use crate::source::PhotonPmf;

/// Peak-center model for large avalanches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quench<T> {
    /// Centers at `k * v1`.
    Linear,
    /// Centers at `v_sat * (1 - exp(-k v1 / v_sat))`, compressing large
    /// avalanches towards `v_sat`.
    Saturating { v_sat: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams<T> {
    /// Detection efficiency.
    pub eta: T,
    /// One-photon peak center, volts.
    pub v1: T,
    /// One-photon peak standard deviation, volts. Zero selects ideal,
    /// non-overlapping peaks.
    pub sigma1: T,
    /// Noise (zero-photon) peak standard deviation, volts.
    pub sigma0: T,
    /// Largest resolvable photon number.
    pub n_max: usize,
    pub quench: Quench<T>,
}

impl<T: Real> DetectorParams<T> {
    pub fn new(eta: T, v1: T, sigma1: T, sigma0: T, n_max: usize, quench: Quench<T>) -> Result<Self> {
        let p = DetectorParams {
            eta,
            v1,
            sigma1,
            sigma0,
            n_max,
            quench,
        };
        p.validate()?;
        Ok(p)
    }

    /// eta = 0.17, v1 = 0.13 V (two-photon peak at 0.26 V), sigma1 = 25 mV,
    /// sigma0 = sigma1 / 2, n_max = 7, linear peaks.
    pub fn reference() -> Self {
        DetectorParams {
            eta: lit(0.17),
            v1: lit(0.13),
            sigma1: lit(0.025),
            sigma0: lit(0.0125),
            n_max: 7,
            quench: Quench::Linear,
        }
    }

    pub fn with_eta(mut self, eta: T) -> Self {
        self.eta = eta;
        self
    }

    /// Same detector with zero-width peaks.
    pub fn ideal(mut self) -> Self {
        self.sigma0 = T::zero();
        self.sigma1 = T::zero();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if !(self.eta >= T::zero() && self.eta <= T::one()) {
            return fail(format!("efficiency must lie in [0, 1], got {}", self.eta));
        }
        if !(self.v1 > T::zero() && self.v1.is_finite()) {
            return fail(format!("one-photon peak voltage must be > 0, got {}", self.v1));
        }
        for (name, s) in [("sigma1", self.sigma1), ("sigma0", self.sigma0)] {
            if !(s >= T::zero() && s.is_finite()) {
                return fail(format!("{name} must be finite and >= 0, got {s}"));
            }
        }
        if self.n_max < 1 {
            return fail("n_max must be at least 1".into());
        }
        if let Quench::Saturating { v_sat } = self.quench {
            if !(v_sat > T::zero() && v_sat.is_finite()) {
                return fail(format!("saturation voltage must be > 0, got {v_sat}"));
            }
        }
        Ok(())
    }

    /// Mean avalanche voltage for `k` detected photons.
    pub fn peak_center(&self, k: usize) -> Result<T> {
        if k > self.n_max {
            return Err(Error::OutOfRange { k, n_max: self.n_max });
        }
        Ok(self.center_unchecked(k))
    }

    fn center_unchecked(&self, k: usize) -> T {
        let linear = from_usize::<T>(k) * self.v1;
        match self.quench {
            Quench::Linear => linear,
            Quench::Saturating { v_sat } => -v_sat * (-linear / v_sat).exp_m1(),
        }
    }

    /// Peak standard deviation for `k` detected photons (clamped to `n_max`).
    pub fn peak_width(&self, k: usize) -> T {
        match self.clamp(k) {
            0 => self.sigma0,
            k => self.sigma1 * from_usize::<T>(k).sqrt(),
        }
    }

    /// Photon numbers beyond `n_max` share the `n_max` peak.
    pub fn clamp(&self, k: usize) -> usize {
        k.min(self.n_max)
    }

    /// Draws an avalanche voltage for `k` detected photons.
    pub fn avalanche_voltage<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> T {
        let k = self.clamp(k);
        let center = self.center_unchecked(k);
        let width = self.peak_width(k);
        if width == T::zero() {
            center
        } else {
            center + width * T::standard_normal(rng)
        }
    }

    /// Probability that an avalanche from `k` detected photons passes `disc`.
    pub fn peak_mass(&self, k: usize, disc: &Discriminator<T>) -> T {
        let k = self.clamp(k);
        disc.gaussian_mass(self.center_unchecked(k), self.peak_width(k))
    }

    /// Weight of each resolvable peak, `0..=n_max`, for an incident pmf.
    pub fn peak_weights(&self, pmf: &PhotonPmf<T>) -> Vec<T> {
        let detected = detected_pmf(pmf, self.eta);
        let mut weights = vec![T::zero(); self.n_max + 1];
        for (k, &q) in detected.probs.iter().enumerate() {
            let slot = self.clamp(k);
            weights[slot] = weights[slot] + q;
        }
        weights
    }

    /// Avalanche-voltage probability density on `grid`.
    ///
    /// Zero-width peaks are deposited on the nearest grid point as
    /// weight / cell width, so the trapezoid integral still carries their mass.
    pub fn avalanche_density(&self, pmf: &PhotonPmf<T>, grid: &[T]) -> Result<Vec<T>> {
        if grid.is_empty() {
            return Err(Error::Domain("voltage grid is empty".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("voltage grid must be strictly increasing".into()));
        }
        let weights = self.peak_weights(pmf);
        let mut density = vec![T::zero(); grid.len()];
        let norm = T::one() / (lit::<T>(2.0) * T::PI()).sqrt();
        for (k, &w) in weights.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let center = self.center_unchecked(k);
            let width = self.peak_width(k);
            if width > T::zero() {
                for (d, &v) in density.iter_mut().zip(grid) {
                    let z = (v - center) / width;
                    *d = *d + w * norm / width * (-z * z / lit(2.0)).exp();
                }
            } else if let Some((i, cell)) = nearest_cell(grid, center) {
                density[i] = density[i] + w / cell;
            }
        }
        Ok(density)
    }

    /// Probability that one pulse with the given incident distribution
    /// produces a click.
    pub fn click_probability(&self, pmf: &PhotonPmf<T>, disc: &Discriminator<T>) -> T {
        self.peak_weights(pmf)
            .iter()
            .enumerate()
            .map(|(k, &w)| w * self.peak_mass(k, disc))
            .sum()
    }
}

/// Index of the grid cell containing `v`, with that cell's width. Cells are
/// bounded by midpoints between grid points; the end cells are half-width
/// on the outside, matching the trapezoid rule.
fn nearest_cell<T: Real>(grid: &[T], v: T) -> Option<(usize, T)> {
    let n = grid.len();
    if n == 1 {
        return None;
    }
    let half = lit::<T>(0.5);
    let lower_edge = grid[0];
    let upper_edge = grid[n - 1];
    if v < lower_edge || v > upper_edge {
        return None;
    }
    let i = match grid.iter().position(|&g| g >= v) {
        Some(0) => 0,
        Some(i) if v - grid[i - 1] < grid[i] - v => i - 1,
        Some(i) => i,
        None => n - 1,
    };
    let left = if i == 0 {
        T::zero()
    } else {
        (grid[i] - grid[i - 1]) * half
    };
    let right = if i == n - 1 {
        T::zero()
    } else {
        (grid[i + 1] - grid[i]) * half
    };
    Some((i, left + right))
}

/// Selection rule applied to avalanche voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discriminator<T> {
    /// Accepts `v > v_t`.
    Threshold { v_t: T },
    /// Accepts `v_lo < v <= v_hi`.
    Window { v_lo: T, v_hi: T },
}

impl<T: Real> Discriminator<T> {
    pub fn threshold(v_t: T) -> Self {
        Discriminator::Threshold { v_t }
    }

    pub fn window(v_lo: T, v_hi: T) -> Result<Self> {
        let d = Discriminator::Window { v_lo, v_hi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Discriminator::Threshold { v_t } if v_t.is_nan() => Err(Error::Domain("threshold is NaN".into())),
            Discriminator::Window { v_lo, v_hi } if !(v_lo < v_hi) => Err(Error::Domain(format!(
                "window requires v_lo < v_hi, got [{v_lo}, {v_hi}]"
            ))),
            _ => Ok(()),
        }
    }

    pub fn accepts(&self, v: T) -> bool {
        match *self {
            Discriminator::Threshold { v_t } => v > v_t,
            Discriminator::Window { v_lo, v_hi } => v > v_lo && v <= v_hi,
        }
    }

    /// Mass of `Normal(center, sigma)` accepted by this discriminator,
    /// from the complementary error function so far tails stay accurate.
    pub fn gaussian_mass(&self, center: T, sigma: T) -> T {
        match *self {
            Discriminator::Threshold { v_t } => upper_tail(v_t, center, sigma),
            Discriminator::Window { v_lo, v_hi } => upper_tail(v_lo, center, sigma) - upper_tail(v_hi, center, sigma),
        }
    }
}

/// `P(V > v)` for `V ~ Normal(center, sigma)`.
fn upper_tail<T: Real>(v: T, center: T, sigma: T) -> T {
    if sigma == T::zero() {
        return if center > v { T::one() } else { T::zero() };
    }
    lit::<T>(0.5) * ((v - center) / (sigma * T::SQRT_2())).erfc()
}

/// Binomial loss: each of `n` photons is detected with probability `eta`.
pub fn thin<T: Real, R: Rng + ?Sized>(n: u64, eta: T, rng: &mut R) -> u64 {
    let p = eta.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

/// Distribution of detected photons after binomial loss with efficiency `eta`.
pub fn detected_pmf<T: Real>(pmf: &PhotonPmf<T>, eta: T) -> PhotonPmf<T> {
    let n_trunc = pmf.n_trunc();
    let mut out = vec![T::zero(); n_trunc + 1];
    if eta <= T::zero() {
        out[0] = pmf.probs.iter().copied().sum();
    } else if eta >= T::one() {
        out.copy_from_slice(&pmf.probs);
    } else {
        let ln_eta = eta.ln();
        let ln_loss = (-eta).ln_1p();
        let ln_fact: Vec<T> = (0..=n_trunc).map(ln_factorial::<T>).collect();
        for (n, &p) in pmf.probs.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            for (k, q) in out.iter_mut().enumerate().take(n + 1) {
                let ln_binom = ln_fact[n] - ln_fact[k] - ln_fact[n - k]
                    + from_usize::<T>(k) * ln_eta
                    + from_usize::<T>(n - k) * ln_loss;
                *q = *q + p * ln_binom.exp();
            }
        }
    }
    PhotonPmf {
        probs: out,
        tail_mass: pmf.tail_mass,
    }
}

/// Saturation voltage that maps the linear prediction `linear_v` onto the
/// observed avalanche height `observed_v` (requires `0 < observed_v < linear_v`).
pub fn calibrate_saturation<T: Real>(linear_v: T, observed_v: T) -> Result<T> {
    if !(observed_v > T::zero() && observed_v < linear_v && linear_v.is_finite()) {
        return Err(Error::Domain(format!(
            "need 0 < observed ({observed_v}) < linear ({linear_v})"
        )));
    }
    let compressed = |v_sat: T| -v_sat * (-linear_v / v_sat).exp_m1();
    let mut lo = observed_v;
    let mut hi = linear_v;
    while compressed(hi) < observed_v {
        hi = hi * lit(2.0);
        if !hi.is_finite() {
            return Err(Error::Convergence("saturation voltage bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / lit(2.0);
        if compressed(mid) < observed_v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / lit(2.0))
}
