//! Photon-number statistics of the light sources under test.
//!
//! Three families are supported: coherent light (Poisson counts), single-mode
//! chaotic light (Bose-Einstein counts) and the single-mode superposition of
//! a coherent amplitude with a chaotic field. The mixture's counting
//! distribution has the Laguerre form
//!
//! ```text
//! p(n) = mu_n^n / (1 + mu_n)^(n+1) * exp(-mu_s / (1 + mu_n)) * L_n(-mu_s / (mu_n (1 + mu_n)))
//! ```
//!
//! and its factorial moments are `k! mu_n^k L_k(-mu_s / mu_n)`. Both are
//! evaluated with the Laguerre three-term recurrence rescaled so that the
//! `mu_n -> 0` limit (pure Poisson) is reached without overflow.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{factorial, falling_factorial, from_usize, lit, Real};

/// Tail mass the default truncation policy aims for.
pub const DEFAULT_TAIL_TARGET: f64 = 1e-9;

/// Upper limit on the default truncation.
pub const MAX_DEFAULT_TRUNCATION: usize = 256;

/// Photon-number statistics of a pulsed source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceSpec<T> {
    Poisson { mu: T },
    Thermal { mu: T },
    CoherentChaoticMix { mu_s: T, mu_n: T },
}

impl<T: Real> SourceSpec<T> {
    pub fn poisson(mu: T) -> Result<Self> {
        let s = SourceSpec::Poisson { mu };
        s.validate()?;
        Ok(s)
    }

    pub fn thermal(mu: T) -> Result<Self> {
        let s = SourceSpec::Thermal { mu };
        s.validate()?;
        Ok(s)
    }

    pub fn mix(mu_s: T, mu_n: T) -> Result<Self> {
        let s = SourceSpec::CoherentChaoticMix { mu_s, mu_n };
        s.validate()?;
        Ok(s)
    }

    /// Mixture with total mean `mu` and second-order correlation `g2`.
    pub fn mix_from_mu_g2(mu: T, g2: T) -> Result<Self> {
        let (mu_s, mu_n) = mix_from_mu_g2(mu, g2)?;
        Self::mix(mu_s, mu_n)
    }

    pub fn validate(&self) -> Result<()> {
        let (mu_s, mu_n) = self.components();
        for (name, v) in [("coherent mean", mu_s), ("chaotic mean", mu_n)] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `(coherent mean, chaotic mean)`.
    pub fn components(&self) -> (T, T) {
        match *self {
            SourceSpec::Poisson { mu } => (mu, T::zero()),
            SourceSpec::Thermal { mu } => (T::zero(), mu),
            SourceSpec::CoherentChaoticMix { mu_s, mu_n } => (mu_s, mu_n),
        }
    }

    pub fn mean(&self) -> T {
        let (mu_s, mu_n) = self.components();
        mu_s + mu_n
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SourceSpec::Poisson { .. } => "poisson",
            SourceSpec::Thermal { .. } => "thermal",
            SourceSpec::CoherentChaoticMix { .. } => "mix",
        }
    }

    /// Photon-number distribution truncated at `n_trunc`.
    ///
    /// `tail_mass` carries whatever probability lies beyond the truncation,
    /// so a too-small `n_trunc` shows up there rather than as an error.
    pub fn pmf(&self, n_trunc: usize) -> Result<PhotonPmf<T>> {
        self.validate()?;
        if n_trunc < 1 {
            return Err(Error::Domain("truncation must be at least 1".into()));
        }
        let probs = match *self {
            SourceSpec::Poisson { mu } => poisson_probs(mu, n_trunc),
            SourceSpec::Thermal { mu } => thermal_probs(mu, n_trunc),
            SourceSpec::CoherentChaoticMix { mu_s, mu_n } => laguerre_probs(mu_s, mu_n, n_trunc),
        };
        Ok(PhotonPmf::from_probs(probs))
    }

    /// Distribution truncated by [`SourceSpec::default_truncation`].
    pub fn pmf_default(&self) -> Result<PhotonPmf<T>> {
        self.validate()?;
        self.pmf(self.default_truncation())
    }

    /// Smallest `n` whose Chernoff bound on `P(N > n)` is below
    /// [`DEFAULT_TAIL_TARGET`], capped at [`MAX_DEFAULT_TRUNCATION`].
    pub fn default_truncation(&self) -> usize {
        let (mu_s, mu_n) = self.components();
        let (mu_s, mu_n) = (mu_s.to_f64().unwrap_or(0.0), mu_n.to_f64().unwrap_or(0.0));
        (1..=MAX_DEFAULT_TRUNCATION)
            .find(|&n| chernoff_tail(mu_s, mu_n, n + 1) < DEFAULT_TAIL_TARGET)
            .unwrap_or(MAX_DEFAULT_TRUNCATION)
    }

    /// Normally ordered moment `<a^dag^k a^k> = E[N (N-1) ... (N-k+1)]`.
    pub fn factorial_moment(&self, k: usize) -> T {
        if k == 0 {
            return T::one();
        }
        match *self {
            SourceSpec::Poisson { mu } => mu.powi(k as i32),
            SourceSpec::Thermal { mu } => factorial::<T>(k) * mu.powi(k as i32),
            SourceSpec::CoherentChaoticMix { mu_s, mu_n } => factorial::<T>(k) * scaled_laguerre_moment(mu_s, mu_n, k),
        }
    }

    /// Draws the classical pulse intensity `W` (mean photons per pulse).
    ///
    /// A Poisson draw with mean `W` reproduces [`SourceSpec::pmf`]; handing
    /// the same `W` to both interferometer arms carries the bunching across.
    pub fn sample_intensity<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            SourceSpec::Poisson { mu } => mu,
            SourceSpec::Thermal { mu } => mu * T::exp1(rng),
            SourceSpec::CoherentChaoticMix { mu_s, mu_n } => {
                let quad_sd = (mu_n / lit(2.0)).sqrt();
                let re = mu_s.sqrt() + quad_sd * T::standard_normal(rng);
                let im = quad_sd * T::standard_normal(rng);
                re * re + im * im
            }
        }
    }
}

/// Splits a total mean `mu` and a measured `g2` into `(mu_s, mu_n)`.
///
/// Picks the root with `mu_n <= mu`: `mu_n = mu (1 - sqrt(2 - g2))`.
pub fn mix_from_mu_g2<T: Real>(mu: T, g2: T) -> Result<(T, T)> {
    if !mu.is_finite() || mu <= T::zero() {
        return Err(Error::Domain(format!("mean photon number must be > 0, got {mu}")));
    }
    if !g2.is_finite() || g2 < T::one() || g2 > lit(2.0) {
        return Err(Error::Infeasible(format!("g2 must lie in [1, 2], got {g2}")));
    }
    let mu_n = mu * (T::one() - (lit::<T>(2.0) - g2).sqrt());
    let mu_s = (mu - mu_n).max(T::zero());
    Ok((mu_s, mu_n))
}

/// Truncated photon-number distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonPmf<T> {
    /// `probs[n]` for `n = 0..=n_trunc`.
    pub probs: Vec<T>,
    /// Probability beyond the last entry.
    pub tail_mass: T,
}

impl<T: Real> PhotonPmf<T> {
    /// Builds a pmf whose tail mass is the complement of the given entries.
    pub fn from_probs(probs: Vec<T>) -> Self {
        let total: T = probs.iter().copied().sum();
        let tail_mass = (T::one() - total).max(T::zero());
        PhotonPmf { probs, tail_mass }
    }

    /// Point mass at `n`.
    pub fn delta(n: usize) -> Self {
        let mut probs = vec![T::zero(); n + 1];
        probs[n] = T::one();
        PhotonPmf {
            probs,
            tail_mass: T::zero(),
        }
    }

    pub fn n_trunc(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn total(&self) -> T {
        self.probs.iter().copied().sum::<T>() + self.tail_mass
    }

    /// Brute-force `sum_n n!/(n-k)! p(n)` over the stored entries.
    pub fn factorial_moment(&self, k: usize) -> T {
        self.probs
            .iter()
            .enumerate()
            .skip(k)
            .map(|(n, &p)| falling_factorial::<T>(n, k) * p)
            .sum()
    }

    pub fn mean(&self) -> T {
        self.factorial_moment(1)
    }

    /// `g(k)` from the stored entries.
    pub fn g_order(&self, k: usize) -> Result<T> {
        let mean = self.mean();
        if mean <= T::zero() {
            return Err(Error::UndefinedCorrelation);
        }
        Ok(self.factorial_moment(k) / mean.powi(k as i32))
    }
}

fn poisson_probs<T: Real>(mu: T, n_trunc: usize) -> Vec<T> {
    let mut probs = Vec::with_capacity(n_trunc + 1);
    let mut p = (-mu).exp();
    probs.push(p);
    for n in 1..=n_trunc {
        p = p * mu / from_usize(n);
        probs.push(p);
    }
    probs
}

fn thermal_probs<T: Real>(mu: T, n_trunc: usize) -> Vec<T> {
    let ratio = mu / (T::one() + mu);
    let mut probs = Vec::with_capacity(n_trunc + 1);
    let mut p = T::one() / (T::one() + mu);
    probs.push(p);
    for _ in 1..=n_trunc {
        p = p * ratio;
        probs.push(p);
    }
    probs
}

/// Mixture pmf via `M_n = a^n L_n(x)`, `a = mu_n/(1+mu_n)`,
/// `x = -mu_s/(mu_n (1+mu_n))`, which obeys
/// `(n+1) M_{n+1} = ((2n+1) a + c) M_n - a^2 n M_{n-1}` with `c = mu_s/(1+mu_n)^2`.
fn laguerre_probs<T: Real>(mu_s: T, mu_n: T, n_trunc: usize) -> Vec<T> {
    let one = T::one();
    let a = mu_n / (one + mu_n);
    let c = mu_s / ((one + mu_n) * (one + mu_n));
    let prefactor = (-mu_s / (one + mu_n)).exp() / (one + mu_n);

    let mut scaled = Vec::with_capacity(n_trunc + 1);
    scaled.push(one);
    scaled.push(a + c);
    for n in 1..n_trunc {
        let nf = from_usize::<T>(n);
        let two_n_plus_one = from_usize::<T>(2 * n + 1);
        let next = ((two_n_plus_one * a + c) * scaled[n] - a * a * nf * scaled[n - 1]) / from_usize::<T>(n + 1);
        scaled.push(next.max(T::zero()));
    }
    scaled.truncate(n_trunc + 1);
    scaled.into_iter().map(|m| prefactor * m).collect()
}

/// `mu_n^k L_k(-mu_s/mu_n)` via
/// `(j+1) F_{j+1} = ((2j+1) mu_n + mu_s) F_j - mu_n^2 j F_{j-1}`.
fn scaled_laguerre_moment<T: Real>(mu_s: T, mu_n: T, k: usize) -> T {
    let mut prev = T::one();
    let mut cur = mu_n + mu_s;
    for j in 1..k {
        let jf = from_usize::<T>(j);
        let next =
            ((from_usize::<T>(2 * j + 1) * mu_n + mu_s) * cur - mu_n * mu_n * jf * prev) / from_usize::<T>(j + 1);
        prev = cur;
        cur = next;
    }
    cur
}

/// Chernoff bound `min_z G(z) / z^a` on `P(N >= a)`, where
/// `ln G(z) = mu_s (z-1) / (1 - mu_n (z-1)) - ln(1 - mu_n (z-1))`
/// is the probability generating function of the mixture.
fn chernoff_tail(mu_s: f64, mu_n: f64, a: usize) -> f64 {
    if mu_s + mu_n == 0.0 {
        return 0.0;
    }
    let a = a as f64;
    let objective = |t: f64| {
        let zm1 = t.exp_m1();
        let denom = 1.0 - mu_n * zm1;
        mu_s * zm1 / denom - denom.ln() - a * t
    };
    let t_max = if mu_n > 0.0 {
        (1.0 / mu_n).ln_1p() * (1.0 - 1e-12)
    } else {
        (a / mu_s).ln().max(0.0) + 1.0
    };

    // The objective is convex in t (cumulant generating function minus a line).
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, t_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    let best = f1.min(f2).min(objective(0.0));
    best.exp().min(1.0)
}
