//! Expectations over the pulse-intensity distribution.
//!
//! For the coherent+chaotic mixture the intensity is `W = |sqrt(mu_s) + z|^2`
//! with `z` circular Gaussian. Writing `z = sqrt(u) e^{i theta}` gives
//! `u ~ Exp(mu_n)` (Gauss-Laguerre) and `theta` uniform (midpoint rule on a
//! half period, exponentially convergent for smooth periodic integrands).
//! Node counts are doubled until the result stops moving.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};
use crate::source::SourceSpec;

/// Node-doubling controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Stop once a doubling changes no component by more than this
    /// (relative to the component, or to `scale` when one is supplied).
    pub rel_tol: f64,
    pub start_nodes: usize,
    pub max_nodes: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            rel_tol: 1e-8,
            start_nodes: 16,
            max_nodes: 256,
        }
    }
}

/// Gauss-Laguerre rule for `int_0^inf e^{-x} f(x) dx`.
#[derive(Debug)]
pub struct LaguerreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub-Welsch: eigenvalues of the Jacobi matrix are the nodes, the squared
/// first eigenvector components are the weights.
fn build_laguerre(n: usize) -> LaguerreRule {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = (2 * i + 1) as f64;
        if i + 1 < n {
            jacobi[(i, i + 1)] = (i + 1) as f64;
            jacobi[(i + 1, i)] = (i + 1) as f64;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    LaguerreRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Cached rule with `n` nodes.
pub fn laguerre_rule(n: usize) -> Arc<LaguerreRule> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<LaguerreRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(build_laguerre(n));
    cache.lock().expect("rule cache poisoned").insert(n, rule.clone());
    rule
}

/// Evaluates `E[f(W)]` componentwise, where `f` writes `out.len()` values
/// for a given intensity.
///
/// Convergence is declared when one doubling moves every component by at
/// most `rel_tol * max(|value|, scale)`; pass `scale = 0` for purely relative
/// control.
pub fn expect_over_intensity<T, F>(
    source: &SourceSpec<T>,
    settings: &QuadratureSettings,
    dim: usize,
    scale: T,
    mut f: F,
) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(T, &mut [T]),
{
    source.validate()?;
    let (mu_s, mu_n) = source.components();
    let mut buf = vec![T::zero(); dim];

    if mu_n == T::zero() {
        f(mu_s, &mut buf);
        return Ok(buf);
    }

    let tol = lit::<T>(settings.rel_tol.max(T::TOL_FLOOR));
    let mut nodes = settings.start_nodes.max(2);
    let mut previous: Option<Vec<T>> = None;
    while nodes <= settings.max_nodes {
        let current = integrate_level(mu_s, mu_n, nodes, dim, &mut buf, &mut f);
        if let Some(prev) = &previous {
            let settled = prev.iter().zip(&current).all(|(&a, &b)| {
                let bound = tol * b.abs().max(scale);
                (b - a).abs() <= bound
            });
            if settled {
                return Ok(current);
            }
        }
        previous = Some(current);
        nodes *= 2;
    }
    Err(Error::Convergence(format!(
        "intensity quadrature not within relative {} after {} nodes",
        settings.rel_tol.max(T::TOL_FLOOR),
        settings.max_nodes
    )))
}

fn integrate_level<T, F>(mu_s: T, mu_n: T, nodes: usize, dim: usize, buf: &mut [T], f: &mut F) -> Vec<T>
where
    T: Real,
    F: FnMut(T, &mut [T]),
{
    let rule = laguerre_rule(nodes);
    let mut acc = vec![T::zero(); dim];
    let phases: Vec<T> = if mu_s == T::zero() {
        vec![T::zero()]
    } else {
        (0..nodes)
            .map(|j| (T::PI() * (from_usize::<T>(j) + lit(0.5)) / from_usize::<T>(nodes)).cos())
            .collect()
    };
    let phase_weight = T::one() / from_usize::<T>(phases.len());
    let two_sqrt_s = lit::<T>(2.0) * mu_s.sqrt();
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        if w == 0.0 {
            continue;
        }
        let u = mu_n * lit::<T>(x);
        let w = lit::<T>(w) * phase_weight;
        let radial = two_sqrt_s * u.sqrt();
        for &cos in &phases {
            let intensity = (mu_s + u + radial * cos).max(T::zero());
            f(intensity, buf);
            for (a, &b) in acc.iter_mut().zip(buf.iter()) {
                *a = *a + w * b;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SourceSpec;

    #[test]
    fn laguerre_rule_integrates_moments() {
        let rule = laguerre_rule(20);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        // int x^5 e^{-x} = 120
        let m5: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(5)).sum();
        assert!((m5 - 120.0).abs() < 1e-9);
        assert!(rule.nodes.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn intensity_moments() {
        let settings = QuadratureSettings::default();
        // E[W] and E[W^2] for the mixture: mu and mu_s^2 + 4 mu_s mu_n + 2 mu_n^2
        let src = SourceSpec::mix(2.5, 0.3).unwrap();
        let m = expect_over_intensity(&src, &settings, 2, 0.0, |w, out| {
            out[0] = w;
            out[1] = w * w;
        })
        .unwrap();
        assert!((m[0] - 2.8).abs() < 1e-12);
        assert!((m[1] - (6.25 + 3.0 + 0.18)).abs() < 1e-11);

        // Laplace transform of Exp(mean 2): 1 / (1 + 2 s)
        let th = SourceSpec::thermal(2.0).unwrap();
        let m = expect_over_intensity(&th, &settings, 1, 0.0, |w, out| out[0] = (-0.3 * w).exp()).unwrap();
        assert!((m[0] - 1.0 / 1.6).abs() < 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        let settings = QuadratureSettings {
            rel_tol: 1e-8,
            start_nodes: 16,
            max_nodes: 16,
        };
        let src = SourceSpec::thermal(2.0).unwrap();
        let r = expect_over_intensity(&src, &settings, 1, 0.0, |w, out| out[0] = w);
        assert!(matches!(r, Err(Error::Convergence(_))));
    }
}
