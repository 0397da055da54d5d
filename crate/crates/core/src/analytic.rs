//! Closed-form infinite-volume limits for b-matchings on unimodular
//! Galton–Watson trees with degree law `π`.
//!
//! With `φ(s) = Σ π_k s^k` and `c = φ'(1)`:
//!
//! * `f_b(s) = (1/c) Σ_{k<b} s^k φ^{(k+1)}(1−s) / k!`
//! * `g_b(s) = Σ_{k≤b} s^k φ^{(k)}(1−s) / k!`
//! * `H(s) = b − (b/2) g(s) − (b/2) g(f(s)) + (c/2) f(s) f(f(s))`
//!
//! The limiting b-matching number per vertex is the minimum of `H`, attained
//! at a root of `f∘f(s) = s`. For Poisson degrees and `b = 1` it reduces to
//! the Karp–Sipser formula.

use serde::Serialize;

use crate::ensembles::DegreeDistribution;

pub const DEFAULT_GRID: usize = 10_000;
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
/// Margin by which a later root must undercut every earlier value of `H`.
pub const STRICT_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("capacity b must be at least 1")]
    ZeroCapacity,
    #[error("degree distribution has zero mean")]
    ZeroMean,
    #[error("mean degree must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("grid needs at least 1000 points, got {0}")]
    GridTooSmall(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSpec {
    pub pi: DegreeDistribution,
    pub b: usize,
    /// `c = φ'(1)`.
    pub c: f64,
}

impl LimitSpec {
    pub fn new(pi: DegreeDistribution, b: usize) -> Result<Self, AnalyticError> {
        if b == 0 {
            return Err(AnalyticError::ZeroCapacity);
        }
        let c = pi.mean();
        if c <= 0.0 {
            return Err(AnalyticError::ZeroMean);
        }
        Ok(Self { pi, b, c })
    }

    pub fn phi_deriv(&self, k: usize, s: f64) -> f64 {
        phi_deriv(&self.pi, k, s)
    }

    pub fn f(&self, s: f64) -> f64 {
        let b = self.b;
        let mut sum = 0.0;
        let mut sk_over_kfact = 1.0;
        for k in 0..b {
            if k > 0 {
                sk_over_kfact *= s / k as f64;
            }
            sum += sk_over_kfact * self.phi_deriv(k + 1, 1.0 - s);
        }
        sum / self.c
    }

    pub fn g(&self, s: f64) -> f64 {
        let mut sum = 0.0;
        let mut sk_over_kfact = 1.0;
        for k in 0..=self.b {
            if k > 0 {
                sk_over_kfact *= s / k as f64;
            }
            sum += sk_over_kfact * self.phi_deriv(k, 1.0 - s);
        }
        sum
    }

    /// `f'(s)`, differentiating the defining sum term by term.
    pub fn f_prime(&self, s: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..self.b {
            let kf = factorial(k);
            let d_pow = if k == 0 { 0.0 } else { k as f64 * s.powi(k as i32 - 1) };
            sum += d_pow * self.phi_deriv(k + 1, 1.0 - s) / kf;
            sum -= s.powi(k as i32) * self.phi_deriv(k + 2, 1.0 - s) / kf;
        }
        sum / self.c
    }

    pub fn ff(&self, s: f64) -> f64 {
        self.f(self.f(s))
    }

    #[allow(non_snake_case)]
    pub fn H(&self, s: f64) -> f64 {
        let b = self.b as f64;
        let fs = self.f(s);
        b - 0.5 * b * self.g(s) - 0.5 * b * self.g(fs) + 0.5 * self.c * fs * self.f(fs)
    }

    /// `H'(s) = (c/2) f'(s) ((f∘f)(s) − s)`, the exact derivative of [`Self::H`].
    #[allow(non_snake_case)]
    pub fn H_prime(&self, s: f64) -> f64 {
        0.5 * self.c * self.f_prime(s) * (self.ff(s) - s)
    }

    /// `(s, f, g, H)` on a uniform grid of `n + 1` points.
    pub fn curve(&self, n: usize) -> Vec<[f64; 4]> {
        (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                [s, self.f(s), self.g(s), self.H(s)]
            })
            .collect()
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `φ^{(k)}(s) = Σ_n n!/(n−k)! π_n s^{n−k}`.
pub fn phi_deriv(pi: &DegreeDistribution, k: usize, s: f64) -> f64 {
    let probs = pi.probs();
    let mut sum = 0.0;
    for n in k..probs.len() {
        if probs[n] == 0.0 {
            continue;
        }
        let falling: f64 = ((n - k + 1)..=n).map(|j| j as f64).product();
        sum += falling * probs[n] * s.powi((n - k) as i32);
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaReport {
    /// Roots of `(f∘f)(s) = s` in `[0, 1]`, ascending.
    pub roots: Vec<f64>,
    /// `H` at each root.
    pub h_values: Vec<f64>,
    /// Historical minima `s_1 < … < s_r` (a subset of `roots`).
    pub historical_minima: Vec<f64>,
    /// `H` at each historical minimum.
    pub historical_values: Vec<f64>,
    /// Minimum of `H` over the grid and the refined roots.
    pub m_b: f64,
    /// Minimum of `H` over the grid alone.
    pub grid_min: f64,
    /// Grid points where `(f∘f)(s) − s` touches zero without changing sign.
    pub tangential: Vec<f64>,
}

/// Locates the roots of `(f∘f)(s) = s` by a sign-change scan on `grid_n + 1`
/// points refined by bisection to `tol`, then keeps the roots where `H`
/// drops strictly below all of its earlier values.
///
/// The smallest root is always kept: `H' = (c/2) f' (f∘f − s)` with `f' ≤ 0` and
/// `f∘f − s ≥ 0` before it, so `H` is non-increasing up to that root.
pub fn historical_minima(spec: &LimitSpec, grid_n: usize, tol: f64) -> Result<MinimaReport, AnalyticError> {
    if grid_n < 1000 {
        return Err(AnalyticError::GridTooSmall(grid_n));
    }
    let h = |s: f64| spec.ff(s) - s;
    let grid: Vec<f64> = (0..=grid_n).map(|i| i as f64 / grid_n as f64).collect();
    let hv: Vec<f64> = grid.iter().map(|&s| h(s)).collect();
    let hg: Vec<f64> = grid.iter().map(|&s| spec.H(s)).collect();

    let mut roots = Vec::new();
    let mut tangential = Vec::new();
    for i in 0..=grid_n {
        if hv[i] == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if i < grid_n && hv[i + 1] != 0.0 && (hv[i] < 0.0) != (hv[i + 1] < 0.0) {
            roots.push(bisect(&h, grid[i], grid[i + 1], tol));
        }
        // near-touch without a crossing
        if i > 0 && i < grid_n {
            let (a, m, b) = (hv[i - 1], hv[i], hv[i + 1]);
            let same_sign = (a > 0.0 && m > 0.0 && b > 0.0) || (a < 0.0 && m < 0.0 && b < 0.0);
            if same_sign && m.abs() < a.abs() && m.abs() < b.abs() && m.abs() < 1e-8 {
                tangential.push(grid[i]);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= tol);
    let h_values: Vec<f64> = roots.iter().map(|&s| spec.H(s)).collect();

    let mut historical_minima = Vec::new();
    let mut historical_values = Vec::new();
    let spacing = 1.0 / grid_n as f64;
    for (idx, (&s, &hs)) in roots.iter().zip(&h_values).enumerate() {
        let earlier = grid
            .iter()
            .zip(&hg)
            .filter(|&(&t, _)| t < s - 1.5 * spacing)
            .map(|(_, &v)| v)
            .chain(h_values[..idx].iter().copied())
            .fold(f64::INFINITY, f64::min);
        if idx == 0 || hs < earlier - STRICT_MARGIN {
            historical_minima.push(s);
            historical_values.push(hs);
        }
    }

    let grid_min = hg.iter().copied().fold(f64::INFINITY, f64::min);
    let m_b = h_values.iter().copied().fold(grid_min, f64::min);
    Ok(MinimaReport { roots, h_values, historical_minima, historical_values, m_b, grid_min, tangential })
}

/// Bisection on a bracketing interval until its width is below `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Smallest root of `t = exp(−c exp(−c t))` in `[0, 1]`.
pub fn karp_sipser_root(c: f64) -> Result<f64, AnalyticError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(AnalyticError::BadMean(c));
    }
    let g = |t: f64| (-c * (-c * t).exp()).exp() - t;
    let n = DEFAULT_GRID;
    let mut prev = g(0.0);
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let cur = g(t);
        if cur == 0.0 {
            return Ok(t);
        }
        if (cur < 0.0) != (prev < 0.0) {
            return Ok(bisect(g, (i - 1) as f64 / n as f64, t, DEFAULT_ROOT_TOL));
        }
        prev = cur;
    }
    // g(1) = exp(−c e^{−c}) − 1 < 0, so a crossing always exists
    unreachable!("no sign change of t ↦ exp(−c e^(−ct)) − t on [0, 1]")
}

/// Karp–Sipser limit of the matching number per vertex of `G(n, c/n)`:
/// `1 − (t + e^{−ct} + c t e^{−ct}) / 2` at the smallest root `t`.
pub fn karp_sipser(c: f64) -> Result<f64, AnalyticError> {
    let t = karp_sipser_root(c)?;
    let e = (-c * t).exp();
    Ok(1.0 - 0.5 * (t + e + c * t * e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn regular(d: usize, b: usize) -> LimitSpec {
        LimitSpec::new(DegreeDistribution::dirac(d), b).unwrap()
    }

    fn poisson(c: f64, b: usize) -> LimitSpec {
        LimitSpec::new(DegreeDistribution::poisson(c).unwrap(), b).unwrap()
    }

    #[test]
    fn phi_examples() {
        let d3 = DegreeDistribution::dirac(3);
        assert_eq!(phi_deriv(&d3, 1, 1.0), 3.0);
        assert_eq!(phi_deriv(&d3, 2, 0.5), 3.0);
        let p = DegreeDistribution::poisson_truncated(2.0, 60).unwrap();
        assert_relative_eq!(phi_deriv(&p, 0, 1.0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn f_and_g_examples() {
        let spec = poisson(1.7, 1);
        let r3 = regular(3, 1);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            assert!((spec.f(s) - (-1.7 * s).exp()).abs() < 1e-10);
            assert!((r3.f(s) - (1.0 - s).powi(2)).abs() < 1e-15);
        }
        assert_relative_eq!(spec.g(0.0), 1.0, max_relative = 1e-14);
        assert_eq!(r3.g(0.0), 1.0);
    }

    #[test]
    fn f_is_binomial_tail_of_size_biased_law() {
        // f_b(s) = Σ_n π̂_n P(Bin(n, s) < b), g_b(s) = Σ_n π_n P(Bin(n, s) ≤ b)
        let pi = DegreeDistribution::explicit(vec![0.1, 0.2, 0.3, 0.25, 0.15]).unwrap();
        let hat = pi.size_biased().unwrap();
        let binom_cdf = |n: usize, s: f64, k: usize| -> f64 {
            (0..=k.min(n))
                .map(|j| {
                    let comb: f64 = (0..j).map(|i| (n - i) as f64 / (i + 1) as f64).product();
                    comb * s.powi(j as i32) * (1.0 - s).powi((n - j) as i32)
                })
                .sum()
        };
        for b in 1..=3 {
            let spec = LimitSpec::new(pi.clone(), b).unwrap();
            for i in 0..=10 {
                let s = i as f64 / 10.0;
                let f: f64 = hat.probs().iter().enumerate().map(|(n, &p)| p * binom_cdf(n, s, b - 1)).sum();
                let g: f64 = pi.probs().iter().enumerate().map(|(n, &p)| p * binom_cdf(n, s, b)).sum();
                assert!((spec.f(s) - f).abs() < 1e-14);
                assert!((spec.g(s) - g).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn f_prime_matches_telescoped_form_and_differences() {
        for spec in [poisson(2.0, 2), regular(4, 3), poisson(0.7, 1)] {
            let b = spec.b;
            for i in 1..10 {
                let s = i as f64 / 10.0;
                let closed = -s.powi(b as i32 - 1) * spec.phi_deriv(b + 1, 1.0 - s) / factorial(b - 1) / spec.c;
                assert!((spec.f_prime(s) - closed).abs() < 1e-12);
                let h = 1e-6;
                let fd = (spec.f(s + h) - spec.f(s - h)) / (2.0 * h);
                assert!((spec.f_prime(s) - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn h_examples() {
        let r3 = regular(3, 1);
        assert_relative_eq!(r3.H(0.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(r3.H(1.0), 0.5, max_relative = 1e-15);
        // H' from the identity agrees with finite differences of H
        for spec in [poisson(2.0, 2), r3] {
            for i in 1..10 {
                let s = i as f64 / 10.0;
                let h = 1e-6;
                let fd = (spec.H(s + h) - spec.H(s - h)) / (2.0 * h);
                assert!((spec.H_prime(s) - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn regular_minima() {
        let rep = historical_minima(&regular(3, 1), DEFAULT_GRID, DEFAULT_ROOT_TOL).unwrap();
        let golden = (3.0 - 5f64.sqrt()) / 2.0;
        assert_eq!(rep.roots.len(), 3);
        assert_eq!(rep.roots[0], 0.0);
        assert!((rep.roots[1] - golden).abs() < 1e-11);
        assert_eq!(rep.roots[2], 1.0);
        assert!((rep.h_values[1] - 0.545085).abs() < 1e-6);
        assert_eq!(rep.historical_minima, vec![0.0]);
        assert_relative_eq!(rep.m_b, 0.5, max_relative = 1e-12);
        assert!(rep.tangential.is_empty());

        let full = historical_minima(&regular(3, 3), DEFAULT_GRID, DEFAULT_ROOT_TOL).unwrap();
        assert_relative_eq!(full.m_b, 1.5, max_relative = 1e-12);
    }

    #[test]
    fn karp_sipser_examples() {
        assert!((karp_sipser_root(1.0).unwrap() - 0.567143).abs() < 1e-6);
        assert!((karp_sipser(1.0).unwrap() - 0.272031).abs() < 1e-6);
        assert!(karp_sipser(1e-6).unwrap() < 1e-5);
        let rep = historical_minima(&poisson(2.0, 1), DEFAULT_GRID, DEFAULT_ROOT_TOL).unwrap();
        assert!((rep.m_b - karp_sipser(2.0).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn roots_are_critical_points_of_h() {
        for spec in [poisson(4.0, 1), poisson(2.0, 2), regular(3, 1), regular(5, 2)] {
            let rep = historical_minima(&spec, DEFAULT_GRID, DEFAULT_ROOT_TOL).unwrap();
            for &s in &rep.roots {
                assert!(spec.H_prime(s).abs() < 1e-8);
            }
            assert!((rep.m_b - rep.grid_min).abs() < 1e-6);
        }
    }

    #[test]
    fn minimum_grows_with_capacity() {
        let mut prev = 0.0;
        for b in 1..=4 {
            let m = historical_minima(&poisson(2.0, b), DEFAULT_GRID, DEFAULT_ROOT_TOL).unwrap().m_b;
            assert!(m >= prev - 1e-12);
            prev = m;
        }
    }
}
