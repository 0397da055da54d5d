//! Population dynamics for the b-matching distributional fixed point
//! `P = Θ(Θ̄(P))` on a Galton–Watson tree with offspring law `π̂`.
//!
//! `Θ̄(P)` is the law of `Γ̄(X_1, …, X_N̂)` and `Θ(Q)` the law of
//! `Γ(Y_1, …, Y_N̂)`, with `N̂ ~ π̂` and i.i.d. inputs. Both laws carry an atom
//! (`0` on the P side, `∞` on the Q side) whose mass depends only on the
//! other side's atom: `Γ̄ = ∞` iff fewer than `b` inputs are positive, and
//! `Γ = 0` iff at least `b` inputs are infinite. A pool therefore stores that
//! mass exactly, and samples only the conditional law off the atom. Without
//! this, sampling noise in the atom mass is amplified at every unstable root
//! of `f∘f` and the pool drifts off it within a few generations.
//!
//! Each generation also runs one plain Monte Carlo step (no exact atoms,
//! the generic extended-real `Γ`/`Γ̄`), whose nonzero fraction is recorded as
//! an independent check of the atom bookkeeping.
//!
//! Randomness: every call draws one sub-seed from the caller's generator;
//! samples are produced in chunks of 4096, chunk `c` using
//! `ChaCha8Rng::seed_from_u64(sub_seed)` on stream `c`. Output does not depend
//! on the number of worker threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{DegreeDistribution, EnsembleError};
use crate::ext::ExtReal;
use crate::measure::{LocalMeasure, Scratch};

pub const DEFAULT_POOL: usize = 100_000;
pub const DEFAULT_ITERS: usize = 200;
const CHUNK: usize = 4096;
/// Floor on reported standard errors, so exact estimates compare sanely.
pub const SE_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum RdeError {
    #[error("capacity b must be at least 1")]
    ZeroCapacity,
    #[error("pool size must be positive")]
    EmptyPool,
    #[error("{0}-side pool passed where a {1}-side pool is needed")]
    WrongSide(Side, Side),
    #[error("pool has no samples off its atom, but the atom mass is {0}")]
    MissingSamples(f64),
    #[error("value {0} is not allowed in a {1}-side pool")]
    BadValue(ExtReal, Side),
    #[error("s_init must lie in [0, 1], got {0}")]
    BadInit(f64),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    /// Laws on `[0, 1]`, atom at `0`.
    P,
    /// Laws on `(0, ∞]`, atom at `∞`.
    Q,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::P => "P",
            Side::Q => "Q",
        })
    }
}

/// A law on `[0, ∞]` held as an exact atom plus samples from the rest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationPool {
    pub side: Side,
    /// Mass at `0` (P side) or `∞` (Q side).
    pub atom: f64,
    /// Draws from the law conditioned off the atom, sorted ascending.
    pub samples: Vec<f64>,
}

impl PopulationPool {
    /// Point mass at `value`, represented with `size` samples.
    pub fn point(side: Side, value: ExtReal, size: usize) -> Result<Self, RdeError> {
        let on_atom = match side {
            Side::P => value.is_zero(),
            Side::Q => value.is_infinite(),
        };
        let allowed = match side {
            Side::P => value <= ExtReal::ONE,
            Side::Q => !value.is_zero(),
        };
        if !allowed {
            return Err(RdeError::BadValue(value, side));
        }
        if on_atom {
            Ok(Self { side, atom: 1.0, samples: Vec::new() })
        } else {
            Ok(Self { side, atom: 0.0, samples: vec![value.to_f64(); size.max(1)] })
        }
    }

    /// `Bernoulli(s)` on the P side: mass `s` at 1, the rest at 0.
    pub fn bernoulli(s: f64, size: usize) -> Result<Self, RdeError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(RdeError::BadInit(s));
        }
        let samples = if s > 0.0 { vec![1.0; size.max(1)] } else { Vec::new() };
        Ok(Self { side: Side::P, atom: 1.0 - s, samples })
    }

    /// Mass off the atom: `P(X > 0)` or `P(Y < ∞)`.
    pub fn off_atom(&self) -> f64 {
        1.0 - self.atom
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ExtReal {
        let on_atom = self.samples.is_empty() || rng.random::<f64>() < self.atom;
        if on_atom {
            match self.side {
                Side::P => ExtReal::ZERO,
                Side::Q => ExtReal::Infinite,
            }
        } else {
            ExtReal::Finite(self.samples[rng.random_range(0..self.samples.len())])
        }
    }

    fn draw_off_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.samples[rng.random_range(0..self.samples.len())]
    }

    /// `P(X ≤ x)` for a P-side pool.
    pub fn cdf(&self, x: f64) -> f64 {
        let below = self.samples.partition_point(|&v| v <= x);
        let frac = if self.samples.is_empty() { 0.0 } else { below as f64 / self.samples.len() as f64 };
        match self.side {
            Side::P => self.atom + self.off_atom() * frac,
            Side::Q => self.off_atom() * frac,
        }
    }

    /// Wasserstein-1 distance between two P-side pools, `∫_0^1 |F − G|`.
    pub fn wasserstein(&self, other: &PopulationPool) -> f64 {
        let mut points: Vec<f64> = self.samples.iter().chain(&other.samples).copied().collect();
        points.push(0.0);
        points.push(1.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
            .windows(2)
            .map(|w| (w[1] - w[0]) * (self.cdf(w[0]) - other.cdf(w[0])).abs())
            .sum()
    }
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let choose: f64 = (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product();
    choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Strata `(n, k)` with weights `π̂_n · P(Bin(n, p) = k)` for `k` in `keep`.
fn strata(pi_hat: &DegreeDistribution, p: f64, keep: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (n, &w) in pi_hat.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for k in 0..=n {
            if keep(n, k) {
                let weight = w * binomial_pmf(n, k, p);
                if weight > 0.0 {
                    out.push((n, k, weight));
                }
            }
        }
    }
    out
}

/// `size` values from `sample(rng, scratch)`, chunked onto independent streams.
fn fill<F>(size: usize, sub_seed: u64, sample: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut Scratch) -> f64 + Sync,
{
    let chunks = size.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
            rng.set_stream(c as u64);
            let mut scratch = Scratch::new();
            let len = CHUNK.min(size - c * CHUNK);
            (0..len).map(|_| sample(&mut rng, &mut scratch)).collect()
        })
        .collect();
    let mut out: Vec<f64> = parts.concat();
    out.sort_by(f64::total_cmp);
    out
}

fn check_b(b: usize) -> Result<(), RdeError> {
    if b == 0 {
        Err(RdeError::ZeroCapacity)
    } else {
        Ok(())
    }
}

fn check_side(pool: &PopulationPool, side: Side) -> Result<(), RdeError> {
    if pool.side != side {
        return Err(RdeError::WrongSide(pool.side, side));
    }
    if pool.samples.is_empty() && pool.atom < 1.0 {
        return Err(RdeError::MissingSamples(pool.atom));
    }
    Ok(())
}

/// `Θ̄(P)`: law of `Γ̄(X_1, …, X_N̂)`; `∞` iff fewer than `b` inputs are positive.
pub fn theta_bar<R: RngCore + ?Sized>(
    p: &PopulationPool,
    pi_hat: &DegreeDistribution,
    b: usize,
    size: usize,
    rng: &mut R,
) -> Result<PopulationPool, RdeError> {
    check_b(b)?;
    check_side(p, Side::P)?;
    if size == 0 {
        return Err(RdeError::EmptyPool);
    }
    let s = p.off_atom();
    let finite = strata(pi_hat, s, |_, k| k >= b);
    let finite_mass: f64 = finite.iter().map(|x| x.2).sum();
    let sub_seed = rng.next_u64();
    if finite_mass <= 0.0 {
        return Ok(PopulationPool { side: Side::Q, atom: 1.0, samples: Vec::new() });
    }
    let pick = WeightedIndex::new(finite.iter().map(|x| x.2)).expect("positive weights");
    let samples = fill(size, sub_seed, |rng, scratch| {
        let (n, k, _) = finite[pick.sample(rng)];
        let mu = LocalMeasure::bmatching(n + 1, b).expect("b ≥ 1");
        let field = (0..n).map(|i| if i < k { p.draw_off_atom(rng) } else { 0.0 });
        let field: Vec<f64> = field.collect();
        mu.infinite_cavity_ratio_with(n, field, scratch).to_f64()
    });
    Ok(PopulationPool { side: Side::Q, atom: (1.0 - finite_mass).max(0.0), samples })
}

/// `Θ(Q)`: law of `Γ(Y_1, …, Y_N̂)`; `0` iff at least `b` inputs are infinite.
pub fn theta<R: RngCore + ?Sized>(
    q: &PopulationPool,
    pi_hat: &DegreeDistribution,
    b: usize,
    size: usize,
    rng: &mut R,
) -> Result<PopulationPool, RdeError> {
    check_b(b)?;
    check_side(q, Side::Q)?;
    if size == 0 {
        return Err(RdeError::EmptyPool);
    }
    let t = q.atom;
    let positive = strata(pi_hat, t, |_, l| l < b);
    let positive_mass: f64 = positive.iter().map(|x| x.2).sum();
    let sub_seed = rng.next_u64();
    if positive_mass <= 0.0 {
        return Ok(PopulationPool { side: Side::P, atom: 1.0, samples: Vec::new() });
    }
    let pick = WeightedIndex::new(positive.iter().map(|x| x.2)).expect("positive weights");
    let samples = fill(size, sub_seed, |rng, scratch| {
        let (n, l, _) = positive[pick.sample(rng)];
        let mu = LocalMeasure::bmatching(n + 1, b).expect("b ≥ 1");
        let field: Vec<ExtReal> = (0..n)
            .map(|i| if i < l { ExtReal::Infinite } else { ExtReal::Finite(q.draw_off_atom(rng)) })
            .collect();
        mu.cavity_ratio_with(n, field, scratch).to_f64()
    });
    Ok(PopulationPool { side: Side::P, atom: (1.0 - positive_mass).max(0.0), samples })
}

/// One plain Monte Carlo step `P → Θ̄ → Θ` with `size` raw draws per stage,
/// using the generic extended-real ratios. Returns the nonzero fraction of
/// the result and the number of zero values seen on the Q side.
pub fn raw_step<R: RngCore + ?Sized>(
    p: &PopulationPool,
    pi_hat: &DegreeDistribution,
    b: usize,
    size: usize,
    rng: &mut R,
) -> Result<(f64, usize), RdeError> {
    check_b(b)?;
    check_side(p, Side::P)?;
    let pick = pi_hat.sampler();
    let q_seed = rng.next_u64();
    let q_raw = fill(size, q_seed, |rng, scratch| {
        let n = pick.sample(rng);
        let mu = LocalMeasure::bmatching(n + 1, b).expect("b ≥ 1");
        let field: Vec<f64> = (0..n).map(|_| p.draw(rng).to_f64()).collect();
        mu.infinite_cavity_ratio_with(n, field, scratch).to_f64()
    });
    let q_zeros = q_raw.iter().filter(|&&y| y == 0.0).count();
    let p_seed = rng.next_u64();
    let p_raw = fill(size, p_seed, |rng, scratch| {
        let n = pick.sample(rng);
        let mu = LocalMeasure::bmatching(n + 1, b).expect("b ≥ 1");
        let field: Vec<ExtReal> = (0..n)
            .map(|_| ExtReal::new(q_raw[rng.random_range(0..q_raw.len())]).expect("nonnegative"))
            .collect();
        mu.cavity_ratio_with(n, field, scratch).to_f64()
    });
    let nonzero = p_raw.iter().filter(|&&x| x > 0.0).count();
    Ok((nonzero as f64 / size as f64, q_zeros))
}

#[derive(Debug, Clone, Serialize)]
pub struct RdeRun {
    /// `s_n = P_n(X > 0)` from the exact atom bookkeeping, `n = 0..=iters`.
    pub s: Vec<f64>,
    /// Nonzero fraction after a plain Monte Carlo step from `P_{n−1}`
    /// (`s_mc[0] = s_init`).
    pub s_mc: Vec<f64>,
    pub pool: PopulationPool,
    pub iterations: usize,
    /// `s_n` moved against its established direction by more than `3/√N`.
    pub non_monotone: bool,
    /// Zero values produced on the Q side by the plain Monte Carlo step.
    pub q_side_zeros: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RdeOptions {
    pub pool: usize,
    pub iters: usize,
    /// Stop once `|s_{n+1} − s_n| < 3/√N`.
    pub plateau_stop: bool,
}

impl Default for RdeOptions {
    fn default() -> Self {
        Self { pool: DEFAULT_POOL, iters: DEFAULT_ITERS, plateau_stop: false }
    }
}

/// Iterates `P_{n+1} = Θ(Θ̄(P_n))` from `P_0 = Bernoulli(s_init)`.
pub fn solve_rde<R: RngCore + ?Sized>(
    pi: &DegreeDistribution,
    b: usize,
    s_init: f64,
    options: RdeOptions,
    rng: &mut R,
) -> Result<RdeRun, RdeError> {
    solve_rde_with(pi, b, s_init, options, rng, |_, _| {})
}

/// [`solve_rde`] with a callback on every generation `(n, P_n)`.
pub fn solve_rde_with<R, F>(
    pi: &DegreeDistribution,
    b: usize,
    s_init: f64,
    options: RdeOptions,
    rng: &mut R,
    mut on_generation: F,
) -> Result<RdeRun, RdeError>
where
    R: RngCore + ?Sized,
    F: FnMut(usize, &PopulationPool),
{
    check_b(b)?;
    if options.pool == 0 {
        return Err(RdeError::EmptyPool);
    }
    let pi_hat = pi.size_biased()?;
    let mut pool = PopulationPool::bernoulli(s_init, options.pool)?;
    on_generation(0, &pool);
    let noise = 3.0 / (options.pool as f64).sqrt();
    let mut s = vec![pool.off_atom()];
    let mut s_mc = vec![pool.off_atom()];
    let mut direction = 0.0f64;
    let mut non_monotone = false;
    let mut q_side_zeros = 0;
    let mut iterations = 0;
    for n in 1..=options.iters {
        let (mc, zeros) = raw_step(&pool, &pi_hat, b, options.pool, rng)?;
        q_side_zeros += zeros;
        let q = theta_bar(&pool, &pi_hat, b, options.pool, rng)?;
        pool = theta(&q, &pi_hat, b, options.pool, rng)?;
        on_generation(n, &pool);
        let (prev, cur) = (s[s.len() - 1], pool.off_atom());
        let step = cur - prev;
        if step.abs() > noise {
            if direction == 0.0 {
                direction = step.signum();
            } else if step.signum() != direction {
                non_monotone = true;
            }
        }
        s.push(cur);
        s_mc.push(mc);
        iterations = n;
        if options.plateau_stop && step.abs() < noise {
            break;
        }
    }
    Ok(RdeRun { s, s_mc, pool, iterations, non_monotone, q_side_zeros })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// `M(P) = E[½ U(Y_1, …, Y_N)]` with `N ~ π` and `Y_i` drawn from a fresh
/// `Θ̄(P)` pool.
///
/// Stratified on the number `L` of infinite inputs: strata with `L ≥ b`
/// contribute exactly `b/2`; the rest are estimated from `n_eval` draws.
pub fn m_of<R: RngCore + ?Sized>(
    p: &PopulationPool,
    pi: &DegreeDistribution,
    b: usize,
    n_eval: usize,
    rng: &mut R,
) -> Result<Estimate, RdeError> {
    check_b(b)?;
    check_side(p, Side::P)?;
    let pi_hat = pi.size_biased()?;
    let q = theta_bar(p, &pi_hat, b, n_eval.max(1), rng)?;
    let t = q.atom;
    let saturated: f64 = strata(pi, t, |_, l| l >= b).iter().map(|x| x.2).sum();
    let open = strata(pi, t, |_, l| l < b);
    let open_mass: f64 = open.iter().map(|x| x.2).sum();
    let sub_seed = rng.next_u64();
    let exact = 0.5 * b as f64 * saturated;
    if open_mass <= 0.0 || n_eval == 0 {
        return Ok(Estimate { mean: exact, stderr: SE_FLOOR });
    }
    let pick = WeightedIndex::new(open.iter().map(|x| x.2)).expect("positive weights");
    let values = fill(n_eval, sub_seed, |rng, scratch| {
        let (n, l, _) = open[pick.sample(rng)];
        let mu = LocalMeasure::bmatching(n, b).expect("b ≥ 1");
        let field: Vec<ExtReal> = (0..n)
            .map(|i| if i < l { ExtReal::Infinite } else { ExtReal::Finite(q.draw_off_atom(rng)) })
            .collect();
        0.5 * mu.energy_with(field, scratch)
    });
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(Estimate {
        mean: exact + open_mass * mean,
        stderr: (open_mass * (var / k).sqrt()).max(SE_FLOOR),
    })
}

/// Groups pools whose pairwise Wasserstein-1 distance is below `radius`
/// (single linkage); returns the group index of each pool.
pub fn cluster_pools(pools: &[PopulationPool], radius: f64) -> Vec<usize> {
    let n = pools.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if pools[i].wasserstein(&pools[j]) < radius {
                let (a, b) = (label[i], label[j]);
                for l in label.iter_mut() {
                    if *l == b {
                        *l = a;
                    }
                }
            }
        }
    }
    let mut distinct: Vec<usize> = label.clone();
    distinct.sort_unstable();
    distinct.dedup();
    label.iter().map(|l| distinct.binary_search(l).expect("present")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn theta_examples() {
        let inf = PopulationPool::point(Side::Q, ExtReal::Infinite, 100).unwrap();
        let d2 = DegreeDistribution::dirac(2);
        let p = theta(&inf, &d2, 1, 100, &mut rng()).unwrap();
        assert_eq!(p.atom, 1.0);
        let p = theta(&inf, &DegreeDistribution::dirac(0), 1, 100, &mut rng()).unwrap();
        assert_eq!((p.atom, p.samples[0]), (0.0, 1.0));
        let one = PopulationPool::point(Side::Q, ExtReal::ONE, 100).unwrap();
        let p = theta(&one, &d2, 1, 100, &mut rng()).unwrap();
        assert_eq!(p.atom, 0.0);
        assert!(p.samples.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn theta_bar_examples() {
        let zero = PopulationPool::point(Side::P, ExtReal::ZERO, 100).unwrap();
        let d2 = DegreeDistribution::dirac(2);
        assert_eq!(theta_bar(&zero, &d2, 1, 100, &mut rng()).unwrap().atom, 1.0);
        let one = PopulationPool::point(Side::P, ExtReal::ONE, 100).unwrap();
        let q = theta_bar(&one, &d2, 1, 100, &mut rng()).unwrap();
        assert_eq!(q.atom, 0.0);
        assert!(q.samples.iter().all(|&y| y == 0.5));
        let q = theta_bar(&one, &DegreeDistribution::dirac(0), 1, 100, &mut rng()).unwrap();
        assert_eq!(q.atom, 1.0);
    }

    #[test]
    fn rejects_bad_pools() {
        assert!(PopulationPool::point(Side::Q, ExtReal::ZERO, 10).is_err());
        assert!(PopulationPool::point(Side::P, ExtReal::Finite(2.0), 10).is_err());
        let q = PopulationPool::point(Side::Q, ExtReal::ONE, 10).unwrap();
        assert!(matches!(
            theta_bar(&q, &DegreeDistribution::dirac(2), 1, 10, &mut rng()),
            Err(RdeError::WrongSide(Side::Q, Side::P))
        ));
    }

    #[test]
    fn zero_is_fixed_for_regular_trees() {
        let run = solve_rde(
            &DegreeDistribution::dirac(3),
            1,
            0.0,
            RdeOptions { pool: 1000, iters: 5, plateau_stop: false },
            &mut rng(),
        )
        .unwrap();
        assert!(run.s.iter().all(|&s| s == 0.0));
        assert!(run.s_mc.iter().all(|&s| s == 0.0));
        assert_eq!(run.pool.atom, 1.0);
    }

    #[test]
    fn m_of_examples() {
        let zero = PopulationPool::point(Side::P, ExtReal::ZERO, 10).unwrap();
        let m = m_of(&zero, &DegreeDistribution::dirac(3), 1, 1000, &mut rng()).unwrap();
        assert_eq!(m.mean, 0.5);
        let isolated = DegreeDistribution::explicit(vec![0.5, 0.5]).unwrap();
        // mean degree ½; a Poisson-free sanity check that isolated vertices add nothing
        let m = m_of(&zero, &isolated, 1, 1000, &mut rng()).unwrap();
        assert!((m.mean - 0.25).abs() < 1e-15);
    }

    #[test]
    fn deterministic_given_seed() {
        let pi = DegreeDistribution::poisson(2.0).unwrap();
        let opts = RdeOptions { pool: 5000, iters: 3, plateau_stop: false };
        let a = solve_rde(&pi, 2, 0.5, opts, &mut rng()).unwrap();
        let b = solve_rde(&pi, 2, 0.5, opts, &mut rng()).unwrap();
        assert_eq!(a.pool, b.pool);
        assert_eq!(a.s_mc, b.s_mc);
    }

    #[test]
    fn wasserstein_of_points() {
        let a = PopulationPool::point(Side::P, ExtReal::Finite(0.25), 10).unwrap();
        let b = PopulationPool::point(Side::P, ExtReal::Finite(0.75), 10).unwrap();
        assert!((a.wasserstein(&b) - 0.5).abs() < 1e-15);
        let z = PopulationPool::point(Side::P, ExtReal::ZERO, 10).unwrap();
        assert!((z.wasserstein(&a) - 0.25).abs() < 1e-15);
        assert_eq!(cluster_pools(&[a.clone(), b, a], 0.1), vec![0, 1, 0]);
    }
}
