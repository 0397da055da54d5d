//! Seeded random graph ensembles and degree distributions.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)`, a portable
//! counter-based stream cipher generator, so a seed fixes the output on every
//! platform.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::measure::{LocalMeasure, MeasureError};
use crate::network::{Network, NetworkError};

/// Tail mass left out by the automatic Poisson truncation.
pub const POISSON_TAIL: f64 = 1e-12;
pub const DEFAULT_POISSON_CUTOFF: usize = 60;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("probabilities must be nonnegative and sum to 1 (sum is {0})")]
    NotNormalized(f64),
    #[error("degree distribution has zero mean")]
    ZeroMean,
    #[error("Poisson mean must be finite and nonnegative, got {0}")]
    BadMean(f64),
    #[error("n·d = {n}·{d} is odd, no {d}-regular graph exists")]
    OddRegular { n: usize, d: usize },
    #[error("degree sum {0} is odd")]
    OddDegreeSum(usize),
    #[error("could not draw a degree sequence with even sum after 1000 attempts")]
    NoEvenDegreeSum,
    #[error("need at least one vertex")]
    NoVertices,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreeKind {
    Explicit,
    PoissonTruncated { c: f64, cutoff: usize },
}

/// Probability law `π_0..π_K` on vertex degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    pub kind: DegreeKind,
    probs: Vec<f64>,
}

impl DegreeDistribution {
    pub fn explicit(probs: Vec<f64>) -> Result<Self, EnsembleError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-12 {
            return Err(EnsembleError::NotNormalized(sum));
        }
        Ok(Self { kind: DegreeKind::Explicit, probs })
    }

    /// Point mass at `d`.
    pub fn dirac(d: usize) -> Self {
        let mut probs = vec![0.0; d + 1];
        probs[d] = 1.0;
        Self { kind: DegreeKind::Explicit, probs }
    }

    /// Poisson(c) restricted to `0..=cutoff` and renormalized.
    pub fn poisson_truncated(c: f64, cutoff: usize) -> Result<Self, EnsembleError> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(EnsembleError::BadMean(c));
        }
        let log_terms: Vec<f64> = (0..=cutoff).map(|k| poisson_log_pmf(c, k)).collect();
        let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = log_terms.iter().map(|&l| (l - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        Ok(Self { kind: DegreeKind::PoissonTruncated { c, cutoff }, probs })
    }

    /// Poisson(c) with the cutoff grown from 60 until the dropped tail is
    /// below `1e-12`.
    pub fn poisson(c: f64) -> Result<Self, EnsembleError> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(EnsembleError::BadMean(c));
        }
        let mut cutoff = DEFAULT_POISSON_CUTOFF;
        while poisson_tail(c, cutoff) >= POISSON_TAIL {
            cutoff *= 2;
        }
        Self::poisson_truncated(c, cutoff)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_degree(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }

    /// `π̂_n = (n+1) π_{n+1} / Σ_k k π_k`.
    pub fn size_biased(&self) -> Result<Self, EnsembleError> {
        let mean = self.mean();
        if mean <= 0.0 {
            return Err(EnsembleError::ZeroMean);
        }
        let mut probs: Vec<f64> = (1..self.probs.len()).map(|k| k as f64 * self.probs[k] / mean).collect();
        if probs.is_empty() {
            probs.push(1.0);
        }
        let kind = match self.kind {
            DegreeKind::PoissonTruncated { c, cutoff } if cutoff > 0 => {
                DegreeKind::PoissonTruncated { c, cutoff: cutoff - 1 }
            }
            _ => DegreeKind::Explicit,
        };
        Ok(Self { kind, probs })
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("validated probabilities")
    }
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn poisson_log_pmf(c: f64, k: usize) -> f64 {
    if c == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -c + k as f64 * c.ln() - ln_factorial(k)
}

/// `P(Poisson(c) > cutoff)`, summed term by term.
fn poisson_tail(c: f64, cutoff: usize) -> f64 {
    let mut tail = 0.0;
    let mut k = cutoff + 1;
    loop {
        let term = poisson_log_pmf(c, k).exp();
        tail += term;
        if (k as f64) > c && term < 1e-18 * tail.max(1e-300) || term == 0.0 && (k as f64) > c {
            return tail;
        }
        k += 1;
    }
}

/// A sampled simple graph before measures are attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// Self-loops removed by the erased configuration model.
    pub erased_loops: usize,
    /// Repeated pairs removed by the erased configuration model.
    pub erased_multi: usize,
}

impl RandomGraph {
    pub fn network<F>(&self, measure_for: F) -> Result<Network, NetworkError>
    where
        F: FnMut(usize, usize) -> Result<LocalMeasure, MeasureError>,
    {
        Network::build(self.n, &self.edges, measure_for)
    }

    pub fn bmatching(&self, b: usize) -> Result<Network, NetworkError> {
        Network::bmatching(self.n, &self.edges, b)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `G(n, p)` with `p = c/n`, sampled by geometric skipping over vertex pairs.
pub fn erdos_renyi(n: usize, c: f64, seed: u64) -> Result<RandomGraph, EnsembleError> {
    if n == 0 {
        return Err(EnsembleError::NoVertices);
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(EnsembleError::BadMean(c));
    }
    let p = (c / n as f64).min(1.0);
    let mut edges = Vec::new();
    if p > 0.0 {
        let mut rng = rng_for(seed);
        let log_q = (1.0 - p).ln();
        // pairs (w, v) with w < v, enumerated row by row
        let (mut v, mut w) = (1usize, -1i64);
        while v < n {
            let skip = if p >= 1.0 {
                0.0
            } else {
                let r: f64 = rng.random();
                ((1.0 - r).ln() / log_q).floor()
            };
            w += 1 + skip as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((w as usize, v));
            }
        }
    }
    edges.sort_unstable();
    Ok(RandomGraph { n, edges, erased_loops: 0, erased_multi: 0 })
}

/// Erased configuration model on a given degree sequence: stubs are paired
/// uniformly, then self-loops and repeated pairs are dropped.
pub fn configuration_model(degrees: &[usize], seed: u64) -> Result<RandomGraph, EnsembleError> {
    let mut rng = rng_for(seed);
    pair_stubs(degrees, &mut rng)
}

fn pair_stubs<R: Rng + ?Sized>(degrees: &[usize], rng: &mut R) -> Result<RandomGraph, EnsembleError> {
    let n = degrees.len();
    if n == 0 {
        return Err(EnsembleError::NoVertices);
    }
    let total: usize = degrees.iter().sum();
    if total % 2 == 1 {
        return Err(EnsembleError::OddDegreeSum(total));
    }
    let mut stubs: Vec<usize> = degrees.iter().enumerate().flat_map(|(v, &d)| std::iter::repeat_n(v, d)).collect();
    stubs.shuffle(rng);
    let mut edges = Vec::with_capacity(total / 2);
    let mut erased_loops = 0;
    for pair in stubs.chunks_exact(2) {
        let (u, v) = (pair[0], pair[1]);
        if u == v {
            erased_loops += 1;
        } else {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort_unstable();
    let before = edges.len();
    edges.dedup();
    let erased_multi = before - edges.len();
    Ok(RandomGraph { n, edges, erased_loops, erased_multi })
}

/// Erased configuration model with degrees drawn i.i.d. from `pi`. An odd
/// degree sum is repaired by redrawing one uniformly chosen vertex's degree.
pub fn configuration_model_from(pi: &DegreeDistribution, n: usize, seed: u64) -> Result<RandomGraph, EnsembleError> {
    if n == 0 {
        return Err(EnsembleError::NoVertices);
    }
    let mut rng = rng_for(seed);
    let sampler = pi.sampler();
    let mut degrees: Vec<usize> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    let mut tries = 0;
    while degrees.iter().sum::<usize>() % 2 == 1 {
        if tries == 1000 {
            return Err(EnsembleError::NoEvenDegreeSum);
        }
        let v = rng.random_range(0..n);
        degrees[v] = sampler.sample(&mut rng);
        tries += 1;
    }
    pair_stubs(&degrees, &mut rng)
}

/// Erased configuration model with every degree equal to `d`.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<RandomGraph, EnsembleError> {
    if n == 0 {
        return Err(EnsembleError::NoVertices);
    }
    if (n * d) % 2 == 1 {
        return Err(EnsembleError::OddRegular { n, d });
    }
    configuration_model(&vec![d; n], seed)
}

/// Total-variation distance between an empirical histogram and `pi`.
pub fn total_variation(histogram: &[usize], pi: &DegreeDistribution) -> f64 {
    let total: usize = histogram.iter().sum();
    let len = histogram.len().max(pi.probs().len());
    0.5 * (0..len)
        .map(|k| {
            let emp = histogram.get(k).copied().unwrap_or(0) as f64 / total as f64;
            (emp - pi.probs().get(k).copied().unwrap_or(0.0)).abs()
        })
        .sum::<f64>()
}
