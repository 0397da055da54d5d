//! The cavity operator and its monotone fixed-point solvers.
//!
//! At activity `t` the cavity operator maps a configuration `x` to
//! `y_{i→j} = t Γ^{ij}_{μ_i}(x_{k→i} : k ∈ ∂i \ j)`. For cavity-monotone
//! measures it is non-increasing, so the synchronous iterates from `x⁰ = 0`
//! interleave: even iterates increase, odd iterates decrease, and every
//! fixed point sits between them. The solver reports both envelopes and the
//! gap between them instead of a single vector.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::exact::{ExactError, Oracle};
use crate::ext::ExtReal;
use crate::measure::{is_cavity_monotone_exchangeable, LocalMeasure, Scratch};
use crate::network::{Configuration, Network};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Energy-identity agreement demanded at a converged fixed point.
pub const ENERGY_IDENTITY_TOL: f64 = 1e-9;

/// Largest vertex degree for which [`marginal`] enumerates subsets.
pub const MAX_MARGINAL_DEGREE: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum CavityError {
    #[error("vertex {0}: the empty set has weight zero")]
    EmptySetWeightZero(usize),
    #[error("vertex {0}: exchangeable coefficients are not log-concave with support an interval containing 0 and 1")]
    NotCavityMonotone(usize),
    #[error("activity must be positive and finite, got {0}")]
    BadActivity(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("configuration has {got} entries, the network has {expected} arcs")]
    ConfigurationLength { got: usize, expected: usize },
    #[error("energy identity violated: {vertex_form} (vertex form) vs {edge_form} (edge form)")]
    EnergyIdentity { vertex_form: f64, edge_form: f64 },
    #[error("no convergence at t = {t}: gap {gap} after {iterations} iterations")]
    NotConverged { t: f64, gap: f64, iterations: usize },
    #[error("vertex {vertex} has degree {degree}; marginals are enumerated up to degree 20")]
    DegreeTooLarge { vertex: usize, degree: usize },
    #[error("arc {0}: the cavity ratio is infinite at a finite field, which needs a downward-closed support")]
    InfiniteRatio(usize),
    #[error("this operation needs a {0} activity solution")]
    WrongActivity(&'static str),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Activity `t ∈ (0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activity {
    Finite(f64),
    Infinite,
}

impl Activity {
    pub fn finite(self) -> Option<f64> {
        match self {
            Activity::Finite(t) => Some(t),
            Activity::Infinite => None,
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activity::Finite(t) => write!(f, "{t}"),
            Activity::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Activity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Activity::Finite(t) => s.serialize_f64(*t),
            Activity::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Activity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match ExtReal::deserialize(d)? {
            ExtReal::Finite(t) => Activity::Finite(t),
            ExtReal::Infinite => Activity::Infinite,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavitySolution {
    pub t: Activity,
    pub x_minus: Configuration,
    pub x_plus: Configuration,
    /// Largest arcwise [`ExtReal::gap`] between the envelopes.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CavitySolution {
    /// Arcwise midpoint of the envelopes.
    pub fn estimate(&self) -> Configuration {
        self.x_minus.iter().zip(&self.x_plus).map(|(a, b)| a.midpoint(*b)).collect()
    }
}

pub fn max_gap(a: &[ExtReal], b: &[ExtReal]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.gap(*y)).fold(0.0, f64::max)
}

/// Default iteration budget: `10 · diameter + 1000`.
pub fn default_max_iters(net: &Network) -> usize {
    10 * net.diameter() + 1000
}

/// Rejects networks outside the solver's guarantees: `μ_i(∅) = 0`, or an
/// exchangeable measure that is not cavity-monotone. Table measures are
/// accepted as given.
pub fn check_network(net: &Network) -> Result<(), CavityError> {
    for v in 0..net.n_vertices() {
        let m = net.measure(v);
        if m.empty_weight() <= 0.0 {
            return Err(CavityError::EmptySetWeightZero(v));
        }
        if m.capacity().is_none() {
            if let Some(c) = m.size_coefficients() {
                if !is_cavity_monotone_exchangeable(&c) {
                    return Err(CavityError::NotCavityMonotone(v));
                }
            }
        }
    }
    Ok(())
}

fn check_len(net: &Network, x: &[ExtReal]) -> Result<(), CavityError> {
    if x.len() != net.n_arcs() {
        return Err(CavityError::ConfigurationLength { got: x.len(), expected: net.n_arcs() });
    }
    Ok(())
}

fn check_t(t: f64) -> Result<(), CavityError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(CavityError::BadActivity(t))
    }
}

/// Writes `Γ_G(x)` into `out`: the cavity ratio on every arc, without `t`.
fn gamma_into(net: &Network, x: &[ExtReal], scratch: &mut Scratch, out: &mut [ExtReal]) {
    for i in 0..net.n_vertices() {
        let mu = net.measure(i);
        let deg = net.degree(i);
        for s in 0..deg {
            let field = (0..deg).filter(|&r| r != s).map(|r| x[net.in_arc(i, r)]);
            out[net.out_arc(i, s)] = mu.cavity_ratio_with(s, field, scratch);
        }
    }
}

/// Writes `Γ̄_G(y)` into `out`; `y` must be finite.
fn gamma_bar_into(net: &Network, y: &[ExtReal], scratch: &mut Scratch, out: &mut [ExtReal]) -> Result<(), CavityError> {
    if let Some(a) = y.iter().position(|v| v.is_infinite()) {
        return Err(CavityError::InfiniteRatio(a));
    }
    for i in 0..net.n_vertices() {
        let mu = net.measure(i);
        let deg = net.degree(i);
        for s in 0..deg {
            let field = (0..deg).filter(|&r| r != s).map(|r| y[net.in_arc(i, r)].to_f64());
            out[net.out_arc(i, s)] = mu.infinite_cavity_ratio_with(s, field, scratch);
        }
    }
    Ok(())
}

/// One synchronous sweep `y = t Γ_G(x)`.
pub fn cavity_update(net: &Network, x: &[ExtReal], t: f64) -> Result<Configuration, CavityError> {
    check_t(t)?;
    check_len(net, x)?;
    let mut out = vec![ExtReal::ZERO; net.n_arcs()];
    gamma_into(net, x, &mut Scratch::new(), &mut out);
    out.iter_mut().for_each(|v| *v = v.scale(t));
    Ok(out)
}

/// `steps` synchronous sweeps from `x0`.
pub fn iterate(net: &Network, x0: &[ExtReal], t: f64, steps: usize) -> Result<Configuration, CavityError> {
    let mut x = x0.to_vec();
    for _ in 0..steps {
        x = cavity_update(net, &x, t)?;
    }
    check_len(net, &x)?;
    Ok(x)
}

/// Iterates from `x⁰ = 0` until two consecutive iterates are within `tol`.
///
/// `iterations` is the first `k` with `gap(x^k, x^{k+1}) ≤ tol`; on a tree it
/// is at most the diameter, with gap exactly zero.
pub fn solve_cavity(net: &Network, t: f64, max_iters: usize, tol: f64) -> Result<CavitySolution, CavityError> {
    check_t(t)?;
    if !(tol > 0.0) {
        return Err(CavityError::BadTolerance(tol));
    }
    check_network(net)?;
    let mut scratch = Scratch::new();
    let mut prev = vec![ExtReal::ZERO; net.n_arcs()];
    let mut next = prev.clone();
    let mut k = 0;
    loop {
        gamma_into(net, &prev, &mut scratch, &mut next);
        next.iter_mut().for_each(|v| *v = v.scale(t));
        let gap = max_gap(&prev, &next);
        let converged = gap <= tol;
        if converged || k + 1 >= max_iters.max(1) {
            let (x_minus, x_plus) = if k % 2 == 0 { (prev, next) } else { (next, prev) };
            return Ok(CavitySolution { t: Activity::Finite(t), x_minus, x_plus, gap, iterations: k, converged });
        }
        std::mem::swap(&mut prev, &mut next);
        k += 1;
    }
}

/// Both expressions of the energy at a fixed point, with their breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `½ Σ_i U_{μ_i}(x_{j→i})`.
    pub energy: f64,
    /// `Σ_{ij} x_{j→i} x_{i→j} / (t + x_{j→i} x_{i→j})`.
    pub edge_form: f64,
    pub per_vertex: Vec<f64>,
    pub per_edge: Vec<f64>,
}

fn edge_prob(t: f64, a: ExtReal, b: ExtReal) -> f64 {
    match (a, b) {
        (ExtReal::Finite(x), ExtReal::Finite(y)) => {
            let p = x * y;
            if p == 0.0 {
                0.0
            } else {
                p / (t + p)
            }
        }
        (a, b) if a.is_zero() || b.is_zero() => 0.0,
        _ => 1.0,
    }
}

/// Energy at a finite-activity solution, evaluated at the envelope midpoint.
pub fn energy_at(net: &Network, sol: &CavitySolution) -> Result<EnergyReport, CavityError> {
    let t = sol.t.finite().ok_or(CavityError::WrongActivity("finite"))?;
    let x = sol.estimate();
    check_len(net, &x)?;
    let per_vertex = vertex_energies(net, &x);
    let per_edge: Vec<f64> = (0..net.n_edges()).map(|k| edge_prob(t, x[2 * k], x[2 * k + 1])).collect();
    let energy = 0.5 * per_vertex.iter().sum::<f64>();
    let edge_form: f64 = per_edge.iter().sum();
    let scale = energy.abs().max(edge_form.abs());
    if (energy - edge_form).abs() > ENERGY_IDENTITY_TOL * scale {
        return Err(CavityError::EnergyIdentity { vertex_form: energy, edge_form });
    }
    Ok(EnergyReport { energy, edge_form, per_vertex, per_edge })
}

/// `U_{μ_i}` of the incoming messages at every vertex.
pub fn vertex_energies(net: &Network, x: &[ExtReal]) -> Vec<f64> {
    let mut scratch = Scratch::new();
    (0..net.n_vertices())
        .map(|i| {
            let field = (0..net.degree(i)).map(|s| x[net.in_arc(i, s)]);
            net.measure(i).energy_with(field, &mut scratch)
        })
        .collect()
}

/// `P(F ∩ E_i = I) ∝ μ_i(I) Π_{j: ij ∈ I} x_{j→i}` as `(slot mask, probability)`.
pub fn marginal(net: &Network, sol: &CavitySolution, vertex: usize) -> Result<Vec<(u32, f64)>, CavityError> {
    let deg = net.degree(vertex);
    if deg > MAX_MARGINAL_DEGREE {
        return Err(CavityError::DegreeTooLarge { vertex, degree: deg });
    }
    let x = sol.estimate();
    let incoming: Vec<f64> = (0..deg).map(|s| x[net.in_arc(vertex, s)].to_f64()).collect();
    let mu: &LocalMeasure = net.measure(vertex);
    let support = mu.support().expect("degree checked above");
    let mut out: Vec<(u32, f64)> = support
        .into_iter()
        .map(|(mask, w)| {
            let p = incoming
                .iter()
                .enumerate()
                .filter(|&(s, _)| mask & (1 << s) != 0)
                .fold(w, |acc, (_, &m)| acc * m);
            (mask, p)
        })
        .filter(|&(_, p)| p > 0.0)
        .collect();
    let z: f64 = out.iter().map(|&(_, p)| p).sum();
    out.iter_mut().for_each(|(_, p)| *p /= z);
    Ok(out)
}

pub fn edge_probability(net: &Network, sol: &CavitySolution, edge: usize) -> Result<f64, CavityError> {
    let t = sol.t.finite().ok_or(CavityError::WrongActivity("finite"))?;
    let x = sol.estimate();
    check_len(net, &x)?;
    Ok(edge_prob(t, x[2 * edge], x[2 * edge + 1]))
}

/// `A(μ_i) A(μ_j)` summed over edges.
fn spread_sum(net: &Network) -> f64 {
    net.edges()
        .iter()
        .map(|&(u, v)| net.measure(u).spread() * net.measure(v).spread())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEntropyReport {
    pub t: f64,
    /// Estimate of `(1/|V|) log Z(G; t)`.
    pub value: f64,
    /// `(1/|V|) Σ_i log μ_i(∅)`.
    pub base: f64,
    /// `∫_δ^t u_BP(s)/s ds`.
    pub integral: f64,
    pub delta: f64,
    /// Upper bound on the dropped `∫_0^δ` piece.
    pub tail_bound: f64,
    pub evaluations: usize,
    /// The cavity energy is exact on forests; elsewhere this is an estimate.
    pub exact: bool,
}

/// `(1/|V|) Σ log μ_i(∅) + ∫_0^t u_BP(s)/s ds` with `u_BP = energy/|V|`.
///
/// The piece on `[0, δ]` is dropped, with `δ` chosen so that the bound
/// `δ Σ_{ij} A(μ_i)A(μ_j) / |V|` stays below `tol/2`; the rest is integrated by
/// adaptive Simpson in `θ = log s` to `tol/2`.
pub fn free_entropy(net: &Network, t: f64, tol: f64) -> Result<FreeEntropyReport, CavityError> {
    check_t(t)?;
    if !(tol > 0.0) {
        return Err(CavityError::BadTolerance(tol));
    }
    check_network(net)?;
    let n = net.n_vertices().max(1) as f64;
    let base = net.measures().iter().map(|m| m.empty_weight().ln()).sum::<f64>() / n;
    let slope = spread_sum(net) / n;
    let exact = net.is_tree();
    if slope == 0.0 {
        return Ok(FreeEntropyReport { t, value: base, base, integral: 0.0, delta: t, tail_bound: 0.0, evaluations: 0, exact });
    }
    let delta = (0.25 * tol / slope).min(t);
    let tail_bound = delta * slope;
    let max_iters = default_max_iters(net);
    let mut evaluations = 0;
    let mut failure = None;
    let mut u = |theta: f64| -> f64 {
        if failure.is_some() {
            return 0.0;
        }
        evaluations += 1;
        let s = theta.exp();
        let inner_tol = DEFAULT_TOL * s.min(1.0);
        let result = solve_cavity(net, s, max_iters, inner_tol).and_then(|sol| {
            if sol.converged {
                energy_at(net, &sol)
            } else {
                Err(CavityError::NotConverged { t: s, gap: sol.gap, iterations: sol.iterations })
            }
        });
        match result {
            Ok(r) => r.energy / n,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let integral = if delta < t { adaptive_simpson(&mut u, delta.ln(), t.ln(), 0.5 * tol) } else { 0.0 };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(FreeEntropyReport { t, value: base + integral, base, integral, delta, tail_bound, evaluations, exact })
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Iterates `z ↦ Γ̄_G(Γ_G(z))` from `z⁰ = 0` (lower envelope, `x_minus`) and
/// from `z⁰ = ∞` (upper envelope, `x_plus`).
///
/// The map is non-decreasing, so the lower run increases to the smallest
/// fixed point and the upper run decreases to the largest. The run stops when
/// the envelopes agree within `tol` (`converged`), or when the rank estimates
/// they induce agree within `tol · max(1, rank)`; the latter covers messages
/// that diverge only linearly, where the envelopes never meet but the rank is
/// pinned. Persistent gaps are reported as they are.
pub fn solve_infinite_activity(net: &Network, max_iters: usize, tol: f64) -> Result<CavitySolution, CavityError> {
    if !(tol > 0.0) {
        return Err(CavityError::BadTolerance(tol));
    }
    check_network(net)?;
    let arcs = net.n_arcs();
    let mut scratch = Scratch::new();
    let mut lower = vec![ExtReal::ZERO; arcs];
    let mut upper = vec![ExtReal::Infinite; arcs];
    let mut y = vec![ExtReal::ZERO; arcs];
    let mut next = vec![ExtReal::ZERO; arcs];
    let mut iterations = 0;
    let mut lower_done = false;
    let mut upper_done = false;
    loop {
        let gap = max_gap(&lower, &upper);
        if gap <= tol {
            return Ok(CavitySolution { t: Activity::Infinite, x_minus: lower, x_plus: upper, gap, iterations, converged: true });
        }
        let lo = 0.5 * vertex_energies(net, &lower).iter().sum::<f64>();
        let hi = 0.5 * vertex_energies(net, &upper).iter().sum::<f64>();
        if (hi - lo).abs() <= tol * hi.abs().max(1.0) || iterations >= max_iters || (lower_done && upper_done) {
            return Ok(CavitySolution { t: Activity::Infinite, x_minus: lower, x_plus: upper, gap, iterations, converged: false });
        }
        if !lower_done {
            gamma_into(net, &lower, &mut scratch, &mut y);
            gamma_bar_into(net, &y, &mut scratch, &mut next)?;
            lower_done = max_gap(&lower, &next) == 0.0;
            std::mem::swap(&mut lower, &mut next);
        }
        if !upper_done {
            gamma_into(net, &upper, &mut scratch, &mut y);
            gamma_bar_into(net, &y, &mut scratch, &mut next)?;
            upper_done = max_gap(&upper, &next) == 0.0;
            std::mem::swap(&mut upper, &mut next);
        }
        iterations += 1;
    }
}

/// `½ Σ_i U_{μ_i}(x̄_{j→i})` at the lower envelope of an infinite-activity
/// solution.
pub fn rank_estimate(net: &Network, sol: &CavitySolution) -> Result<f64, CavityError> {
    Ok(rank_bracket(net, sol)?.0)
}

/// Rank estimates at the lower and upper envelopes.
pub fn rank_bracket(net: &Network, sol: &CavitySolution) -> Result<(f64, f64), CavityError> {
    if sol.t != Activity::Infinite {
        return Err(CavityError::WrongActivity("infinite"));
    }
    check_len(net, &sol.x_minus)?;
    let lo = 0.5 * vertex_energies(net, &sol.x_minus).iter().sum::<f64>();
    let hi = 0.5 * vertex_energies(net, &sol.x_plus).iter().sum::<f64>();
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBounds {
    /// `t Σ_{ij} A(μ_i) A(μ_j)`, an upper bound on the energy.
    pub upper: f64,
    /// `M − (|E| log 2 + Σ_i log A(μ_i)) / log t`, only for `t > 1`.
    pub lower: Option<f64>,
    /// The `M` used in `lower`.
    pub max_size: f64,
    /// Whether `max_size` is the exact `M(G)` (from the oracle).
    pub max_size_exact: bool,
}

pub fn energy_bounds(net: &Network, t: f64) -> Result<EnergyBounds, CavityError> {
    check_t(t)?;
    let upper = t * spread_sum(net);
    let (max_size, max_size_exact) = if net.n_edges() <= crate::exact::MAX_EDGES {
        (Oracle::new(net)?.max_size() as f64, true)
    } else {
        let sol = solve_infinite_activity(net, default_max_iters(net), DEFAULT_TOL)?;
        (rank_estimate(net, &sol)?, false)
    };
    let lower = (t > 1.0).then(|| {
        let log_a: f64 = net.measures().iter().map(|m| m.spread().ln()).sum();
        max_size - (net.n_edges() as f64 * std::f64::consts::LN_2 + log_a) / t.ln()
    });
    Ok(EnergyBounds { upper, lower, max_size, max_size_exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::partition_polynomial;
    use crate::network::fixtures::*;
    use approx::assert_relative_eq;

    fn fin(x: f64) -> ExtReal {
        ExtReal::Finite(x)
    }

    #[test]
    fn update_examples() {
        let p = path(3, 1);
        let y = cavity_update(&p, &vec![ExtReal::ZERO; 4], 1.0).unwrap();
        assert!(y.iter().all(|&v| v == ExtReal::ONE));
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let tri = triangle(1);
        let y = cavity_update(&tri, &vec![fin(golden); 6], 1.0).unwrap();
        for v in y {
            assert_relative_eq!(v.to_f64(), golden, max_relative = 1e-15);
        }
        let x1 = cavity_update(&tri, &vec![ExtReal::ZERO; 6], 2.0).unwrap();
        let x2 = cavity_update(&tri, &x1, 2.0).unwrap();
        assert!(x2.iter().zip(&x1).all(|(a, b)| a <= b));
    }

    #[test]
    fn solve_examples() {
        let p = path(5, 1);
        let sol = solve_cavity(&p, 1.0, 100, DEFAULT_TOL).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.gap, 0.0);
        assert_eq!(sol.iterations, p.diameter());
        // unconstrained vertices settle faster; the diameter is an upper bound
        let p2 = path(5, 2);
        let sol = solve_cavity(&p2, 1.0, 100, DEFAULT_TOL).unwrap();
        assert!(sol.gap == 0.0 && sol.iterations <= p2.diameter());

        let sol = solve_cavity(&triangle(1), 1.0, 60, DEFAULT_TOL).unwrap();
        assert!(sol.converged && sol.gap < 1e-10);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        for v in sol.estimate() {
            assert!((v.to_f64() - golden).abs() < 1e-10);
        }

        let sol = solve_cavity(&single_edge(1), 2.0, 10, DEFAULT_TOL).unwrap();
        assert_eq!(sol.estimate(), vec![fin(2.0), fin(2.0)]);
    }

    #[test]
    fn rejects_unsupported_measures() {
        let bad = Network::build(2, &[(0, 1)], |_, _| LocalMeasure::exchangeable(vec![1.0, 0.0])).unwrap();
        assert!(matches!(solve_cavity(&bad, 1.0, 10, 1e-10), Err(CavityError::NotCavityMonotone(0))));
        let empty = Network::build(2, &[(0, 1)], |_, _| LocalMeasure::exchangeable(vec![0.0, 1.0])).unwrap();
        assert!(matches!(solve_cavity(&empty, 1.0, 10, 1e-10), Err(CavityError::EmptySetWeightZero(0))));
    }

    #[test]
    fn energy_examples() {
        let sol = solve_cavity(&path(3, 1), 1.0, 100, DEFAULT_TOL).unwrap();
        assert_relative_eq!(energy_at(&path(3, 1), &sol).unwrap().energy, 2.0 / 3.0, max_relative = 1e-14);
        let e = single_edge(1);
        let sol = solve_cavity(&e, 1.0, 100, DEFAULT_TOL).unwrap();
        assert_relative_eq!(energy_at(&e, &sol).unwrap().energy, 0.5, max_relative = 1e-15);
        let tri = triangle(1);
        let sol = solve_cavity(&tri, 1.0, 100, DEFAULT_TOL).unwrap();
        let r = energy_at(&tri, &sol).unwrap();
        assert!((r.energy - 0.829180).abs() < 1e-6);
        assert_relative_eq!(r.energy, r.edge_form, max_relative = 1e-9);
        assert_eq!(partition_polynomial(&tri).unwrap().energy(1.0), 0.75);
    }

    #[test]
    fn marginal_and_edge_examples() {
        let e = single_edge(1);
        let sol = solve_cavity(&e, 1.0, 100, DEFAULT_TOL).unwrap();
        assert_eq!(marginal(&e, &sol, 0).unwrap(), vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(edge_probability(&e, &sol, 0).unwrap(), 0.5);
        let p = path(3, 1);
        let sol = solve_cavity(&p, 1.0, 100, DEFAULT_TOL).unwrap();
        let m = marginal(&p, &sol, 1).unwrap();
        assert_eq!(m.len(), 3);
        for (_, q) in m {
            assert_relative_eq!(q, 1.0 / 3.0, max_relative = 1e-14);
        }
        let tri = triangle(1);
        let sol = solve_cavity(&tri, 1.0, 100, DEFAULT_TOL).unwrap();
        assert!((edge_probability(&tri, &sol, 0).unwrap() - 0.276393).abs() < 1e-6);
        let zero = CavitySolution {
            t: Activity::Finite(1.0),
            x_minus: vec![ExtReal::ZERO; 2],
            x_plus: vec![ExtReal::ZERO; 2],
            gap: 0.0,
            iterations: 0,
            converged: true,
        };
        assert_eq!(marginal(&e, &zero, 0).unwrap(), vec![(0, 1.0)]);
        assert_eq!(edge_probability(&e, &zero, 0).unwrap(), 0.0);
    }

    #[test]
    fn free_entropy_examples() {
        let e = single_edge(1);
        let r = free_entropy(&e, 1.0, 1e-8).unwrap();
        assert!((r.value - 0.5 * 2f64.ln()).abs() < 1e-8, "{r:?}");
        let r = free_entropy(&e, 1e-9, 1e-8).unwrap();
        assert!(r.value.abs() < 1e-8);
        let empty = Network::bmatching(3, &[], 2).unwrap();
        assert_eq!(free_entropy(&empty, 5.0, 1e-8).unwrap().value, 0.0);
    }

    #[test]
    fn infinite_activity_examples() {
        let e = single_edge(1);
        let sol = solve_infinite_activity(&e, 100, DEFAULT_TOL).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x_minus, vec![ExtReal::Infinite; 2]);
        assert_eq!(rank_estimate(&e, &sol).unwrap(), 1.0);

        let p = path(3, 1);
        let sol = solve_infinite_activity(&p, 100, DEFAULT_TOL).unwrap();
        assert!(sol.converged);
        let ab = p.arc(0, 1).unwrap();
        let ba = p.arc(1, 0).unwrap();
        assert_eq!(sol.x_minus[ab], ExtReal::Infinite);
        assert_eq!(sol.x_minus[ba], ExtReal::ONE);
        assert_eq!(rank_estimate(&p, &sol).unwrap(), 1.0);
        // finite entries are the large-t limit of the finite-activity fixed point
        let big = solve_cavity(&p, 1e6, 100, DEFAULT_TOL).unwrap();
        assert!((big.estimate()[ba].to_f64() - 1.0).abs() < 1e-4);

        let s = star(3, 2);
        let sol = solve_infinite_activity(&s, 100, DEFAULT_TOL).unwrap();
        for leaf in 1..=3 {
            assert_eq!(sol.x_minus[s.arc(leaf, 0).unwrap()], ExtReal::Infinite);
            assert!(!sol.x_minus[s.arc(0, leaf).unwrap()].is_infinite());
        }
        let s1 = star(3, 1);
        let sol = solve_infinite_activity(&s1, 100, DEFAULT_TOL).unwrap();
        assert_eq!(sol.x_minus[s1.arc(0, 1).unwrap()], fin(0.5));
        assert_relative_eq!(rank_estimate(&s1, &sol).unwrap(), 1.0, max_relative = 1e-15);
        let s3 = star(3, 3);
        let sol = solve_infinite_activity(&s3, 100, DEFAULT_TOL).unwrap();
        assert_eq!(rank_estimate(&s3, &sol).unwrap(), 3.0);
    }

    #[test]
    fn bounds_examples() {
        let b = energy_bounds(&triangle(1), 0.1).unwrap();
        assert_relative_eq!(b.upper, 0.3, max_relative = 1e-15);
        assert!(b.lower.is_none());
        let b = energy_bounds(&single_edge(1), std::f64::consts::E).unwrap();
        assert_relative_eq!(b.lower.unwrap(), 1.0 - 2f64.ln(), max_relative = 1e-15);
        for net in [triangle(1), triangle(2), path(4, 1), star(4, 2)] {
            let poly = partition_polynomial(&net).unwrap();
            for t in [0.05, 0.5, 2.0, 50.0] {
                let b = energy_bounds(&net, t).unwrap();
                let u = poly.energy(t);
                assert!(u <= b.upper + 1e-12);
                if let Some(lo) = b.lower {
                    assert!(u >= lo - 1e-12);
                }
            }
        }
    }

    #[test]
    fn activity_monotonicity() {
        let net = triangle(2);
        let (s, t) = (0.7, 2.1);
        let xs = solve_cavity(&net, s, 1000, 1e-13).unwrap().estimate();
        let xt = solve_cavity(&net, t, 1000, 1e-13).unwrap().estimate();
        for (a, b) in xs.iter().zip(&xt) {
            let (a, b) = (a.to_f64(), b.to_f64());
            assert!(s / t * b <= a + 1e-12 && a <= b + 1e-12);
        }
    }
}
