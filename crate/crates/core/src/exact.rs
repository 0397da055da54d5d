//! Brute-force oracle for small networks.
//!
//! Enumerates all spanning subgraphs `F ⊆ E` (|E| ≤ 24) by depth-first search
//! over the edges in index order. A vertex's factor `μ_i(F ∩ E_i)` is
//! multiplied in as soon as its last incident edge has been decided, and a
//! branch dies as soon as the running weight is zero or some vertex already
//! holds more edges than its measure's rank. Coefficients are accumulated
//! with compensated summation.

use std::collections::HashMap;

use crate::network::Network;

pub const MAX_EDGES: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExactError {
    #[error("network has {0} edges; exact enumeration is capped at 24")]
    TooManyEdges(usize),
    #[error("edge {0} does not exist")]
    NoSuchEdge(usize),
    #[error("vertex {0} does not exist")]
    NoSuchVertex(usize),
    #[error("activity must be finite and nonnegative, got {0}")]
    BadActivity(f64),
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Calls `visit(edge_mask, weight)` for every `F ⊆ E` with positive weight
/// `Π_i μ_i(F ∩ E_i)`; bit `k` of the mask is edge `k`.
pub fn enumerate<V: FnMut(u32, f64)>(net: &Network, mut visit: V) -> Result<(), ExactError> {
    let n_edges = net.n_edges();
    if n_edges > MAX_EDGES {
        return Err(ExactError::TooManyEdges(n_edges));
    }
    let n = net.n_vertices();
    // vertices whose factor is complete once edge k is decided
    let mut finalize: Vec<Vec<usize>> = vec![Vec::new(); n_edges];
    let mut base = 1.0;
    for v in 0..n {
        match net.incident(v).iter().map(|&(_, k)| k).max() {
            Some(k) => finalize[k].push(v),
            None => base *= net.measure(v).empty_weight(),
        }
    }
    if base == 0.0 {
        return Ok(());
    }
    let mut state = Dfs {
        net,
        finalize,
        masks: vec![0; n],
        caps: (0..n).map(|v| net.measure(v).max_feasible_size()).collect(),
        visit: &mut visit,
    };
    state.descend(0, base, 0);
    Ok(())
}

struct Dfs<'a, V> {
    net: &'a Network,
    finalize: Vec<Vec<usize>>,
    masks: Vec<u32>,
    caps: Vec<usize>,
    visit: &'a mut V,
}

impl<V: FnMut(u32, f64)> Dfs<'_, V> {
    fn descend(&mut self, k: usize, weight: f64, chosen: u32) {
        if k == self.net.n_edges() {
            (self.visit)(chosen, weight);
            return;
        }
        let (u, v) = self.net.edges()[k];
        let bit_u = 1u32 << self.net.arc_slot(2 * k);
        let bit_v = 1u32 << self.net.arc_slot(2 * k + 1);
        for include in [false, true] {
            if include {
                if self.masks[u].count_ones() as usize >= self.caps[u]
                    || self.masks[v].count_ones() as usize >= self.caps[v]
                {
                    continue;
                }
                self.masks[u] |= bit_u;
                self.masks[v] |= bit_v;
            }
            let mut w = weight;
            for &i in &self.finalize[k] {
                w *= self.net.measure(i).weight_of_mask(self.masks[i]);
            }
            if w > 0.0 {
                self.descend(k + 1, w, chosen | ((include as u32) << k));
            }
            if include {
                self.masks[u] &= !bit_u;
                self.masks[v] &= !bit_v;
            }
        }
    }
}

/// Coefficients `Z_k = Σ_{|F| = k} μ(F)` of `Z(G; t)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PartitionPolynomial {
    pub coeffs: Vec<f64>,
}

impl PartitionPolynomial {
    /// Highest degree with a nonzero coefficient: `M(G)`.
    pub fn max_size(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c > 0.0).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// `log Z(t)`, scaled by the largest term.
    pub fn log_eval(&self, t: f64) -> f64 {
        log_poly(&self.coeffs, t)
    }

    /// `t Z'(t) / Z(t)`.
    pub fn energy(&self, t: f64) -> f64 {
        poly_mean(&self.coeffs, t)
    }
}

fn log_terms(coeffs: &[f64], t: f64) -> Vec<(usize, f64)> {
    let lt = t.ln();
    coeffs
        .iter()
        .enumerate()
        .filter(|&(k, &c)| c > 0.0 && (t > 0.0 || k == 0))
        .map(|(k, &c)| (k, c.ln() + if k == 0 { 0.0 } else { k as f64 * lt }))
        .collect()
}

fn log_poly(coeffs: &[f64], t: f64) -> f64 {
    let terms = log_terms(coeffs, t);
    let max = terms.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|&(_, l)| (l - max).exp()).sum::<f64>().ln()
}

fn poly_mean(coeffs: &[f64], t: f64) -> f64 {
    let terms = log_terms(coeffs, t);
    let max = terms.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s) = (0.0, 0.0);
    for (k, l) in terms {
        let w = (l - max).exp();
        z += w;
        s += k as f64 * w;
    }
    if z > 0.0 {
        s / z
    } else {
        0.0
    }
}

/// Ratio `Σ a_k t^k / Σ z_k t^k`, evaluated in the same scaled form as
/// [`PartitionPolynomial::log_eval`].
fn poly_ratio(num: &[f64], den: &[f64], t: f64) -> f64 {
    let ln = log_poly(num, t);
    if ln == f64::NEG_INFINITY {
        return 0.0;
    }
    (ln - log_poly(den, t)).exp()
}

pub fn partition_polynomial(net: &Network) -> Result<PartitionPolynomial, ExactError> {
    let mut acc = vec![CompensatedSum::default(); net.n_edges() + 1];
    enumerate(net, |mask, w| acc[mask.count_ones() as usize].add(w))?;
    Ok(PartitionPolynomial { coeffs: acc.iter().map(CompensatedSum::value).collect() })
}

pub fn exact_energy(poly: &PartitionPolynomial, t: f64) -> f64 {
    poly.energy(t)
}

pub fn exact_max_size(net: &Network) -> Result<usize, ExactError> {
    Ok(partition_polynomial(net)?.max_size())
}

pub fn exact_log_z(net: &Network, t: f64) -> Result<f64, ExactError> {
    check_t(t)?;
    Ok(partition_polynomial(net)?.log_eval(t))
}

fn check_t(t: f64) -> Result<(), ExactError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(ExactError::BadActivity(t))
    }
}

/// Everything the oracle knows about a network, as polynomials in `t`,
/// collected in one enumeration.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub polynomial: PartitionPolynomial,
    /// `edge_polys[k][j] = Σ_{F ∋ k, |F| = j} μ(F)`.
    edge_polys: Vec<Vec<f64>>,
    /// Per vertex: local edge-slot mask ↦ polynomial.
    vertex_polys: Vec<HashMap<u32, Vec<f64>>>,
}

impl Oracle {
    pub fn new(net: &Network) -> Result<Self, ExactError> {
        let n_edges = net.n_edges();
        let len = n_edges + 1;
        let mut coeffs = vec![CompensatedSum::default(); len];
        let mut edge_polys = vec![vec![0.0; len]; n_edges];
        let mut vertex_polys: Vec<HashMap<u32, Vec<f64>>> = vec![HashMap::new(); net.n_vertices()];
        // edge k ↦ (slot bit at u, slot bit at v)
        let bits: Vec<(u32, u32)> = (0..n_edges)
            .map(|k| (1 << net.arc_slot(2 * k), 1 << net.arc_slot(2 * k + 1)))
            .collect();
        let mut local = vec![0u32; net.n_vertices()];
        enumerate(net, |mask, w| {
            let size = mask.count_ones() as usize;
            coeffs[size].add(w);
            local.iter_mut().for_each(|m| *m = 0);
            let mut rest = mask;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                edge_polys[k][size] += w;
                let (u, v) = net.edges()[k];
                local[u] |= bits[k].0;
                local[v] |= bits[k].1;
            }
            for (v, &m) in local.iter().enumerate() {
                vertex_polys[v].entry(m).or_insert_with(|| vec![0.0; len])[size] += w;
            }
        })?;
        Ok(Self {
            polynomial: PartitionPolynomial { coeffs: coeffs.iter().map(CompensatedSum::value).collect() },
            edge_polys,
            vertex_polys,
        })
    }

    pub fn energy(&self, t: f64) -> f64 {
        self.polynomial.energy(t)
    }

    pub fn log_z(&self, t: f64) -> f64 {
        self.polynomial.log_eval(t)
    }

    pub fn max_size(&self) -> usize {
        self.polynomial.max_size()
    }

    pub fn edge_probability(&self, t: f64, edge: usize) -> Result<f64, ExactError> {
        check_t(t)?;
        let p = self.edge_polys.get(edge).ok_or(ExactError::NoSuchEdge(edge))?;
        Ok(poly_ratio(p, &self.polynomial.coeffs, t))
    }

    /// Law of `F ∩ E_i` as `(slot mask, probability)`, sorted by mask;
    /// subsets of probability zero are omitted.
    pub fn marginal(&self, t: f64, vertex: usize) -> Result<Vec<(u32, f64)>, ExactError> {
        check_t(t)?;
        let polys = self.vertex_polys.get(vertex).ok_or(ExactError::NoSuchVertex(vertex))?;
        let mut out: Vec<(u32, f64)> = polys
            .iter()
            .map(|(&m, p)| (m, poly_ratio(p, &self.polynomial.coeffs, t)))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        out.sort_by_key(|&(m, _)| m);
        Ok(out)
    }

    /// `E |F ∩ E_i|`.
    pub fn vertex_energy(&self, t: f64, vertex: usize) -> Result<f64, ExactError> {
        Ok(self
            .marginal(t, vertex)?
            .iter()
            .map(|&(m, p)| m.count_ones() as f64 * p)
            .sum())
    }
}

pub fn exact_edge_probability(net: &Network, t: f64, edge: usize) -> Result<f64, ExactError> {
    Oracle::new(net)?.edge_probability(t, edge)
}

pub fn exact_marginal(net: &Network, t: f64, vertex: usize) -> Result<Vec<(u32, f64)>, ExactError> {
    Oracle::new(net)?.marginal(t, vertex)
}
