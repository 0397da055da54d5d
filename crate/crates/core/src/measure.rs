//! Local measures over subsets of a vertex's incident edges.
//!
//! A [`LocalMeasure`] assigns a nonnegative weight to every subset of a finite
//! ground set `{0, .., m-1}`. Three representations are supported: an explicit
//! table, an exchangeable measure (weight depends on the subset size only) and
//! the b-matching constraint `1(|F| <= b)`, which is evaluated through the
//! exchangeable code path.
//!
//! Everything the cavity method needs from a measure reduces to sums of the
//! form `Σ_F μ(F) Π_{f∈F} w_f`, possibly restricted to sets containing or
//! avoiding one element. Limits where some weights tend to infinity (either a
//! subset of the field, or the whole field scaled by a diverging activity) are
//! evaluated by grading those sums by the number of diverging factors and
//! comparing leading coefficients; no `0 · ∞` product is ever formed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ext::ExtReal;

/// Largest ground set accepted by table measures (`2^24` subsets).
pub const MAX_TABLE_GROUND: usize = 24;

/// Largest ground set for the enumeration-based property checks.
pub const MAX_CHECK_GROUND: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("element {element} is outside the ground set of size {ground_size}")]
    ElementOutOfRange { element: usize, ground_size: usize },
    #[error("field has {got} entries, expected {expected}")]
    FieldLength { got: usize, expected: usize },
    #[error("field entry {index} is {value}; a finite nonnegative value is required")]
    InvalidFieldEntry { index: usize, value: f64 },
    #[error("weight {0} is negative or not a number")]
    InvalidWeight(f64),
    #[error("every subset has weight zero")]
    EmptySupport,
    #[error("ground set of size {0} exceeds the enumeration limit")]
    TooLarge(usize),
    #[error("b-matching capacity must be at least 1")]
    ZeroCapacity,
    #[error("the empty set has weight zero, cavity ratios are undefined")]
    EmptySetWeightZero,
    #[error("cavity ratio requested on an empty ground set")]
    EmptyGround,
    #[error("subset {0:?} appears twice in the table")]
    DuplicateSubset(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// Positive-weight entries sorted by subset bitmask.
    Table(Vec<(u32, f64)>),
    Exchangeable(Vec<f64>),
    BMatching(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMeasure {
    ground_size: usize,
    kind: Kind,
}

/// Wire form used inside network files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeasureSpec {
    Bmatching { b: usize },
    Exchangeable { coeffs: Vec<f64> },
    Table { entries: Vec<TableEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub subset: Vec<usize>,
    pub weight: f64,
}

/// A pair `(field, e, f)` at which a sampled property check failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: Vec<f64>,
    pub e: usize,
    pub f: Option<usize>,
    /// Signed amount by which the inequality fails.
    pub excess: f64,
}

fn mask_of(subset: &[usize], ground_size: usize) -> Result<u32, MeasureError> {
    let mut mask = 0u32;
    for &element in subset {
        if element >= ground_size || element >= 32 {
            return Err(MeasureError::ElementOutOfRange { element, ground_size });
        }
        mask |= 1 << element;
    }
    Ok(mask)
}

fn check_weight(w: f64) -> Result<f64, MeasureError> {
    if w.is_nan() || w < 0.0 || w.is_infinite() {
        Err(MeasureError::InvalidWeight(w))
    } else {
        Ok(w)
    }
}

/// One factor `w_f` of a graded sum; `scaled` factors carry one power of the
/// diverging variable.
#[derive(Debug, Clone, Copy)]
struct Term {
    weight: f64,
    scaled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Selection {
    All,
    Containing(usize),
    Avoiding(usize),
}

/// Coefficients of a graded sum by degree in the diverging variable, with the
/// matching first moments of `|F|`.
#[derive(Debug, Clone, Default)]
struct Graded {
    coeffs: Vec<f64>,
    moments: Vec<f64>,
}

impl Graded {
    fn reset(&mut self, len: usize) {
        self.coeffs.clear();
        self.coeffs.resize(len, 0.0);
        self.moments.clear();
        self.moments.resize(len, 0.0);
    }

    /// Highest degree with a nonzero coefficient.
    fn leading(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c > 0.0)
    }
}

/// Reusable buffers for the hot evaluation path.
#[derive(Debug, Default)]
pub struct Scratch {
    terms: Vec<Term>,
    full: Vec<Term>,
    scaled: Vec<f64>,
    plain: Vec<f64>,
    e_scaled: Vec<f64>,
    e_plain: Vec<f64>,
    coeffs: Vec<f64>,
    num: Graded,
    den: Graded,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Elementary symmetric polynomials `e_0..e_d` of `values`, `d = min(n, max_degree)`.
pub fn elementary_symmetric(values: &[f64], max_degree: usize) -> Vec<f64> {
    let mut out = Vec::new();
    elementary_symmetric_into(values, max_degree, &mut out);
    out
}

fn elementary_symmetric_into(values: &[f64], max_degree: usize, out: &mut Vec<f64>) {
    let top = values.len().min(max_degree);
    out.clear();
    out.resize(top + 1, 0.0);
    out[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        let hi = (i + 1).min(top);
        for k in (1..=hi).rev() {
            out[k] += v * out[k - 1];
        }
    }
}

impl LocalMeasure {
    pub fn bmatching(ground_size: usize, capacity: usize) -> Result<Self, MeasureError> {
        if capacity == 0 {
            return Err(MeasureError::ZeroCapacity);
        }
        Ok(Self { ground_size, kind: Kind::BMatching(capacity) })
    }

    /// Exchangeable measure `μ(F) = coeffs[|F|]` on a ground set of size
    /// `coeffs.len() - 1`.
    pub fn exchangeable(coeffs: Vec<f64>) -> Result<Self, MeasureError> {
        if coeffs.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        for &c in &coeffs {
            check_weight(c)?;
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(MeasureError::EmptySupport);
        }
        Ok(Self { ground_size: coeffs.len() - 1, kind: Kind::Exchangeable(coeffs) })
    }

    /// Table measure; subsets not listed have weight zero.
    pub fn table<I, S>(ground_size: usize, entries: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<[usize]>,
    {
        if ground_size > MAX_TABLE_GROUND {
            return Err(MeasureError::TooLarge(ground_size));
        }
        let mut table: Vec<(u32, f64)> = Vec::new();
        for (subset, weight) in entries {
            let mask = mask_of(subset.as_ref(), ground_size)?;
            let weight = check_weight(weight)?;
            table.push((mask, weight));
        }
        table.sort_by_key(|&(mask, _)| mask);
        for pair in table.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(MeasureError::DuplicateSubset(bits(pair[0].0)));
            }
        }
        table.retain(|&(_, w)| w > 0.0);
        if table.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        Ok(Self { ground_size, kind: Kind::Table(table) })
    }

    pub fn from_spec(spec: &MeasureSpec, ground_size: usize) -> Result<Self, MeasureError> {
        match spec {
            MeasureSpec::Bmatching { b } => Self::bmatching(ground_size, *b),
            MeasureSpec::Exchangeable { coeffs } => {
                if coeffs.len() != ground_size + 1 {
                    return Err(MeasureError::FieldLength {
                        got: coeffs.len(),
                        expected: ground_size + 1,
                    });
                }
                Self::exchangeable(coeffs.clone())
            }
            MeasureSpec::Table { entries } => Self::table(
                ground_size,
                entries.iter().map(|e| (e.subset.as_slice(), e.weight)),
            ),
        }
    }

    pub fn to_spec(&self) -> MeasureSpec {
        match &self.kind {
            Kind::BMatching(b) => MeasureSpec::Bmatching { b: *b },
            Kind::Exchangeable(c) => MeasureSpec::Exchangeable { coeffs: c.clone() },
            Kind::Table(t) => MeasureSpec::Table {
                entries: t
                    .iter()
                    .map(|&(mask, weight)| TableEntry { subset: bits(mask), weight })
                    .collect(),
            },
        }
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn capacity(&self) -> Option<usize> {
        match self.kind {
            Kind::BMatching(b) => Some(b),
            _ => None,
        }
    }

    /// Size coefficients for the exchangeable path; `None` for tables.
    pub fn size_coefficients(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Table(_) => None,
            Kind::Exchangeable(c) => Some(c.clone()),
            Kind::BMatching(b) => Some(bmatching_coeffs(self.ground_size, *b)),
        }
    }

    pub fn evaluate(&self, subset: &[usize]) -> Result<f64, MeasureError> {
        if let Some(&element) = subset.iter().find(|&&e| e >= self.ground_size) {
            return Err(MeasureError::ElementOutOfRange { element, ground_size: self.ground_size });
        }
        match &self.kind {
            Kind::Table(_) => Ok(self.weight_of_mask(mask_of(subset, self.ground_size)?)),
            _ => {
                let mut seen = subset.to_vec();
                seen.sort_unstable();
                seen.dedup();
                Ok(self.weight_of_size(seen.len()))
            }
        }
    }

    /// `μ(F)` for `F` given as a bitmask over the ground set.
    pub fn weight_of_mask(&self, mask: u32) -> f64 {
        match &self.kind {
            Kind::Table(t) => match t.binary_search_by_key(&mask, |&(m, _)| m) {
                Ok(i) => t[i].1,
                Err(_) => 0.0,
            },
            _ => self.weight_of_size(mask.count_ones() as usize),
        }
    }

    /// `μ(F)` for exchangeable measures as a function of `|F|`.
    fn weight_of_size(&self, size: usize) -> f64 {
        match &self.kind {
            Kind::Exchangeable(c) => c.get(size).copied().unwrap_or(0.0),
            Kind::BMatching(b) => {
                if size <= *b && size <= self.ground_size {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Table(_) => unreachable!("tables are looked up by mask"),
        }
    }

    /// Largest subset size that a local constraint can still accept, used to
    /// prune enumerations. Exact for exchangeable measures.
    pub fn max_feasible_size(&self) -> usize {
        self.rank()
    }

    pub fn empty_weight(&self) -> f64 {
        self.weight_of_mask(0)
    }

    pub fn rank(&self) -> usize {
        match &self.kind {
            Kind::Table(t) => t.iter().map(|&(m, _)| m.count_ones() as usize).max().unwrap_or(0),
            Kind::Exchangeable(c) => c.iter().rposition(|&x| x > 0.0).unwrap_or(0),
            Kind::BMatching(b) => (*b).min(self.ground_size),
        }
    }

    /// `A(μ) = max μ / min μ` over the support.
    pub fn spread(&self) -> f64 {
        let positive: Vec<f64> = match &self.kind {
            Kind::Table(t) => t.iter().map(|&(_, w)| w).collect(),
            Kind::Exchangeable(c) => c.iter().copied().filter(|&x| x > 0.0).collect(),
            Kind::BMatching(_) => vec![1.0],
        };
        let max = positive.iter().copied().fold(0.0, f64::max);
        let min = positive.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// `Z(w) = Σ_F μ(F) w^F` for a finite field.
    pub fn generating_eval(&self, field: &[f64]) -> Result<f64, MeasureError> {
        self.check_len(field.len(), self.ground_size)?;
        let mut scratch = Scratch::new();
        scratch.terms.clear();
        for (index, &value) in field.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(MeasureError::InvalidFieldEntry { index, value });
            }
            scratch.terms.push(Term { weight: value, scaled: false });
        }
        let terms = std::mem::take(&mut scratch.terms);
        let mut out = Graded::default();
        self.graded(Selection::All, &terms, &mut scratch, &mut out);
        Ok(out.coeffs[0])
    }

    /// Cavity ratio `Γ^e(w') = Z^{/e}(w') / Z^{\e}(w')`; `field` is indexed by
    /// the ground set with `e` removed. Infinite entries are resolved as limits.
    pub fn cavity_ratio(&self, e: usize, field: &[ExtReal]) -> Result<ExtReal, MeasureError> {
        self.check_cavity(e, field.len())?;
        let mut scratch = Scratch::new();
        Ok(self.cavity_ratio_with(e, field.iter().copied(), &mut scratch))
    }

    /// Allocation-free variant of [`Self::cavity_ratio`] for callers that have
    /// already validated `e` and the field length.
    pub fn cavity_ratio_with<I>(&self, e: usize, field: I, scratch: &mut Scratch) -> ExtReal
    where
        I: IntoIterator<Item = ExtReal>,
    {
        let mut terms = std::mem::take(&mut scratch.terms);
        terms.clear();
        terms.extend(field.into_iter().map(|x| match x {
            ExtReal::Finite(w) => Term { weight: w, scaled: false },
            ExtReal::Infinite => Term { weight: 1.0, scaled: true },
        }));
        let mut num = std::mem::take(&mut scratch.num);
        let mut den = std::mem::take(&mut scratch.den);
        self.graded(Selection::Containing(e), &terms, scratch, &mut num);
        self.graded(Selection::Avoiding(e), &terms, scratch, &mut den);
        let out = compare_leading(&num, 0, &den);
        scratch.terms = terms;
        scratch.num = num;
        scratch.den = den;
        out
    }

    /// `Γ̄^e(w') = lim_{t→∞} t Γ^e(t w')` for a finite field.
    pub fn infinite_cavity_ratio(&self, e: usize, field: &[f64]) -> Result<ExtReal, MeasureError> {
        self.check_cavity(e, field.len())?;
        for (index, &value) in field.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(MeasureError::InvalidFieldEntry { index, value });
            }
        }
        let mut scratch = Scratch::new();
        Ok(self.infinite_cavity_ratio_with(e, field.iter().copied(), &mut scratch))
    }

    pub fn infinite_cavity_ratio_with<I>(&self, e: usize, field: I, scratch: &mut Scratch) -> ExtReal
    where
        I: IntoIterator<Item = f64>,
    {
        let mut terms = std::mem::take(&mut scratch.terms);
        terms.clear();
        terms.extend(field.into_iter().map(|w| Term { weight: w, scaled: true }));
        let mut num = std::mem::take(&mut scratch.num);
        let mut den = std::mem::take(&mut scratch.den);
        self.graded(Selection::Containing(e), &terms, scratch, &mut num);
        self.graded(Selection::Avoiding(e), &terms, scratch, &mut den);
        // N(t) = t Z^{/e}(t w') carries one extra power of t.
        let out = compare_leading(&num, 1, &den);
        scratch.terms = terms;
        scratch.num = num;
        scratch.den = den;
        out
    }

    /// Energy `U(w) = E[|F|]`, with infinite entries resolved as limits.
    pub fn energy(&self, field: &[ExtReal]) -> Result<f64, MeasureError> {
        self.check_len(field.len(), self.ground_size)?;
        let mut scratch = Scratch::new();
        Ok(self.energy_with(field.iter().copied(), &mut scratch))
    }

    pub fn energy_with<I>(&self, field: I, scratch: &mut Scratch) -> f64
    where
        I: IntoIterator<Item = ExtReal>,
    {
        if self.ground_size == 0 {
            return 0.0;
        }
        let mut terms = std::mem::take(&mut scratch.terms);
        terms.clear();
        terms.extend(field.into_iter().map(|x| match x {
            ExtReal::Finite(w) => Term { weight: w, scaled: false },
            ExtReal::Infinite => Term { weight: 1.0, scaled: true },
        }));
        let mut out = std::mem::take(&mut scratch.num);
        self.graded(Selection::All, &terms, scratch, &mut out);
        let u = match out.leading() {
            Some(d) => out.moments[d] / out.coeffs[d],
            None => 0.0,
        };
        scratch.terms = terms;
        scratch.num = out;
        u
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<(), MeasureError> {
        if got != expected {
            Err(MeasureError::FieldLength { got, expected })
        } else {
            Ok(())
        }
    }

    fn check_cavity(&self, e: usize, len: usize) -> Result<(), MeasureError> {
        if self.ground_size == 0 {
            return Err(MeasureError::EmptyGround);
        }
        if e >= self.ground_size {
            return Err(MeasureError::ElementOutOfRange { element: e, ground_size: self.ground_size });
        }
        if self.empty_weight() <= 0.0 {
            return Err(MeasureError::EmptySetWeightZero);
        }
        self.check_len(len, self.ground_size - 1)
    }

    /// Graded sum over the sets picked by `sel`. `terms` runs over the ground
    /// set, minus the excised element for `Containing`/`Avoiding`.
    fn graded(&self, sel: Selection, terms: &[Term], scratch: &mut Scratch, out: &mut Graded) {
        match &self.kind {
            Kind::Table(table) => graded_table(table, self.ground_size, sel, terms, scratch, out),
            Kind::Exchangeable(c) => graded_exchangeable(c, sel, terms, scratch, out),
            Kind::BMatching(b) => {
                let mut coeffs = std::mem::take(&mut scratch.coeffs);
                coeffs.clear();
                coeffs.resize((*b).min(self.ground_size) + 1, 1.0);
                graded_exchangeable(&coeffs, sel, terms, scratch, out);
                scratch.coeffs = coeffs;
            }
        }
    }

    /// Support as bitmasks, enumerated (exchangeable measures expand to all
    /// subsets of admissible size).
    pub fn support(&self) -> Result<Vec<(u32, f64)>, MeasureError> {
        match &self.kind {
            Kind::Table(t) => Ok(t.clone()),
            _ => {
                if self.ground_size > MAX_CHECK_GROUND {
                    return Err(MeasureError::TooLarge(self.ground_size));
                }
                Ok((0u32..(1u32 << self.ground_size))
                    .filter_map(|mask| {
                        let w = self.weight_of_mask(mask);
                        (w > 0.0).then_some((mask, w))
                    })
                    .collect())
            }
        }
    }

    /// Sampled Rayleigh check: reports every `(w, e, f)` where
    /// `P(e,f ∈ F) - P(e ∈ F) P(f ∈ F)` exceeds `1e-12`.
    pub fn check_rayleigh_sampled<R: Rng + ?Sized>(
        &self,
        n_fields: usize,
        rng: &mut R,
    ) -> Result<Vec<Violation>, MeasureError> {
        let support = self.checked_support()?;
        let m = self.ground_size;
        let mut violations = Vec::new();
        for _ in 0..n_fields {
            let field = sample_field(m, rng);
            let stats = field_statistics(&support, &field, m);
            for e in 0..m {
                for f in (e + 1)..m {
                    let excess = stats.pair[e * m + f] - stats.single[e] * stats.single[f];
                    if excess > 1e-12 {
                        violations.push(Violation { field: field.clone(), e, f: Some(f), excess });
                    }
                }
            }
        }
        Ok(violations)
    }

    /// Sampled size-increasing check: reports every `(w, e)` where
    /// `E[|F| 1(e∈F)] - E[|F|] P(e∈F)` is not above `1e-12`.
    pub fn check_size_increasing_sampled<R: Rng + ?Sized>(
        &self,
        n_fields: usize,
        rng: &mut R,
    ) -> Result<Vec<Violation>, MeasureError> {
        let support = self.checked_support()?;
        let m = self.ground_size;
        let mut violations = Vec::new();
        for _ in 0..n_fields {
            let field = sample_field(m, rng);
            let stats = field_statistics(&support, &field, m);
            for e in 0..m {
                let diff = stats.size_with[e] - stats.size * stats.single[e];
                if diff <= 1e-12 {
                    violations.push(Violation { field: field.clone(), e, f: None, excess: -diff });
                }
            }
        }
        Ok(violations)
    }

    fn checked_support(&self) -> Result<Vec<(u32, f64)>, MeasureError> {
        if self.ground_size > MAX_CHECK_GROUND {
            return Err(MeasureError::TooLarge(self.ground_size));
        }
        self.support()
    }

    /// Checks the matroid axioms on the support (nonempty, downward closed,
    /// augmentation) by enumeration.
    pub fn support_is_matroid(&self) -> Result<bool, MeasureError> {
        let support = self.checked_support()?;
        let sets: Vec<u32> = support.iter().map(|&(m, _)| m).collect();
        Ok(family_is_matroid(&sets))
    }
}

/// Leading-coefficient comparison of `t^shift · N(t)` against `D(t)`.
fn compare_leading(num: &Graded, shift: usize, den: &Graded) -> ExtReal {
    let d_den = den.leading().expect("denominator keeps the empty set");
    match num.leading() {
        None => ExtReal::ZERO,
        Some(d_num) => {
            let d_num_total = d_num + shift;
            if d_num_total > d_den {
                ExtReal::Infinite
            } else if d_num_total < d_den {
                ExtReal::ZERO
            } else {
                ExtReal::Finite(num.coeffs[d_num] / den.coeffs[d_den])
            }
        }
    }
}

fn bmatching_coeffs(ground_size: usize, b: usize) -> Vec<f64> {
    vec![1.0; b.min(ground_size) + 1]
}

fn graded_exchangeable(
    coeffs: &[f64],
    sel: Selection,
    terms: &[Term],
    scratch: &mut Scratch,
    out: &mut Graded,
) {
    let (c, offset) = match sel {
        Selection::Containing(_) => (coeffs.get(1..).unwrap_or(&[]), 1usize),
        _ => (coeffs, 0usize),
    };
    let Some(top) = c.iter().rposition(|&x| x > 0.0) else {
        out.reset(1);
        return;
    };
    scratch.scaled.clear();
    scratch.plain.clear();
    for t in terms {
        if t.scaled {
            scratch.scaled.push(t.weight);
        } else {
            scratch.plain.push(t.weight);
        }
    }
    elementary_symmetric_into(&scratch.scaled, top, &mut scratch.e_scaled);
    elementary_symmetric_into(&scratch.plain, top, &mut scratch.e_plain);
    out.reset(scratch.e_scaled.len());
    for (k, &es) in scratch.e_scaled.iter().enumerate() {
        if es == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        let mut mom = 0.0;
        for (j, &ep) in scratch.e_plain.iter().enumerate() {
            if k + j > top {
                break;
            }
            let term = c[k + j] * es * ep;
            acc += term;
            mom += (k + j + offset) as f64 * term;
        }
        out.coeffs[k] = acc;
        out.moments[k] = mom;
    }
}

fn graded_table(
    table: &[(u32, f64)],
    ground_size: usize,
    sel: Selection,
    terms: &[Term],
    scratch: &mut Scratch,
    out: &mut Graded,
) {
    // Re-index terms by ground element; the excised slot is never read.
    scratch.full.clear();
    let excised = match sel {
        Selection::All => None,
        Selection::Containing(e) | Selection::Avoiding(e) => Some(e),
    };
    let mut it = terms.iter();
    for g in 0..ground_size {
        if Some(g) == excised {
            scratch.full.push(Term { weight: 1.0, scaled: false });
        } else {
            scratch.full.push(*it.next().expect("term count matches ground set"));
        }
    }
    out.reset(ground_size + 1);
    for &(mask, w) in table {
        let rest = match sel {
            Selection::All => mask,
            Selection::Containing(e) => {
                if mask & (1 << e) == 0 {
                    continue;
                }
                mask & !(1 << e)
            }
            Selection::Avoiding(e) => {
                if mask & (1 << e) != 0 {
                    continue;
                }
                mask
            }
        };
        let mut value = w;
        let mut degree = 0usize;
        let mut bitsleft = rest;
        while bitsleft != 0 {
            let g = bitsleft.trailing_zeros() as usize;
            bitsleft &= bitsleft - 1;
            let t = scratch.full[g];
            value *= t.weight;
            degree += t.scaled as usize;
        }
        if value > 0.0 {
            out.coeffs[degree] += value;
            out.moments[degree] += mask.count_ones() as f64 * value;
        }
    }
}

/// Ground elements of a bitmask, ascending.
pub fn bits(mask: u32) -> Vec<usize> {
    (0..32).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Coefficient conditions under which an exchangeable measure is
/// cavity-monotone: log-concave with support an interval containing 0 and 1.
/// A ground set of size zero only needs `c(0) > 0`.
pub fn is_cavity_monotone_exchangeable(coeffs: &[f64]) -> bool {
    if coeffs.is_empty() || coeffs.iter().any(|&c| c.is_nan() || c < 0.0) {
        return false;
    }
    if coeffs.len() == 1 {
        return coeffs[0] > 0.0;
    }
    if !(coeffs[0] > 0.0 && coeffs[1] > 0.0) {
        return false;
    }
    let last = coeffs.iter().rposition(|&c| c > 0.0).unwrap_or(0);
    if coeffs[..=last].iter().any(|&c| c <= 0.0) {
        return false;
    }
    (1..coeffs.len() - 1).all(|k| coeffs[k] * coeffs[k] >= coeffs[k - 1] * coeffs[k + 1])
}

fn sample_field<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    // log-uniform on [1e-2, 1e2]
    (0..m).map(|_| 10f64.powf(rng.random_range(-2.0..=2.0))).collect()
}

struct FieldStats {
    single: Vec<f64>,
    pair: Vec<f64>,
    size: f64,
    size_with: Vec<f64>,
}

fn field_statistics(support: &[(u32, f64)], field: &[f64], m: usize) -> FieldStats {
    let mut z = 0.0;
    let mut single = vec![0.0; m];
    let mut pair = vec![0.0; m * m];
    let mut size = 0.0;
    let mut size_with = vec![0.0; m];
    for &(mask, mu) in support {
        let mut w = mu;
        for (g, &x) in field.iter().enumerate() {
            if mask & (1 << g) != 0 {
                w *= x;
            }
        }
        let k = mask.count_ones() as f64;
        z += w;
        size += k * w;
        for e in 0..m {
            if mask & (1 << e) == 0 {
                continue;
            }
            single[e] += w;
            size_with[e] += k * w;
            for f in (e + 1)..m {
                if mask & (1 << f) != 0 {
                    pair[e * m + f] += w;
                }
            }
        }
    }
    single.iter_mut().for_each(|x| *x /= z);
    pair.iter_mut().for_each(|x| *x /= z);
    size_with.iter_mut().for_each(|x| *x /= z);
    FieldStats { single, pair, size: size / z, size_with }
}

/// Matroid axioms on an explicit family of subsets.
pub fn family_is_matroid(sets: &[u32]) -> bool {
    use std::collections::HashSet;
    if sets.is_empty() {
        return false;
    }
    let family: HashSet<u32> = sets.iter().copied().collect();
    for &s in &family {
        let mut rest = s;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            rest &= rest - 1;
            if !family.contains(&(s & !bit)) {
                return false;
            }
        }
    }
    // With downward closure, augmentation only needs |B| = |A| + 1.
    let max_size = family.iter().map(|s| s.count_ones()).max().unwrap_or(0);
    let mut by_size: Vec<Vec<u32>> = vec![Vec::new(); max_size as usize + 1];
    for &s in &family {
        by_size[s.count_ones() as usize].push(s);
    }
    for k in 0..max_size as usize {
        for &a in &by_size[k] {
            for &b in &by_size[k + 1] {
                let mut diff = b & !a;
                let mut ok = false;
                while diff != 0 {
                    let bit = diff & diff.wrapping_neg();
                    diff &= diff - 1;
                    if family.contains(&(a | bit)) {
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fin(xs: &[f64]) -> Vec<ExtReal> {
        xs.iter().map(|&x| ExtReal::Finite(x)).collect()
    }

    /// Brute-force cavity ratio straight from the deletion/contraction sums.
    fn brute_ratio(mu: &LocalMeasure, e: usize, field: &[f64]) -> f64 {
        let m = mu.ground_size();
        let (mut num, mut den) = (0.0, 0.0);
        for mask in 0u32..(1 << m) {
            if mask & (1 << e) != 0 {
                continue;
            }
            let mut w = 1.0;
            let mut k = 0;
            for g in 0..m {
                if g == e {
                    continue;
                }
                if mask & (1 << g) != 0 {
                    w *= field[k];
                }
                k += 1;
            }
            num += mu.weight_of_mask(mask | (1 << e)) * w;
            den += mu.weight_of_mask(mask) * w;
        }
        num / den
    }

    fn brute_energy(mu: &LocalMeasure, field: &[f64]) -> f64 {
        let (mut z, mut s) = (0.0, 0.0);
        for mask in 0u32..(1 << mu.ground_size()) {
            let mut w = mu.weight_of_mask(mask);
            for (g, &x) in field.iter().enumerate() {
                if mask & (1 << g) != 0 {
                    w *= x;
                }
            }
            z += w;
            s += mask.count_ones() as f64 * w;
        }
        s / z
    }

    fn as_table(mu: &LocalMeasure) -> LocalMeasure {
        let entries: Vec<(Vec<usize>, f64)> = (0u32..(1 << mu.ground_size()))
            .map(|m| (bits(m), mu.weight_of_mask(m)))
            .collect();
        LocalMeasure::table(mu.ground_size(), entries).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let b2 = LocalMeasure::bmatching(3, 2).unwrap();
        assert_eq!(b2.evaluate(&[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(b2.evaluate(&[]).unwrap(), 1.0);
        let ex = LocalMeasure::exchangeable(vec![1.0, 2.0, 1.0]).unwrap();
        assert_eq!(ex.evaluate(&[0, 1]).unwrap(), 1.0);
        assert!(matches!(
            b2.evaluate(&[3]),
            Err(MeasureError::ElementOutOfRange { element: 3, .. })
        ));
    }

    #[test]
    fn generating_eval_examples() {
        let b1 = LocalMeasure::bmatching(2, 1).unwrap();
        assert_eq!(b1.generating_eval(&[1.0, 1.0]).unwrap(), 3.0);
        let b2 = LocalMeasure::bmatching(3, 2).unwrap();
        assert_eq!(b2.generating_eval(&[1.0, 1.0, 1.0]).unwrap(), 7.0);
        let ex = LocalMeasure::exchangeable(vec![0.5, 2.0, 1.0]).unwrap();
        assert_eq!(ex.generating_eval(&[0.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(
            b1.generating_eval(&[1.0, f64::INFINITY]),
            Err(MeasureError::InvalidFieldEntry { index: 1, .. })
        ));
    }

    #[test]
    fn cavity_ratio_examples() {
        let b1_deg1 = LocalMeasure::bmatching(1, 1).unwrap();
        assert_eq!(b1_deg1.cavity_ratio(0, &[]).unwrap(), ExtReal::ONE);
        let b1 = LocalMeasure::bmatching(3, 1).unwrap();
        let g = b1.cavity_ratio(0, &fin(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(g.to_f64(), 1.0 / 3.0, max_relative = 1e-15);
        let b2 = LocalMeasure::bmatching(4, 2).unwrap();
        let g = b2.cavity_ratio(3, &fin(&[1.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(g.to_f64(), 4.0 / 7.0, max_relative = 1e-15);
        assert_relative_eq!(brute_ratio(&b2, 3, &[1.0, 1.0, 1.0]), 4.0 / 7.0, max_relative = 1e-15);
        let g = b1
            .cavity_ratio(0, &[ExtReal::Infinite, ExtReal::Finite(0.5)])
            .unwrap();
        assert_eq!(g, ExtReal::ZERO);
    }

    #[test]
    fn cavity_ratio_errors() {
        let empty = LocalMeasure::bmatching(0, 1).unwrap();
        assert_eq!(empty.cavity_ratio(0, &[]), Err(MeasureError::EmptyGround));
        let no_empty = LocalMeasure::exchangeable(vec![0.0, 1.0]).unwrap();
        assert_eq!(no_empty.cavity_ratio(0, &[]), Err(MeasureError::EmptySetWeightZero));
        let b1 = LocalMeasure::bmatching(2, 1).unwrap();
        assert!(matches!(b1.cavity_ratio(0, &[]), Err(MeasureError::FieldLength { .. })));
    }

    #[test]
    fn infinite_ratio_examples() {
        let b1 = LocalMeasure::bmatching(3, 1).unwrap();
        assert_eq!(b1.infinite_cavity_ratio(0, &[1.0, 1.0]).unwrap(), ExtReal::Finite(0.5));
        assert_eq!(b1.infinite_cavity_ratio(0, &[0.0, 0.0]).unwrap(), ExtReal::Infinite);
        let b2 = LocalMeasure::bmatching(3, 2).unwrap();
        assert_eq!(b2.infinite_cavity_ratio(2, &[1.0, 2.0]).unwrap(), ExtReal::Finite(1.5));
        // one positive entry with b = 2: fewer than b positives
        assert_eq!(b2.infinite_cavity_ratio(2, &[1.0, 0.0]).unwrap(), ExtReal::Infinite);
    }

    #[test]
    fn energy_examples() {
        let b1 = LocalMeasure::bmatching(1, 1).unwrap();
        assert_relative_eq!(b1.energy(&fin(&[1.0])).unwrap(), 0.5);
        let ex = LocalMeasure::exchangeable(vec![1.0, 3.0, 1.0]).unwrap();
        assert_eq!(ex.energy(&fin(&[0.0, 0.0])).unwrap(), 0.0);
        let b2 = LocalMeasure::bmatching(3, 2).unwrap();
        let u = b2
            .energy(&[ExtReal::Infinite, ExtReal::Infinite, ExtReal::ONE])
            .unwrap();
        assert_eq!(u, 2.0);
        assert_eq!(LocalMeasure::bmatching(0, 2).unwrap().energy(&[]).unwrap(), 0.0);
    }

    #[test]
    fn energy_with_infinite_entries_matches_large_field_limit() {
        // b = 2, L = 1 infinite entry: conditioning on that element.
        let b2 = LocalMeasure::bmatching(3, 2).unwrap();
        let exact = b2.energy(&[ExtReal::Infinite, ExtReal::ONE, ExtReal::Finite(2.0)]).unwrap();
        let approx = brute_energy(&b2, &[1e12, 1.0, 2.0]);
        assert_relative_eq!(exact, approx, max_relative = 1e-9);
        // conditioning identity: U = 1 + U of the b-1 matching on the rest
        let b1 = LocalMeasure::bmatching(2, 1).unwrap();
        assert_relative_eq!(exact, 1.0 + b1.energy(&fin(&[1.0, 2.0])).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(LocalMeasure::bmatching(5, 2).unwrap().rank(), 2);
        assert_eq!(LocalMeasure::bmatching(2, 3).unwrap().rank(), 2);
        assert_eq!(LocalMeasure::exchangeable(vec![1.0, 1.0, 0.0]).unwrap().rank(), 1);
    }

    #[test]
    fn exchangeable_monotone_examples() {
        assert!(is_cavity_monotone_exchangeable(&[1.0, 1.0, 1.0]));
        assert!(!is_cavity_monotone_exchangeable(&[1.0, 0.0, 1.0]));
        assert!(is_cavity_monotone_exchangeable(&[1.0, 3.0, 1.0]));
        assert!(!is_cavity_monotone_exchangeable(&[1.0, 0.1, 1.0]));
        assert!(!is_cavity_monotone_exchangeable(&[1.0, 0.0, 0.0]));
        assert!(is_cavity_monotone_exchangeable(&[1.0]));
    }

    #[test]
    fn rayleigh_sampled_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b1 = LocalMeasure::bmatching(3, 1).unwrap();
        assert!(b1.check_rayleigh_sampled(100, &mut rng).unwrap().is_empty());
        let bad = LocalMeasure::exchangeable(vec![1.0, 0.1, 1.0]).unwrap();
        assert!(!bad.check_rayleigh_sampled(100, &mut rng).unwrap().is_empty());
        assert!(bad.check_rayleigh_sampled(0, &mut rng).unwrap().is_empty());
        let big = LocalMeasure::bmatching(21, 1).unwrap();
        assert_eq!(big.check_rayleigh_sampled(1, &mut rng), Err(MeasureError::TooLarge(21)));
    }

    #[test]
    fn size_increasing_sampled_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b2 = LocalMeasure::bmatching(3, 2).unwrap();
        assert!(b2.check_size_increasing_sampled(100, &mut rng).unwrap().is_empty());
        let trivial = LocalMeasure::exchangeable(vec![1.0]).unwrap();
        assert!(trivial.check_size_increasing_sampled(100, &mut rng).unwrap().is_empty());
        let no_singletons = LocalMeasure::exchangeable(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(!no_singletons.check_size_increasing_sampled(10, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn matroid_examples() {
        assert!(LocalMeasure::bmatching(4, 2).unwrap().support_is_matroid().unwrap());
        let gap = LocalMeasure::table(2, vec![(vec![], 1.0), (vec![0, 1], 1.0)]).unwrap();
        assert!(!gap.support_is_matroid().unwrap());
        let trivial = LocalMeasure::table(3, vec![(vec![], 2.0)]).unwrap();
        assert!(trivial.support_is_matroid().unwrap());
        // two disjoint bases of different sizes violate augmentation
        let fam = [0b000, 0b001, 0b010, 0b100, 0b110];
        assert!(!family_is_matroid(&fam));
    }

    #[test]
    fn table_validation() {
        assert_eq!(
            LocalMeasure::table(2, vec![(vec![2usize], 1.0)]),
            Err(MeasureError::ElementOutOfRange { element: 2, ground_size: 2 })
        );
        assert_eq!(
            LocalMeasure::table(25, Vec::<(Vec<usize>, f64)>::new()),
            Err(MeasureError::TooLarge(25))
        );
        assert_eq!(
            LocalMeasure::table(1, vec![(vec![0usize], 0.0)]),
            Err(MeasureError::EmptySupport)
        );
        assert!(matches!(
            LocalMeasure::table(2, vec![(vec![0usize], 1.0), (vec![0], 2.0)]),
            Err(MeasureError::DuplicateSubset(_))
        ));
        assert_eq!(LocalMeasure::bmatching(2, 0), Err(MeasureError::ZeroCapacity));
    }

    #[test]
    fn bmatching_and_exchangeable_agree_bitwise() {
        let b = LocalMeasure::bmatching(5, 2).unwrap();
        let ex = LocalMeasure::exchangeable(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let field = [
            ExtReal::Finite(0.3),
            ExtReal::Infinite,
            ExtReal::Finite(2.5),
            ExtReal::Finite(0.0),
        ];
        for e in 0..5 {
            assert_eq!(b.cavity_ratio(e, &field).unwrap(), ex.cavity_ratio(e, &field).unwrap());
        }
        let full = [ExtReal::Finite(1.7), ExtReal::Finite(0.3), ExtReal::Infinite, ExtReal::ONE, ExtReal::ZERO];
        assert_eq!(b.energy(&full).unwrap().to_bits(), ex.energy(&full).unwrap().to_bits());
    }

    #[test]
    fn infinite_ratio_is_limit_of_scaled_ratio() {
        let mu = LocalMeasure::exchangeable(vec![1.0, 2.0, 1.5, 0.0]).unwrap();
        let w = [0.7, 1.3];
        let limit = mu.infinite_cavity_ratio(1, &w).unwrap().to_f64();
        let mut prev = 0.0;
        for t in [1e2, 1e4, 1e6] {
            let scaled: Vec<ExtReal> = w.iter().map(|&x| ExtReal::Finite(t * x)).collect();
            let v = t * mu.cavity_ratio(1, &scaled).unwrap().to_f64();
            assert!(v > prev);
            prev = v;
        }
        assert_relative_eq!(prev, limit, max_relative = 1e-5);
    }

    #[test]
    fn energy_approaches_rank() {
        let mu = LocalMeasure::exchangeable(vec![1.0, 2.0, 1.0, 0.2, 0.0]).unwrap();
        let mut prev = 0.0;
        for t in [1.0, 10.0, 100.0, 1e4, 1e6] {
            let u = mu.energy(&fin(&[t; 4])).unwrap();
            assert!(u > prev);
            prev = u;
        }
        assert!((prev - mu.rank() as f64).abs() < 1e-4);
    }

    fn log_concave_coeffs() -> impl Strategy<Value = Vec<f64>> {
        (1usize..=8, 1usize..=8, -1.0f64..1.0, 0.0f64..1.0).prop_map(|(m, top, slope, curv)| {
            let top = top.min(m);
            (0..=m)
                .map(|k| {
                    if k <= top {
                        let k = k as f64;
                        (slope * k - curv * k * k).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn decomposition_reconstructs_generating_polynomial(
            coeffs in prop::collection::vec(0.0f64..3.0, 2..8),
            seed in any::<u64>(),
        ) {
            prop_assume!(coeffs[0] > 0.0);
            let mu = LocalMeasure::exchangeable(coeffs).unwrap();
            let m = mu.ground_size();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..5.0)).collect();
            let z = mu.generating_eval(&w).unwrap();
            for e in 0..m {
                let rest: Vec<f64> = w.iter().enumerate().filter(|&(g, _)| g != e).map(|(_, &x)| x).collect();
                let mut wdel = w.clone();
                wdel[e] = 0.0;
                let z_del = mu.generating_eval(&wdel).unwrap();
                let g = mu.cavity_ratio(e, &fin(&rest)).unwrap().to_f64();
                prop_assert!((w[e] * g * z_del + z_del - z).abs() <= 1e-12 * z);
            }
        }

        #[test]
        fn exchangeable_fast_path_matches_table(
            coeffs in prop::collection::vec(0.0f64..3.0, 1..11),
            seed in any::<u64>(),
            n_inf in 0usize..3,
        ) {
            prop_assume!(coeffs[0] > 0.0);
            let mu = LocalMeasure::exchangeable(coeffs).unwrap();
            let table = as_table(&mu);
            let m = mu.ground_size();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut field: Vec<ExtReal> = (0..m)
                .map(|_| ExtReal::Finite(rng.random_range(0.01..5.0)))
                .collect();
            for x in field.iter_mut().take(n_inf.min(m)) {
                *x = ExtReal::Infinite;
            }
            let u1 = mu.energy(&field).unwrap();
            let u2 = table.energy(&field).unwrap();
            prop_assert!((u1 - u2).abs() <= 1e-12 * u1.abs().max(1.0));
            for e in 0..m {
                let rest: Vec<ExtReal> = field.iter().enumerate().filter(|&(g, _)| g != e).map(|(_, &x)| x).collect();
                let a = mu.cavity_ratio(e, &rest).unwrap();
                let b = table.cavity_ratio(e, &rest).unwrap();
                match (a, b) {
                    (ExtReal::Finite(x), ExtReal::Finite(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.max(y).max(1e-300)),
                    _ => prop_assert_eq!(a, b),
                }
                if n_inf == 0 {
                    let w: Vec<f64> = rest.iter().map(|x| x.to_f64()).collect();
                    let brute = brute_ratio(&mu, e, &w);
                    prop_assert!((a.to_f64() - brute).abs() <= 1e-12 * brute.max(1e-300));
                }
            }
        }

        #[test]
        fn energy_equals_sum_of_edge_probabilities(coeffs in log_concave_coeffs(), seed in any::<u64>()) {
            let mu = LocalMeasure::exchangeable(coeffs).unwrap();
            let m = mu.ground_size();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..4.0)).collect();
            let u = mu.energy(&fin(&w)).unwrap();
            let mut s = 0.0;
            for e in 0..m {
                let rest: Vec<ExtReal> = w.iter().enumerate().filter(|&(g, _)| g != e).map(|(_, &x)| ExtReal::Finite(x)).collect();
                let g = mu.cavity_ratio(e, &rest).unwrap().to_f64();
                s += w[e] * g / (1.0 + w[e] * g);
            }
            prop_assert!((u - s).abs() <= 1e-12 * u.max(1.0));
            prop_assert!((u - brute_energy(&mu, &w)).abs() <= 1e-12 * u.max(1.0));
        }

        #[test]
        fn cavity_ratio_is_nonincreasing_for_log_concave(coeffs in log_concave_coeffs(), seed in any::<u64>()) {
            prop_assume!(coeffs.len() >= 3);
            let mu = LocalMeasure::exchangeable(coeffs).unwrap();
            let m = mu.ground_size();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..m - 1).map(|_| rng.random_range(0.05..4.0)).collect();
            let base = mu.cavity_ratio(0, &fin(&w)).unwrap().to_f64();
            for f in 0..w.len() {
                let h = 1e-6 * w[f].max(1.0);
                let mut up = w.clone();
                up[f] += h;
                let g = mu.cavity_ratio(0, &fin(&up)).unwrap().to_f64();
                prop_assert!((g - base) / h <= 1e-9);
            }
            // t ↦ t Γ(t w) increasing
            let t1 = 1.0;
            let t2 = 1.01;
            let scale = |t: f64| {
                let sw: Vec<ExtReal> = w.iter().map(|&x| ExtReal::Finite(t * x)).collect();
                t * mu.cavity_ratio(0, &sw).unwrap().to_f64()
            };
            prop_assert!(scale(t2) > scale(t1));
        }

        #[test]
        fn log_concave_measures_pass_sampled_checks(coeffs in log_concave_coeffs(), seed in any::<u64>()) {
            prop_assume!(coeffs.len() <= 7);
            let mu = LocalMeasure::exchangeable(coeffs.clone()).unwrap();
            prop_assert!(is_cavity_monotone_exchangeable(&coeffs));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert!(mu.check_rayleigh_sampled(20, &mut rng).unwrap().is_empty());
            prop_assert!(mu.check_size_increasing_sampled(20, &mut rng).unwrap().is_empty());
            prop_assert!(mu.support_is_matroid().unwrap());
        }
    }
}
