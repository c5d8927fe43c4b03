//! Discrete u-convex / v-concave calculus: subconjugates, superconjugates,
//! biconjugates, optimizer sets (the discrete subdifferentials) and the
//! tie-broken gradient-map selections.
//!
//! On a finite grid every supremum is attained, so the conjugate value, the
//! set of attaining atoms, and one deterministic selection are all computed
//! in a single scan. Ties are resolved to the lowest index; the continuum
//! theory promises uniqueness only almost everywhere, so determinism here is
//! a convention, not a theorem.

use rayon::prelude::*;

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::space::Instance;

/// Absolute tolerance for optimizer-set membership. Conjugate values are
/// O(1) in the tested instances; anything within this band of the optimum
/// counts as attaining it.
pub const TIE_TOL: f64 = 1e-12;

/// Atom counts from which the per-atom conjugate scans fan out to the rayon
/// pool. Below this the dispatch overhead dominates.
const PAR_THRESHOLD: usize = 128;

/// The dual variable: one real per z atom.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector {
    values: Vec<f64>,
}

impl PriceVector {
    /// Boundedness is the admissibility condition; non-finite entries are
    /// rejected at the door.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePrice { index });
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Index<usize> for PriceVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Conjugate values over a target grid together with the attaining sets.
///
/// `selected[i]` is the tie-broken element of `optimizer_sets[i]` — the
/// discrete stand-in for the gradient map.
#[derive(Debug, Clone)]
pub struct ConjugateResult {
    pub values: Vec<f64>,
    pub optimizer_sets: Vec<Vec<usize>>,
    pub selected: Vec<usize>,
}

/// Smoothed conjugate values with the softmax weights that replace the
/// argmax sets when the smoothing parameter is positive.
#[derive(Debug, Clone)]
pub struct SmoothedConjugate {
    pub values: Vec<f64>,
    /// `weights[i][j]`: share of target atom `i`'s optimum carried by z
    /// atom `j`; each row sums to 1.
    pub weights: Vec<Vec<f64>>,
}

/// Which side of the duality an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjSide {
    U,
    V,
}

fn check_price_len(p: &PriceVector, inst: &Instance) -> Result<()> {
    if p.len() != inst.z_grid.len() {
        return Err(Error::LengthMismatch {
            context: "price vector vs z grid",
            expected: inst.z_grid.len(),
            got: p.len(),
        });
    }
    if inst.z_grid.is_empty() {
        return Err(Error::LengthMismatch {
            context: "conjugation over empty z grid",
            expected: 1,
            got: 0,
        });
    }
    Ok(())
}

/// One row of the max-type conjugate: value, attaining set, selection.
pub(crate) fn conj_max_row(costs: &[f64], p: &[f64]) -> (f64, Vec<usize>, usize) {
    debug_assert_eq!(costs.len(), p.len());
    debug_assert!(!costs.is_empty());
    let mut best = f64::NEG_INFINITY;
    for (c, q) in costs.iter().zip(p) {
        let v = c - q;
        if v > best {
            best = v;
        }
    }
    let mut set = Vec::with_capacity(1);
    for (j, (c, q)) in costs.iter().zip(p).enumerate() {
        if best - (c - q) <= TIE_TOL {
            set.push(j);
        }
    }
    let selected = set[0];
    (best, set, selected)
}

/// One row of the min-type conjugate.
pub(crate) fn conj_min_row(costs: &[f64], p: &[f64]) -> (f64, Vec<usize>, usize) {
    debug_assert_eq!(costs.len(), p.len());
    debug_assert!(!costs.is_empty());
    let mut best = f64::INFINITY;
    for (c, q) in costs.iter().zip(p) {
        let v = c - q;
        if v < best {
            best = v;
        }
    }
    let mut set = Vec::with_capacity(1);
    for (j, (c, q)) in costs.iter().zip(p).enumerate() {
        if (c - q) - best <= TIE_TOL {
            set.push(j);
        }
    }
    let selected = set[0];
    (best, set, selected)
}

/// Log-sum-exp surrogate of the max row; returns the smoothed value and
/// fills `weights` with the softmax shares.
pub(crate) fn lse_max_row(costs: &[f64], p: &[f64], eps: f64, weights: &mut [f64]) -> f64 {
    debug_assert!(eps > 0.0);
    let mut m = f64::NEG_INFINITY;
    for (c, q) in costs.iter().zip(p) {
        let v = c - q;
        if v > m {
            m = v;
        }
    }
    let mut sum = 0.0;
    for (j, (c, q)) in costs.iter().zip(p).enumerate() {
        let w = ((c - q - m) / eps).exp();
        weights[j] = w;
        sum += w;
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    m + eps * sum.ln()
}

/// Soft-min counterpart of [`lse_max_row`].
pub(crate) fn lse_min_row(costs: &[f64], p: &[f64], eps: f64, weights: &mut [f64]) -> f64 {
    debug_assert!(eps > 0.0);
    let mut m = f64::INFINITY;
    for (c, q) in costs.iter().zip(p) {
        let v = c - q;
        if v < m {
            m = v;
        }
    }
    let mut sum = 0.0;
    for (j, (c, q)) in costs.iter().zip(p).enumerate() {
        let w = (-(c - q - m) / eps).exp();
        weights[j] = w;
        sum += w;
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    m - eps * sum.ln()
}

fn conjugate_rows(
    mat: &CostMatrix,
    p: &[f64],
    minimize: bool,
) -> ConjugateResult {
    let n = mat.n_source();
    let row_fn = |i: usize| {
        if minimize {
            conj_min_row(mat.row(i), p)
        } else {
            conj_max_row(mat.row(i), p)
        }
    };
    let rows: Vec<(f64, Vec<usize>, usize)> = if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().with_min_len(32).map(row_fn).collect()
    } else {
        (0..n).map(row_fn).collect()
    };
    let mut values = Vec::with_capacity(n);
    let mut optimizer_sets = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    for (v, set, sel) in rows {
        values.push(v);
        optimizer_sets.push(set);
        selected.push(sel);
    }
    ConjugateResult {
        values,
        optimizer_sets,
        selected,
    }
}

/// `p#(x) = max_z { u(x,z) - p(z) }` over the x grid.
pub fn subconjugate(p: &PriceVector, inst: &Instance) -> Result<ConjugateResult> {
    check_price_len(p, inst)?;
    let u = CostMatrix::evaluate(&inst.u_cost, &inst.x_grid, &inst.z_grid)?;
    Ok(conjugate_rows(&u, p.values(), false))
}

/// `pb(y) = min_z { v(y,z) - p(z) }` over the y grid.
pub fn superconjugate(p: &PriceVector, inst: &Instance) -> Result<ConjugateResult> {
    check_price_len(p, inst)?;
    let v = CostMatrix::evaluate(&inst.v_cost, &inst.y_grid, &inst.z_grid)?;
    Ok(conjugate_rows(&v, p.values(), true))
}

/// Smoothed subconjugate: `eps * log sum_z exp((u - p)/eps)` per x atom.
pub fn subconjugate_smoothed(p: &PriceVector, inst: &Instance, eps: f64) -> Result<SmoothedConjugate> {
    check_price_len(p, inst)?;
    let u = CostMatrix::evaluate(&inst.u_cost, &inst.x_grid, &inst.z_grid)?;
    let n = u.n_source();
    let n_z = u.n_z();
    let mut values = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = vec![0.0; n_z];
        values.push(lse_max_row(u.row(i), p.values(), eps, &mut w));
        weights.push(w);
    }
    Ok(SmoothedConjugate { values, weights })
}

/// Smoothed superconjugate (soft-min against v).
pub fn superconjugate_smoothed(p: &PriceVector, inst: &Instance, eps: f64) -> Result<SmoothedConjugate> {
    check_price_len(p, inst)?;
    let v = CostMatrix::evaluate(&inst.v_cost, &inst.y_grid, &inst.z_grid)?;
    let n = v.n_source();
    let n_z = v.n_z();
    let mut values = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = vec![0.0; n_z];
        values.push(lse_min_row(v.row(i), p.values(), eps, &mut w));
        weights.push(w);
    }
    Ok(SmoothedConjugate { values, weights })
}

/// Biconjugate over z from the u side: the largest u-convex minorant,
/// elementwise below `p`.
pub fn biconjugate_u(p: &PriceVector, inst: &Instance) -> Result<PriceVector> {
    check_price_len(p, inst)?;
    let u = CostMatrix::evaluate(&inst.u_cost, &inst.x_grid, &inst.z_grid)?;
    let f = conjugate_rows(&u, p.values(), false).values;
    Ok(PriceVector {
        values: conjugate_back_max(&u, &f),
    })
}

/// Biconjugate over z from the v side: the smallest v-concave majorant,
/// elementwise above `p`.
pub fn biconjugate_v(p: &PriceVector, inst: &Instance) -> Result<PriceVector> {
    check_price_len(p, inst)?;
    let v = CostMatrix::evaluate(&inst.v_cost, &inst.y_grid, &inst.z_grid)?;
    let g = conjugate_rows(&v, p.values(), true).values;
    Ok(PriceVector {
        values: conjugate_back_min(&v, &g),
    })
}

/// `max_x { u(x,z) - f(x) }` per z atom (column-wise conjugation).
pub(crate) fn conjugate_back_max(u: &CostMatrix, f: &[f64]) -> Vec<f64> {
    let n_z = u.n_z();
    let mut out = vec![f64::NEG_INFINITY; n_z];
    for i in 0..u.n_source() {
        let row = u.row(i);
        let fi = f[i];
        for (o, c) in out.iter_mut().zip(row) {
            let v = c - fi;
            if v > *o {
                *o = v;
            }
        }
    }
    out
}

/// `min_y { v(y,z) - g(y) }` per z atom.
pub(crate) fn conjugate_back_min(v: &CostMatrix, g: &[f64]) -> Vec<f64> {
    let n_z = v.n_z();
    let mut out = vec![f64::INFINITY; n_z];
    for i in 0..v.n_source() {
        let row = v.row(i);
        let gi = g[i];
        for (o, c) in out.iter_mut().zip(row) {
            let val = c - gi;
            if val < *o {
                *o = val;
            }
        }
    }
    out
}

/// Returns the subconjugate and the triple conjugate over X; the two agree
/// up to floating error because conjugation stabilizes after one pass.
pub fn triple_conjugate(p: &PriceVector, inst: &Instance) -> Result<(ConjugateResult, ConjugateResult)> {
    check_price_len(p, inst)?;
    let u = CostMatrix::evaluate(&inst.u_cost, &inst.x_grid, &inst.z_grid)?;
    let first = conjugate_rows(&u, p.values(), false);
    let pss = conjugate_back_max(&u, &first.values);
    let third = conjugate_rows(&u, &pss, false);
    Ok((first, third))
}

/// Pointwise slack in the Fenchel inequality.
///
/// U side: `gap(x,z) = p#(x) + p(z) - u(x,z)`; V side:
/// `gap(y,z) = v(y,z) - pb(y) - p(z)`. Both are non-negative up to roundoff
/// and vanish exactly on optimizer pairs.
pub fn fenchel_gap(
    p: &PriceVector,
    conj: &ConjugateResult,
    inst: &Instance,
    side: ConjSide,
) -> Result<Vec<Vec<f64>>> {
    check_price_len(p, inst)?;
    let (mat, n) = match side {
        ConjSide::U => (
            CostMatrix::evaluate(&inst.u_cost, &inst.x_grid, &inst.z_grid)?,
            inst.x_grid.len(),
        ),
        ConjSide::V => (
            CostMatrix::evaluate(&inst.v_cost, &inst.y_grid, &inst.z_grid)?,
            inst.y_grid.len(),
        ),
    };
    if conj.values.len() != n {
        return Err(Error::LengthMismatch {
            context: "conjugate result vs grid",
            expected: n,
            got: conj.values.len(),
        });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = mat.row(i);
        let ci = conj.values[i];
        let gaps = match side {
            ConjSide::U => row
                .iter()
                .zip(p.values())
                .map(|(c, q)| ci + q - c)
                .collect::<Vec<_>>(),
            ConjSide::V => row
                .iter()
                .zip(p.values())
                .map(|(c, q)| c - ci - q)
                .collect::<Vec<_>>(),
        };
        out.push(gaps);
    }
    Ok(out)
}

/// Tolerance for the attained-equality witness `|p(z) - p##(z)|`.
pub const WITNESS_TOL: f64 = 1e-10;

/// Some optimizer of `p#` at `x_index` on which `p` and its biconjugate
/// coincide. Existence is guaranteed on a finite grid: any exact argmax
/// works, so the scan returns the best one.
pub fn attained_equality_witness(p: &PriceVector, inst: &Instance, x_index: usize) -> Result<usize> {
    check_price_len(p, inst)?;
    if x_index >= inst.x_grid.len() {
        return Err(Error::LengthMismatch {
            context: "x index vs x grid",
            expected: inst.x_grid.len(),
            got: x_index,
        });
    }
    let u = CostMatrix::evaluate(&inst.u_cost, &inst.x_grid, &inst.z_grid)?;
    let first = conjugate_rows(&u, p.values(), false);
    let pss = conjugate_back_max(&u, &first.values);
    let set = &first.optimizer_sets[x_index];
    let mut best = set[0];
    let mut best_diff = f64::INFINITY;
    for &j in set {
        let d = (p[j] - pss[j]).abs();
        if d < best_diff {
            best_diff = d;
            best = j;
        }
    }
    Ok(best)
}
