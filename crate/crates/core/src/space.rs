//! Finite quality spaces and the weighted measures that live on them.
//!
//! The continuum picture (compact sets with absolutely continuous measures)
//! is modelled by finite atom lists with non-negative weights. Everything
//! downstream works with atom indices; coordinates only enter through cost
//! evaluation and the finite-difference diagnostics.

use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{Error, Result};

/// A finite grid of points in `R^dim`.
///
/// Construction is lenient: structural defects (wrong arity, duplicates,
/// emptiness) are reported by [`validate_instance`], not rejected here, so
/// that instances read from files can be inspected as data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl SpaceGrid {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Self {
        Self { dim, points }
    }

    /// 1D convenience constructor.
    pub fn line(coords: &[f64]) -> Self {
        Self {
            dim: 1,
            points: coords.iter().map(|&c| vec![c]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Spacing of an ascending, uniformly spaced 1D grid, if this is one.
    ///
    /// Used by the Spence-Mirrlees table check and the finite-difference
    /// diagnostics. Tolerance is relative to the spacing itself.
    pub fn regular_1d_spacing(&self) -> Option<f64> {
        if self.dim != 1 || self.points.len() < 2 {
            return None;
        }
        let h = self.points[1][0] - self.points[0][0];
        if !(h > 0.0) {
            return None;
        }
        for w in self.points.windows(2) {
            let d = w[1][0] - w[0][0];
            if (d - h).abs() > 1e-9 * h.max(1.0) {
                return None;
            }
        }
        Some(h)
    }
}

/// Non-negative weights attached to the atoms of some [`SpaceGrid`].
///
/// `total_mass` is cached at construction as the ascending-index sum; the
/// fixed summation order keeps repeated runs bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub weights: Vec<f64>,
    pub total_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Self {
        let total_mass = sum_ascending(&weights);
        Self {
            weights,
            total_mass,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Sum in ascending index order; every mass accumulation in the crate goes
/// through this so results do not depend on iteration order.
pub(crate) fn sum_ascending(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &v in values {
        acc += v;
    }
    acc
}

/// The full problem data: two measured atom sets, the quality grid they are
/// matched through, and the two cost specifications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub x_grid: SpaceGrid,
    pub y_grid: SpaceGrid,
    pub z_grid: SpaceGrid,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub u_cost: CostSpec,
    pub v_cost: CostSpec,
}

/// Relative tolerance for the common-mass condition.
pub const MASS_BALANCE_RTOL: f64 = 1e-9;

/// Relative tolerance for the cached-total-mass invariant.
pub const CACHED_MASS_RTOL: f64 = 1e-12;

/// A single violated invariant, as data.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    PointArity {
        grid: &'static str,
        index: usize,
        expected: usize,
        got: usize,
    },
    DuplicatePoints {
        grid: &'static str,
        first: usize,
        second: usize,
    },
    EmptyGrid {
        grid: &'static str,
    },
    NegativeWeight {
        measure: &'static str,
        index: usize,
        weight: f64,
    },
    NonFiniteWeight {
        measure: &'static str,
        index: usize,
    },
    StaleTotalMass {
        measure: &'static str,
        cached: f64,
        recomputed: f64,
    },
    MeasureSize {
        measure: &'static str,
        grid_len: usize,
        measure_len: usize,
    },
    MassMismatch {
        mu_total: f64,
        nu_total: f64,
    },
    CostShape {
        side: &'static str,
        detail: String,
    },
    NonPositiveAlpha {
        side: &'static str,
        alpha: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::PointArity {
                grid,
                index,
                expected,
                got,
            } => write!(
                f,
                "{grid} point {index} has {got} coordinates, expected {expected}"
            ),
            Violation::DuplicatePoints {
                grid,
                first,
                second,
            } => write!(f, "{grid} points {first} and {second} coincide"),
            Violation::EmptyGrid { grid } => write!(f, "{grid} grid is empty"),
            Violation::NegativeWeight {
                measure,
                index,
                weight,
            } => write!(f, "{measure} weight {index} is negative ({weight})"),
            Violation::NonFiniteWeight { measure, index } => {
                write!(f, "{measure} weight {index} is not finite")
            }
            Violation::StaleTotalMass {
                measure,
                cached,
                recomputed,
            } => write!(
                f,
                "{measure} cached total mass {cached} disagrees with recomputed {recomputed}"
            ),
            Violation::MeasureSize {
                measure,
                grid_len,
                measure_len,
            } => write!(
                f,
                "{measure} has {measure_len} weights for a grid of {grid_len} atoms"
            ),
            Violation::MassMismatch { mu_total, nu_total } => {
                write!(f, "mass mismatch: mu({mu_total}) != nu({nu_total})")
            }
            Violation::CostShape { side, detail } => write!(f, "{side} cost: {detail}"),
            Violation::NonPositiveAlpha { side, alpha } => {
                write!(f, "{side} cost: alpha must be positive, got {alpha}")
            }
        }
    }
}

/// Outcome of [`validate_instance`]: empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_grid(grid: &SpaceGrid, name: &'static str, out: &mut Vec<Violation>) {
    if grid.points.is_empty() {
        out.push(Violation::EmptyGrid { grid: name });
    }
    for (i, p) in grid.points.iter().enumerate() {
        if p.len() != grid.dim {
            out.push(Violation::PointArity {
                grid: name,
                index: i,
                expected: grid.dim,
                got: p.len(),
            });
        }
    }
    for i in 0..grid.points.len() {
        for j in (i + 1)..grid.points.len() {
            if grid.points[i] == grid.points[j] {
                out.push(Violation::DuplicatePoints {
                    grid: name,
                    first: i,
                    second: j,
                });
            }
        }
    }
}

fn check_measure(
    m: &DiscreteMeasure,
    grid: &SpaceGrid,
    name: &'static str,
    out: &mut Vec<Violation>,
) {
    if m.len() != grid.len() {
        out.push(Violation::MeasureSize {
            measure: name,
            grid_len: grid.len(),
            measure_len: m.len(),
        });
    }
    for (i, &w) in m.weights.iter().enumerate() {
        if !w.is_finite() {
            out.push(Violation::NonFiniteWeight { measure: name, index: i });
        } else if w < 0.0 {
            out.push(Violation::NegativeWeight {
                measure: name,
                index: i,
                weight: w,
            });
        }
    }
    let recomputed = sum_ascending(&m.weights);
    let scale = recomputed.abs().max(1.0);
    if (m.total_mass - recomputed).abs() > CACHED_MASS_RTOL * scale {
        out.push(Violation::StaleTotalMass {
            measure: name,
            cached: m.total_mass,
            recomputed,
        });
    }
}

/// Collect every violated invariant of the instance and its constituents.
///
/// Violations are data, not failures: an empty report certifies the
/// instance, anything else describes exactly what is wrong.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut v = Vec::new();
    check_grid(&inst.x_grid, "x", &mut v);
    check_grid(&inst.y_grid, "y", &mut v);
    check_grid(&inst.z_grid, "z", &mut v);
    check_measure(&inst.mu, &inst.x_grid, "mu", &mut v);
    check_measure(&inst.nu, &inst.y_grid, "nu", &mut v);

    let tol = MASS_BALANCE_RTOL * inst.mu.total_mass.abs().max(1.0);
    if (inst.mu.total_mass - inst.nu.total_mass).abs() > tol {
        v.push(Violation::MassMismatch {
            mu_total: inst.mu.total_mass,
            nu_total: inst.nu.total_mass,
        });
    }

    for (side, spec, source) in [
        ("u", &inst.u_cost, &inst.x_grid),
        ("v", &inst.v_cost, &inst.y_grid),
    ] {
        match spec.shape_violation(source, &inst.z_grid) {
            Some(detail) => v.push(Violation::CostShape { side, detail }),
            None => {}
        }
        if let Some(alpha) = spec.alpha() {
            if !(alpha > 0.0) {
                v.push(Violation::NonPositiveAlpha { side, alpha });
            }
        }
    }

    ValidationReport { violations: v }
}

/// Image of `m` under an index map into a z grid of `z_len` atoms.
///
/// Result weight at `j` accumulates, in ascending source order, the weights
/// of atoms mapped to `j`. Total mass is carried over from the source
/// measure, so it is preserved bit-for-bit. Atoms with zero weight are
/// skipped and may carry an arbitrary map entry.
pub fn pushforward(map: &[usize], m: &DiscreteMeasure, z_len: usize) -> Result<DiscreteMeasure> {
    if map.len() != m.len() {
        return Err(Error::LengthMismatch {
            context: "pushforward map vs measure",
            expected: m.len(),
            got: map.len(),
        });
    }
    let mut weights = vec![0.0; z_len];
    for (i, (&j, &w)) in map.iter().zip(&m.weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        if j >= z_len {
            return Err(Error::InvalidMap {
                source: i,
                target: j,
                weight: w,
                len: z_len,
            });
        }
        weights[j] += w;
    }
    Ok(DiscreteMeasure {
        weights,
        total_mass: m.total_mass,
    })
}

/// Total-variation distance `0.5 * sum |a_i - b_i|` between two measures on
/// the same grid.
pub fn tv_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            context: "tv_distance operands",
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut acc = 0.0;
    for (&x, &y) in a.weights.iter().zip(&b.weights) {
        acc += (x - y).abs();
    }
    Ok(0.5 * acc)
}
