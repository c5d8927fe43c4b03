//! Benefit functions `u(x,z)`, `v(y,z)`: built-in analytic families plus
//! tabulated data, their x-gradients, and the injectivity condition that
//! makes gradient-map selections single-valued.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::SpaceGrid;

fn default_sign() -> f64 {
    1.0
}

/// One side's cost specification.
///
/// `sign` multiplies the family value, so a single family covers both
/// orientations that appear in the quadratic and distance-power variants
/// of the problem (the u side typically carries `-1`, the v side `+1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// `sign * x'z`
    Bilinear {
        #[serde(default = "default_sign")]
        sign: f64,
    },
    /// `sign * (alpha/2) * ||x - z||^2`
    ScaledQuadratic {
        #[serde(default = "default_sign")]
        sign: f64,
        alpha: f64,
    },
    /// `sign * ||x - z||^alpha`
    Power {
        #[serde(default = "default_sign")]
        sign: f64,
        alpha: f64,
    },
    /// `sign * values[source_atom][z_atom]`; coordinates are ignored.
    Table {
        #[serde(default = "default_sign")]
        sign: f64,
        values: Vec<Vec<f64>>,
    },
}

impl CostSpec {
    pub fn bilinear(sign: f64) -> Self {
        CostSpec::Bilinear { sign }
    }

    pub fn scaled_quadratic(sign: f64, alpha: f64) -> Self {
        CostSpec::ScaledQuadratic { sign, alpha }
    }

    pub fn power(sign: f64, alpha: f64) -> Self {
        CostSpec::Power { sign, alpha }
    }

    pub fn table(values: Vec<Vec<f64>>) -> Self {
        CostSpec::Table { sign: 1.0, values }
    }

    pub fn is_table(&self) -> bool {
        matches!(self, CostSpec::Table { .. })
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            CostSpec::ScaledQuadratic { alpha, .. } | CostSpec::Power { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// Shape defect of this spec against its grids, if any (for validation).
    pub(crate) fn shape_violation(&self, source: &SpaceGrid, z: &SpaceGrid) -> Option<String> {
        match self {
            CostSpec::Table { values, .. } => {
                if values.len() != source.len() {
                    return Some(format!(
                        "table has {} rows for {} source atoms",
                        values.len(),
                        source.len()
                    ));
                }
                for (i, row) in values.iter().enumerate() {
                    if row.len() != z.len() {
                        return Some(format!(
                            "table row {i} has {} entries for {} z atoms",
                            row.len(),
                            z.len()
                        ));
                    }
                }
                None
            }
            _ => {
                if source.dim != z.dim {
                    Some(format!(
                        "analytic family needs equal dimensions, source dim {} vs z dim {}",
                        source.dim, z.dim
                    ))
                } else {
                    None
                }
            }
        }
    }
}

fn check_dims(x: &[f64], z: &[f64]) -> Result<()> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            context: "cost evaluation",
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(())
}

fn dist_sq(x: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in x.iter().zip(z) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// Family formula at explicit coordinates. Table costs have no coordinate
/// form; use [`eval_cost_indexed`] for them.
pub fn eval_cost(spec: &CostSpec, source_point: &[f64], z_point: &[f64]) -> Result<f64> {
    match spec {
        CostSpec::Bilinear { sign } => {
            check_dims(source_point, z_point)?;
            let mut acc = 0.0;
            for (&a, &b) in source_point.iter().zip(z_point) {
                acc += a * b;
            }
            Ok(sign * acc)
        }
        CostSpec::ScaledQuadratic { sign, alpha } => {
            check_dims(source_point, z_point)?;
            Ok(sign * 0.5 * alpha * dist_sq(source_point, z_point))
        }
        CostSpec::Power { sign, alpha } => {
            check_dims(source_point, z_point)?;
            Ok(sign * dist_sq(source_point, z_point).sqrt().powf(*alpha))
        }
        CostSpec::Table { .. } => Err(Error::TableUnsupported {
            op: "coordinate evaluation (use eval_cost_indexed)",
        }),
    }
}

/// Cost by atom indices: tables read their matrix entry, analytic families
/// read the grid coordinates.
pub fn eval_cost_indexed(
    spec: &CostSpec,
    source_grid: &SpaceGrid,
    z_grid: &SpaceGrid,
    source_index: usize,
    z_index: usize,
) -> Result<f64> {
    match spec {
        CostSpec::Table { sign, values } => {
            let row = values.get(source_index).ok_or(Error::LengthMismatch {
                context: "table rows vs source atoms",
                expected: source_grid.len(),
                got: values.len(),
            })?;
            let v = row.get(z_index).ok_or(Error::LengthMismatch {
                context: "table columns vs z atoms",
                expected: z_grid.len(),
                got: row.len(),
            })?;
            Ok(sign * v)
        }
        _ => eval_cost(spec, source_grid.point(source_index), z_grid.point(z_index)),
    }
}

/// Analytic gradient of the family with respect to the source point.
pub fn eval_cost_gradient_x(spec: &CostSpec, source_point: &[f64], z_point: &[f64]) -> Result<Vec<f64>> {
    match spec {
        CostSpec::Bilinear { sign } => {
            check_dims(source_point, z_point)?;
            Ok(z_point.iter().map(|&c| sign * c).collect())
        }
        CostSpec::ScaledQuadratic { sign, alpha } => {
            check_dims(source_point, z_point)?;
            Ok(source_point
                .iter()
                .zip(z_point)
                .map(|(&a, &b)| sign * alpha * (a - b))
                .collect())
        }
        CostSpec::Power { sign, alpha } => {
            check_dims(source_point, z_point)?;
            let r = dist_sq(source_point, z_point).sqrt();
            if r == 0.0 {
                return Err(Error::SingularPoint {
                    source: usize::MAX,
                    target: usize::MAX,
                });
            }
            let scale = sign * alpha * r.powf(alpha - 2.0);
            Ok(source_point
                .iter()
                .zip(z_point)
                .map(|(&a, &b)| scale * (a - b))
                .collect())
        }
        CostSpec::Table { .. } => Err(Error::TableUnsupported {
            op: "analytic x-gradient",
        }),
    }
}

/// Outcome of the gradient-injectivity check.
#[derive(Debug, Clone, PartialEq)]
pub enum SmStatus {
    Pass,
    /// The data cannot be checked (tabulated costs on an irregular source
    /// grid); treated as a pass with an explanation.
    PassWithWarning(String),
    Fail,
}

/// Two z atoms whose x-gradients coincide at a source atom.
#[derive(Debug, Clone, PartialEq)]
pub struct SmWitness {
    pub source_index: usize,
    pub z_first: usize,
    pub z_second: usize,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub status: SmStatus,
    pub witnesses: Vec<SmWitness>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !matches!(self.status, SmStatus::Fail)
    }
}

/// Tolerance below which two gradients count as colliding: under any
/// reasonable discretization error, above double-precision noise.
pub const SM_COLLISION_TOL: f64 = 1e-10;

fn collide(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| (x - y).abs() <= SM_COLLISION_TOL)
}

fn pairwise_witnesses(gradients: &[Vec<Option<Vec<f64>>>]) -> Vec<SmWitness> {
    let mut out = Vec::new();
    for (i, per_z) in gradients.iter().enumerate() {
        for a in 0..per_z.len() {
            for b in (a + 1)..per_z.len() {
                if let (Some(ga), Some(gb)) = (&per_z[a], &per_z[b]) {
                    if collide(ga, gb) {
                        out.push(SmWitness {
                            source_index: i,
                            z_first: a,
                            z_second: b,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Decide injectivity of `z -> D_x u(x,z)` atom by atom.
///
/// Bilinear and scaled-quadratic gradients are affine and injective in `z`,
/// so they always pass. The power family is checked by enumerating gradient
/// collisions (its failure at `alpha = 1` shows up as two z atoms on the
/// same ray from some x). Tables are checked through finite-difference
/// x-gradients when the source grid is a regular 1D grid and are otherwise
/// uncheckable.
pub fn spence_mirrlees_check(
    spec: &CostSpec,
    source_grid: &SpaceGrid,
    z_grid: &SpaceGrid,
) -> CheckReport {
    match spec {
        CostSpec::Bilinear { .. } | CostSpec::ScaledQuadratic { .. } => CheckReport {
            status: SmStatus::Pass,
            witnesses: Vec::new(),
        },
        CostSpec::Power { .. } => {
            let gradients: Vec<Vec<Option<Vec<f64>>>> = source_grid
                .points
                .iter()
                .map(|x| {
                    z_grid
                        .points
                        .iter()
                        .map(|z| eval_cost_gradient_x(spec, x, z).ok())
                        .collect()
                })
                .collect();
            let witnesses = pairwise_witnesses(&gradients);
            let status = if witnesses.is_empty() {
                SmStatus::Pass
            } else {
                SmStatus::Fail
            };
            CheckReport { status, witnesses }
        }
        CostSpec::Table { sign, values } => {
            let Some(h) = source_grid.regular_1d_spacing() else {
                return CheckReport {
                    status: SmStatus::PassWithWarning(
                        "tabulated costs on a non-regular source grid: x-gradients uncheckable"
                            .to_string(),
                    ),
                    witnesses: Vec::new(),
                };
            };
            let n = source_grid.len();
            if n < 2 || values.len() != n {
                return CheckReport {
                    status: SmStatus::PassWithWarning(
                        "too few source atoms for finite-difference gradients".to_string(),
                    ),
                    witnesses: Vec::new(),
                };
            }
            let n_z = z_grid.len();
            let fd = |i: usize, j: usize| -> Option<Vec<f64>> {
                let at = |r: usize| values.get(r).and_then(|row| row.get(j)).copied();
                let g = if i == 0 {
                    (at(1)? - at(0)?) / h
                } else if i == n - 1 {
                    (at(n - 1)? - at(n - 2)?) / h
                } else {
                    (at(i + 1)? - at(i - 1)?) / (2.0 * h)
                };
                Some(vec![sign * g])
            };
            let gradients: Vec<Vec<Option<Vec<f64>>>> = (0..n)
                .map(|i| (0..n_z).map(|j| fd(i, j)).collect())
                .collect();
            let witnesses = pairwise_witnesses(&gradients);
            let status = if witnesses.is_empty() {
                SmStatus::Pass
            } else {
                SmStatus::Fail
            };
            CheckReport { status, witnesses }
        }
    }
}

/// Upper bound of `||D_x u||` over all atom pairs; the Lipschitz constant
/// every subconjugate inherits. Singular power pairs (`x == z`) are skipped.
pub fn lipschitz_bound_k(spec: &CostSpec, source_grid: &SpaceGrid, z_grid: &SpaceGrid) -> Result<f64> {
    if spec.is_table() {
        return Err(Error::TableUnsupported {
            op: "Lipschitz bound",
        });
    }
    let mut k: f64 = 0.0;
    for x in &source_grid.points {
        for z in &z_grid.points {
            match eval_cost_gradient_x(spec, x, z) {
                Ok(g) => {
                    let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
                    k = k.max(norm);
                }
                Err(Error::SingularPoint { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(k)
}

/// Dense cost matrix `[n_source x n_z]`, evaluated once so the solver's
/// inner loops are pure array scans.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    data: Vec<f64>,
    n_z: usize,
}

impl CostMatrix {
    pub fn evaluate(spec: &CostSpec, source_grid: &SpaceGrid, z_grid: &SpaceGrid) -> Result<Self> {
        let n = source_grid.len();
        let n_z = z_grid.len();
        let mut data = Vec::with_capacity(n * n_z);
        for i in 0..n {
            for j in 0..n_z {
                data.push(eval_cost_indexed(spec, source_grid, z_grid, i, j)?);
            }
        }
        Ok(Self { data, n_z })
    }

    pub fn n_source(&self) -> usize {
        if self.n_z == 0 {
            0
        } else {
            self.data.len() / self.n_z
        }
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_z..(i + 1) * self.n_z]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_z + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_examples() {
        let quad = CostSpec::scaled_quadratic(-1.0, 1.0);
        assert_eq!(eval_cost(&quad, &[0.0], &[0.5]).unwrap(), -0.125);

        let bil = CostSpec::bilinear(1.0);
        assert_eq!(eval_cost(&bil, &[1.0], &[-1.0]).unwrap(), -1.0);

        let pow = CostSpec::power(1.0, 2.0);
        assert_eq!(eval_cost(&pow, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn eval_rejects_dim_mismatch_and_table_coords() {
        let bil = CostSpec::bilinear(1.0);
        assert!(matches!(
            eval_cost(&bil, &[1.0, 2.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let tab = CostSpec::table(vec![vec![1.0]]);
        assert!(matches!(
            eval_cost(&tab, &[0.0], &[0.0]),
            Err(Error::TableUnsupported { .. })
        ));
    }

    #[test]
    fn indexed_eval_reads_table_with_sign() {
        let tab = CostSpec::Table {
            sign: -1.0,
            values: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        let xg = SpaceGrid::line(&[0.0, 1.0]);
        let zg = SpaceGrid::line(&[0.0, 1.0]);
        assert_eq!(eval_cost_indexed(&tab, &xg, &zg, 1, 0).unwrap(), -3.0);
    }

    #[test]
    fn gradient_examples() {
        let bil = CostSpec::bilinear(1.0);
        assert_eq!(
            eval_cost_gradient_x(&bil, &[7.0, -2.0], &[2.0, 3.0]).unwrap(),
            vec![2.0, 3.0]
        );

        let quad = CostSpec::scaled_quadratic(-1.0, 2.0);
        assert_eq!(eval_cost_gradient_x(&quad, &[1.0], &[0.5]).unwrap(), vec![-1.0]);

        let pow = CostSpec::power(1.0, 2.0);
        assert_eq!(
            eval_cost_gradient_x(&pow, &[1.0, 0.0], &[0.0, 0.0]).unwrap(),
            vec![2.0, 0.0]
        );
    }

    #[test]
    fn power_gradient_singular_at_coincident_points() {
        let pow = CostSpec::power(1.0, 1.0);
        assert!(matches!(
            eval_cost_gradient_x(&pow, &[0.5], &[0.5]),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let dim = rng.gen_range(1..4);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let spec = match rng.gen_range(0..3) {
                0 => CostSpec::bilinear(sign),
                1 => CostSpec::scaled_quadratic(sign, rng.gen_range(0.2..3.0)),
                _ => CostSpec::power(sign, rng.gen_range(1.5..3.0)),
            };
            // Keep probes away from the power singularity.
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(1.0..2.0)).collect();
            let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..-1.0)).collect();
            let analytic = eval_cost_gradient_x(&spec, &x, &z).unwrap();
            for axis in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[axis] += h;
                xm[axis] -= h;
                let fd = (eval_cost(&spec, &xp, &z).unwrap() - eval_cost(&spec, &xm, &z).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - analytic[axis]).abs() <= 1e-6,
                    "axis {axis}: fd {fd} vs analytic {}",
                    analytic[axis]
                );
            }
        }
    }

    #[test]
    fn spence_mirrlees_bilinear_and_quadratic_pass() {
        let xg = SpaceGrid::line(&[0.0, 0.5, 1.0]);
        let zg = SpaceGrid::line(&[0.0, 0.25, 1.0]);
        assert_eq!(
            spence_mirrlees_check(&CostSpec::bilinear(1.0), &xg, &zg).status,
            SmStatus::Pass
        );
        assert_eq!(
            spence_mirrlees_check(&CostSpec::scaled_quadratic(1.0, 0.7), &xg, &zg).status,
            SmStatus::Pass
        );
    }

    #[test]
    fn spence_mirrlees_power_alpha_one_fails_with_witness() {
        // Two z atoms on the same side of x = 0.5 give identical unit-sign
        // gradients when alpha = 1.
        let xg = SpaceGrid::line(&[0.5]);
        let zg = SpaceGrid::line(&[0.0, 0.25, 1.0]);
        let report = spence_mirrlees_check(&CostSpec::power(1.0, 1.0), &xg, &zg);
        assert_eq!(report.status, SmStatus::Fail);
        assert!(report
            .witnesses
            .iter()
            .any(|w| w.source_index == 0 && w.z_first == 0 && w.z_second == 1));
    }

    #[test]
    fn spence_mirrlees_power_generic_alpha_passes() {
        let xg = SpaceGrid::line(&[0.5]);
        let zg = SpaceGrid::line(&[0.0, 0.25, 1.0]);
        let report = spence_mirrlees_check(&CostSpec::power(1.0, 2.0), &xg, &zg);
        assert_eq!(report.status, SmStatus::Pass);
    }

    #[test]
    fn spence_mirrlees_table_regular_vs_irregular() {
        let zg = SpaceGrid::line(&[0.0, 1.0]);
        // Constant-in-x table: every z column has zero gradient, collision.
        let flat = CostSpec::table(vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        let regular = SpaceGrid::line(&[0.0, 0.5, 1.0]);
        let report = spence_mirrlees_check(&flat, &regular, &zg);
        assert_eq!(report.status, SmStatus::Fail);

        // Distinct linear-in-x slopes per z column: injective.
        let sloped = CostSpec::table(vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0]]);
        let report = spence_mirrlees_check(&sloped, &regular, &zg);
        assert_eq!(report.status, SmStatus::Pass);

        let irregular = SpaceGrid::line(&[0.0, 0.5, 2.0]);
        let report = spence_mirrlees_check(&flat, &irregular, &zg);
        assert!(matches!(report.status, SmStatus::PassWithWarning(_)));
        assert!(report.passed());
    }

    #[test]
    fn lipschitz_examples() {
        let zg = SpaceGrid::line(&[0.0, 0.25, 0.5, 1.0]);
        let xg = SpaceGrid::line(&[0.0, 1.0]);
        assert_eq!(
            lipschitz_bound_k(&CostSpec::bilinear(1.0), &xg, &zg).unwrap(),
            1.0
        );

        let both = SpaceGrid::line(&[0.0, 1.0]);
        assert_eq!(
            lipschitz_bound_k(&CostSpec::scaled_quadratic(-1.0, 2.0), &both, &both).unwrap(),
            2.0
        );

        let single = SpaceGrid::line(&[0.5]);
        assert_eq!(
            lipschitz_bound_k(&CostSpec::scaled_quadratic(1.0, 1.0), &single, &single).unwrap(),
            0.0
        );

        assert!(matches!(
            lipschitz_bound_k(&CostSpec::table(vec![vec![0.0]]), &single, &single),
            Err(Error::TableUnsupported { .. })
        ));
    }

    #[test]
    fn cost_spec_json_round_trip() {
        let specs = [
            r#"{"family":"scaled_quadratic","sign":-1,"alpha":1.0}"#,
            r#"{"family":"bilinear","sign":1}"#,
            r#"{"family":"power","sign":1,"alpha":0.5}"#,
            r#"{"family":"table","values":[[0.1,-0.2],[0.3,0.4]]}"#,
        ];
        for s in specs {
            let spec: CostSpec = serde_json::from_str(s).unwrap();
            let back = serde_json::to_string(&spec).unwrap();
            let again: CostSpec = serde_json::from_str(&back).unwrap();
            assert_eq!(spec, again);
        }
        // Table sign defaults to +1.
        let spec: CostSpec = serde_json::from_str(r#"{"family":"table","values":[[1.0]]}"#).unwrap();
        assert_eq!(spec, CostSpec::Table { sign: 1.0, values: vec![vec![1.0]] });
    }
}
