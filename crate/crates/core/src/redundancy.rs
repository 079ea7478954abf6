//! Redundant-constraint elimination for linear constraint systems.
//!
//! Given `{x : Ax <= b}` together with variable bounds and an optional
//! balance equality, [`reduce`] returns the essential row set: the smallest
//! subset whose induced region equals the full region. The procedure seeds a
//! strict interior point, harvests cheaply provable essential rows by ray
//! shooting, then settles the remaining rows with one LP test each against
//! the growing essential set. A final sweep removes rows that were added
//! conservatively, so the returned set is irredundant.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::solver::{solve_lp, LinearProgram, LpStatus, Sense, INF};

/// Generic constraint system `{x : Ax <= b, l <= x <= u [, sum x = 0]}`.
#[derive(Debug, Clone)]
pub struct Polytope {
    /// Row-major M x d constraint matrix.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Enforce the balance equality `sum_j x_j = 0`.
    pub balance: bool,
}

impl Polytope {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("polytope is infeasible")]
    Infeasible,
    #[error("row {row} test LP unbounded; bounds do not close direction {row}")]
    UnboundedTest { row: usize },
    #[error("dimension mismatch: row {row} has length {got}, expected {expected}")]
    Dimension { row: usize, got: usize, expected: usize },
    #[error("lp failure: {0}")]
    Lp(#[from] crate::solver::LpError),
}

/// Default membership tolerance.
pub const CONTAINS_TOL: f64 = 1e-6;

/// `true` iff `x` satisfies every row, the bounds and the balance within tol.
pub fn contains(poly: &Polytope, x: &[f64], tol: f64) -> bool {
    debug_assert_eq!(x.len(), poly.dim());
    for j in 0..poly.dim() {
        if x[j] < poly.lower[j] - tol || x[j] > poly.upper[j] + tol {
            return false;
        }
    }
    if poly.balance {
        let s: f64 = x.iter().sum();
        if s.abs() > tol {
            return false;
        }
    }
    for (row, &b) in poly.rows.iter().zip(&poly.rhs) {
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        if lhs > b + tol {
            return false;
        }
    }
    true
}

/// Membership against a row subset only (plus bounds and balance).
pub fn contains_subset(poly: &Polytope, indices: &[usize], x: &[f64], tol: f64) -> bool {
    for j in 0..poly.dim() {
        if x[j] < poly.lower[j] - tol || x[j] > poly.upper[j] + tol {
            return false;
        }
    }
    if poly.balance {
        let s: f64 = x.iter().sum();
        if s.abs() > tol {
            return false;
        }
    }
    for &i in indices {
        let lhs: f64 = poly.rows[i].iter().zip(x).map(|(a, v)| a * v).sum();
        if lhs > poly.rhs[i] + tol {
            return false;
        }
    }
    true
}

fn row_tolerance(b: f64) -> f64 {
    1e-6 * (1.0 + b.abs())
}

/// Maximize `a_i . x` subject to the rows in `active` (minus `i`), the
/// bounds and the balance. Returns the optimum.
fn max_over_active(
    poly: &Polytope,
    objective_row: &[f64],
    active: &[usize],
    skip: Option<usize>,
) -> Result<f64, ReduceError> {
    let d = poly.dim();
    let mut lp = LinearProgram::default();
    for j in 0..d {
        // Minimizing the negated row maximizes the row.
        lp.add_variable(format!("x{j}"), poly.lower[j], poly.upper[j], -objective_row[j]);
    }
    if poly.balance {
        lp.add_constraint(
            "balance",
            (0..d).map(|j| (j, 1.0)).collect(),
            Sense::Eq,
            0.0,
        );
    }
    for &i in active {
        if Some(i) == skip {
            continue;
        }
        let terms: Vec<(usize, f64)> = poly.rows[i]
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a))
            .collect();
        lp.add_constraint(format!("r{i}"), terms, Sense::Le, poly.rhs[i]);
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(-sol.objective),
        LpStatus::Unbounded => Err(ReduceError::UnboundedTest {
            row: skip.unwrap_or(usize::MAX),
        }),
        LpStatus::Infeasible => Err(ReduceError::Infeasible),
    }
}

/// LP redundancy test of row `i` against the rows in `active`.
///
/// Redundancy against a subset implies redundancy against the full system,
/// so callers may grow `active` incrementally.
pub fn test_row_redundant(
    poly: &Polytope,
    i: usize,
    active: &[usize],
) -> Result<bool, ReduceError> {
    let optimum = max_over_active(poly, &poly.rows[i], active, Some(i))?;
    Ok(optimum <= poly.rhs[i] + row_tolerance(poly.rhs[i]))
}

#[derive(Debug, Clone, Default)]
pub struct ReduceStats {
    pub rows_tested: usize,
    pub lp_calls: usize,
    pub removal_fraction: f64,
    /// Rows proven redundant by interval arithmetic over the bounds alone.
    pub interval_redundant: usize,
    /// Rows proven essential by the ray-shooting presolve alone.
    pub ray_hits: usize,
    pub degenerate_interior: bool,
}

#[derive(Debug, Clone)]
pub struct EssentialSet {
    /// Sorted, unique indices of essential rows.
    pub indices: Vec<usize>,
    pub tolerance: f64,
    pub stats: ReduceStats,
}

/// Cap on ray-shooting directions; beyond this the rows are strided.
const RAY_CAP: usize = 1024;

/// Minimum normalized row slack of `x`, or `-INF` when `x` violates the
/// bounds or the balance.
fn candidate_slack(poly: &Polytope, x: &[f64]) -> f64 {
    for j in 0..poly.dim() {
        if x[j] < poly.lower[j] - 1e-12 || x[j] > poly.upper[j] + 1e-12 {
            return -INF;
        }
    }
    if poly.balance && x.iter().sum::<f64>().abs() > 1e-9 {
        return -INF;
    }
    let mut slack = INF;
    for (row, &b) in poly.rows.iter().zip(&poly.rhs) {
        let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        slack = slack.min((b - lhs) / norm);
    }
    slack
}

/// Find a strict interior point by maximizing the minimum slack.
///
/// Two analytic candidates — the origin and the balance-projected bounds
/// midpoint — are tried first; solving the max-slack LP over all rows is
/// only a fallback, since it scales with the full row count.
fn interior_point(poly: &Polytope) -> Result<(Vec<f64>, f64), ReduceError> {
    let d = poly.dim();
    let zero = vec![0.0; d];
    let mut mid: Vec<f64> = (0..d)
        .map(|j| match (poly.lower[j].is_finite(), poly.upper[j].is_finite()) {
            (true, true) => 0.5 * (poly.lower[j] + poly.upper[j]),
            (true, false) => poly.lower[j].max(0.0),
            (false, true) => poly.upper[j].min(0.0),
            (false, false) => 0.0,
        })
        .collect();
    if poly.balance {
        let mean: f64 = mid.iter().sum::<f64>() / d.max(1) as f64;
        for v in mid.iter_mut() {
            *v -= mean;
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for candidate in [zero, mid] {
        let slack = candidate_slack(poly, &candidate);
        if best.as_ref().map_or(true, |(_, s)| slack > *s) && slack > -INF {
            best = Some((candidate, slack));
        }
    }
    if let Some((x, slack)) = best {
        if slack > 1e-6 {
            return Ok((x, slack));
        }
    }
    let mut lp = LinearProgram::default();
    for j in 0..d {
        lp.add_variable(format!("x{j}"), poly.lower[j], poly.upper[j], 0.0);
    }
    let s = lp.add_variable("slack", 0.0, 1e9, -1.0);
    if poly.balance {
        lp.add_constraint(
            "balance",
            (0..d).map(|j| (j, 1.0)).collect(),
            Sense::Eq,
            0.0,
        );
    }
    for (i, (row, &b)) in poly.rows.iter().zip(&poly.rhs).enumerate() {
        let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue; // zero rows handled by the caller
        }
        let mut terms: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a))
            .collect();
        terms.push((s, norm));
        lp.add_constraint(format!("r{i}"), terms, Sense::Le, b);
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.primal[..d].to_vec(), sol.primal[s])),
        LpStatus::Infeasible => Err(ReduceError::Infeasible),
        LpStatus::Unbounded => unreachable!("slack variable is capped"),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum RowStatus {
    Undecided,
    Essential,
    Redundant,
}

/// Identify the essential rows of `poly`.
pub fn reduce(poly: &Polytope) -> Result<EssentialSet, ReduceError> {
    let d = poly.dim();
    let m = poly.num_rows();
    for (i, row) in poly.rows.iter().enumerate() {
        if row.len() != d {
            return Err(ReduceError::Dimension {
                row: i,
                got: row.len(),
                expected: d,
            });
        }
    }
    let mut status = vec![RowStatus::Undecided; m];
    let mut stats = ReduceStats::default();

    // Presolve: zero rows and (near-)duplicates.
    let mut norms = vec![0.0; m];
    for i in 0..m {
        norms[i] = poly.rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norms[i] < 1e-12 {
            if poly.rhs[i] < -row_tolerance(poly.rhs[i]) {
                return Err(ReduceError::Infeasible);
            }
            status[i] = RowStatus::Redundant;
        }
    }
    // Hash on the quantized normalized direction; exact duplicates and most
    // near-duplicates collide, the LP tests below catch whatever slips.
    {
        use std::collections::HashMap;
        let mut seen: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for i in 0..m {
            if status[i] == RowStatus::Redundant {
                continue;
            }
            let key: Vec<i64> = poly.rows[i]
                .iter()
                .map(|a| (a / norms[i] * 1e7).round() as i64)
                .collect();
            let bucket = seen.entry(key).or_default();
            let b_i = poly.rhs[i] / norms[i];
            for &j in bucket.iter() {
                let b_j = poly.rhs[j] / norms[j];
                let cos = poly.rows[i]
                    .iter()
                    .zip(&poly.rows[j])
                    .map(|(a, c)| a * c)
                    .sum::<f64>()
                    / (norms[i] * norms[j]);
                if cos > 1.0 - 1e-9 && (b_i - b_j).abs() <= CONTAINS_TOL {
                    // Duplicate of an earlier row: first occurrence wins.
                    status[i] = RowStatus::Redundant;
                    break;
                }
            }
            if status[i] != RowStatus::Redundant {
                bucket.push(i);
            }
        }
    }

    // Interval presolve: the row optimum over the bounds alone already
    // upper-bounds the optimum over the polytope, so rows cleared here are
    // redundant without any LP work. This is what makes generously sized
    // N-1 constraint sets cheap to reduce.
    for i in 0..m {
        if status[i] != RowStatus::Undecided {
            continue;
        }
        let mut ub = 0.0;
        for j in 0..d {
            let a = poly.rows[i][j];
            if a == 0.0 {
                continue;
            }
            ub += if a > 0.0 {
                a * poly.upper[j]
            } else {
                a * poly.lower[j]
            };
            if !ub.is_finite() {
                break;
            }
        }
        if ub.is_finite() && ub <= poly.rhs[i] + row_tolerance(poly.rhs[i]) {
            status[i] = RowStatus::Redundant;
            stats.interval_redundant += 1;
        }
    }

    // Strict interior point for the ray-shooting presolve.
    let (center, slack) = interior_point(poly)?;
    stats.lp_calls += 1;
    let degenerate = slack <= 1e-9;
    stats.degenerate_interior = degenerate;

    if !degenerate {
        // Residual slack of every row at the center, reused per ray.
        let resid: Vec<f64> = (0..m)
            .map(|i| {
                poly.rhs[i]
                    - poly.rows[i]
                        .iter()
                        .zip(&center)
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
            })
            .collect();

        let candidates: Vec<usize> = (0..m).filter(|&i| status[i] == RowStatus::Undecided).collect();
        let stride = candidates.len().div_ceil(RAY_CAP).max(1);
        for &i in candidates.iter().step_by(stride) {
            // Ray direction: the row normal, projected into the balance
            // hyperplane when one is present.
            let mut dir: Vec<f64> = poly.rows[i].iter().map(|a| a / norms[i]).collect();
            if poly.balance {
                let mean: f64 = dir.iter().sum::<f64>() / d as f64;
                for v in dir.iter_mut() {
                    *v -= mean;
                }
            }
            let dir_norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dir_norm < 1e-9 {
                continue;
            }

            // First hit along the ray over rows and bounds.
            let mut best_t = INF;
            let mut best_row: Option<usize> = None;
            let mut tie = false;
            for j in 0..m {
                if status[j] == RowStatus::Redundant {
                    continue;
                }
                let along: f64 = poly.rows[j].iter().zip(&dir).map(|(a, v)| a * v).sum();
                if along <= 1e-12 {
                    continue;
                }
                let t = resid[j] / along;
                if t < best_t - 1e-9 {
                    best_t = t;
                    best_row = Some(j);
                    tie = false;
                } else if t <= best_t + 1e-9 {
                    tie = true;
                }
            }
            for j in 0..d {
                if dir[j].abs() <= 1e-12 {
                    continue;
                }
                let (limit, delta) = if dir[j] > 0.0 {
                    (poly.upper[j], dir[j])
                } else {
                    (poly.lower[j], dir[j])
                };
                if !limit.is_finite() {
                    continue;
                }
                let t = (limit - center[j]) / delta;
                if t < best_t - 1e-9 {
                    best_t = t;
                    best_row = None; // a bound is hit first
                    tie = false;
                } else if t <= best_t + 1e-9 {
                    tie = true;
                }
            }
            // A unique first-hit row is provably essential.
            if let (Some(j), false) = (best_row, tie) {
                if status[j] == RowStatus::Undecided {
                    status[j] = RowStatus::Essential;
                    stats.ray_hits += 1;
                }
            }
        }
    }

    // Sequential LP tests against the growing essential set.
    let mut essential: Vec<usize> = (0..m).filter(|&i| status[i] == RowStatus::Essential).collect();
    for i in 0..m {
        if status[i] != RowStatus::Undecided {
            continue;
        }
        stats.rows_tested += 1;
        stats.lp_calls += 1;
        if test_row_redundant(poly, i, &essential)? {
            status[i] = RowStatus::Redundant;
        } else {
            status[i] = RowStatus::Essential;
            essential.push(i);
            essential.sort_unstable();
        }
    }

    // Minimality sweep: rows added conservatively may have been superseded
    // by later additions; drop whatever has become redundant.
    let mut kept: BTreeSet<usize> = essential.iter().copied().collect();
    for &i in &essential {
        let others: Vec<usize> = kept.iter().copied().filter(|&j| j != i).collect();
        stats.lp_calls += 1;
        if test_row_redundant(poly, i, &others)? {
            kept.remove(&i);
        }
    }

    let indices: Vec<usize> = kept.into_iter().collect();
    stats.removal_fraction = if m == 0 {
        0.0
    } else {
        1.0 - indices.len() as f64 / m as f64
    };
    Ok(EssentialSet {
        indices,
        tolerance: CONTAINS_TOL,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Unit box as explicit rows with loose bounds behind them.
    fn box_poly(extra: Vec<(Vec<f64>, f64)>) -> Polytope {
        let mut rows = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let mut rhs = vec![1.0, 1.0, 1.0, 1.0];
        for (r, b) in extra {
            rows.push(r);
            rhs.push(b);
        }
        Polytope {
            rows,
            rhs,
            lower: vec![-10.0, -10.0],
            upper: vec![10.0, 10.0],
            balance: false,
        }
    }

    #[test]
    fn contains_unit_box() {
        let poly = box_poly(vec![]);
        assert!(contains(&poly, &[0.0, 0.0], CONTAINS_TOL));
        assert!(!contains(&poly, &[2.0, 0.0], CONTAINS_TOL));
    }

    #[test]
    fn contains_respects_balance() {
        let poly = Polytope {
            rows: vec![],
            rhs: vec![],
            lower: vec![-2.0, -2.0],
            upper: vec![2.0, 2.0],
            balance: true,
        };
        assert!(contains(&poly, &[1.0, -1.0], CONTAINS_TOL));
        assert!(!contains(&poly, &[1.0, 0.0], CONTAINS_TOL));
    }

    #[test]
    fn dominated_row_is_redundant() {
        // rows {x<=1, x<=2} with bounds |x|<=10.
        let poly = Polytope {
            rows: vec![vec![1.0], vec![1.0]],
            rhs: vec![1.0, 2.0],
            lower: vec![-10.0],
            upper: vec![10.0],
            balance: false,
        };
        assert!(test_row_redundant(&poly, 1, &[0]).unwrap());
        assert!(!test_row_redundant(&poly, 0, &[1]).unwrap());
    }

    #[test]
    fn diagonal_above_box_is_redundant() {
        let poly = box_poly(vec![(vec![1.0, 1.0], 3.0)]);
        // max x+y over the box is 2 < 3.
        assert!(test_row_redundant(&poly, 4, &[0, 1, 2, 3]).unwrap());
    }

    #[test]
    fn unbounded_test_lp_is_an_error() {
        let poly = Polytope {
            rows: vec![vec![1.0]],
            rhs: vec![1.0],
            lower: vec![-INF],
            upper: vec![INF],
            balance: false,
        };
        // Testing the only row against nothing leaves max x unbounded.
        assert!(matches!(
            test_row_redundant(&poly, 0, &[]),
            Err(ReduceError::UnboundedTest { .. })
        ));
    }

    #[test]
    fn reduce_box_with_two_diagonals() {
        let poly = box_poly(vec![
            (vec![1.0, 1.0], 1.5),
            (vec![1.0, 1.0], 3.0),
        ]);
        let result = reduce(&poly).unwrap();
        assert_eq!(result.indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn duplicate_row_keeps_first_occurrence() {
        let poly = Polytope {
            rows: vec![vec![1.0], vec![1.0]],
            rhs: vec![1.0, 1.0],
            lower: vec![-10.0],
            upper: vec![10.0],
            balance: false,
        };
        let result = reduce(&poly).unwrap();
        assert_eq!(result.indices, vec![0]);
    }

    #[test]
    fn infeasible_polytope_errors() {
        let poly = Polytope {
            rows: vec![vec![1.0], vec![-1.0]],
            rhs: vec![-2.0, 1.0], // x <= -2 and x >= -1
            lower: vec![-10.0],
            upper: vec![10.0],
            balance: false,
        };
        assert!(matches!(reduce(&poly), Err(ReduceError::Infeasible)));
    }

    #[test]
    fn reduce_is_monotone_on_reduced_system() {
        let poly = box_poly(vec![
            (vec![1.0, 1.0], 1.5),
            (vec![1.0, 1.0], 3.0),
            (vec![0.5, 0.5], 5.0),
        ]);
        let first = reduce(&poly).unwrap();
        let reduced = Polytope {
            rows: first.indices.iter().map(|&i| poly.rows[i].clone()).collect(),
            rhs: first.indices.iter().map(|&i| poly.rhs[i]).collect(),
            lower: poly.lower.clone(),
            upper: poly.upper.clone(),
            balance: poly.balance,
        };
        let second = reduce(&reduced).unwrap();
        assert_eq!(second.indices, (0..reduced.num_rows()).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_oracle_agrees_after_reduction() {
        let poly = box_poly(vec![
            (vec![1.0, 1.0], 1.5),
            (vec![1.0, 1.0], 3.0),
            (vec![-1.0, 2.0], 2.5),
            (vec![3.0, -1.0], 9.0),
        ]);
        let result = reduce(&poly).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let full = contains(&poly, &x, CONTAINS_TOL);
            let reduced = contains_subset(&poly, &result.indices, &x, CONTAINS_TOL);
            assert_eq!(full, reduced, "disagreement at {x:?}");
        }
    }

    #[test]
    fn determinism_under_repeated_runs() {
        let poly = box_poly(vec![
            (vec![1.0, 1.0], 1.5),
            (vec![-1.0, 2.0], 2.5),
        ]);
        let a = reduce(&poly).unwrap();
        let b = reduce(&poly).unwrap();
        assert_eq!(a.indices, b.indices);
    }
}
