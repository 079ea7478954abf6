//! Exact LP solving with primal and dual solutions.
//!
//! The reference implementation is a dense bounded-variable revised simplex
//! with an explicit basis inverse, two-phase start and a Bland's-rule
//! fallback against cycling. Problem sizes are desk scale (hundreds to a few
//! thousand variables), which an explicit inverse handles comfortably.
//!
//! Duals follow the marginal convention: the dual of constraint `i` is the
//! change of the optimal objective per unit increase of `rhs_i`.

use serde::Serialize;
use thiserror::Error;

pub const INF: f64 = f64::INFINITY;

/// Feasibility tolerance on primal values.
const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance for optimality.
const OPT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    /// Sparse row as (variable index, coefficient) pairs.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear program `min c·x  s.t.  rows, l <= x <= u`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint '{constraint}' references undeclared variable index {index}")]
    BadVariableIndex { constraint: String, index: usize },
    #[error("non-finite objective coefficient on variable '{0}'")]
    BadCost(String),
    #[error("simplex did not converge within {0} iterations")]
    IterationLimit(usize),
}

impl LinearProgram {
    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn check(&self) -> Result<(), LpError> {
        for v in &self.variables {
            if !v.cost.is_finite() {
                return Err(LpError::BadCost(v.name.clone()));
            }
        }
        for c in &self.constraints {
            for &(j, _) in &c.terms {
                if j >= self.variables.len() {
                    return Err(LpError::BadVariableIndex {
                        constraint: c.name.clone(),
                        index: j,
                    });
                }
            }
        }
        Ok(())
    }

    /// Export in CPLEX LP interchange format. Names are sanitized to
    /// `[A-Za-z0-9_]` so external solvers accept them.
    pub fn to_lp_format(&self) -> String {
        fn sanitize(name: &str) -> String {
            let mut s: String = name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
                .collect();
            if s.is_empty() || s.chars().next().unwrap().is_ascii_digit() {
                s.insert(0, 'x');
            }
            s
        }
        let var_name = |j: usize| sanitize(&self.variables[j].name);
        let mut out = String::from("Minimize\n obj:");
        for (j, v) in self.variables.iter().enumerate() {
            if v.cost != 0.0 {
                out.push_str(&format!(" {:+} {}", v.cost, var_name(j)));
            }
        }
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            out.push_str(&format!(" {}:", sanitize(&c.name)));
            for &(j, a) in &c.terms {
                out.push_str(&format!(" {:+} {}", a, var_name(j)));
            }
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            out.push_str(&format!(" {} {}\n", op, c.rhs));
        }
        out.push_str("Bounds\n");
        for (j, v) in self.variables.iter().enumerate() {
            let name = var_name(j);
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (true, true) => out.push_str(&format!(" {} <= {} <= {}\n", v.lower, name, v.upper)),
                (true, false) => out.push_str(&format!(" {} >= {}\n", name, v.lower)),
                (false, true) => {
                    out.push_str(&format!(" -inf <= {} <= {}\n", name, v.upper));
                }
                (false, false) => out.push_str(&format!(" {} free\n", name)),
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal value per declared variable (meaningful when optimal).
    pub primal: Vec<f64>,
    /// Dual value per declared constraint, marginal-cost convention.
    pub duals: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    /// Max primal constraint/bound violation; used by tests and callers that
    /// refuse silently wrong answers.
    pub fn primal_infeasibility(&self, lp: &LinearProgram) -> f64 {
        let mut worst = 0.0_f64;
        for (v, &x) in lp.variables.iter().zip(&self.primal) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &lp.constraints {
            let lhs: f64 = c.terms.iter().map(|&(j, a)| a * self.primal[j]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Duality gap |cᵀx − (yᵀb + reduced-cost bound terms)|.
    pub fn duality_gap(&self, lp: &LinearProgram) -> f64 {
        let n = lp.variables.len();
        let mut reduced = vec![0.0; n];
        for (j, v) in lp.variables.iter().enumerate() {
            reduced[j] = v.cost;
        }
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, a) in &c.terms {
                reduced[j] -= self.duals[i] * a;
            }
        }
        let mut dual_obj: f64 = lp
            .constraints
            .iter()
            .zip(&self.duals)
            .map(|(c, y)| y * c.rhs)
            .sum();
        for (j, v) in lp.variables.iter().enumerate() {
            let z = reduced[j];
            if z.abs() <= 1e-9 {
                continue;
            }
            // A nonzero reduced cost pins the variable to one of its bounds.
            let bound = if z > 0.0 { v.lower } else { v.upper };
            if bound.is_finite() {
                dual_obj += z * bound;
            }
        }
        (self.objective - dual_obj).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    FreeZero,
}

/// Internal standard form: rows `A x = b` over structural + slack variables,
/// all with bounds. Slack bounds encode the row sense.
struct Tableau {
    ncols: usize,
    nrows: usize,
    /// Column-major sparse matrix.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Explicit dense basis inverse, row-major nrows x nrows.
    binv: Vec<f64>,
    x: Vec<f64>,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.variables.len();
        let m = lp.constraints.len();
        let ncols = n + m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        let mut lower = Vec::with_capacity(ncols);
        let mut upper = Vec::with_capacity(ncols);
        let mut cost = vec![0.0; ncols];
        for (j, v) in lp.variables.iter().enumerate() {
            lower.push(v.lower);
            upper.push(v.upper);
            cost[j] = v.cost;
        }
        let mut b = Vec::with_capacity(m);
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, a) in &c.terms {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
            // Slack: row + s = rhs with sign-encoding bounds.
            cols[n + i].push((i, 1.0));
            let (sl, su) = match c.sense {
                Sense::Le => (0.0, INF),
                Sense::Ge => (-INF, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(sl);
            upper.push(su);
            b.push(c.rhs);
        }
        let state = vec![VarState::AtLower; ncols];
        Tableau {
            ncols,
            nrows: m,
            cols,
            lower,
            upper,
            cost,
            b,
            state,
            basis: (n..n + m).collect(),
            binv: Vec::new(),
            x: vec![0.0; ncols],
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::FreeZero => 0.0,
            VarState::Basic(_) => unreachable!("basic variable has no fixed value"),
        }
    }

    /// Put every nonbasic variable on its finite bound nearest zero.
    fn init_nonbasic_states(&mut self) {
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            self.state[j] = match (self.lower[j].is_finite(), self.upper[j].is_finite()) {
                (true, true) => {
                    if self.lower[j].abs() <= self.upper[j].abs() {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    }
                }
                (true, false) => VarState::AtLower,
                (false, true) => VarState::AtUpper,
                (false, false) => VarState::FreeZero,
            };
        }
    }

    fn set_identity_binv(&mut self) {
        let m = self.nrows;
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
    }

    /// Recompute basic variable values from the nonbasic assignment.
    fn recompute_basics(&mut self) {
        let m = self.nrows;
        let mut rhs = self.b.clone();
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                for &(i, a) in &self.cols[j] {
                    rhs[i] -= a * v;
                }
            }
        }
        for r in 0..m {
            let mut val = 0.0;
            for i in 0..m {
                val += self.binv[r * m + i] * rhs[i];
            }
            self.x[self.basis[r]] = val;
        }
    }

    /// d = B^{-1} A_j for a column.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.nrows;
        let mut d = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for r in 0..m {
                let c = self.binv[r * m + i];
                if c != 0.0 {
                    d[r] += c * a;
                }
            }
        }
        d
    }

    /// y = c_B^T B^{-1} for the given cost vector.
    fn duals_for(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.nrows;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for i in 0..m {
                    y[i] += cb * self.binv[r * m + i];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], cost: &[f64]) -> f64 {
        let mut rc = cost[j];
        for &(i, a) in &self.cols[j] {
            rc -= y[i] * a;
        }
        rc
    }

    /// Replace basis row `r` by column `q`; `d` is the ftran of `q`.
    fn update_basis(&mut self, r: usize, q: usize, d: &[f64]) {
        let m = self.nrows;
        let piv = d[r];
        let inv_piv = 1.0 / piv;
        for i in 0..m {
            self.binv[r * m + i] *= inv_piv;
        }
        for rr in 0..m {
            if rr == r || d[rr] == 0.0 {
                continue;
            }
            let f = d[rr];
            for i in 0..m {
                self.binv[rr * m + i] -= f * self.binv[r * m + i];
            }
        }
        let leaving = self.basis[r];
        self.basis[r] = q;
        self.state[q] = VarState::Basic(r);
        debug_assert_ne!(leaving, q);
    }
}

enum PhaseOutcome {
    Converged,
    Unbounded,
}

/// One simplex phase: minimize `cost` until optimal or unbounded.
fn run_phase(tab: &mut Tableau, cost: &[f64], max_iter: usize) -> Result<PhaseOutcome, LpError> {
    let m = tab.nrows;
    let mut iters_since_progress = 0usize;
    let mut last_obj = f64::INFINITY;
    for iter in 0..max_iter {
        // Bland's rule once degeneracy stalls progress for a while.
        let bland = iters_since_progress > 2 * (m + tab.ncols) + 50;
        let y = tab.duals_for(cost);

        // Pricing: pick the entering variable and its direction.
        // A negative reduced cost lets a variable rise off its lower bound,
        // a positive one lets it drop off its upper bound.
        let mut entering: Option<(usize, f64, f64)> = None; // (col, |rc|, dir)
        for j in 0..tab.ncols {
            if matches!(tab.state[j], VarState::Basic(_)) {
                continue;
            }
            let rc = tab.reduced_cost(j, &y, cost);
            let dir = match tab.state[j] {
                VarState::AtLower if rc < -OPT_TOL => 1.0,
                VarState::AtUpper if rc > OPT_TOL => -1.0,
                VarState::FreeZero if rc < -OPT_TOL => 1.0,
                VarState::FreeZero if rc > OPT_TOL => -1.0,
                _ => continue,
            };
            match entering {
                None => entering = Some((j, rc.abs(), dir)),
                Some((_, best, _)) if !bland && rc.abs() > best => {
                    entering = Some((j, rc.abs(), dir));
                }
                _ => {}
            }
            if bland {
                break; // lowest eligible index wins
            }
        }
        let Some((q, _rc, dir)) = entering else {
            return Ok(PhaseOutcome::Converged);
        };

        let d = tab.ftran(q);

        // Ratio test: how far can x_q move along `dir`?
        // First pass finds the minimal blocking step, second pass picks the
        // blocking row with the largest pivot among (near-)ties so tiny
        // pivots never enter the basis update.
        let range_q = tab.upper[q] - tab.lower[q];
        let mut t_max = if range_q.is_finite() { range_q } else { INF };
        let ratio_of = |tab: &Tableau, r: usize| -> Option<(f64, bool)> {
            let delta = -dir * d[r]; // change of basic var per unit of t
            if delta.abs() <= 1e-11 {
                return None;
            }
            let bi = tab.basis[r];
            let xb = tab.x[bi];
            let (limit, at_upper) = if delta > 0.0 {
                (tab.upper[bi], true)
            } else {
                (tab.lower[bi], false)
            };
            if !limit.is_finite() {
                return None;
            }
            Some((((limit - xb) / delta).max(0.0), at_upper))
        };
        for r in 0..m {
            if let Some((t, _)) = ratio_of(tab, r) {
                if t < t_max {
                    t_max = t;
                }
            }
        }

        if t_max.is_infinite() {
            return Ok(PhaseOutcome::Unbounded);
        }

        let tie_tol = 1e-9 * (1.0 + t_max.abs());
        let mut blocker: Option<(usize, bool, f64)> = None; // (row, at upper, |pivot|)
        for r in 0..m {
            if let Some((t, at_upper)) = ratio_of(tab, r) {
                if t > t_max + tie_tol {
                    continue;
                }
                // Snapping the leaving variable to its bound displaces it by
                // (t - t_max) * delta; with a huge pivot that displacement can
                // be material even within the ratio tie tolerance.
                let snap = ((t - t_max) * d[r]).abs();
                if snap > 1e-7 * (1.0 + tab.x[tab.basis[r]].abs()) {
                    continue;
                }
                let piv = d[r].abs();
                let better = match blocker {
                    None => true,
                    Some((br, _, bp)) => {
                        if bland {
                            tab.basis[r] < tab.basis[br]
                        } else {
                            piv > bp
                        }
                    }
                };
                if better {
                    blocker = Some((r, at_upper, piv));
                }
            }
        }
        let blocker = blocker.map(|(r, u, _)| (r, u));

        // Apply the step.
        let t = t_max;
        let xq_new = tab.x[q] + dir * t;
        for r in 0..m {
            let bi = tab.basis[r];
            tab.x[bi] -= dir * t * d[r];
        }
        tab.x[q] = xq_new;

        match blocker {
            None => {
                // Bound flip: entering variable moved to its opposite bound.
                tab.state[q] = if dir > 0.0 {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
            }
            Some((r, at_upper)) => {
                let leaving = tab.basis[r];
                tab.x[leaving] = if at_upper {
                    tab.upper[leaving]
                } else {
                    tab.lower[leaving]
                };
                tab.state[leaving] = if at_upper {
                    VarState::AtUpper
                } else if tab.lower[leaving].is_finite() {
                    VarState::AtLower
                } else {
                    VarState::FreeZero
                };
                tab.update_basis(r, q, &d);
            }
        }

        let obj: f64 = (0..tab.ncols).map(|j| cost[j] * tab.x[j]).sum();
        if obj < last_obj - 1e-12 {
            last_obj = obj;
            iters_since_progress = 0;
        } else {
            iters_since_progress += 1;
        }
        // Frequent refresh keeps the explicit inverse honest; product-form
        // updates with small or very large pivots degrade it quickly.
        let bad_pivot = blocker
            .map(|(r, _)| !(1e-6..=1e7).contains(&d[r].abs()))
            .unwrap_or(false);
        if bad_pivot || iter % 25 == 24 {
            refactorize(tab);
        }
    }
    Err(LpError::IterationLimit(max_iter))
}

/// Rebuild B^{-1} from scratch by Gauss-Jordan on the basis columns.
fn refactorize(tab: &mut Tableau) {
    let m = tab.nrows;
    if m == 0 {
        return;
    }
    let mut mat = vec![0.0; m * m];
    for (r, &j) in tab.basis.iter().enumerate() {
        for &(i, a) in &tab.cols[j] {
            mat[i * m + r] = a;
        }
    }
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if mat[r * m + col].abs() > mat[piv * m + col].abs() {
                piv = r;
            }
        }
        if mat[piv * m + col].abs() < 1e-12 {
            continue; // numerically singular; keep going, phase loop recovers
        }
        if piv != col {
            for k in 0..m {
                mat.swap(col * m + k, piv * m + k);
                inv.swap(col * m + k, piv * m + k);
            }
        }
        let p = mat[col * m + col];
        for k in 0..m {
            mat[col * m + k] /= p;
            inv[col * m + k] /= p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = mat[r * m + col];
            if f != 0.0 {
                for k in 0..m {
                    mat[r * m + k] -= f * mat[col * m + k];
                    inv[r * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    tab.binv = inv;
    tab.recompute_basics();
}

/// Solve a linear program, returning primal values, duals and the objective.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.variables.len();
    let m = lp.constraints.len();
    let max_iter = 50 * (n + m + 10).max(200);

    let mut tab = Tableau::new(lp);
    tab.init_nonbasic_states();

    // Initial basis: the slack of each row where its value fits the slack
    // bounds, otherwise a fresh artificial variable absorbing the residual.
    let mut residual = tab.b.clone();
    for j in 0..n + m {
        let v = tab.nonbasic_value(j);
        tab.x[j] = v;
        if v != 0.0 {
            for &(i, a) in &tab.cols[j].clone() {
                residual[i] -= a * v;
            }
        }
    }
    // nonbasic_value above also covered slacks; undo their contribution so
    // residual_i = b_i - A_i x_N over structurals only, then decide per row.
    for i in 0..m {
        let sj = n + i;
        residual[i] += tab.x[sj]; // slack coefficient is +1
    }
    let mut artificials = Vec::new();
    let mut binv_sign = vec![1.0; m];
    for i in 0..m {
        let sj = n + i;
        let s = residual[i];
        if s >= tab.lower[sj] - FEAS_TOL && s <= tab.upper[sj] + FEAS_TOL {
            tab.basis[i] = sj;
            tab.state[sj] = VarState::Basic(i);
            tab.x[sj] = s;
        } else {
            // Slack parks on its nearest bound; artificial takes the rest.
            let bound = if s < tab.lower[sj] {
                tab.lower[sj]
            } else {
                tab.upper[sj]
            };
            tab.state[sj] = if bound == tab.lower[sj] {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            tab.x[sj] = bound;
            let resid = s - bound;
            let sign = resid.signum();
            let aj = tab.ncols;
            tab.cols.push(vec![(i, sign)]);
            tab.lower.push(0.0);
            tab.upper.push(INF);
            tab.cost.push(0.0);
            tab.state.push(VarState::Basic(i));
            tab.x.push(resid.abs());
            tab.basis[i] = aj;
            tab.ncols += 1;
            binv_sign[i] = sign;
            artificials.push(aj);
        }
    }
    // Basis matrix is diagonal (+-1), so its inverse is too.
    tab.set_identity_binv();
    for i in 0..m {
        tab.binv[i * m + i] = binv_sign[i];
    }
    tab.recompute_basics();

    if !artificials.is_empty() {
        let mut phase1_cost = vec![0.0; tab.ncols];
        for &aj in &artificials {
            phase1_cost[aj] = 1.0;
        }
        // Sum of artificials is bounded below by 0, so phase 1 cannot be
        // unbounded; treat a reported ray as convergence at the floor.
        let _ = run_phase(&mut tab, &phase1_cost, max_iter)?;
        // Judge feasibility on a freshly refactorized basis, not drifted values.
        refactorize(&mut tab);
        let violation: f64 = artificials.iter().map(|&aj| tab.x[aj].abs()).sum();
        if violation > 1e-7 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: tab.x[..n].to_vec(),
                duals: vec![0.0; m],
                objective: f64::NAN,
            });
        }
        // Lock artificials at zero for phase 2.
        for &aj in &artificials {
            tab.lower[aj] = 0.0;
            tab.upper[aj] = 0.0;
            if !matches!(tab.state[aj], VarState::Basic(_)) {
                tab.state[aj] = VarState::AtLower;
            }
            tab.x[aj] = 0.0;
        }
        refactorize(&mut tab);
    }

    // Phase 2 on the true costs. Product-form updates drift numerically, so
    // on a failed residual check the phase is re-run from a refactorized
    // basis before giving up.
    let cost = tab.cost.clone();
    let mut outcome = run_phase(&mut tab, &cost, max_iter)?;
    for _ in 0..3 {
        if !matches!(outcome, PhaseOutcome::Converged) {
            break;
        }
        refactorize(&mut tab);
        let residual: f64 = (0..tab.nrows)
            .map(|r| {
                let bi = tab.basis[r];
                (tab.x[bi] - tab.x[bi].clamp(tab.lower[bi], tab.upper[bi])).abs()
            })
            .sum();
        if residual <= 1e-9 {
            break;
        }
        outcome = run_phase(&mut tab, &cost, max_iter)?;
    }
    match outcome {
        PhaseOutcome::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            primal: tab.x[..n].to_vec(),
            duals: vec![0.0; m],
            objective: f64::NEG_INFINITY,
        }),
        PhaseOutcome::Converged => {
            refactorize(&mut tab);
            let y = tab.duals_for(&cost);
            let primal = tab.x[..n].to_vec();
            let objective = lp
                .variables
                .iter()
                .zip(&primal)
                .map(|(v, &x)| v.cost * x)
                .sum();
            let solution = LpSolution {
                status: LpStatus::Optimal,
                primal,
                duals: y,
                objective,
            };
            // Never return a silently wrong answer.
            let infeas = solution.primal_infeasibility(lp);
            if infeas > 1e-6 {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    objective: f64::NAN,
                    ..solution
                });
            }
            Ok(solution)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn one_variable_with_ge_constraint() {
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", -INF, INF, 1.0);
        lp.add_constraint("floor", vec![(x, 1.0)], Sense::Ge, 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.objective, 3.0, 1e-9);
        assert_close(sol.duals[0], 1.0, 1e-9);
    }

    #[test]
    fn two_generator_dispatch_with_equality_dual() {
        let mut lp = LinearProgram::default();
        let g1 = lp.add_variable("g1", 0.0, INF, 10.0);
        let g2 = lp.add_variable("g2", 0.0, INF, 50.0);
        lp.add_constraint("cap1", vec![(g1, 1.0)], Sense::Le, 50.0);
        lp.add_constraint("balance", vec![(g1, 1.0), (g2, 1.0)], Sense::Eq, 100.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.objective, 3000.0, 1e-8);
        assert_close(sol.primal[0], 50.0, 1e-8);
        assert_close(sol.primal[1], 50.0, 1e-8);
        assert_close(sol.duals[1], 50.0, 1e-8);
        // Relaxing the cap substitutes cheap for expensive generation.
        assert_close(sol.duals[0], -40.0, 1e-8);
        assert!(sol.duality_gap(&lp) <= 1e-6 * (1.0 + sol.objective.abs()));
    }

    #[test]
    fn infeasible_bounds_reported() {
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", 0.0, INF, 1.0);
        lp.add_constraint("ceiling", vec![(x, 1.0)], Sense::Le, -1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", -INF, INF, -1.0);
        lp.add_constraint("floor", vec![(x, 1.0)], Sense::Ge, 0.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn bounded_variables_and_upper_bounds() {
        // min -x - 2y, 0<=x<=4, 0<=y<=3, x+y<=5 -> x=2? no: y=3 first, x=2, obj -8.
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", 0.0, 4.0, -1.0);
        let y = lp.add_variable("y", 0.0, 3.0, -2.0);
        lp.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Sense::Le, 5.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.objective, -8.0, 1e-9);
        assert_close(sol.primal[0], 2.0, 1e-9);
        assert_close(sol.primal[1], 3.0, 1e-9);
    }

    /// Brute-force oracle: maximize/minimize over all basic solutions of
    /// tiny LPs by enumerating constraint/bound intersections.
    fn brute_force_min(lp: &LinearProgram, grid: &[Vec<f64>]) -> f64 {
        let mut best = f64::INFINITY;
        for point in grid {
            let sol = LpSolution {
                status: LpStatus::Optimal,
                primal: point.clone(),
                duals: vec![0.0; lp.constraints.len()],
                objective: 0.0,
            };
            if sol.primal_infeasibility(lp) <= 1e-9 {
                let obj: f64 = lp
                    .variables
                    .iter()
                    .zip(point)
                    .map(|(v, &x)| v.cost * x)
                    .sum();
                best = best.min(obj);
            }
        }
        best
    }

    #[test]
    fn matches_vertex_enumeration_on_small_lps() {
        // 2-variable LP: vertices of {0<=x<=4, 0<=y<=3, x+y<=5}.
        let mut lp = LinearProgram::default();
        lp.add_variable("x", 0.0, 4.0, -3.0);
        lp.add_variable("y", 0.0, 3.0, -5.0);
        lp.add_constraint("sum", vec![(0, 1.0), (1, 1.0)], Sense::Le, 5.0);
        let vertices = vec![
            vec![0.0, 0.0],
            vec![4.0, 0.0],
            vec![0.0, 3.0],
            vec![4.0, 1.0],
            vec![2.0, 3.0],
        ];
        let expect = brute_force_min(&lp, &vertices);
        let sol = solve_lp(&lp).unwrap();
        assert_close(sol.objective, expect, 1e-8);
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Many redundant rows through the same vertex.
        let mut lp = LinearProgram::default();
        let x = lp.add_variable("x", 0.0, INF, -1.0);
        let y = lp.add_variable("y", 0.0, INF, -1.0);
        for k in 0..20 {
            lp.add_constraint(
                format!("c{k}"),
                vec![(x, 1.0), (y, 1.0 + 1e-9 * k as f64)],
                Sense::Le,
                1.0,
            );
        }
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.objective, -1.0, 1e-6);
    }

    #[test]
    fn lp_format_export_sanitizes_names() {
        let mut lp = LinearProgram::default();
        lp.add_variable("G(p1,0)", 0.0, 100.0, 10.0);
        lp.add_constraint("balance n1/t0", vec![(0, 1.0)], Sense::Eq, 50.0);
        let text = lp.to_lp_format();
        assert!(text.contains("G_p1_0_"));
        assert!(text.contains("balance_n1_t0"));
        assert!(!text.contains('('));
    }

    #[test]
    fn free_variable_equality() {
        // min |style| LP with free variable through equality chain.
        let mut lp = LinearProgram::default();
        let inj = lp.add_variable("inj", -INF, INF, 0.0);
        let g = lp.add_variable("g", 0.0, 100.0, 10.0);
        lp.add_constraint("bal", vec![(g, 1.0), (inj, -1.0)], Sense::Eq, 0.0);
        lp.add_constraint("fix", vec![(inj, 1.0)], Sense::Eq, 30.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_close(sol.objective, 300.0, 1e-8);
        assert_close(sol.primal[inj], 30.0, 1e-8);
    }
}
