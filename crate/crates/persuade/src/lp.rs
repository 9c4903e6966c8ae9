//! Thin LP modeling layer over a swappable backend (currently Clarabel).
//!
//! All models are maximization problems over bounded or free continuous
//! variables with `<=`, `>=` and `=` constraints. The backend solves the
//! conic form `min q'x  s.t.  Ax + s = b, s in (Zero x Nonnegative)`;
//! equality rows map to the zero cone, everything else (including finite
//! variable bounds) to nonnegative-cone rows.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

static DEBUG_DUMP_DIR: Mutex<Option<PathBuf>> = Mutex::new(None);

/// Clamp a probability-like LP value into `[0, 1]`, normalizing `-0.0`.
pub fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0) + 0.0
}

/// When set, every model passed to [`solve_lp`] is also written to
/// `<dir>/<model name>.lp` in the LP text format.
pub fn set_debug_dump_dir(dir: Option<PathBuf>) {
    *DEBUG_DUMP_DIR.lock().unwrap() = dir;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct VarDef {
    name: String,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone)]
struct Constraint {
    name: String,
    terms: Vec<(VarId, f64)>,
    sense: Sense,
    rhs: f64,
}

/// A linear program `max c'x` subject to linear constraints and bounds.
#[derive(Debug, Clone)]
pub struct LpModel {
    name: String,
    vars: Vec<VarDef>,
    cons: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
}

impl LpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            cons: Vec::new(),
            objective: Vec::new(),
        }
    }

    /// Declare a variable with bounds; use `f64::NEG_INFINITY`/`f64::INFINITY`
    /// for free directions.
    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> VarId {
        assert!(lo <= hi, "variable bounds must satisfy lo <= hi");
        assert!(!lo.is_nan() && !hi.is_nan());
        self.vars.push(VarDef {
            name: name.into(),
            lo,
            hi,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        debug_assert!(terms.iter().all(|(v, _)| v.0 < self.vars.len()));
        self.cons.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    /// Objective coefficients (maximization). Unmentioned variables get 0.
    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>) {
        debug_assert!(terms.iter().all(|(v, _)| v.0 < self.vars.len()));
        self.objective = terms;
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dump the model in a CPLEX-style LP text format. Stable layout:
    /// `Maximize`, `Subject To`, `Bounds`, `End`; one constraint per line as
    /// `name: coeff var ... sense rhs`.
    pub fn write_lp_format(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "\\ model: {}", self.name)?;
        writeln!(w, "Maximize")?;
        write!(w, " obj:")?;
        for (var, coeff) in &self.objective {
            write!(w, " {:+} {}", coeff, self.vars[var.0].name)?;
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        for con in &self.cons {
            write!(w, " {}:", con.name)?;
            for (var, coeff) in &con.terms {
                write!(w, " {:+} {}", coeff, self.vars[var.0].name)?;
            }
            let sense = match con.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            writeln!(w, " {} {}", sense, con.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for var in &self.vars {
            match (var.lo.is_finite(), var.hi.is_finite()) {
                (true, true) => writeln!(w, " {} <= {} <= {}", var.lo, var.name, var.hi)?,
                (true, false) => writeln!(w, " {} >= {}", var.name, var.lo)?,
                (false, true) => writeln!(w, " {} <= {}", var.name, var.hi)?,
                (false, false) => writeln!(w, " {} free", var.name)?,
            }
        }
        writeln!(w, "End")
    }

    /// Re-check an assignment against every constraint and bound; returns the
    /// largest violation found (0 when feasible).
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (var, def) in self.vars.iter().enumerate() {
            worst = worst.max(def.lo - values[var]).max(values[var] - def.hi);
        }
        for con in &self.cons {
            let lhs: f64 = con.terms.iter().map(|(v, c)| c * values[v.0]).sum();
            let violation = match con.sense {
                Sense::Le => lhs - con.rhs,
                Sense::Ge => con.rhs - lhs,
                Sense::Eq => (lhs - con.rhs).abs(),
            };
            worst = worst.max(violation);
        }
        worst
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * values[v.0]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpDiagnostics {
    pub solver: &'static str,
    pub status_raw: String,
    pub iterations: u32,
    pub solve_time_s: f64,
    pub reduced_accuracy: bool,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value of the maximization problem (meaningful when optimal).
    pub objective: f64,
    pub values: Vec<f64>,
    pub diagnostics: LpDiagnostics,
}

impl LpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.index()]
    }
}

/// Solve an `LpModel`. Infeasibility and unboundedness are reported through
/// `status`, never as errors.
pub fn solve_lp(model: &LpModel) -> LpSolution {
    if let Some(dir) = DEBUG_DUMP_DIR.lock().unwrap().clone() {
        let path = dir.join(format!("{}.lp", model.name));
        if let Ok(mut file) = std::fs::File::create(path) {
            let _ = model.write_lp_format(&mut file);
        }
    }
    let n = model.vars.len();

    // Rows: equalities first (zero cone), then `<=` rows (nonnegative cone).
    // `>=` rows and variable bounds are rewritten as `<=` rows.
    let mut tri_eq: Vec<(usize, usize, f64)> = Vec::new();
    let mut b_eq: Vec<f64> = Vec::new();
    let mut tri_le: Vec<(usize, usize, f64)> = Vec::new();
    let mut b_le: Vec<f64> = Vec::new();

    for con in &model.cons {
        match con.sense {
            Sense::Eq => {
                let row = b_eq.len();
                for (var, coeff) in &con.terms {
                    tri_eq.push((row, var.0, *coeff));
                }
                b_eq.push(con.rhs);
            }
            Sense::Le => {
                let row = b_le.len();
                for (var, coeff) in &con.terms {
                    tri_le.push((row, var.0, *coeff));
                }
                b_le.push(con.rhs);
            }
            Sense::Ge => {
                let row = b_le.len();
                for (var, coeff) in &con.terms {
                    tri_le.push((row, var.0, -coeff));
                }
                b_le.push(-con.rhs);
            }
        }
    }
    for (var, def) in model.vars.iter().enumerate() {
        if def.hi.is_finite() {
            tri_le.push((b_le.len(), var, 1.0));
            b_le.push(def.hi);
        }
        if def.lo.is_finite() {
            tri_le.push((b_le.len(), var, -1.0));
            b_le.push(-def.lo);
        }
    }

    let n_eq = b_eq.len();
    let n_le = b_le.len();
    let m = n_eq + n_le;
    let mut rows = Vec::with_capacity(tri_eq.len() + tri_le.len());
    let mut cols = Vec::with_capacity(rows.capacity());
    let mut vals = Vec::with_capacity(rows.capacity());
    for (r, c, v) in tri_eq {
        rows.push(r);
        cols.push(c);
        vals.push(v);
    }
    for (r, c, v) in tri_le {
        rows.push(r + n_eq);
        cols.push(c);
        vals.push(v);
    }
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let mut b = b_eq;
    b.extend_from_slice(&b_le);

    // Clarabel minimizes, so negate the objective.
    let mut q = vec![0.0; n];
    for (var, coeff) in &model.objective {
        q[var.0] -= coeff;
    }
    let p = CscMatrix::<f64>::zeros((n, n));

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if n_eq > 0 {
        cones.push(ZeroConeT(n_eq));
    }
    if n_le > 0 {
        cones.push(NonnegativeConeT(n_le));
    }

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-9)
        .tol_feas(1e-9)
        .build()
        .expect("static settings");

    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(e) => {
            return LpSolution {
                status: LpStatus::NumericalFailure,
                objective: f64::NAN,
                values: vec![f64::NAN; n],
                diagnostics: LpDiagnostics {
                    solver: "clarabel",
                    status_raw: format!("setup error: {e:?}"),
                    iterations: 0,
                    solve_time_s: 0.0,
                    reduced_accuracy: false,
                },
            }
        }
    };
    solver.solve();
    let solution = &solver.solution;

    let raw = solution.status;
    let status = match raw {
        SolverStatus::Solved | SolverStatus::AlmostSolved => LpStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            LpStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => LpStatus::Unbounded,
        _ => LpStatus::NumericalFailure,
    };

    LpSolution {
        status,
        objective: -solution.obj_val,
        values: solution.x.clone(),
        diagnostics: LpDiagnostics {
            solver: "clarabel",
            status_raw: format!("{raw:?}"),
            iterations: solution.iterations,
            solve_time_s: solution.solve_time,
            reduced_accuracy: matches!(
                raw,
                SolverStatus::AlmostSolved
                    | SolverStatus::AlmostPrimalInfeasible
                    | SolverStatus::AlmostDualInfeasible
            ),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_single_var() {
        let mut model = LpModel::new("single");
        let x = model.add_var("x", 0.0, 10.0);
        model.add_constraint("cap", vec![(x, 1.0)], Sense::Le, 3.0);
        model.set_objective(vec![(x, 1.0)]);
        let sol = solve_lp(&model);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-7);
        assert!(model.max_violation(&sol.values) < 1e-7);
    }

    #[test]
    fn two_vars_shared_budget() {
        let mut model = LpModel::new("budget");
        let x = model.add_var("x", 0.0, f64::INFINITY);
        let y = model.add_var("y", 0.0, f64::INFINITY);
        model.add_constraint("budget", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        model.set_objective(vec![(x, 1.0), (y, 1.0)]);
        let sol = solve_lp(&model);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_is_a_status_not_a_panic() {
        let mut model = LpModel::new("infeasible");
        let x = model.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        model.add_constraint("lo", vec![(x, 1.0)], Sense::Ge, 1.0);
        model.add_constraint("hi", vec![(x, 1.0)], Sense::Le, 0.0);
        let sol = solve_lp(&model);
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut model = LpModel::new("unbounded");
        let x = model.add_var("x", 0.0, f64::INFINITY);
        model.set_objective(vec![(x, 1.0)]);
        let sol = solve_lp(&model);
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_constraints() {
        let mut model = LpModel::new("eq");
        let x = model.add_var("x", 0.0, 1.0);
        let y = model.add_var("y", 0.0, 1.0);
        model.add_constraint("mix", vec![(x, 0.5), (y, 1.0)], Sense::Eq, 0.75);
        model.set_objective(vec![(x, 1.0)]);
        let sol = solve_lp(&model);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6);
        assert!((0.5 * sol.values[0] + sol.values[1] - 0.75).abs() < 1e-7);
    }

    #[test]
    fn resolve_is_deterministic() {
        let mut model = LpModel::new("det");
        let x = model.add_var("x", 0.0, 2.0);
        let y = model.add_var("y", 0.0, 2.0);
        model.add_constraint("c", vec![(x, 1.0), (y, 2.0)], Sense::Le, 3.0);
        model.set_objective(vec![(x, 1.0), (y, 1.3)]);
        let a = solve_lp(&model);
        let b = solve_lp(&model);
        assert_eq!(a.status, LpStatus::Optimal);
        assert!((a.objective - b.objective).abs() < 1e-9);
        for (va, vb) in a.values.iter().zip(&b.values) {
            assert!((va - vb).abs() < 1e-9);
        }
    }

    #[test]
    fn lp_format_dump() {
        let mut model = LpModel::new("dump");
        let x = model.add_var("x", 0.0, 1.0);
        let y = model.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        model.add_constraint("c1", vec![(x, 2.0), (y, -1.0)], Sense::Ge, 0.5);
        model.set_objective(vec![(x, 1.0)]);
        let mut buf = Vec::new();
        model.write_lp_format(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Maximize"));
        assert!(text.contains("c1: +2 x -1 y >= 0.5"));
        assert!(text.contains("y free"));
        assert!(text.trim_end().ends_with("End"));
    }
}
