//! Second-order cone program container and solver contract. Subproblem
//! builders target this one audited lowering surface; solutions are always
//! re-checked by direct substitution, independent of the backend.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{NonnegativeConeT, SecondOrderConeT, ZeroConeT},
};
use std::fmt::Write as _;

/// Linear cone program: minimize c^T x subject to affine equalities,
/// nonnegative variables, second-order cone blocks ||x|| <= t and rotated
/// blocks ||x||^2 <= 2ab (which imply a, b >= 0).
#[derive(Debug, Clone, Default)]
pub struct ConeProgram {
    var_names: Vec<String>,
    objective: Vec<(usize, f64)>,
    /// Rows sum_i a_i x_i = b.
    eq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    nonneg_vars: Vec<usize>,
    /// Index blocks [t, x_1 .. x_n].
    soc_blocks: Vec<Vec<usize>>,
    /// Index blocks [a, b, x_1 .. x_n].
    rsoc_blocks: Vec<Vec<usize>>,
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalError,
}

/// Solver output plus independently computed constraint residuals.
#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: ConeStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Largest absolute equality-row violation.
    pub primal_residual: f64,
    /// Largest violation across nonnegativity and cone blocks.
    pub cone_violation: f64,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Create a variable and return its index.
    pub fn add_var(&mut self, name: &str) -> usize {
        self.var_names.push(name.to_string());
        self.var_names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_name(&self, idx: usize) -> &str {
        &self.var_names[idx]
    }

    /// Add coeff * x_idx to the objective.
    pub fn add_objective(&mut self, idx: usize, coeff: f64) {
        self.objective.push((idx, coeff));
    }

    /// Add the equality row sum coeff_i x_i = rhs.
    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.eq_rows.push((terms, rhs));
    }

    /// Constrain x_idx >= 0.
    pub fn mark_nonneg(&mut self, idx: usize) {
        self.nonneg_vars.push(idx);
    }

    /// Add ||(x_1..x_n)|| <= t with indices [t, x_1 .. x_n].
    pub fn add_soc(&mut self, indices: Vec<usize>) {
        self.soc_blocks.push(indices);
    }

    /// Add ||(x_1..x_n)||^2 <= 2ab with indices [a, b, x_1 .. x_n].
    pub fn add_rsoc(&mut self, indices: Vec<usize>) {
        self.rsoc_blocks.push(indices);
    }

    /// Check every structural invariant, collecting all violations.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let n = self.num_vars();
        let mut errors = Vec::new();
        let name = |i: usize| -> String {
            if i < n {
                self.var_names[i].clone()
            } else {
                format!("#{i}")
            }
        };
        for (i, c) in &self.objective {
            if *i >= n {
                errors.push(format!("objective index {i} out of range"));
            } else if !c.is_finite() {
                errors.push(format!("objective coefficient of {} not finite", name(*i)));
            }
        }
        for (r, (terms, rhs)) in self.eq_rows.iter().enumerate() {
            if !rhs.is_finite() {
                errors.push(format!("equality row {r} has non-finite rhs"));
            }
            for (i, c) in terms {
                if *i >= n {
                    errors.push(format!("equality row {r}: index {i} out of range"));
                } else if !c.is_finite() {
                    errors.push(format!("equality row {r}: coefficient of {} not finite", name(*i)));
                }
            }
        }
        for i in &self.nonneg_vars {
            if *i >= n {
                errors.push(format!("nonneg index {i} out of range"));
            }
        }
        // vector entries of a cone block may not reappear in another block;
        // sharing scalar heads (t, a, b) between blocks is allowed
        let mut vector_use = vec![false; n];
        let mut check_block = |kind: &str, blk: usize, idx: &[usize], scalars: usize| {
            if idx.len() <= scalars {
                errors.push(format!("{kind} block {blk} has no vector part"));
            }
            let mut seen = std::collections::HashSet::new();
            for (pos, i) in idx.iter().enumerate() {
                if *i >= n {
                    errors.push(format!("{kind} block {blk}: index {i} out of range"));
                    continue;
                }
                if !seen.insert(*i) {
                    errors.push(format!("{kind} block {blk}: variable {} repeated", name(*i)));
                }
                if pos >= scalars {
                    if vector_use[*i] {
                        errors.push(format!(
                            "{kind} block {blk}: vector variable {} already used in another cone block",
                            name(*i)
                        ));
                    }
                    vector_use[*i] = true;
                }
            }
        };
        for (b, idx) in self.soc_blocks.iter().enumerate() {
            check_block("soc", b, idx, 1);
        }
        for (b, idx) in self.rsoc_blocks.iter().enumerate() {
            check_block("rsoc", b, idx, 2);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Residuals of a candidate point: (max equality violation, max cone
    /// violation). Computed from the raw program data only. Each violation is
    /// relative to the magnitude of the terms in its constraint, so badly
    /// scaled rows are judged fairly.
    pub fn residuals(&self, x: &[f64]) -> (f64, f64) {
        let debug = std::env::var("CONE_DEBUG").is_ok();
        let mut eq = 0.0f64;
        for (row, (terms, rhs)) in self.eq_rows.iter().enumerate() {
            let lhs: f64 = terms.iter().map(|(i, c)| c * x[*i]).sum();
            let scale = terms
                .iter()
                .map(|(i, c)| (c * x[*i]).abs())
                .fold(rhs.abs().max(1.0), f64::max);
            let v = (lhs - rhs).abs() / scale;
            if debug && v > eq {
                eprintln!("residuals: eq row {row} rel {v:.3e}");
            }
            eq = eq.max(v);
        }
        let mut cone = 0.0f64;
        for &i in &self.nonneg_vars {
            let v = -x[i] / x[i].abs().max(1.0);
            if debug && v > cone {
                eprintln!("residuals: nonneg {} rel {v:.3e}", self.var_names[i]);
            }
            cone = cone.max(v);
        }
        for idx in &self.soc_blocks {
            let t = x[idx[0]];
            let norm = idx[1..].iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
            let v = (norm - t) / norm.max(t.abs()).max(1.0);
            if debug && v > cone {
                eprintln!("residuals: soc head {} rel {v:.3e}", self.var_names[idx[0]]);
            }
            cone = cone.max(v);
        }
        for idx in &self.rsoc_blocks {
            let (a, b) = (x[idx[0]], x[idx[1]]);
            let norm_sqr: f64 = idx[2..].iter().map(|&i| x[i] * x[i]).sum();
            // violation of the equivalent standard cone [a+b, a-b, sqrt2 x]
            let lhs = ((a - b).powi(2) + 2.0 * norm_sqr).sqrt();
            let v = (lhs - (a + b)) / lhs.max((a + b).abs()).max(1.0);
            if debug && v > cone {
                eprintln!("residuals: rsoc head {} rel {v:.3e}", self.var_names[idx[0]]);
            }
            cone = cone.max(v);
        }
        (eq.max(0.0), cone.max(0.0))
    }

    /// Objective value at a candidate point.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|(i, c)| c * x[*i]).sum()
    }

    /// Plain-text dump, one constraint per line, for external cross-checking.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let term = |i: usize, c: f64| format!("{c:+.6e}*{}", self.var_names[i]);
        let obj: Vec<String> = self.objective.iter().map(|&(i, c)| term(i, c)).collect();
        let _ = writeln!(out, "minimize {}", obj.join(" "));
        for (terms, rhs) in &self.eq_rows {
            let row: Vec<String> = terms.iter().map(|&(i, c)| term(i, c)).collect();
            let _ = writeln!(out, "eq: {} = {rhs:.6e}", row.join(" "));
        }
        for &i in &self.nonneg_vars {
            let _ = writeln!(out, "nonneg: {}", self.var_names[i]);
        }
        for idx in &self.soc_blocks {
            let xs: Vec<&str> = idx[1..].iter().map(|&i| self.var_names[i].as_str()).collect();
            let _ = writeln!(out, "soc: norm({}) <= {}", xs.join(", "), self.var_names[idx[0]]);
        }
        for idx in &self.rsoc_blocks {
            let xs: Vec<&str> = idx[2..].iter().map(|&i| self.var_names[i].as_str()).collect();
            let _ = writeln!(
                out,
                "rsoc: normsq({}) <= 2*{}*{}",
                xs.join(", "),
                self.var_names[idx[0]],
                self.var_names[idx[1]]
            );
        }
        out
    }

    /// Solve to the given tolerance. Status Optimal is only reported when the
    /// independent residual check passes at 10 * tol.
    pub fn solve(&self, tol: f64, max_iter: u32) -> ConeSolution {
        let n = self.num_vars();
        if n == 0 {
            return ConeSolution {
                status: ConeStatus::Optimal,
                x: Vec::new(),
                objective_value: 0.0,
                primal_residual: 0.0,
                cone_violation: 0.0,
            };
        }

        // assemble A x + s = b with s in (Zero, Nonneg, SOC...) cone order
        let mut rows: Vec<usize> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0usize;
        let push = |rows: &mut Vec<usize>, cols: &mut Vec<usize>, vals: &mut Vec<f64>, r: usize, c: usize, v: f64| {
            if v != 0.0 {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        };

        for (terms, rhs) in &self.eq_rows {
            for &(i, c) in terms {
                push(&mut rows, &mut cols, &mut vals, row, i, c);
            }
            b.push(*rhs);
            row += 1;
        }
        if !self.eq_rows.is_empty() {
            cones.push(ZeroConeT(self.eq_rows.len()));
        }
        for &i in &self.nonneg_vars {
            push(&mut rows, &mut cols, &mut vals, row, i, -1.0);
            b.push(0.0);
            row += 1;
        }
        if !self.nonneg_vars.is_empty() {
            cones.push(NonnegativeConeT(self.nonneg_vars.len()));
        }
        for idx in &self.soc_blocks {
            for &i in idx {
                push(&mut rows, &mut cols, &mut vals, row, i, -1.0);
                b.push(0.0);
                row += 1;
            }
            cones.push(SecondOrderConeT(idx.len()));
        }
        for idx in &self.rsoc_blocks {
            // rotated cone as standard SOC rows [a+b, a-b, sqrt2 x]
            push(&mut rows, &mut cols, &mut vals, row, idx[0], -1.0);
            push(&mut rows, &mut cols, &mut vals, row, idx[1], -1.0);
            b.push(0.0);
            row += 1;
            push(&mut rows, &mut cols, &mut vals, row, idx[0], -1.0);
            push(&mut rows, &mut cols, &mut vals, row, idx[1], 1.0);
            b.push(0.0);
            row += 1;
            for &i in &idx[2..] {
                push(&mut rows, &mut cols, &mut vals, row, i, -std::f64::consts::SQRT_2);
                b.push(0.0);
                row += 1;
            }
            cones.push(SecondOrderConeT(idx.len()));
        }

        let a = CscMatrix::new_from_triplets(row, n, rows, cols, vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(i, c) in &self.objective {
            q[i] += c;
        }
        let settings = DefaultSettings {
            verbose: false,
            max_iter,
            tol_gap_abs: tol,
            tol_gap_rel: tol,
            tol_feas: tol,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings);
        solver.solve();

        if std::env::var("CONE_DEBUG").is_ok() {
            eprintln!(
                "clarabel status {:?} iters {} r_prim {:.3e} r_dual {:.3e}",
                solver.solution.status,
                solver.solution.iterations,
                solver.solution.r_prim,
                solver.solution.r_dual
            );
        }
        let x = solver.solution.x.clone();
        let (primal_residual, cone_violation) = self.residuals(&x);
        let gap = (solver.solution.obj_val - solver.solution.obj_val_dual).abs()
            / solver.solution.obj_val.abs().max(1.0);
        // acceptance requires the independent checks, whatever the backend says
        // equilibration means the backend tolerances do not translate exactly to
        // the unscaled problem, so allow a small floor above 10 tol
        let res_tol = (100.0 * tol).max(1e-5);
        let accept = primal_residual <= res_tol && cone_violation <= res_tol;
        let status = match solver.solution.status {
            SolverStatus::Solved if accept => ConeStatus::Optimal,
            SolverStatus::Solved => ConeStatus::NumericalError,
            // reduced-accuracy terminations still count when the independent
            // residual and gap checks pass
            SolverStatus::AlmostSolved | SolverStatus::InsufficientProgress
                if accept && gap <= (10.0 * tol).max(1e-6) =>
            {
                ConeStatus::Optimal
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                ConeStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                ConeStatus::Unbounded
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => ConeStatus::MaxIter,
            _ => ConeStatus::NumericalError,
        };
        ConeSolution {
            status,
            objective_value: self.objective_value(&x),
            x,
            primal_residual,
            cone_violation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-8;

    #[test]
    fn empty_program_is_ok() {
        let p = ConeProgram::new();
        assert!(p.validate().is_ok());
        let s = p.solve(TOL, 200);
        assert_eq!(s.status, ConeStatus::Optimal);
        assert_eq!(s.objective_value, 0.0);
    }

    #[test]
    fn one_dim_lp() {
        // minimize x s.t. x >= 3, via shift x = 3 + s, s >= 0
        let mut p = ConeProgram::new();
        let x = p.add_var("x");
        let s = p.add_var("s");
        p.add_objective(x, 1.0);
        p.add_eq(vec![(x, 1.0), (s, -1.0)], 3.0);
        p.mark_nonneg(s);
        assert!(p.validate().is_ok());
        let sol = p.solve(TOL, 200);
        assert_eq!(sol.status, ConeStatus::Optimal);
        assert!((sol.x[x] - 3.0).abs() < 1e-6);
        assert!(sol.primal_residual <= 10.0 * TOL);
        assert!(sol.cone_violation <= 10.0 * TOL);
    }

    #[test]
    fn soc_norm_min() {
        // minimize t s.t. ||(1,1)|| <= t
        let mut p = ConeProgram::new();
        let t = p.add_var("t");
        let x1 = p.add_var("x1");
        let x2 = p.add_var("x2");
        p.add_objective(t, 1.0);
        p.add_eq(vec![(x1, 1.0)], 1.0);
        p.add_eq(vec![(x2, 1.0)], 1.0);
        p.add_soc(vec![t, x1, x2]);
        let sol = p.solve(TOL, 200);
        assert_eq!(sol.status, ConeStatus::Optimal);
        assert!((sol.x[t] - std::f64::consts::SQRT_2).abs() < 1e-6);
        assert!(sol.cone_violation <= 10.0 * TOL);
    }

    #[test]
    fn rotated_cone_equality_case() {
        // minimize a s.t. x^2 <= 2 a b, x = 2, b = 1 -> a = 2
        let mut p = ConeProgram::new();
        let a = p.add_var("a");
        let b = p.add_var("b");
        let x = p.add_var("x");
        p.add_objective(a, 1.0);
        p.add_eq(vec![(x, 1.0)], 2.0);
        p.add_eq(vec![(b, 1.0)], 1.0);
        p.add_rsoc(vec![a, b, x]);
        let sol = p.solve(TOL, 200);
        assert_eq!(sol.status, ConeStatus::Optimal);
        assert!((sol.x[a] - 2.0).abs() < 1e-6, "a = {}", sol.x[a]);
    }

    #[test]
    fn validation_reports_bad_indices() {
        let mut p = ConeProgram::new();
        let t = p.add_var("t");
        p.add_soc(vec![t, 7]);
        let errs = p.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.contains("out of range")), "{errs:?}");

        let mut p = ConeProgram::new();
        let t = p.add_var("t");
        p.add_soc(vec![t]);
        assert!(p.validate().is_err());

        // sharing a scalar head between two rotated blocks is allowed
        let mut p = ConeProgram::new();
        let a = p.add_var("a");
        let b1 = p.add_var("b1");
        let b2 = p.add_var("b2");
        let x1 = p.add_var("x1");
        let x2 = p.add_var("x2");
        p.add_rsoc(vec![a, b1, x1]);
        p.add_rsoc(vec![a, b2, x2]);
        assert!(p.validate().is_ok());

        // reusing a vector entry is not
        let mut p = ConeProgram::new();
        let t1 = p.add_var("t1");
        let t2 = p.add_var("t2");
        let x = p.add_var("x");
        p.add_soc(vec![t1, x]);
        p.add_soc(vec![t2, x]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn infeasible_and_unbounded_detected() {
        // x >= 0 and x = -1
        let mut p = ConeProgram::new();
        let x = p.add_var("x");
        p.mark_nonneg(x);
        p.add_eq(vec![(x, 1.0)], -1.0);
        assert_eq!(p.solve(TOL, 200).status, ConeStatus::Infeasible);

        // minimize x with x <= 0 only
        let mut p = ConeProgram::new();
        let x = p.add_var("x");
        let s = p.add_var("s");
        p.add_objective(x, 1.0);
        p.add_eq(vec![(x, 1.0), (s, 1.0)], 0.0);
        p.mark_nonneg(s);
        assert_eq!(p.solve(TOL, 200).status, ConeStatus::Unbounded);
    }

    #[test]
    fn deterministic_and_scale_invariant_argmin() {
        let build = |scale: f64| {
            let mut p = ConeProgram::new();
            let t = p.add_var("t");
            let x1 = p.add_var("x1");
            let x2 = p.add_var("x2");
            p.add_objective(t, scale);
            p.add_eq(vec![(x1, 1.0)], 3.0);
            p.add_eq(vec![(x2, 1.0)], -4.0);
            p.add_soc(vec![t, x1, x2]);
            p
        };
        let s1 = build(1.0).solve(TOL, 200);
        let s2 = build(1.0).solve(TOL, 200);
        assert_eq!(s1.status, s2.status);
        assert!((s1.objective_value - s2.objective_value).abs() < 1e-9);
        let s3 = build(7.5).solve(TOL, 200);
        assert!((s3.x[0] - s1.x[0]).abs() < 1e-6);
        assert!((s1.x[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn dump_mentions_every_constraint() {
        let mut p = ConeProgram::new();
        let a = p.add_var("a");
        let b = p.add_var("b");
        let x = p.add_var("x");
        p.add_objective(a, 1.0);
        p.add_eq(vec![(x, 1.0)], 2.0);
        p.mark_nonneg(b);
        p.add_rsoc(vec![a, b, x]);
        let text = p.dump();
        assert!(text.contains("minimize"));
        assert!(text.contains("eq: "));
        assert!(text.contains("nonneg: b"));
        assert!(text.contains("rsoc: normsq(x) <= 2*a*b"));
    }
}
