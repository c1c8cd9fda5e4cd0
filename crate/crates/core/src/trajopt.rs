//! Box-constrained nonlinear least squares shared by the estimator and the
//! controller.
//!
//! Both receding-horizon problems are transcribed by single shooting: the
//! decision vector holds only the free quantities (initial state and wind, or
//! the input sequence) and every intermediate state comes from rolling the
//! discrete dynamics forward. Each problem is a stack of weighted residuals
//! `r(z)` with cost `‖r‖²`, minimised by a projected Levenberg–Marquardt
//! iteration with Armijo backtracking.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{BlimpError, Result};

/// Weight applied to state-box hinge penalties.
pub const PENALTY_WEIGHT: f64 = 1e3;

/// Named segments of a flat decision vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLayout {
    segments: Vec<(&'static str, Range<usize>)>,
}

impl DecisionLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: &'static str, len: usize) -> Self {
        let start = self.len();
        self.segments.push((name, start..start + len));
        self
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |(_, r)| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.segments.iter().find(|(n, _)| *n == name).map(|(_, r)| r.clone())
    }

    pub fn segments(&self) -> impl Iterator<Item = (&'static str, Range<usize>)> + '_ {
        self.segments.iter().cloned()
    }
}

/// `√P·z` for a diagonal weight `P`. Zero-weight rows are dropped.
pub fn weighted_residual(z: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(z.len());
    push_weighted(&mut out, z, weights)?;
    Ok(out)
}

/// Appends `√P·z` to `out`, skipping zero-weight rows.
pub fn push_weighted(out: &mut Vec<f64>, z: &[f64], weights: &[f64]) -> Result<()> {
    assert_eq!(z.len(), weights.len(), "residual and weight lengths differ");
    for (&zi, &wi) in z.iter().zip(weights) {
        if wi < 0.0 || wi.is_nan() {
            return Err(BlimpError::NegativeWeight(wi));
        }
        if wi > 0.0 {
            out.push(wi.sqrt() * zi);
        }
    }
    Ok(())
}

/// Residual `√w·max(0, value − upper, lower − value)` of a soft box.
#[inline]
pub fn hinge(value: f64, lower: f64, upper: f64, weight: f64) -> f64 {
    let excess = if value > upper {
        value - upper
    } else if value < lower {
        value - lower
    } else {
        0.0
    };
    weight.sqrt() * excess
}

/// A residual stack `r(z)`.
pub trait Residuals {
    fn residuals(&self, z: &DVector<f64>) -> Result<DVector<f64>>;

    /// Jacobian at `z` given `r(z)`. The default is forward differences.
    fn jacobian(&self, z: &DVector<f64>, r: &DVector<f64>) -> Result<Jacobian> {
        forward_difference_jacobian(self, z, r)
    }
}

impl<F> Residuals for F
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    fn residuals(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self(z)
    }
}

/// Borrowing adapter so a problem can be solved without giving up ownership.
pub struct ByRef<'a, R: ?Sized>(pub &'a R);

impl<R: Residuals + ?Sized> Residuals for ByRef<'_, R> {
    fn residuals(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.0.residuals(z)
    }

    fn jacobian(&self, z: &DVector<f64>, r: &DVector<f64>) -> Result<Jacobian> {
        self.0.jacobian(z, r)
    }
}

#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    /// Columns whose perturbed residual was non-finite; zeroed in `matrix`.
    pub flagged: Vec<usize>,
}

/// Finite-difference step for coordinate value `x`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

pub fn forward_difference_jacobian<R: Residuals + ?Sized>(
    f: &R,
    z: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<Jacobian> {
    let mut matrix = DMatrix::zeros(r.len(), z.len());
    let mut flagged = Vec::new();
    let mut zp = z.clone();
    for j in 0..z.len() {
        let h = fd_step(z[j]);
        zp[j] = z[j] + h;
        match f.residuals(&zp) {
            Ok(rp) if rp.iter().all(|v| v.is_finite()) => {
                matrix.set_column(j, &((rp - r) / h));
            }
            _ => flagged.push(j),
        }
        zp[j] = z[j];
    }
    Ok(Jacobian { matrix, flagged })
}

pub fn central_difference_jacobian<R: Residuals + ?Sized>(
    f: &R,
    z: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let m = f.residuals(z)?.len();
    let mut matrix = DMatrix::zeros(m, z.len());
    let mut zp = z.clone();
    for j in 0..z.len() {
        let h = fd_step(z[j]);
        zp[j] = z[j] + h;
        let plus = f.residuals(&zp)?;
        zp[j] = z[j] - h;
        let minus = f.residuals(&zp)?;
        zp[j] = z[j];
        matrix.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(matrix)
}

/// Residual function, bounds and initial guess.
pub struct ResidualProblem<R> {
    pub residuals: R,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub initial: DVector<f64>,
}

impl<R: Residuals> ResidualProblem<R> {
    pub fn new(residuals: R, lower: DVector<f64>, upper: DVector<f64>, initial: DVector<f64>) -> Result<Self> {
        let n = initial.len();
        if lower.len() != n || upper.len() != n {
            return Err(BlimpError::Solver("bound lengths do not match the decision vector".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(BlimpError::Solver("lower bound above upper bound".into()));
        }
        Ok(Self { residuals, lower, upper, initial })
    }

    pub fn unbounded(residuals: R, initial: DVector<f64>) -> Self {
        let n = initial.len();
        Self {
            residuals,
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            initial,
        }
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        z.zip_zip_map(&self.lower, &self.upper, |v, l, u| v.clamp(l, u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub initial_damping: f64,
    pub max_backtracks: usize,
    /// Keep per-iteration records in the report.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-10, initial_damping: 1e-3, max_backtracks: 8, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected gradient vanished.
    Stationary,
    StepTolerance,
    CostTolerance,
    MaxIterations,
    /// No descent step found even with heavy damping.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// ‖z − Π(z − ∇cost)‖∞ at the solution.
    pub optimality: f64,
    pub flagged_columns: usize,
    pub trace: Vec<IterationRecord>,
}

const MAX_DAMPING: f64 = 1e12;

/// Projected damped Gauss–Newton.
///
/// Each iteration solves `(JᵀJ + λI)·Δ = −Jᵀr`, projects `z + Δ` onto the
/// box and backtracks until the Armijo condition holds on the true cost.
/// `λ` shrinks by 3 after an accepted step and grows by 10 after a failure.
pub fn solve<R: Residuals>(problem: &ResidualProblem<R>, options: &SolverOptions) -> Result<SolveReport> {
    let mut z = problem.project(&problem.initial);
    let mut r = problem.residuals.residuals(&z)?;
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(BlimpError::NonFinite("cost at initial guess"));
    }
    let n = z.len();
    let mut damping = options.initial_damping;
    let mut trace = Vec::new();
    let mut flagged_columns = 0;
    let termination;
    let mut iterations = 0;
    let mut optimality;

    loop {
        let jac = problem.residuals.jacobian(&z, &r)?;
        flagged_columns = flagged_columns.max(jac.flagged.len());
        let j = jac.matrix;
        let gradient = j.tr_mul(&r) * 2.0;
        optimality = projected_gradient_norm(problem, &z, &gradient);
        if optimality <= options.tol {
            termination = Termination::Stationary;
            break;
        }
        if iterations >= options.max_iters {
            termination = Termination::MaxIterations;
            break;
        }
        iterations += 1;

        // Variables pinned at a bound by the gradient are held fixed; the
        // damped normal equations are solved over the remaining ones.
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !((z[i] <= problem.lower[i] && gradient[i] > 0.0)
                    || (z[i] >= problem.upper[i] && gradient[i] < 0.0))
            })
            .collect();
        let j_free = j.select_columns(&free);
        let jtj = j_free.tr_mul(&j_free);
        let neg_half_grad = -gradient.select_rows(&free) * 0.5;
        let mut accepted = None;
        while damping <= MAX_DAMPING {
            let mut a = jtj.clone();
            for i in 0..free.len() {
                a[(i, i)] += damping;
            }
            let Some(chol) = a.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let reduced = chol.solve(&neg_half_grad);
            let mut step = DVector::zeros(n);
            for (k, &i) in free.iter().enumerate() {
                step[i] = reduced[k];
            }
            let direction = problem.project(&(&z + &step)) - &z;
            let slope = gradient.dot(&direction);
            if slope >= 0.0 || direction.amax() == 0.0 {
                damping *= 10.0;
                continue;
            }
            let mut t = 1.0;
            for _ in 0..=options.max_backtracks {
                let candidate = &z + &direction * t;
                if let Ok(rc) = problem.residuals.residuals(&candidate) {
                    let c = rc.norm_squared();
                    if c.is_finite() && c <= cost + 1e-4 * t * slope {
                        accepted = Some((candidate, rc, c, direction.norm() * t));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                damping = (damping / 3.0).max(1e-12);
                break;
            }
            damping *= 10.0;
        }

        let Some((z_new, r_new, cost_new, step_norm)) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        let decrease = cost - cost_new;
        z = z_new;
        r = r_new;
        cost = cost_new;
        if options.trace {
            trace.push(IterationRecord { iteration: iterations, cost, damping, step_norm });
        }
        if step_norm < options.tol * (1.0 + z.norm()) {
            termination = Termination::StepTolerance;
            break;
        }
        if decrease < options.tol * (1.0 + cost) {
            termination = Termination::CostTolerance;
            break;
        }
    }

    if termination != Termination::Stationary {
        let jac = problem.residuals.jacobian(&z, &r)?;
        optimality = projected_gradient_norm(problem, &z, &(jac.matrix.tr_mul(&r) * 2.0));
    }
    let converged = !matches!(termination, Termination::MaxIterations | Termination::Stalled)
        || optimality <= options.tol;
    Ok(SolveReport {
        solution: z,
        cost,
        iterations,
        converged,
        termination,
        optimality,
        flagged_columns,
        trace,
    })
}

fn projected_gradient_norm<R: Residuals>(
    problem: &ResidualProblem<R>,
    z: &DVector<f64>,
    gradient: &DVector<f64>,
) -> f64 {
    (z - problem.project(&(z - gradient))).amax()
}
