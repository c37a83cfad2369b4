//! ADMM for `‖y − O f‖² + λ ‖𝒟 f‖₁`, with λ_max, λ grids and a KKT
//! optimality certificate.
//!
//! The splitting uses `α = 𝒟 f` and a scaled dual `u`. The loss-halved form
//! of the updates is run with a halved threshold, which minimizes the
//! objective exactly as stated above:
//!
//! ```text
//! f ← (OᵀO + ρ𝒟ᵀ𝒟)⁻¹ (Oᵀy + ρ𝒟ᵀ(α + u))
//! α ← S_{λ/(2ρ)}(𝒟 f − u)
//! u ← u + α − 𝒟 f
//! ```
//!
//! The normal matrix is factored once per ρ and reused across iterations and
//! across warm-started λ values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MbsError, Result};
use crate::factor::CholeskyFactor;
use crate::sparse::SparseBandedMatrix;

/// Largest mesh size for which [`lambda_max`] computes a null-space basis
/// numerically when the problem does not carry one.
const DENSE_NULL_SPACE_LIMIT: usize = 1500;

/// Iterations between objective evaluations when tracking the best iterate.
const OBJECTIVE_EVERY: usize = 25;

/// Relative singular value below which a direction counts as null.
const NULL_TOL: f64 = 1e-10;

/// Largest `M · |Z|²` for which the free subgradients are found by a dense
/// SVD rather than normal equations.
const DENSE_KKT_LIMIT: usize = 200_000_000;

/// Relative size below which an entry of `𝒟f` counts as zero when guessing
/// a sign pattern for the polish.
const PATTERN_CUT: f64 = 1e-4;
/// Largest mesh for the dense sign-pattern polish.
const POLISH_LIMIT: usize = 400;

/// Iterations between convergence checks.
const CHECK_EVERY: usize = 5;

const ADAPT_EVERY: usize = 10;
const ADAPT_RATIO: f64 = 10.0;
const ADAPT_FACTOR: f64 = 2.0;

/// Soft-thresholding `sign(z)·max(|z| − t, 0)`.
pub fn soft_threshold(z: &[f64], t: f64) -> Result<Vec<f64>> {
    if t.is_nan() || t < 0.0 {
        return invalid(format!("threshold must be nonnegative, got {t}"));
    }
    Ok(z.iter().map(|&v| shrink(v, t)).collect())
}

#[inline]
fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// A penalized regression instance.
#[derive(Debug, Clone)]
pub struct MbsProblem {
    y: Vec<f64>,
    interp: SparseBandedMatrix,
    penalty: SparseBandedMatrix,
    lambda: f64,
    null_space: Option<DMatrix<f64>>,
}

impl MbsProblem {
    pub fn new(
        y: Vec<f64>,
        interp: SparseBandedMatrix,
        penalty: SparseBandedMatrix,
        lambda: f64,
    ) -> Result<Self> {
        if y.is_empty() {
            return invalid("the response is empty");
        }
        if penalty.nrows() == 0 {
            return invalid("the penalty operator has no rows");
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return invalid(format!("response value {v} is not finite"));
        }
        if interp.nrows() != y.len() {
            return Err(MbsError::DimensionMismatch(format!(
                "{} responses but the interpolation matrix has {} rows",
                y.len(),
                interp.nrows()
            )));
        }
        if interp.ncols() != penalty.ncols() {
            return Err(MbsError::DimensionMismatch(format!(
                "interpolation matrix has {} columns, penalty operator has {}",
                interp.ncols(),
                penalty.ncols()
            )));
        }
        check_lambda(lambda)?;
        Ok(Self {
            y,
            interp,
            penalty,
            lambda,
            null_space: None,
        })
    }

    /// Attaches a basis (columns) of the null space of the penalty operator,
    /// used by [`lambda_max`]. See [`crate::null_space_basis`].
    pub fn with_null_space(mut self, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != self.mesh_size() || basis.ncols() == 0 {
            return Err(MbsError::DimensionMismatch(format!(
                "null-space basis is {}x{}, mesh has {} points",
                basis.nrows(),
                basis.ncols(),
                self.mesh_size()
            )));
        }
        self.null_space = Some(basis);
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn interp(&self) -> &SparseBandedMatrix {
        &self.interp
    }

    pub fn penalty(&self) -> &SparseBandedMatrix {
        &self.penalty
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of mesh coefficients `M`.
    pub fn mesh_size(&self) -> usize {
        self.interp.ncols()
    }

    /// `‖y − O f‖² + λ ‖𝒟 f‖₁` at the problem's λ.
    pub fn objective(&self, f: &[f64]) -> f64 {
        self.objective_at(f, self.lambda)
    }

    fn objective_at(&self, f: &[f64], lambda: f64) -> f64 {
        let fit = self.interp.mul_vec(f);
        let loss: f64 = self.y.iter().zip(&fit).map(|(y, v)| (y - v) * (y - v)).sum();
        let pen: f64 = self.penalty.mul_vec(f).iter().map(|v| v.abs()).sum();
        loss + lambda * pen
    }

    fn check_coefficients(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.mesh_size() {
            return Err(MbsError::DimensionMismatch(format!(
                "{} coefficients for a mesh of {} points",
                f.len(),
                self.mesh_size()
            )));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return invalid(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    Ok(())
}

/// Augmented Lagrangian parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rho {
    /// `ρ = λ`, or 1 when `λ = 0`.
    Auto,
    Fixed(f64),
}

impl Rho {
    fn resolve(self, lambda: f64) -> Result<f64> {
        match self {
            Rho::Auto if lambda > 0.0 => Ok(lambda),
            Rho::Auto => Ok(1.0),
            Rho::Fixed(r) if r.is_finite() && r > 0.0 => Ok(r),
            Rho::Fixed(r) => invalid(format!("rho must be positive, got {r}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmOptions {
    pub rho: Rho,
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub record_history: bool,
    /// Refine the ADMM output by solving for its sign pattern exactly.
    pub polish: bool,
    /// Rebalance ρ from the scaled primal and dual residuals.
    pub adapt_rho: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: Rho::Auto,
            max_iter: 5000,
            tol_abs: 1e-8,
            tol_rel: 1e-6,
            record_history: false,
            polish: true,
            adapt_rho: true,
        }
    }
}

impl AdmmOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return invalid("max_iter must be at least 1");
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return invalid("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub f_mesh: Vec<f64>,
    pub fitted: Vec<f64>,
    pub lambda: f64,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// Residuals of one ADMM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResiduals {
    pub primal: f64,
    pub dual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
}

impl StepResiduals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }
}

/// ADMM state for one problem: cached Gram matrices, the current
/// factorization and the iterates. Reusing one `Admm` across a decreasing λ
/// sequence warm-starts each solve from the previous one.
#[derive(Debug, Clone)]
pub struct Admm<'a> {
    prob: &'a MbsProblem,
    oty: Vec<f64>,
    gram_o: SparseBandedMatrix,
    gram_d: SparseBandedMatrix,
    half_band: Option<usize>,
    factor: Option<(f64, CholeskyFactor)>,
    lambda: f64,
    f: Vec<f64>,
    alpha: Vec<f64>,
    u: Vec<f64>,
    df: Vec<f64>,
    change: Vec<f64>,
    primal: f64,
    rhs: Vec<f64>,
    work: Vec<f64>,
}

impl<'a> Admm<'a> {
    pub fn new(prob: &'a MbsProblem) -> Self {
        let m = prob.mesh_size();
        let q = prob.penalty.nrows();
        let half_band = match (prob.interp.bandwidth(), prob.penalty.bandwidth()) {
            (Some(bo), Some(bd)) => Some(bo.max(bd).saturating_sub(1)),
            _ => None,
        };
        Self {
            prob,
            oty: prob.interp.tr_mul_vec(&prob.y),
            gram_o: prob.interp.gram(),
            gram_d: prob.penalty.gram(),
            half_band,
            factor: None,
            lambda: prob.lambda,
            f: vec![0.0; m],
            alpha: vec![0.0; q],
            u: vec![0.0; q],
            df: vec![0.0; q],
            change: vec![0.0; q],
            primal: 0.0,
            rhs: vec![0.0; m],
            work: vec![0.0; m],
        }
    }

    pub fn rho(&self) -> Option<f64> {
        self.factor.as_ref().map(|(r, _)| *r)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.f
    }

    /// Sets λ and ρ for the following iterations. Changing ρ refactors the
    /// normal matrix and rescales the dual.
    pub fn configure(&mut self, lambda: f64, rho: f64) -> Result<()> {
        check_lambda(lambda)?;
        if !(rho.is_finite() && rho > 0.0) {
            return invalid(format!("rho must be positive, got {rho}"));
        }
        self.lambda = lambda;
        match &self.factor {
            Some((old, _)) if *old == rho => return Ok(()),
            Some((old, _)) => {
                let s = old / rho;
                self.u.iter_mut().for_each(|v| *v *= s);
            }
            None => {}
        }
        let normal = self.gram_o.add_scaled(rho, &self.gram_d)?;
        let factor = match self.half_band {
            Some(b) => CholeskyFactor::banded(&normal, b)?,
            None => CholeskyFactor::envelope(&normal)?,
        };
        self.factor = Some((rho, factor));
        Ok(())
    }

    /// One ADMM iteration. Requires a prior [`Admm::configure`].
    pub fn step(&mut self, tol_abs: f64, tol_rel: f64) -> StepResiduals {
        self.iterate();
        self.residuals(tol_abs, tol_rel)
    }

    fn iterate(&mut self) {
        let (rho, factor) = self.factor.as_ref().expect("configure before stepping");
        let rho = *rho;
        let d = &self.prob.penalty;
        // f-update
        for ((w, a), u) in self.df.iter_mut().zip(&self.alpha).zip(&self.u) {
            *w = a + u;
        }
        d.tr_mul_vec_into(&self.df, &mut self.rhs);
        for (r, o) in self.rhs.iter_mut().zip(&self.oty) {
            *r = o + rho * *r;
        }
        factor.solve_in_place(&mut self.rhs);
        std::mem::swap(&mut self.f, &mut self.rhs);
        d.mul_vec_into(&self.f, &mut self.df);
        // α- and u-updates
        let t = self.lambda / (2.0 * rho);
        let mut primal = 0.0;
        for i in 0..self.alpha.len() {
            let a_new = shrink(self.df[i] - self.u[i], t);
            self.change[i] = a_new - self.alpha[i];
            self.alpha[i] = a_new;
            let r = a_new - self.df[i];
            self.u[i] += r;
            primal += r * r;
        }
        self.primal = primal.sqrt();
    }

    /// Residuals and tolerances of the latest iteration.
    fn residuals(&mut self, tol_abs: f64, tol_rel: f64) -> StepResiduals {
        let rho = self.rho().expect("configure before stepping");
        let d = &self.prob.penalty;
        d.tr_mul_vec_into(&self.change, &mut self.work);
        let dual = rho * norm2(&self.work);
        d.tr_mul_vec_into(&self.u, &mut self.work);
        let dual_scale = rho * norm2(&self.work);
        let q = self.alpha.len() as f64;
        let eps_primal = q.sqrt() * tol_abs + tol_rel * norm2(&self.alpha).max(norm2(&self.df));
        let eps_dual = (self.f.len() as f64).sqrt() * tol_abs + tol_rel * dual_scale;
        StepResiduals {
            primal: self.primal,
            dual,
            eps_primal,
            eps_dual,
        }
    }

    /// Iterates to convergence at `lambda` from the current state.
    pub fn solve(&mut self, lambda: f64, opts: &AdmmOptions) -> Result<FitResult> {
        opts.validate()?;
        check_lambda(lambda)?;
        if lambda == 0.0 {
            if let Some(res) = self.least_squares(opts)? {
                return Ok(res);
            }
        }
        let rho = match (self.rho(), opts.adapt_rho) {
            (Some(r), true) if lambda > 0.0 => r,
            _ if lambda == 0.0 => 1.0,
            _ => opts.rho.resolve(lambda)?,
        };
        self.configure(lambda, rho)?;
        let mut history = Vec::new();
        let mut best = (f64::INFINITY, self.f.clone());
        let mut last = None;
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..opts.max_iter {
            self.iterate();
            iterations += 1;
            let checkpoint = (it + 1) % CHECK_EVERY == 0 || it + 1 == opts.max_iter;
            if !(checkpoint || opts.record_history) {
                continue;
            }
            let res = self.residuals(opts.tol_abs, opts.tol_rel);
            last = Some(res);
            if res.converged() {
                converged = true;
                break;
            }
            if opts.adapt_rho && (it + 1) % ADAPT_EVERY == 0 {
                let p = res.primal / res.eps_primal;
                let d = res.dual / res.eps_dual;
                let rho = self.rho().expect("configured");
                if p > ADAPT_RATIO * d {
                    self.configure(lambda, rho * ADAPT_FACTOR)?;
                } else if d > ADAPT_RATIO * p {
                    self.configure(lambda, rho / ADAPT_FACTOR)?;
                }
            }
            if opts.record_history || (it + 1) % OBJECTIVE_EVERY == 0 {
                let obj = self.prob.objective_at(&self.f, lambda);
                if opts.record_history {
                    history.push(IterationRecord {
                        objective: obj,
                        primal_residual: res.primal,
                        dual_residual: res.dual,
                    });
                }
                if obj < best.0 {
                    best = (obj, self.f.clone());
                }
            }
        }
        let res = last.expect("at least one iteration");
        let mut f_mesh = self.f.clone();
        if !converged && self.prob.objective_at(&f_mesh, lambda) > best.0 {
            f_mesh = best.1;
        }
        if opts.polish && lambda > 0.0 {
            if let Some(p) = self.polish(&f_mesh, lambda) {
                f_mesh = p;
                converged = true;
            }
        }
        if opts.record_history && converged {
            history.push(IterationRecord {
                objective: self.prob.objective_at(&f_mesh, lambda),
                primal_residual: res.primal,
                dual_residual: res.dual,
            });
        }
        Ok(self.result(f_mesh, lambda, iterations, res.primal, res.dual, converged, history))
    }

    /// Solves the equality-constrained problem fixed by a sign pattern:
    /// zero rows stay zero, the rest contribute a linear term. Two patterns
    /// are tried, the one of `α` and the one of `𝒟f` with near-zero entries
    /// cut. Returns the candidate with the smallest KKT residual when it keeps
    /// its signs and improves on `f`. Dense, so limited to small meshes.
    fn polish(&self, f: &[f64], lambda: f64) -> Option<Vec<f64>> {
        if self.prob.mesh_size() > POLISH_LIMIT {
            return None;
        }
        let sign = |v: &f64| if *v == 0.0 { 0.0 } else { v.signum() };
        let from_alpha: Vec<f64> = self.alpha.iter().map(sign).collect();
        let df = self.prob.penalty.mul_vec(f);
        let cut = PATTERN_CUT * df.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let from_df: Vec<f64> = df.iter().map(|v| if v.abs() <= cut { 0.0 } else { v.signum() }).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let before = kkt_at(f, self.prob, lambda);
        let mut patterns = vec![from_alpha];
        if from_df != patterns[0] {
            patterns.push(from_df);
        }
        for signs in &patterns {
            if let Some(g) = self.polish_with(f, signs, lambda) {
                let after = kkt_at(&g, self.prob, lambda);
                if after < before && best.as_ref().is_none_or(|(b, _)| after < *b) {
                    best = Some((after, g));
                }
            }
        }
        best.map(|(_, g)| g)
    }

    fn polish_with(&self, f: &[f64], signs: &[f64], lambda: f64) -> Option<Vec<f64>> {
        let m = self.prob.mesh_size();
        let d = &self.prob.penalty;
        let zero: Vec<usize> = (0..signs.len()).filter(|&i| signs[i] == 0.0).collect();
        let mut base = d.tr_mul_vec(signs);
        for (b, o) in base.iter_mut().zip(&self.oty) {
            *b = 2.0 * o - lambda * *b;
        }
        // basis of null(𝒟_Z)
        let basis = if zero.is_empty() {
            DMatrix::identity(m, m)
        } else {
            let rows = zero.len().max(m);
            let mut dense = DMatrix::zeros(rows, m);
            for (r, &i) in zero.iter().enumerate() {
                let (cols, vals) = d.row(i);
                cols.iter().zip(vals).for_each(|(&j, &v)| dense[(r, j)] = v);
            }
            let svd = dense.svd(false, true);
            let v_t = svd.v_t.expect("requested");
            let top = svd.singular_values.max().max(f64::MIN_POSITIVE);
            let null_rows: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| svd.singular_values[i] <= NULL_TOL * top)
                .collect();
            if null_rows.is_empty() {
                return None;
            }
            v_t.select_rows(&null_rows).transpose()
        };
        // reduced normal equations (Nᵀ 2OᵀO N) c = Nᵀ base
        let mut on = DMatrix::zeros(self.prob.y.len(), basis.ncols());
        for c in 0..basis.ncols() {
            let col: Vec<f64> = basis.column(c).iter().copied().collect();
            on.column_mut(c).copy_from_slice(&self.prob.interp.mul_vec(&col));
        }
        let h = on.transpose() * &on * 2.0;
        let rhs = basis.transpose() * DVector::from_column_slice(&base);
        // mesh values the data cannot see make `h` singular; take the
        // solution closest to `f`
        let svd = h.svd(true, true);
        let top = svd.singular_values.max().max(f64::MIN_POSITIVE);
        let mut coef = svd.solve(&rhs, 1e-12 * top).ok()?;
        let v_t = svd.v_t.as_ref().expect("requested");
        let own = basis.transpose() * DVector::from_column_slice(f);
        for i in (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= 1e-12 * top) {
            let v = v_t.row(i).transpose();
            coef += &v * v.dot(&own);
        }
        let g: Vec<f64> = (&basis * coef).iter().copied().collect();
        let dg = d.mul_vec(&g);
        let consistent = dg
            .iter()
            .zip(signs)
            .all(|(v, s)| *s == 0.0 || v * s > 0.0);
        consistent.then_some(g)
    }

    /// Exact least squares when `OᵀO` is nonsingular.
    fn least_squares(&mut self, opts: &AdmmOptions) -> Result<Option<FitResult>> {
        let factor = match self.half_band {
            Some(b) => CholeskyFactor::banded(&self.gram_o, b),
            None => CholeskyFactor::envelope(&self.gram_o),
        };
        let Ok(factor) = factor else {
            return Ok(None);
        };
        let f = factor.solve(&self.oty);
        self.f.copy_from_slice(&f);
        self.prob.penalty.mul_vec_into(&self.f, &mut self.df);
        self.alpha.copy_from_slice(&self.df);
        self.u.iter_mut().for_each(|v| *v = 0.0);
        self.lambda = 0.0;
        let history = if opts.record_history {
            vec![IterationRecord {
                objective: self.prob.objective_at(&f, 0.0),
                primal_residual: 0.0,
                dual_residual: 0.0,
            }]
        } else {
            Vec::new()
        };
        Ok(Some(self.result(f, 0.0, 1, 0.0, 0.0, true, history)))
    }

    #[allow(clippy::too_many_arguments)]
    fn result(
        &self,
        f_mesh: Vec<f64>,
        lambda: f64,
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        converged: bool,
        history: Vec<IterationRecord>,
    ) -> FitResult {
        FitResult {
            fitted: self.prob.interp.mul_vec(&f_mesh),
            objective: self.prob.objective_at(&f_mesh, lambda),
            rho: self.rho().unwrap_or(1.0),
            f_mesh,
            lambda,
            iterations,
            primal_residual,
            dual_residual,
            converged,
            history,
        }
    }
}

/// Solves the problem at its own λ from a cold start.
pub fn admm_solve(prob: &MbsProblem, opts: &AdmmOptions) -> Result<FitResult> {
    Admm::new(prob).solve(prob.lambda, opts)
}

/// Solves along `lambdas` in the given order, warm-starting each solve from
/// the previous one.
pub fn solve_path(prob: &MbsProblem, lambdas: &[f64], opts: &AdmmOptions) -> Result<Vec<FitResult>> {
    let mut admm = Admm::new(prob);
    lambdas.iter().map(|&l| admm.solve(l, opts)).collect()
}

/// Stationarity violation `‖2Oᵀ(Of − y) + λ𝒟ᵀs‖_∞` under the best
/// subgradient `s` found: signs on the nonzero rows of `𝒟f`, and on the zero
/// rows a box-constrained least-squares choice.
pub fn kkt_residual(f: &[f64], prob: &MbsProblem) -> Result<f64> {
    prob.check_coefficients(f)?;
    Ok(kkt_at(f, prob, prob.lambda))
}

fn kkt_at(f: &[f64], prob: &MbsProblem, lambda: f64) -> f64 {
    let d = &prob.penalty;
    let fit = prob.interp.mul_vec(f);
    let resid: Vec<f64> = fit.iter().zip(&prob.y).map(|(v, y)| 2.0 * (v - y)).collect();
    let mut g = prob.interp.tr_mul_vec(&resid);
    if lambda == 0.0 {
        return norm_inf(&g);
    }
    let df = d.mul_vec(f);
    let tau = 1e-6 * norm_inf(&df).max(1.0);
    let mut signs = vec![0.0; df.len()];
    let mut free = Vec::new();
    for (i, &v) in df.iter().enumerate() {
        if v.abs() <= tau {
            free.push(i);
        } else {
            signs[i] = lambda * v.signum();
        }
    }
    let fixed = d.tr_mul_vec(&signs);
    g.iter_mut().zip(&fixed).for_each(|(a, b)| *a += b);
    if free.is_empty() {
        return norm_inf(&g);
    }
    let dz = d.select_rows(&free).scale(lambda);
    let s = box_least_squares(&dz, &g);
    let adj = dz.tr_mul_vec(&s);
    g.iter_mut().zip(&adj).for_each(|(a, b)| *a += b);
    norm_inf(&g)
}

/// Approximately minimizes `‖b + Cᵀs‖₂` over `s ∈ [−1, 1]^rows(C)`: a
/// ridge-regularized unconstrained solve, clipped, then coordinate descent.
fn box_least_squares(c: &SparseBandedMatrix, b: &[f64]) -> Vec<f64> {
    let ct = c.transpose();
    let (z, m) = c.shape();
    let mut s = if m.saturating_mul(z).saturating_mul(z) <= DENSE_KKT_LIMIT {
        let mut a = DMatrix::zeros(m, z);
        for (i, j, v) in c.triplets() {
            a[(j, i)] = v;
        }
        let rhs = -DVector::from_column_slice(b);
        let svd = a.svd(true, true);
        let eps = NULL_TOL * svd.singular_values.max();
        svd.solve(&rhs, eps)
            .map_or_else(|_| vec![0.0; z], |v| v.iter().copied().collect())
    } else {
        let cct = ct.gram();
        let rhs: Vec<f64> = c.mul_vec(b).iter().map(|v| -v).collect();
        CholeskyFactor::envelope(&cct)
            .or_else(|_| {
                let ridge = 1e-12 * (0..z).map(|i| cct.get(i, i)).fold(0.0, f64::max);
                CholeskyFactor::envelope(&cct.add_scaled(
                    ridge.max(f64::MIN_POSITIVE),
                    &SparseBandedMatrix::identity(z),
                )?)
            })
            .map_or_else(|_| vec![0.0; z], |fac| fac.solve(&rhs))
    };
    s.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    let mut res = ct.mul_vec(&s);
    res.iter_mut().zip(b).for_each(|(r, bi)| *r += bi);
    let norms: Vec<f64> = (0..c.nrows())
        .map(|i| c.row(i).1.iter().map(|v| v * v).sum())
        .collect();
    for _ in 0..500 {
        let mut max_change: f64 = 0.0;
        for i in 0..c.nrows() {
            if norms[i] == 0.0 {
                continue;
            }
            let (cols, vals) = c.row(i);
            let dot: f64 = cols.iter().zip(vals).map(|(&j, v)| v * res[j]).sum();
            let new = (s[i] - dot / norms[i]).clamp(-1.0, 1.0);
            let delta = new - s[i];
            if delta != 0.0 {
                cols.iter().zip(vals).for_each(|(&j, v)| res[j] += delta * v);
                s[i] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-14 {
            break;
        }
    }
    s
}

/// Smallest λ at which a fit in the null space of 𝒟 is optimal.
///
/// `f₀` is the least-squares fit over `null(𝒟)`, and the result is
/// `‖u‖_∞` for the least-norm `u` solving `𝒟ᵀu = 2Oᵀ(y − Of₀)`. The
/// least-norm solution is found by pinning `dim null(𝒟)` well-chosen
/// coordinates in the singular system `𝒟ᵀ𝒟 w = g` and taking `u = 𝒟w`.
pub fn lambda_max(prob: &MbsProblem) -> Result<f64> {
    let basis = match &prob.null_space {
        Some(b) => b.clone(),
        None => numeric_null_space(&prob.penalty)?,
    };
    let d = basis.ncols();
    let m = prob.mesh_size();
    // B = O N
    let mut on = DMatrix::zeros(prob.y.len(), d);
    for c in 0..d {
        let col: Vec<f64> = basis.column(c).iter().copied().collect();
        let img = prob.interp.mul_vec(&col);
        on.column_mut(c).copy_from_slice(&img);
    }
    let svd = on.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(f64::MIN_POSITIVE))
        .count();
    if rank < d {
        return Err(MbsError::RankDeficient { rank, dim: d });
    }
    let coef = svd
        .solve(&DVector::from_column_slice(&prob.y), 0.0)
        .map_err(|e| MbsError::InvalidArgument(e.to_string()))?;
    let f0 = &basis * coef;
    let fit = prob.interp.mul_vec(f0.as_slice());
    let resid: Vec<f64> = prob.y.iter().zip(&fit).map(|(y, v)| 2.0 * (y - v)).collect();
    let mut g = prob.interp.tr_mul_vec(&resid);

    // pivot rows: where the null space is best determined
    let qr = basis.transpose().col_piv_qr();
    let perm = qr.p();
    let mut idx = DMatrix::from_fn(1, m, |_, j| j as f64);
    perm.permute_columns(&mut idx);
    let pinned: Vec<usize> = (0..d).map(|j| idx[(0, j)] as usize).collect();
    let mut is_pinned = vec![false; m];
    pinned.iter().for_each(|&i| is_pinned[i] = true);

    let gram = prob.penalty.gram();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        if is_pinned[i] {
            rows.push(vec![(i, 1.0)]);
            continue;
        }
        let (cols, vals) = gram.row(i);
        rows.push(
            cols.iter()
                .zip(vals)
                .filter(|(j, _)| !is_pinned[**j])
                .map(|(&j, &v)| (j, v))
                .collect(),
        );
    }
    let reduced = SparseBandedMatrix::from_sorted_rows(m, rows);
    pinned.iter().for_each(|&i| g[i] = 0.0);
    let w = CholeskyFactor::envelope(&reduced)?.solve(&g);
    Ok(norm_inf(&prob.penalty.mul_vec(&w)))
}

fn numeric_null_space(d: &SparseBandedMatrix) -> Result<DMatrix<f64>> {
    let m = d.ncols();
    if m > DENSE_NULL_SPACE_LIMIT {
        return invalid(format!(
            "a null-space basis must be attached for meshes above {DENSE_NULL_SPACE_LIMIT} points"
        ));
    }
    let gram = d.gram();
    let dense = DMatrix::from_fn(m, m, |i, j| gram.get(i, j));
    let eig = dense.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let cols: Vec<usize> = (0..m)
        .filter(|&i| eig.eigenvalues[i] <= 1e-10 * top)
        .collect();
    if cols.is_empty() {
        return invalid("the penalty operator has a trivial null space");
    }
    Ok(eig.eigenvectors.select_columns(&cols))
}

/// `count` values from `lmax` down to `lmin`, equally spaced in log scale,
/// with exact endpoints.
pub fn lambda_grid(lmax: f64, count: usize, lmin: f64) -> Result<Vec<f64>> {
    if count < 2 {
        return invalid(format!("a lambda grid needs at least 2 values, got {count}"));
    }
    if !(lmin > 0.0 && lmin < lmax && lmax.is_finite()) {
        return invalid(format!("need 0 < lmin < lmax, got lmin = {lmin}, lmax = {lmax}"));
    }
    let (a, b) = (lmax.ln(), lmin.ln());
    let last = count - 1;
    Ok((0..count)
        .map(|i| match i {
            0 => lmax,
            i if i == last => lmin,
            i => (a + (b - a) * i as f64 / last as f64).exp(),
        })
        .collect())
}
