//! Discretization of the truncated admissible vorticity classes, the
//! penalized kinetic-energy functional, the bathtub multiplier solve, and
//! the damped fixed-point iteration whose fixed points satisfy the
//! constrained-maximizer form (single and multi-vortex).

use std::sync::Arc;

use crate::domain::{DomainGrid, DomainError, GreenOperator, ScalarField, StreamField};
use crate::geom::Point;
use crate::profiles::ProfileFunction;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("resolution adequacy: core radius {core:.3e} must span >= 6 cells (6h = {six_h:.3e})")]
    ResolutionInadequate { core: f64, six_h: f64 },
    #[error("sign violation: field is not {0}-signed")]
    SignViolation(&'static str),
    #[error("Lambda or domain too small to hold circulation {kappa}")]
    CirculationInfeasible { kappa: f64 },
    #[error("multiplier solve left mass gap {gap:e} (tolerance {tol:e})")]
    MuToleranceNotMet { gap: f64, tol: f64 },
    #[error("bathtub mass function is not nonincreasing on the bracket")]
    MassNotMonotone,
    #[error("fixed point did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64, trace: Vec<f64> },
    #[error("vorticity support is empty")]
    EmptySupport,
    #[error("zero circulation")]
    ZeroCirculation,
    #[error("invalid multi-vortex spec: {0}")]
    BadSpec(String),
    #[error("confinement active: component {component} support touches its ball boundary")]
    ConfinementActive { component: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Cell-valued vorticity with cached circulation.
#[derive(Clone)]
pub struct VorticityField {
    field: ScalarField,
    circulation: f64,
}

impl VorticityField {
    pub fn new(field: ScalarField) -> Result<Self, SolverError> {
        if !field.is_finite() {
            return Err(SolverError::Domain(DomainError::NonFinite));
        }
        let circulation = field.integral();
        Ok(VorticityField { field, circulation })
    }

    pub fn zeros(grid: Arc<DomainGrid>) -> Self {
        VorticityField { field: ScalarField::zeros(grid), circulation: 0.0 }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        self.field.grid()
    }

    pub fn circulation(&self) -> f64 {
        self.circulation
    }

    /// Admissibility check against the truncation cap (componentwise with
    /// the given sign).
    pub fn admissible(&self, cap: f64, sign: f64) -> bool {
        self.values()
            .iter()
            .all(|&v| sign * v >= -1e-12 * cap && sign * v <= cap * (1.0 + 1e-12))
    }

    /// Uniform patch of circulation kappa on the cells inside the given
    /// ball, normalized so the discrete circulation is exactly kappa. The
    /// ball grows if the cap Lambda/eps^2 forces it.
    pub fn uniform_patch(
        grid: Arc<DomainGrid>,
        center: Point,
        radius: f64,
        kappa: f64,
        cap: f64,
    ) -> Result<Self, SolverError> {
        let h2 = grid.spacing() * grid.spacing();
        let mut r = radius;
        for _ in 0..64 {
            let cells: Vec<usize> = (0..grid.n_cells())
                .filter(|&k| grid.cell_center(k).dist(center) < r)
                .collect();
            let area = cells.len() as f64 * h2;
            if !cells.is_empty() && kappa.abs() / area <= cap {
                let value = kappa / area;
                let mut values = vec![0.0; grid.n_cells()];
                for k in cells {
                    values[k] = value;
                }
                return VorticityField::new(ScalarField::from_values(grid, values));
            }
            r *= 1.3;
        }
        Err(SolverError::CirculationInfeasible { kappa })
    }
}

/// Solves the discrete Dirichlet problem for the vorticity.
pub fn green_apply(
    op: &GreenOperator,
    omega: &VorticityField,
) -> Result<StreamField, SolverError> {
    Ok(op.apply(omega.field())?)
}

/// Kinetic energy E = (1/2) <omega, G omega> with the grid inner product.
pub fn energy_kinetic(op: &GreenOperator, omega: &VorticityField) -> Result<f64, SolverError> {
    let u = green_apply(op, omega)?;
    Ok(0.5 * omega.field().dot(&u.field))
}

/// Penalty F_eps(omega) = (1/eps^2) sum F(eps^2 sign omega) h^2.
/// `sign` is +1 or -1 and the field must have that sign.
pub fn penalty(
    omega: &VorticityField,
    f: &ProfileFunction,
    epsilon: f64,
    sign: f64,
) -> Result<f64, SolverError> {
    if sign * omega.values().iter().cloned().fold(0.0, f64::min) < -1e-12 {
        return Err(SolverError::SignViolation(if sign > 0.0 { "non-negatively" } else { "non-positively" }));
    }
    let h2 = omega.grid().spacing().powi(2);
    let e2 = epsilon * epsilon;
    Ok(omega
        .values()
        .iter()
        .map(|&v| f.big_f(e2 * sign * v))
        .sum::<f64>()
        * h2
        / e2)
}

fn penalty_values(values: &[f64], f: &ProfileFunction, epsilon: f64, sign: f64, h2: f64) -> f64 {
    let e2 = epsilon * epsilon;
    values.iter().map(|&v| f.big_f(e2 * sign * v)).sum::<f64>() * h2 / e2
}

/// Bathtub mass at level mu over a sorted-descending value array.
struct MassFn<'a> {
    sorted: &'a [f64],
    f: &'a ProfileFunction,
    inv_e2: f64,
    lambda: f64,
    f_inv_lambda: f64,
    h2: f64,
}

impl MassFn<'_> {
    fn eval(&self, mu: f64) -> f64 {
        let cap_end = self.sorted.partition_point(|&s| s - mu >= self.f_inv_lambda);
        let pos_end = self.sorted.partition_point(|&s| s > mu);
        let mut mass = self.lambda * cap_end as f64;
        for &s in &self.sorted[cap_end..pos_end] {
            mass += self.f.f(s - mu).min(self.lambda);
        }
        mass * self.inv_e2 * self.h2
    }
}

/// Determines the multiplier mu from the circulation constraint: the mass
/// M(mu) = sum min(f(u - mu)/eps^2, Lambda/eps^2) h^2 over the mask equals
/// kappa within tol_mu kappa. M is nonincreasing in mu, so bisection on
/// [min u - f^{-1}(Lambda) - 1, max u] converges; ties resolve to the
/// largest admissible mu.
pub fn mu_solve(
    u: &StreamField,
    f: &ProfileFunction,
    epsilon: f64,
    lambda: f64,
    kappa: f64,
    mask: Option<&[usize]>,
    tol_mu: f64,
) -> Result<f64, SolverError> {
    let h2 = u.grid().spacing().powi(2);
    match mask {
        None => mu_solve_values(u.values(), h2, f, epsilon, lambda, kappa, tol_mu),
        Some(cells) => {
            let vals: Vec<f64> = cells.iter().map(|&k| u.values()[k]).collect();
            mu_solve_values(&vals, h2, f, epsilon, lambda, kappa, tol_mu)
        }
    }
}

pub(crate) fn mu_solve_values(
    u_vals: &[f64],
    h2: f64,
    f: &ProfileFunction,
    epsilon: f64,
    lambda: f64,
    kappa: f64,
    tol_mu: f64,
) -> Result<f64, SolverError> {
    if u_vals.is_empty() {
        return Err(SolverError::BadConfig("empty multiplier mask".into()));
    }
    if !(kappa > 0.0) {
        return Err(SolverError::BadConfig(format!("mu_solve needs kappa > 0, got {kappa}")));
    }
    let mut sorted = u_vals.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let f_inv_lambda = f.f_inv(lambda);
    let mass = MassFn {
        sorted: &sorted,
        f,
        inv_e2: 1.0 / (epsilon * epsilon),
        lambda,
        f_inv_lambda,
        h2,
    };

    let mut lo = sorted[sorted.len() - 1] - f_inv_lambda - 1.0;
    let mut hi = sorted[0];
    let m_lo = mass.eval(lo);
    let m_hi = mass.eval(hi);
    let m_mid = mass.eval(0.5 * (lo + hi));
    let slack = 1e-12 * m_lo.max(kappa);
    if !(m_lo + slack >= m_mid && m_mid + slack >= m_hi) {
        return Err(SolverError::MassNotMonotone);
    }
    if m_lo < kappa {
        return Err(SolverError::CirculationInfeasible { kappa });
    }
    // invariant: mass(lo) >= kappa > mass(hi); converge to the largest mu
    // with mass >= kappa
    let span = (hi - lo).abs().max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass.eval(mid) >= kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * span {
            break;
        }
    }
    let gap = (mass.eval(lo) - kappa).abs();
    if gap > tol_mu * kappa {
        return Err(SolverError::MuToleranceNotMet { gap, tol: tol_mu * kappa });
    }
    Ok(lo)
}

/// The maximizer-form update: min(f(u - mu)/eps^2, Lambda/eps^2) on the
/// mask, exact zeros where u <= mu.
fn bathtub_update(
    u: &[f64],
    mu: f64,
    f: &ProfileFunction,
    epsilon: f64,
    lambda: f64,
    out: &mut [f64],
    mask: Option<&[usize]>,
) {
    let inv_e2 = 1.0 / (epsilon * epsilon);
    let cap = lambda * inv_e2;
    out.fill(0.0);
    match mask {
        None => {
            for (o, &s) in out.iter_mut().zip(u) {
                if s > mu {
                    *o = (f.f(s - mu) * inv_e2).min(cap);
                }
            }
        }
        Some(cells) => {
            for &k in cells {
                let s = u[k];
                if s > mu {
                    out[k] = (f.f(s - mu) * inv_e2).min(cap);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum SolverInit {
    /// omega_0 = (1/eps^2) chi_{B_{eps sqrt(kappa/pi)}(center)},
    /// normalized to the exact discrete circulation.
    UniformPatch { center: Point },
    UserField,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IterationParams {
    /// Relative L1 tolerance on the fixed-point residual.
    pub tol_fixed_point: f64,
    /// Relative mass tolerance for the multiplier solve.
    pub tol_mu: f64,
    pub max_iter: usize,
    /// Damping theta in (0, 1].
    pub damping: f64,
}

impl Default for IterationParams {
    fn default() -> Self {
        IterationParams { tol_fixed_point: 1e-9, tol_mu: 1e-10, max_iter: 10_000, damping: 1.0 }
    }
}

#[derive(Clone)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub profile: ProfileFunction,
    pub iteration: IterationParams,
    pub init: SolverInit,
    /// Field used when init is UserField.
    pub init_field: Option<ScalarField>,
}

impl SolverConfig {
    pub fn new(epsilon: f64, lambda: f64, kappa: f64, profile: ProfileFunction) -> Self {
        SolverConfig {
            epsilon,
            lambda,
            kappa,
            profile,
            iteration: IterationParams::default(),
            init: SolverInit::UniformPatch { center: Point::ZERO },
            init_field: None,
        }
    }

    pub fn core_radius(&self) -> f64 {
        self.epsilon * (self.kappa / std::f64::consts::PI).sqrt()
    }

    pub fn validate(&self, grid: &DomainGrid) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0) {
            return Err(SolverError::BadConfig(format!("epsilon = {}", self.epsilon)));
        }
        if !(self.kappa > 0.0) {
            return Err(SolverError::BadConfig(format!(
                "kappa = {} (single-vortex circulation must be positive)",
                self.kappa
            )));
        }
        let floor = (self.epsilon * self.epsilon * self.kappa / grid.area()).max(1.0);
        if !(self.lambda > floor) {
            return Err(SolverError::BadConfig(format!(
                "Lambda = {} must exceed max(1, eps^2 kappa / |D|) = {floor}",
                self.lambda
            )));
        }
        let six_h = 6.0 * grid.spacing();
        if self.core_radius() < six_h {
            return Err(SolverError::ResolutionInadequate { core: self.core_radius(), six_h });
        }
        let it = &self.iteration;
        if !(it.tol_fixed_point > 0.0 && it.tol_mu > 0.0) {
            return Err(SolverError::BadConfig("tolerances must be positive".into()));
        }
        if !(it.damping > 0.0 && it.damping <= 1.0) {
            return Err(SolverError::BadConfig(format!("damping = {}", it.damping)));
        }
        if self.init == SolverInit::UserField && self.init_field.is_none() {
            return Err(SolverError::BadConfig("user-field init without a field".into()));
        }
        if let SolverInit::UniformPatch { center } = self.init {
            if !grid.contains(center) {
                return Err(SolverError::BadConfig(format!(
                    "init center ({}, {}) outside the domain",
                    center.x, center.y
                )));
            }
        }
        Ok(())
    }
}

/// Converged (omega, psi, mu) triple with its energy ledger and
/// concentration diagnostics.
pub struct SolveResult {
    pub omega: VorticityField,
    /// psi = G omega - mu, cell-wise.
    pub psi: StreamField,
    pub mu: f64,
    pub energy_kinetic: f64,
    pub energy_penalty: f64,
    /// energy_kinetic - energy_penalty.
    pub energy_total: f64,
    /// The functional value at the initial iterate (ascent reference).
    pub energy_initial: f64,
    pub iterations: usize,
    pub residual_l1: f64,
    pub patch_area: f64,
    pub support_diameter: f64,
    pub center: Point,
    pub steady_residual: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

const THETA_FLOOR_HALVINGS: u32 = 10;
const DEFAULT_STEADY_TESTS: usize = 25;

/// Damped fixed-point iteration on the maximizer form: u = G omega,
/// mu from the circulation constraint, omega updated toward
/// min(f(u - mu)/eps^2, Lambda/eps^2), with the damping halved whenever
/// the functional would decrease and restored on success.
pub fn fixed_point_solve(
    op: &GreenOperator,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    let grid = op.grid().clone();
    cfg.validate(&grid)?;
    let h2 = grid.spacing() * grid.spacing();
    let cap = cfg.lambda / (cfg.epsilon * cfg.epsilon);

    let init = match cfg.init {
        SolverInit::UniformPatch { center } => VorticityField::uniform_patch(
            grid.clone(),
            center,
            cfg.core_radius(),
            cfg.kappa,
            cap,
        )?,
        SolverInit::UserField => {
            let field = cfg.init_field.clone().expect("validated");
            if field.grid().id() != grid.id() {
                return Err(SolverError::Domain(DomainError::GridMismatch));
            }
            // clamp into the admissible class and rescale the circulation
            let mut values = field.values().to_vec();
            for v in values.iter_mut() {
                *v = v.clamp(0.0, cap);
            }
            let total: f64 = values.iter().sum::<f64>() * h2;
            if !(total > 0.0) {
                return Err(SolverError::BadConfig("user init has no positive mass".into()));
            }
            let scale = cfg.kappa / total;
            for v in values.iter_mut() {
                *v = (*v * scale).min(cap);
            }
            VorticityField::new(ScalarField::from_values(grid.clone(), values))?
        }
    };

    let mut omega = init.values().to_vec();
    let mut u = op.apply(init.field())?.field.values().to_vec();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * h2
    };
    let mut energy = 0.5 * dot(&omega, &u);
    let mut pen = penalty_values(&omega, &cfg.profile, cfg.epsilon, 1.0, h2);
    let energy_initial = energy - pen;

    let field_of = |vals: &[f64]| ScalarField::from_values(grid.clone(), vals.to_vec());

    let mut omega_new = vec![0.0; omega.len()];
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;
    let tol = cfg.iteration.tol_fixed_point;

    'outer: loop {
        let mut mu = mu_solve_values(
            &u, h2, &cfg.profile, cfg.epsilon, cfg.lambda, cfg.kappa, cfg.iteration.tol_mu,
        )?;
        loop {
            if iterations >= cfg.iteration.max_iter {
                return Err(SolverError::NotConverged { iterations, residual, trace });
            }
            iterations += 1;
            bathtub_update(&u, mu, &cfg.profile, cfg.epsilon, cfg.lambda, &mut omega_new, None);
            residual = omega
                .iter()
                .zip(&omega_new)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * h2
                / cfg.kappa;
            trace.push(residual);
            if residual <= tol {
                break;
            }

            let u_new = op.apply(&field_of(&omega_new))?.field.values().to_vec();
            let energy_new = 0.5 * dot(&omega_new, &u_new);
            let cross = dot(&omega_new, &u);

            let mut theta = cfg.iteration.damping;
            let theta_floor = cfg.iteration.damping / 2f64.powi(THETA_FLOOR_HALVINGS as i32);
            let (energy_c, pen_c) = loop {
                let e_c = (1.0 - theta).powi(2) * energy
                    + theta * theta * energy_new
                    + theta * (1.0 - theta) * cross;
                let p_c = if theta == 1.0 {
                    penalty_values(&omega_new, &cfg.profile, cfg.epsilon, 1.0, h2)
                } else {
                    let e2 = cfg.epsilon * cfg.epsilon;
                    omega
                        .iter()
                        .zip(&omega_new)
                        .map(|(&a, &b)| {
                            cfg.profile.big_f(e2 * ((1.0 - theta) * a + theta * b))
                        })
                        .sum::<f64>()
                        * h2
                        / e2
                };
                if e_c - p_c >= energy - pen || theta <= theta_floor {
                    break (e_c, p_c);
                }
                theta *= 0.5;
            };

            if theta == 1.0 {
                std::mem::swap(&mut omega, &mut omega_new);
                u = u_new;
            } else {
                for (a, &b) in omega.iter_mut().zip(&omega_new) {
                    *a = (1.0 - theta) * *a + theta * b;
                }
                for (a, &b) in u.iter_mut().zip(&u_new) {
                    *a = (1.0 - theta) * *a + theta * b;
                }
            }
            energy = energy_c;
            pen = pen_c;
            mu = mu_solve_values(
                &u, h2, &cfg.profile, cfg.epsilon, cfg.lambda, cfg.kappa, cfg.iteration.tol_mu,
            )?;
        }

        // fresh consistency pass: the iteration maintains u by linear
        // combination, so recompute from scratch before reporting
        let omega_field = VorticityField::new(field_of(&omega))?;
        let u_fresh = op.apply(omega_field.field())?;
        let mu = mu_solve(
            &u_fresh, &cfg.profile, cfg.epsilon, cfg.lambda, cfg.kappa, None,
            cfg.iteration.tol_mu,
        )?;
        bathtub_update(
            u_fresh.field.values(), mu, &cfg.profile, cfg.epsilon, cfg.lambda, &mut omega_new,
            None,
        );
        let fresh_residual = omega
            .iter()
            .zip(&omega_new)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * h2
            / cfg.kappa;
        if fresh_residual > tol && iterations < cfg.iteration.max_iter {
            u = u_fresh.field.values().to_vec();
            continue 'outer;
        }
        residual = fresh_residual;
        if residual > tol {
            return Err(SolverError::NotConverged { iterations, residual, trace });
        }

        let energy_kin = 0.5 * omega_field.field().dot(&u_fresh.field);
        let energy_pen = penalty(&omega_field, &cfg.profile, cfg.epsilon, 1.0)?;
        let psi_vals: Vec<f64> = u_fresh.field.values().iter().map(|&v| v - mu).collect();
        let psi = StreamField { field: ScalarField::from_values(grid.clone(), psi_vals) };
        let patch_area = patch_measure_values(omega_field.values(), cap, h2);
        let stats = support_stats(&omega_field)?;
        let steady = steady_residual(op, &omega_field, DEFAULT_STEADY_TESTS)?;

        return Ok(SolveResult {
            omega: omega_field,
            psi,
            mu,
            energy_kinetic: energy_kin,
            energy_penalty: energy_pen,
            energy_total: energy_kin - energy_pen,
            energy_initial,
            iterations,
            residual_l1: residual,
            patch_area,
            support_diameter: stats.diameter,
            center: stats.center,
            steady_residual: steady,
            epsilon: cfg.epsilon,
            lambda: cfg.lambda,
        });
    }
}

/// Runs fixed_point_solve under the Lambda-escalation rule: when the
/// converged field still has a patch part, Lambda doubles (up to 4 times)
/// and the solve reruns. Returns the result and the doublings used.
pub fn solve_with_escalation(
    op: &GreenOperator,
    cfg: &SolverConfig,
) -> Result<(SolveResult, u32), SolverError> {
    let mut cfg = cfg.clone();
    for doubling in 0..=4u32 {
        let result = fixed_point_solve(op, &cfg)?;
        if result.patch_area == 0.0 || doubling == 4 {
            return Ok((result, doubling));
        }
        cfg.lambda *= 2.0;
    }
    unreachable!()
}

/// Area of the truncation patch {omega >= Lambda/eps^2 (1 - 1e-12)}.
pub fn patch_measure(result: &SolveResult) -> f64 {
    let cap = result.lambda / (result.epsilon * result.epsilon);
    let h2 = result.omega.grid().spacing().powi(2);
    patch_measure_values(result.omega.values(), cap, h2)
}

pub(crate) fn patch_measure_values(values: &[f64], cap: f64, h2: f64) -> f64 {
    let thresh = cap * (1.0 - 1e-12);
    values.iter().filter(|&&v| v.abs() >= thresh).count() as f64 * h2
}

#[derive(Debug, Clone, Copy)]
pub struct SupportStats {
    pub diameter: f64,
    pub center: Point,
    pub area: f64,
}

/// Support diameter (max pairwise cell-center distance, via the convex
/// hull), center of vorticity, and support area.
pub fn support_stats(omega: &VorticityField) -> Result<SupportStats, SolverError> {
    if omega.circulation() == 0.0 {
        return Err(SolverError::ZeroCirculation);
    }
    let grid = omega.grid();
    let h2 = grid.spacing() * grid.spacing();
    let mut pts = Vec::new();
    let mut first_moment = Point::ZERO;
    for (k, &v) in omega.values().iter().enumerate() {
        if v != 0.0 {
            let c = grid.cell_center(k);
            pts.push(c);
            first_moment = first_moment + c * (v * h2);
        }
    }
    if pts.is_empty() {
        return Err(SolverError::EmptySupport);
    }
    let center = first_moment / omega.circulation();
    let area = pts.len() as f64 * h2;
    let hull = convex_hull(&mut pts);
    let mut diameter = 0.0f64;
    for (i, p) in hull.iter().enumerate() {
        for q in hull.iter().skip(i + 1) {
            diameter = diameter.max(p.dist(*q));
        }
    }
    Ok(SupportStats { diameter, center, area })
}

fn convex_hull(pts: &mut Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a == b);
    if pts.len() <= 2 {
        return pts.clone();
    }
    let cross = |o: Point, a: Point, b: Point| -> f64 {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Weak-form steadiness residual of Definition-style test integrals:
/// max over smooth bumps phi of |int omega (grad^perp G omega) . grad phi|
/// normalized by |grad phi|_inf |omega|_L1 |grad G omega|_inf.
pub fn steady_residual(
    op: &GreenOperator,
    omega: &VorticityField,
    n_tests: usize,
) -> Result<f64, SolverError> {
    let grid = omega.grid().clone();
    if omega.values().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let u = op.apply(omega.field())?;
    let h = grid.spacing();
    let h2 = h * h;

    // central-difference gradient of u with Dirichlet zeros outside
    let n = grid.n_cells();
    let uv = u.field.values();
    let mut grad = vec![Point::ZERO; n];
    let mut grad_max = 0.0f64;
    for k in 0..n {
        let nb = grid.neighbors(k);
        let val = |o: Option<usize>| o.map_or(0.0, |j| uv[j]);
        let gx = (val(nb[1]) - val(nb[0])) / (2.0 * h);
        let gy = (val(nb[3]) - val(nb[2])) / (2.0 * h);
        grad[k] = Point::new(gx, gy);
        grad_max = grad_max.max(grad[k].norm());
    }
    let omega_l1 = omega.field().l1_norm();
    if grad_max == 0.0 || omega_l1 == 0.0 {
        return Ok(0.0);
    }

    // bump centers on a grid covering the support bounding box
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for (k, &v) in omega.values().iter().enumerate() {
        if v != 0.0 {
            let c = grid.cell_center(k);
            lo = Point::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Point::new(hi.x.max(c.x), hi.y.max(c.y));
        }
    }
    let m = (n_tests.max(1) as f64).sqrt().ceil() as usize;
    let extent = (hi.x - lo.x).max(hi.y - lo.y).max(2.0 * h);
    let rad = (1.5 * extent / m as f64).max(5.0 * h);
    lo = lo - Point::new(rad, rad) * 0.5;
    hi = hi + Point::new(rad, rad) * 0.5;

    // |phi'|_inf for the bump phi(s) = exp(1 - 1/(1 - s^2))
    let mut dphi_max = 0.0f64;
    for i in 1..2048 {
        let s = i as f64 / 2048.0;
        let d = 2.0 * s / (1.0 - s * s).powi(2) * (1.0 - 1.0 / (1.0 - s * s)).exp();
        dphi_max = dphi_max.max(d);
    }
    dphi_max /= rad;

    let mut worst = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            let cx = lo.x + (hi.x - lo.x) * (a as f64 + 0.5) / m as f64;
            let cy = lo.y + (hi.y - lo.y) * (b as f64 + 0.5) / m as f64;
            let c = Point::new(cx, cy);
            // integrate over cells within the bump radius
            let i0 = (((c.x - rad) - grid.origin().x) / h).floor().max(0.0) as usize;
            let i1 = (((c.x + rad) - grid.origin().x) / h).ceil().max(0.0) as usize;
            let j0 = (((c.y - rad) - grid.origin().y) / h).floor().max(0.0) as usize;
            let j1 = (((c.y + rad) - grid.origin().y) / h).ceil().max(0.0) as usize;
            let mut integral = 0.0;
            for j in j0..=j1.min(grid.shape().1.saturating_sub(1)) {
                for i in i0..=i1.min(grid.shape().0.saturating_sub(1)) {
                    let Some(k) = grid.cell_index(i, j) else { continue };
                    let w = omega.values()[k];
                    if w == 0.0 {
                        continue;
                    }
                    let d = grid.cell_center(k) - c;
                    let s2 = d.norm_sq() / (rad * rad);
                    if s2 >= 1.0 {
                        continue;
                    }
                    let phi = (1.0 - 1.0 / (1.0 - s2)).exp();
                    let dphi = phi * (-2.0 / ((1.0 - s2) * (1.0 - s2) * rad * rad));
                    let grad_phi = d * dphi;
                    integral += w * grad[k].perp().dot(grad_phi) * h2;
                }
            }
            worst = worst.max(integral.abs() / (dphi_max * omega_l1 * grad_max));
        }
    }
    Ok(worst)
}

/// Cell-wise first-order (bathtub) condition violations of a converged
/// field, measured on the psi axis: psi <= 0 where omega = 0,
/// psi = f^{-1}(eps^2 omega) on the free set, psi >= f^{-1}(Lambda) on
/// the patch set.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BathtubConditions {
    pub max_violation_zero_set: f64,
    pub max_violation_free_set: f64,
    pub max_violation_patch_set: f64,
}

impl BathtubConditions {
    pub fn worst(&self) -> f64 {
        self.max_violation_zero_set
            .max(self.max_violation_free_set)
            .max(self.max_violation_patch_set)
    }
}

pub fn bathtub_conditions(result: &SolveResult, f: &ProfileFunction) -> BathtubConditions {
    let e2 = result.epsilon * result.epsilon;
    let cap = result.lambda / e2;
    let f_inv_lambda = f.f_inv(result.lambda);
    let mut zero = 0.0f64;
    let mut free = 0.0f64;
    let mut patch = 0.0f64;
    for (&w, &p) in result.omega.values().iter().zip(result.psi.values()) {
        if w <= 0.0 {
            zero = zero.max(p);
        } else if w >= cap * (1.0 - 1e-12) {
            patch = patch.max(f_inv_lambda - p);
        } else {
            free = free.max((p - f.f_inv(e2 * w)).abs());
        }
    }
    BathtubConditions {
        max_violation_zero_set: zero,
        max_violation_free_set: free,
        max_violation_patch_set: patch,
    }
}

/// One signed component of a multi-vortex configuration.
#[derive(Clone)]
pub struct MultiVortexComponent {
    pub profile: ProfileFunction,
    pub strength: f64,
    pub center: Point,
    pub ball_radius: f64,
}

/// Admissible class with per-component support balls and signs; shared
/// epsilon and Lambda.
#[derive(Clone)]
pub struct MultiVortexSpec {
    pub components: Vec<MultiVortexComponent>,
    pub epsilon: f64,
    pub lambda: f64,
}

impl MultiVortexSpec {
    pub fn validate(&self, grid: &DomainGrid) -> Result<(), SolverError> {
        if self.components.is_empty() {
            return Err(SolverError::BadSpec("no components".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(SolverError::BadSpec(format!("epsilon = {}", self.epsilon)));
        }
        let six_h = 6.0 * grid.spacing();
        for (i, c) in self.components.iter().enumerate() {
            if c.strength == 0.0 || !c.strength.is_finite() {
                return Err(SolverError::BadSpec(format!("component {i} has zero strength")));
            }
            if !(c.ball_radius > 0.0) {
                return Err(SolverError::BadSpec(format!("component {i} ball radius")));
            }
            if grid.boundary_distance(c.center) <= c.ball_radius {
                return Err(SolverError::BadSpec(format!(
                    "component {i} ball not compactly inside the domain"
                )));
            }
            let floor = (self.epsilon * self.epsilon * c.strength.abs()
                / (std::f64::consts::PI * c.ball_radius * c.ball_radius))
                .max(1.0);
            if !(self.lambda > floor) {
                return Err(SolverError::BadSpec(format!(
                    "Lambda = {} must exceed {floor} for component {i}",
                    self.lambda
                )));
            }
            let core = self.epsilon * (c.strength.abs() / std::f64::consts::PI).sqrt();
            if core < six_h {
                return Err(SolverError::ResolutionInadequate { core, six_h });
            }
            for (j, d) in self.components.iter().enumerate().skip(i + 1) {
                if c.center.dist(d.center) <= c.ball_radius + d.ball_radius {
                    return Err(SolverError::BadSpec(format!(
                        "balls {i} and {j} are not disjoint"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub struct ComponentResult {
    /// Signed component vorticity (zero outside its ball).
    pub omega: VorticityField,
    pub mu: f64,
    pub circulation: f64,
    pub center: Point,
    pub support_diameter: f64,
    pub patch_area: f64,
    /// E_i = (1/2) <omega_i, G omega_i> - F_i penalty.
    pub energy_component: f64,
}

pub struct MultiSolveResult {
    pub components: Vec<ComponentResult>,
    pub omega: VorticityField,
    /// G omega of the summed field (per-component psi_i = sgn_i G omega - mu_i).
    pub g_omega: StreamField,
    pub energy_kinetic: f64,
    pub energy_total: f64,
    pub energy_initial: f64,
    pub iterations: usize,
    pub residual_l1: f64,
    pub steady_residual: f64,
}

/// Multi-vortex fixed point: one frozen u = G omega per outer iteration
/// (Jacobi component updates), per-component multiplier solves restricted
/// to the support balls, shared damping with the global functional guard.
pub fn multi_solve(
    op: &GreenOperator,
    spec: &MultiVortexSpec,
    params: &IterationParams,
) -> Result<MultiSolveResult, SolverError> {
    multi_solve_with_init(op, spec, params, None)
}

/// multi_solve with caller-supplied initial component fields (clamped
/// into the admissible class); used by warm-started sweeps.
pub fn multi_solve_with_init(
    op: &GreenOperator,
    spec: &MultiVortexSpec,
    params: &IterationParams,
    init: Option<&[ScalarField]>,
) -> Result<MultiSolveResult, SolverError> {
    let grid = op.grid().clone();
    spec.validate(&grid)?;
    if !(params.tol_fixed_point > 0.0 && params.tol_mu > 0.0) {
        return Err(SolverError::BadConfig("tolerances must be positive".into()));
    }
    if !(params.damping > 0.0 && params.damping <= 1.0) {
        return Err(SolverError::BadConfig(format!("damping = {}", params.damping)));
    }

    let h2 = grid.spacing() * grid.spacing();
    let k = spec.components.len();
    let e2 = spec.epsilon * spec.epsilon;
    let cap = spec.lambda / e2;

    // ball cell masks
    let balls: Vec<Vec<usize>> = spec
        .components
        .iter()
        .map(|c| {
            (0..grid.n_cells())
                .filter(|&idx| grid.cell_center(idx).dist(c.center) < c.ball_radius)
                .collect()
        })
        .collect();

    if let Some(fields) = init {
        if fields.len() != k {
            return Err(SolverError::BadSpec("init component count mismatch".into()));
        }
        for f in fields {
            if f.grid().id() != grid.id() {
                return Err(SolverError::Domain(DomainError::GridMismatch));
            }
        }
    }

    // signed uniform-patch inits (or clamped caller fields), inside balls
    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (i, (c, ball)) in spec.components.iter().zip(&balls).enumerate() {
        let sgn = c.strength.signum();
        if let Some(fields) = init {
            // restrict to the ball, clamp sign and cap, renormalize mass
            let mut vals = vec![0.0; grid.n_cells()];
            for &idx in ball {
                vals[idx] = (sgn * fields[i].values()[idx]).clamp(0.0, cap);
            }
            let total: f64 = vals.iter().sum::<f64>() * h2;
            if total > 0.0 {
                let scale = c.strength.abs() / total;
                for v in vals.iter_mut() {
                    *v = (*v * scale).min(cap) * sgn;
                }
                comps.push(vals);
                continue;
            }
        }
        let core = spec.epsilon * (c.strength.abs() / std::f64::consts::PI).sqrt();
        let r = core.min(0.9 * c.ball_radius);
        let cells: Vec<usize> = ball
            .iter()
            .cloned()
            .filter(|&idx| grid.cell_center(idx).dist(c.center) < r)
            .collect();
        if cells.is_empty() {
            return Err(SolverError::BadSpec(
                "initial core patch holds no cells inside its ball".into(),
            ));
        }
        let value = c.strength / (cells.len() as f64 * h2);
        if value.abs() > cap {
            return Err(SolverError::CirculationInfeasible { kappa: c.strength });
        }
        let mut vals = vec![0.0; grid.n_cells()];
        for idx in cells {
            vals[idx] = value;
        }
        comps.push(vals);
    }

    let field_of = |vals: &[f64]| ScalarField::from_values(grid.clone(), vals.to_vec());
    let sum_components = |comps: &[Vec<f64>]| -> Vec<f64> {
        let mut total = vec![0.0; grid.n_cells()];
        for c in comps {
            for (t, v) in total.iter_mut().zip(c) {
                *t += v;
            }
        }
        total
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * h2
    };
    let total_penalty = |comps: &[Vec<f64>]| -> f64 {
        comps
            .iter()
            .zip(&spec.components)
            .map(|(vals, c)| {
                penalty_values(vals, &c.profile, spec.epsilon, c.strength.signum(), h2)
            })
            .sum()
    };

    let mut omega = sum_components(&comps);
    let mut u = op.apply(&field_of(&omega))?.field.values().to_vec();
    let mut energy = 0.5 * dot(&omega, &u);
    let mut pen = total_penalty(&comps);
    let energy_initial = energy - pen;

    let mut comps_new: Vec<Vec<f64>> = vec![vec![0.0; grid.n_cells()]; k];
    let mut mus = vec![0.0f64; k];
    let mut iterations = 0usize;
    let mut worst_residual = f64::INFINITY;
    let mut trace = Vec::new();

    let component_update = |u: &[f64],
                            comps_new: &mut [Vec<f64>],
                            mus: &mut [f64]|
     -> Result<(), SolverError> {
        for (i, c) in spec.components.iter().enumerate() {
            let sgn = c.strength.signum();
            let ball = &balls[i];
            let signed_u: Vec<f64> = ball.iter().map(|&idx| sgn * u[idx]).collect();
            let mu = mu_solve_values(
                &signed_u, h2, &c.profile, spec.epsilon, spec.lambda, c.strength.abs(),
                params.tol_mu,
            )?;
            mus[i] = mu;
            let out = &mut comps_new[i];
            out.fill(0.0);
            let inv_e2 = 1.0 / e2;
            for &idx in ball {
                let s = sgn * u[idx];
                if s > mu {
                    out[idx] = sgn * (c.profile.f(s - mu) * inv_e2).min(cap);
                }
            }
        }
        Ok(())
    };

    'outer: loop {
        loop {
            if iterations >= params.max_iter {
                return Err(SolverError::NotConverged {
                    iterations,
                    residual: worst_residual,
                    trace,
                });
            }
            iterations += 1;
            component_update(&u, &mut comps_new, &mut mus)?;
            worst_residual = 0.0;
            for i in 0..k {
                let r = comps[i]
                    .iter()
                    .zip(&comps_new[i])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    * h2
                    / spec.components[i].strength.abs();
                worst_residual = worst_residual.max(r);
            }
            trace.push(worst_residual);
            if worst_residual <= params.tol_fixed_point {
                break;
            }

            let omega_new = sum_components(&comps_new);
            let u_new = op.apply(&field_of(&omega_new))?.field.values().to_vec();
            let energy_new = 0.5 * dot(&omega_new, &u_new);
            let cross = dot(&omega_new, &u);
            let mut theta = params.damping;
            let theta_floor = params.damping / 2f64.powi(THETA_FLOOR_HALVINGS as i32);
            let (energy_c, pen_c) = loop {
                let e_c = (1.0 - theta).powi(2) * energy
                    + theta * theta * energy_new
                    + theta * (1.0 - theta) * cross;
                let p_c = if theta == 1.0 {
                    total_penalty(&comps_new)
                } else {
                    spec.components
                        .iter()
                        .enumerate()
                        .map(|(i, c)| {
                            let sgn = c.strength.signum();
                            comps[i]
                                .iter()
                                .zip(&comps_new[i])
                                .map(|(&a, &b)| {
                                    c.profile
                                        .big_f(e2 * sgn * ((1.0 - theta) * a + theta * b))
                                })
                                .sum::<f64>()
                                * h2
                                / e2
                        })
                        .sum()
                };
                if e_c - p_c >= energy - pen || theta <= theta_floor {
                    break (e_c, p_c);
                }
                theta *= 0.5;
            };

            if theta == 1.0 {
                std::mem::swap(&mut comps, &mut comps_new);
                u = u_new;
            } else {
                for i in 0..k {
                    for (a, &b) in comps[i].iter_mut().zip(&comps_new[i]) {
                        *a = (1.0 - theta) * *a + theta * b;
                    }
                }
                for (a, &b) in u.iter_mut().zip(&u_new) {
                    *a = (1.0 - theta) * *a + theta * b;
                }
            }
            energy = energy_c;
            pen = pen_c;
        }

        // fresh pass
        omega = sum_components(&comps);
        let u_fresh = op.apply(&field_of(&omega))?;
        component_update(u_fresh.field.values(), &mut comps_new, &mut mus)?;
        let mut fresh_residual = 0.0f64;
        for i in 0..k {
            let r = comps[i]
                .iter()
                .zip(&comps_new[i])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * h2
                / spec.components[i].strength.abs();
            fresh_residual = fresh_residual.max(r);
        }
        if fresh_residual > params.tol_fixed_point && iterations < params.max_iter {
            u = u_fresh.field.values().to_vec();
            continue 'outer;
        }
        if fresh_residual > params.tol_fixed_point {
            return Err(SolverError::NotConverged {
                iterations,
                residual: fresh_residual,
                trace,
            });
        }

        // confinement: supports must stay away from the ball boundaries
        let h = grid.spacing();
        for (i, c) in spec.components.iter().enumerate() {
            let mut max_dist = 0.0f64;
            for (idx, &v) in comps[i].iter().enumerate() {
                if v != 0.0 {
                    max_dist = max_dist.max(grid.cell_center(idx).dist(c.center));
                }
            }
            if max_dist >= c.ball_radius - h {
                return Err(SolverError::ConfinementActive { component: i });
            }
        }

        let omega_field = VorticityField::new(field_of(&omega))?;
        let energy_kin = 0.5 * dot(&omega, u_fresh.field.values());
        let pen_total = total_penalty(&comps);
        let steady = steady_residual(op, &omega_field, DEFAULT_STEADY_TESTS)?;

        let mut components = Vec::with_capacity(k);
        for (i, c) in spec.components.iter().enumerate() {
            let comp_field = VorticityField::new(field_of(&comps[i]))?;
            let u_i = op.apply(comp_field.field())?;
            let self_energy = 0.5 * dot(&comps[i], u_i.field.values());
            let pen_i =
                penalty_values(&comps[i], &c.profile, spec.epsilon, c.strength.signum(), h2);
            let stats = support_stats(&comp_field)?;
            let patch_area = patch_measure_values(&comps[i], cap, h2);
            components.push(ComponentResult {
                mu: mus[i],
                circulation: comp_field.circulation(),
                center: stats.center,
                support_diameter: stats.diameter,
                patch_area,
                energy_component: self_energy - pen_i,
                omega: comp_field,
            });
        }

        return Ok(MultiSolveResult {
            components,
            omega: omega_field,
            g_omega: u_fresh,
            energy_kinetic: energy_kin,
            energy_total: energy_kin - pen_total,
            energy_initial,
            iterations,
            residual_l1: fresh_residual,
            steady_residual: steady,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, Geometry};
    use crate::profiles::power_profile;
    use std::f64::consts::PI;

    fn unit_disc(res: f64) -> Arc<DomainGrid> {
        build_domain(Geometry::Disc { center: Point::ZERO, radius: 1.0 }, res).unwrap()
    }

    #[test]
    fn energy_of_zero_field_is_zero() {
        let grid = unit_disc(24.0);
        let op = GreenOperator::new(grid.clone());
        let omega = VorticityField::zeros(grid);
        assert_eq!(energy_kinetic(&op, &omega).unwrap(), 0.0);
    }

    #[test]
    fn energy_bilinear_symmetry() {
        let grid = unit_disc(32.0);
        let op = GreenOperator::new(grid.clone());
        let w1 = VorticityField::new(ScalarField::from_fn(grid.clone(), |p| {
            (-8.0 * (p - Point::new(0.3, 0.0)).norm_sq()).exp()
        }))
        .unwrap();
        let w2 = VorticityField::new(ScalarField::from_fn(grid.clone(), |p| {
            (-6.0 * (p - Point::new(-0.2, 0.1)).norm_sq()).exp()
        }))
        .unwrap();
        let sum = VorticityField::new(ScalarField::from_values(
            grid.clone(),
            w1.values().iter().zip(w2.values()).map(|(a, b)| a + b).collect(),
        ))
        .unwrap();
        let e1 = energy_kinetic(&op, &w1).unwrap();
        let e2 = energy_kinetic(&op, &w2).unwrap();
        let e12 = energy_kinetic(&op, &sum).unwrap();
        let cross = w1.field().dot(&op.apply(w2.field()).unwrap().field);
        assert!(
            ((e12 - e1 - e2) - cross).abs() <= 1e-10 * cross.abs().max(1e-10),
            "quadratic identity off: {} vs {cross}",
            e12 - e1 - e2
        );
        // <w1, G w2> = <w2, G w1>
        let cross_t = w2.field().dot(&op.apply(w1.field()).unwrap().field);
        assert!((cross - cross_t).abs() <= 1e-10 * cross.abs());
        // maximum principle
        assert!(op.apply(w1.field()).unwrap().values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn uniform_patch_energy_matches_free_space_formula() {
        // E = (kappa^2/4pi)(ln(1/b) + 1/4) - kappa^2 H(0)/2 + O(b^2),
        // b = eps sqrt(kappa/pi), H(0) = 0 on the unit disc
        let grid = unit_disc(256.0);
        let op = GreenOperator::new(grid.clone());
        let eps = 0.1f64;
        let b = eps * (1.0 / PI).sqrt();
        let patch =
            VorticityField::uniform_patch(grid, Point::ZERO, b, 1.0, 1e9).unwrap();
        let e = energy_kinetic(&op, &patch).unwrap();
        let want = ((1.0 / b).ln() + 0.25) / (4.0 * PI);
        assert!(
            (e - want).abs() < 0.01 * want,
            "patch energy {e} vs analytic {want}"
        );
    }

    #[test]
    fn penalty_closed_form_and_shift_invariance() {
        let grid = unit_disc(32.0);
        let f = power_profile(1.0).unwrap();
        let eps = 0.1;
        // c on m cells: penalty = (eps^2 c)^2/2 * m h^2 / eps^2
        let c = 3.0;
        let mut values = vec![0.0; grid.n_cells()];
        let mut m = 0;
        for k in 0..grid.n_cells() {
            if grid.cell_center(k).dist(Point::new(0.2, 0.1)) < 0.15 {
                values[k] = c;
                m += 1;
            }
        }
        let omega =
            VorticityField::new(ScalarField::from_values(grid.clone(), values)).unwrap();
        let h2 = grid.spacing() * grid.spacing();
        let want = (eps * eps * c).powi(2) / 2.0 * m as f64 * h2 / (eps * eps);
        let got = penalty(&omega, &f, eps, 1.0).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);

        // whole-cell translation leaves the penalty bitwise unchanged
        let h = grid.spacing();
        let shifted = ScalarField::from_fn(grid.clone(), |p| {
            let q = p - Point::new(5.0 * h, -3.0 * h);
            if q.dist(Point::new(0.2, 0.1)) < 0.15 {
                c
            } else {
                0.0
            }
        });
        let shifted = VorticityField::new(shifted).unwrap();
        assert_eq!(shifted.values().iter().filter(|&&v| v != 0.0).count(), m);
        let got_shifted = penalty(&shifted, &f, eps, 1.0).unwrap();
        assert_eq!(got.to_bits(), got_shifted.to_bits());

        // sign violation is an error
        assert!(penalty(&omega, &f, eps, -1.0).is_err());
        // zero field has zero penalty
        let zero = VorticityField::zeros(grid);
        assert_eq!(penalty(&zero, &f, eps, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mu_solve_constant_field_closed_form() {
        // u = c on a fully masked rectangle, f = s_+: mu = c - eps^2 kappa / A
        let grid =
            build_domain(Geometry::Rectangle { width: 2.0, height: 1.0 }, 32.0).unwrap();
        let f = power_profile(1.0).unwrap();
        let c = 1.7;
        let u = StreamField { field: ScalarField::from_fn(grid.clone(), |_| c) };
        let (eps, lambda, kappa) = (0.3, 50.0, 0.9);
        let area = grid.area();
        let mu = mu_solve(&u, &f, eps, lambda, kappa, None, 1e-12).unwrap();
        let want = c - eps * eps * kappa / area;
        assert!((mu - want).abs() < 1e-9, "{mu} vs {want}");

        // monotonicity in kappa: larger mass -> lower level
        let mu2 = mu_solve(&u, &f, eps, lambda, 2.0 * kappa, None, 1e-12).unwrap();
        assert!(mu2 < mu);

        // infeasible when the cap cannot hold the circulation
        let err = mu_solve(&u, &f, eps, 1.01, 1e9, None, 1e-12).unwrap_err();
        assert!(matches!(err, SolverError::CirculationInfeasible { .. }));
    }

    #[test]
    fn support_stats_basics() {
        let grid = unit_disc(32.0);
        let h = grid.spacing();
        // single cell of mass kappa at p
        let p = Point::new(0.25, -0.125);
        let k0 = grid.locate(p).unwrap();
        let mut values = vec![0.0; grid.n_cells()];
        values[k0] = 2.0;
        let omega =
            VorticityField::new(ScalarField::from_values(grid.clone(), values)).unwrap();
        let stats = support_stats(&omega).unwrap();
        assert!(stats.diameter <= h);
        assert!(stats.center.dist(grid.cell_center(k0)) < 1e-12);

        // uniform patch of radius r: diameter 2r +- 2h, center at patch center
        let r = 0.3;
        let patch =
            VorticityField::uniform_patch(grid.clone(), Point::new(0.1, 0.2), r, 1.0, 1e9)
                .unwrap();
        let stats = support_stats(&patch).unwrap();
        assert!((stats.diameter - 2.0 * r).abs() <= 2.0 * h);
        assert!(stats.center.dist(Point::new(0.1, 0.2)) <= h);

        let zero = VorticityField::zeros(grid);
        assert!(matches!(support_stats(&zero), Err(SolverError::ZeroCirculation)));
    }

    #[test]
    fn patch_measure_counts_capped_cells() {
        let grid = unit_disc(32.0);
        let h2 = grid.spacing() * grid.spacing();
        let cap = 50.0 / (0.1 * 0.1);
        let mut values = vec![0.0; grid.n_cells()];
        for k in 0..7 {
            values[k] = cap;
        }
        assert_eq!(patch_measure_values(&values, cap, h2), 7.0 * h2);
    }

    #[test]
    fn config_validation_rejects_bad_input() {
        let grid = unit_disc(64.0);
        let f = power_profile(1.0).unwrap();
        let mut cfg = SolverConfig::new(0.1, 50.0, 1.0, f.clone());
        assert!(cfg.validate(&grid).is_ok());
        cfg.kappa = 0.0;
        assert!(matches!(cfg.validate(&grid), Err(SolverError::BadConfig(_))));
        cfg.kappa = 1.0;
        cfg.lambda = 0.5;
        assert!(matches!(cfg.validate(&grid), Err(SolverError::BadConfig(_))));
        cfg.lambda = 50.0;
        cfg.epsilon = 0.01; // core spans < 6 cells at res 64
        assert!(matches!(
            cfg.validate(&grid),
            Err(SolverError::ResolutionInadequate { .. })
        ));
    }

    #[test]
    fn fixed_point_solve_plasma_reference() {
        let grid = unit_disc(128.0);
        let op = GreenOperator::new(grid.clone());
        let f = power_profile(1.0).unwrap();
        let cfg = SolverConfig::new(0.1, 50.0, 1.0, f.clone());
        let result = fixed_point_solve(&op, &cfg).unwrap();

        assert!(result.residual_l1 <= cfg.iteration.tol_fixed_point);
        assert_eq!(result.patch_area, 0.0);
        // circulation projected to kappa
        assert!((result.omega.circulation() - 1.0).abs() <= 1e-9);
        // admissible
        assert!(result.omega.admissible(50.0 / 0.01, 1.0));
        // energy ascent from the uniform-patch init
        assert!(result.energy_total >= result.energy_initial);
        // concentration: support within a few eps of the center
        assert!(result.support_diameter <= 8.0 * 0.1, "diam {}", result.support_diameter);
        assert!(result.center.norm() <= 0.1, "center {:?}", result.center);
        // multiplier bound (2-5): mu >= -f^{-1}(Lambda) when no patch part
        assert!(result.mu >= -f.f_inv(50.0));
        // psi = G omega - mu cell-wise
        let u = op.apply(result.omega.field()).unwrap();
        let max_diff = u
            .values()
            .iter()
            .zip(result.psi.values())
            .map(|(a, b)| (a - result.mu - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff == 0.0);
        // first-order conditions in psi units
        let conds = bathtub_conditions(&result, &f);
        assert!(conds.worst() <= 1e-6, "{conds:?}");
    }

    #[test]
    fn fixed_point_small_lambda_leaves_patch() {
        // kappa large enough that the core density exceeds Lambda/eps^2
        let grid = unit_disc(64.0);
        let op = GreenOperator::new(grid.clone());
        let f = power_profile(1.0).unwrap();
        let mut cfg = SolverConfig::new(0.1, 1.05, 10.0, f);
        cfg.iteration.tol_fixed_point = 1e-8;
        let result = fixed_point_solve(&op, &cfg).unwrap();
        assert!(result.patch_area > 0.0, "expected active truncation");
        // escalation clears it
        let (escalated, doublings) = solve_with_escalation(&op, &cfg).unwrap();
        assert!(doublings > 0);
        assert_eq!(escalated.patch_area, 0.0);
    }

    #[test]
    fn steady_residual_radial_vs_offset_pair() {
        let grid = unit_disc(64.0);
        let op = GreenOperator::new(grid.clone());
        // radially symmetric blob about the center: steady by symmetry
        let radial = VorticityField::new(ScalarField::from_fn(grid.clone(), |p| {
            (1.0 - p.norm_sq() / 0.09).max(0.0)
        }))
        .unwrap();
        let r_res = steady_residual(&op, &radial, 25).unwrap();
        // two offset same-sign patches, not an equilibrium
        let pair = VorticityField::new(ScalarField::from_fn(grid.clone(), |p| {
            let a = (1.0 - (p - Point::new(0.35, 0.0)).norm_sq() / 0.01).max(0.0);
            let b = (1.0 - (p + Point::new(0.35, 0.0)).norm_sq() / 0.01).max(0.0);
            a + b
        }))
        .unwrap();
        let p_res = steady_residual(&op, &pair, 25).unwrap();
        assert!(
            r_res < 0.1 * p_res,
            "radial residual {r_res} should be far below pair residual {p_res}"
        );
    }

    #[test]
    fn multi_solve_k1_matches_single_solve() {
        let grid = unit_disc(128.0);
        let op = GreenOperator::new(grid.clone());
        let f = power_profile(1.0).unwrap();
        let cfg = SolverConfig::new(0.1, 50.0, 1.0, f.clone());
        let single = fixed_point_solve(&op, &cfg).unwrap();

        let spec = MultiVortexSpec {
            components: vec![MultiVortexComponent {
                profile: f,
                strength: 1.0,
                center: Point::ZERO,
                ball_radius: 0.6,
            }],
            epsilon: 0.1,
            lambda: 50.0,
        };
        let multi = multi_solve(&op, &spec, &IterationParams::default()).unwrap();
        assert!((multi.components[0].mu - single.mu).abs() <= 1e-6);
        let h2 = grid.spacing() * grid.spacing();
        let l1: f64 = multi
            .omega
            .values()
            .iter()
            .zip(single.omega.values())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * h2;
        assert!(l1 <= 1e-6, "fields differ by {l1} in L1");
    }
}
