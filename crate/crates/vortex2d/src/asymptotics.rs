//! Epsilon sweeps of the solver and validation of the concentration
//! asymptotics: log-slopes of the multiplier and energy, support
//! shrinkage, center convergence, and rescaled-profile convergence.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::domain::{build_domain, DomainError, DomainGrid, GreenOperator};
use crate::geom::Point;
use crate::profiles::{limiting_profile, ProfileError, RadialProfile};
use crate::solver::{
    fixed_point_solve, multi_solve_with_init, solve_with_escalation, IterationParams,
    MultiVortexSpec, SolveResult, SolverConfig, SolverError, SolverInit,
};
use crate::domain::ScalarField;

#[derive(Debug, thiserror::Error)]
pub enum AsymptoticsError {
    #[error("invalid sweep input: {0}")]
    BadInput(String),
    #[error("sweep aborted at epsilon = {epsilon}: {source}")]
    Aborted {
        epsilon: f64,
        #[source]
        source: Box<SolverError>,
        partial: Box<SweepReport>,
    },
    #[error("multi sweep aborted at epsilon = {epsilon}: {source}")]
    MultiAborted {
        epsilon: f64,
        #[source]
        source: Box<SolverError>,
        partial: Box<MultiSweepReport>,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Least-squares line fit y = slope x + intercept with R^2.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FitLine {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> FitLine {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    FitLine { slope, intercept, r2 }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub resolution: f64,
    pub mu: f64,
    pub energy_kinetic: f64,
    pub energy_total: f64,
    pub support_diameter: f64,
    pub center: Point,
    pub patch_area: f64,
    pub iterations: usize,
    pub residual: f64,
    pub profile_l2: f64,
    pub max_psi: f64,
    pub steady_residual: f64,
    pub lambda_doublings: u32,
    pub energy_initial: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepFits {
    pub mu: FitLine,
    pub energy: FitLine,
    /// max over records of (diam/eps) divided by the min.
    pub diam_ratio_max: f64,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct SweepReport {
    /// Sorted by decreasing epsilon.
    pub records: Vec<SweepRecord>,
    /// Present once >= 3 records exist.
    pub fits: Option<SweepFits>,
}

impl SweepReport {
    pub fn compute_fits(&mut self) {
        if self.records.len() < 3 {
            self.fits = None;
            return;
        }
        let x: Vec<f64> = self.records.iter().map(|r| (1.0 / r.epsilon).ln()).collect();
        let mu: Vec<f64> = self.records.iter().map(|r| r.mu).collect();
        let et: Vec<f64> = self.records.iter().map(|r| r.energy_total).collect();
        let ratios: Vec<f64> =
            self.records.iter().map(|r| r.support_diameter / r.epsilon).collect();
        let rmax = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        self.fits = Some(SweepFits {
            mu: least_squares(&x, &mu),
            energy: least_squares(&x, &et),
            diam_ratio_max: rmax / rmin,
        });
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Run every epsilon independently from the configured init instead
    /// of warm-starting from the previous solution.
    pub cold: bool,
    /// Apply the Lambda-escalation rule per record.
    pub escalate: bool,
    /// Compare each record's rescaled vorticity against the limiting
    /// radial profile.
    pub compare_profile: bool,
    /// Worker cap for cold sweeps (warm sweeps are sequential).
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { cold: false, escalate: true, compare_profile: true, jobs: 1 }
    }
}

/// Smallest power-of-two resolution meeting the adequacy rule
/// eps sqrt(kappa/pi) >= 6 h.
pub fn adequate_resolution(epsilon: f64, kappa: f64) -> f64 {
    let needed = 6.0 / (epsilon * (kappa.abs() / std::f64::consts::PI).sqrt());
    let mut res = 16.0;
    while res < needed {
        res *= 2.0;
    }
    res
}

struct GridCache {
    geometry: crate::domain::Geometry,
    backend: crate::domain::GreenBackend,
    ops: BTreeMap<u64, Arc<GreenOperator>>,
}

impl GridCache {
    fn new(op: &GreenOperator) -> Self {
        GridCache {
            geometry: op.grid().geometry().clone(),
            backend: op.backend(),
            ops: BTreeMap::new(),
        }
    }

    fn op_at(&mut self, resolution: f64) -> Result<Arc<GreenOperator>, AsymptoticsError> {
        let key = resolution as u64;
        if let Some(op) = self.ops.get(&key) {
            return Ok(op.clone());
        }
        let grid = build_domain(self.geometry.clone(), resolution)?;
        let op = Arc::new(GreenOperator::with_backend(grid, self.backend)?);
        self.ops.insert(key, op.clone());
        Ok(op)
    }
}

/// Rescale a converged vorticity about its center by the epsilon ratio
/// onto the target grid (the warm-start transfer of the sweep).
fn rescale_omega(
    prev: &SolveResult,
    eps_prev: f64,
    eps_next: f64,
    target: &Arc<DomainGrid>,
) -> ScalarField {
    let s = eps_prev / eps_next;
    let c = prev.center;
    ScalarField::from_fn(target.clone(), |p| {
        let q = c + (p - c) * s;
        (s * s * prev.omega.field().sample(q)).max(0.0)
    })
}

/// Runs the solver per epsilon on refinement-adequate power-of-two grids
/// (warm-starting each run from the previous solution unless cold) and
/// fits the multiplier and energy laws against ln(1/eps).
pub fn epsilon_sweep(
    op: &GreenOperator,
    base: &SolverConfig,
    epsilons: &[f64],
    opts: &SweepOptions,
) -> Result<SweepReport, AsymptoticsError> {
    if epsilons.len() < 3 {
        return Err(AsymptoticsError::BadInput(format!(
            "need >= 3 epsilons, got {}",
            epsilons.len()
        )));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(AsymptoticsError::BadInput("epsilons must be positive".into()));
    }
    let mut eps_sorted = epsilons.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));

    let limit = if opts.compare_profile {
        Some(limiting_profile(&base.profile, base.kappa, 1e-9)?)
    } else {
        None
    };

    let mut cache = GridCache::new(op);
    let mut report = SweepReport::default();

    if opts.cold && opts.jobs > 1 {
        // independent runs; deterministic because results are indexed
        let resolutions: Vec<f64> = eps_sorted
            .iter()
            .map(|&e| adequate_resolution(e, base.kappa))
            .collect();
        let ops: Vec<Arc<GreenOperator>> = resolutions
            .iter()
            .map(|&r| cache.op_at(r))
            .collect::<Result<_, _>>()?;
        let mut slots: Vec<Option<Result<(SolveResult, u32), SolverError>>> =
            (0..eps_sorted.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (i, slot) in slots.iter_mut().enumerate() {
                let eps = eps_sorted[i];
                let op_i = ops[i].clone();
                let mut cfg = base.clone();
                cfg.epsilon = eps;
                let escalate = opts.escalate;
                handles.push(scope.spawn(move || {
                    let out = if escalate {
                        solve_with_escalation(&op_i, &cfg)
                    } else {
                        fixed_point_solve(&op_i, &cfg).map(|r| (r, 0))
                    };
                    *slot = Some(out);
                }));
                if handles.len() >= opts.jobs {
                    handles.drain(..).for_each(|h| h.join().expect("sweep worker"));
                }
            }
            handles.drain(..).for_each(|h| h.join().expect("sweep worker"));
        });
        for (i, slot) in slots.into_iter().enumerate() {
            let eps = eps_sorted[i];
            match slot.expect("filled") {
                Ok((result, doublings)) => {
                    let rec = make_record(eps, resolutions[i], &result, doublings, limit.as_ref())?;
                    report.records.push(rec);
                }
                Err(e) => {
                    report.compute_fits();
                    return Err(AsymptoticsError::Aborted {
                        epsilon: eps,
                        source: Box::new(e),
                        partial: Box::new(report),
                    });
                }
            }
        }
        report.compute_fits();
        return Ok(report);
    }

    let mut prev: Option<(SolveResult, f64)> = None;
    for &eps in &eps_sorted {
        let resolution = adequate_resolution(eps, base.kappa);
        let op_eps = cache.op_at(resolution)?;
        let mut cfg = base.clone();
        cfg.epsilon = eps;
        if !opts.cold {
            if let Some((prev_result, prev_eps)) = &prev {
                cfg.init = SolverInit::UserField;
                cfg.init_field =
                    Some(rescale_omega(prev_result, *prev_eps, eps, op_eps.grid()));
            }
        }
        let solved = if opts.escalate {
            solve_with_escalation(&op_eps, &cfg)
        } else {
            fixed_point_solve(&op_eps, &cfg).map(|r| (r, 0))
        };
        match solved {
            Ok((result, doublings)) => {
                let rec = make_record(eps, resolution, &result, doublings, limit.as_ref())?;
                report.records.push(rec);
                prev = Some((result, eps));
            }
            Err(e) => {
                report.compute_fits();
                return Err(AsymptoticsError::Aborted {
                    epsilon: eps,
                    source: Box::new(e),
                    partial: Box::new(report),
                });
            }
        }
    }
    report.compute_fits();
    Ok(report)
}

fn make_record(
    epsilon: f64,
    resolution: f64,
    result: &SolveResult,
    doublings: u32,
    limit: Option<&RadialProfile>,
) -> Result<SweepRecord, AsymptoticsError> {
    let profile_l2 = match limit {
        Some(l) => profile_compare(result, l)?.rel_l2,
        None => f64::NAN,
    };
    Ok(SweepRecord {
        epsilon,
        resolution,
        mu: result.mu,
        energy_kinetic: result.energy_kinetic,
        energy_total: result.energy_total,
        support_diameter: result.support_diameter,
        center: result.center,
        patch_area: result.patch_area,
        iterations: result.iterations,
        residual: result.residual_l1,
        profile_l2,
        max_psi: result.psi.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        steady_residual: result.steady_residual,
        lambda_doublings: doublings,
        energy_initial: result.energy_initial,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CenterConvergence {
    /// Per-record distance |x_eps - target|, in sweep order.
    pub distances: Vec<f64>,
    pub nonincreasing: bool,
    pub final_within_3eps: bool,
}

/// Distances of the sweep centers to the expected limit point.
pub fn center_convergence(report: &SweepReport, target: Point) -> CenterConvergence {
    let distances: Vec<f64> =
        report.records.iter().map(|r| r.center.dist(target)).collect();
    let nonincreasing = distances.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let final_within_3eps = report
        .records
        .last()
        .map(|r| r.center.dist(target) <= 3.0 * r.epsilon)
        .unwrap_or(false);
    CenterConvergence { distances, nonincreasing, final_within_3eps }
}

#[derive(Debug, Clone)]
pub struct ProfileComparison {
    /// Relative L2 distance between the binned rescaled vorticity and
    /// f(U(.)) over [0, 1.5 support_radius], radial measure r dr.
    pub rel_l2: f64,
    /// (r_mid, binned zeta, f(U(r_mid))).
    pub bins: Vec<(f64, f64, f64)>,
}

/// Rescales omega to the core frame zeta(x) = eps^2 omega(x_eps + eps x),
/// bins radially, and compares with the limiting profile f(U(.)).
pub fn profile_compare(
    result: &SolveResult,
    limit: &RadialProfile,
) -> Result<ProfileComparison, AsymptoticsError> {
    let grid = result.omega.grid();
    let h = grid.spacing();
    let eps = result.epsilon;
    let e2 = eps * eps;
    let center = result.center;
    let rho = limit.support_radius;
    let r_max = 1.5 * rho;

    if result.omega.values().iter().all(|&v| v == 0.0) {
        return Err(AsymptoticsError::BadInput("empty support".into()));
    }

    // bins at least two cells wide in the rescaled radial coordinate
    let n_bins = ((r_max * eps / h / 2.0).floor() as usize).clamp(8, 64);
    let dr = r_max / n_bins as f64;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];

    // iterate the bounding box of the physical core window
    let lo_x = center.x - r_max * eps;
    let hi_x = center.x + r_max * eps;
    let lo_y = center.y - r_max * eps;
    let hi_y = center.y + r_max * eps;
    let (nx, ny) = grid.shape();
    let i0 = (((lo_x - grid.origin().x) / h).floor().max(0.0)) as usize;
    let i1 = ((((hi_x - grid.origin().x) / h).ceil()).max(0.0) as usize).min(nx - 1);
    let j0 = (((lo_y - grid.origin().y) / h).floor().max(0.0)) as usize;
    let j1 = ((((hi_y - grid.origin().y) / h).ceil()).max(0.0) as usize).min(ny - 1);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let Some(k) = grid.cell_index(i, j) else { continue };
            let r = grid.cell_center(k).dist(center) / eps;
            if r >= r_max {
                continue;
            }
            let bin = ((r / dr) as usize).min(n_bins - 1);
            sums[bin] += e2 * result.omega.values()[k];
            counts[bin] += 1;
        }
    }

    let mut bins = Vec::with_capacity(n_bins);
    let mut num = 0.0;
    let mut den = 0.0;
    for b in 0..n_bins {
        if counts[b] == 0 {
            continue;
        }
        let r_mid = (b as f64 + 0.5) * dr;
        let zeta = sums[b] / counts[b] as f64;
        let fu = if r_mid < rho {
            limit.samples[((r_mid / rho * (limit.samples.len() - 1) as f64).round() as usize)
                .min(limit.samples.len() - 1)]
            .2
        } else {
            0.0
        };
        let w = r_mid * dr;
        num += w * (zeta - fu) * (zeta - fu);
        den += w * fu * fu;
        bins.push((r_mid, zeta, fu));
    }
    if den == 0.0 {
        return Err(AsymptoticsError::BadInput("degenerate limit profile".into()));
    }
    Ok(ProfileComparison { rel_l2: (num / den).sqrt(), bins })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MultiSweepRecord {
    pub epsilon: f64,
    pub resolution: f64,
    pub mus: Vec<f64>,
    pub centers: Vec<Point>,
    pub diameters: Vec<f64>,
    pub patch_areas: Vec<f64>,
    pub component_energies: Vec<f64>,
    pub energy_kinetic: f64,
    pub energy_total: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct MultiSweepReport {
    pub records: Vec<MultiSweepRecord>,
    /// Per-component fits of mu_i against ln(1/eps).
    pub mu_fits: Vec<FitLine>,
    /// Fit of the total functional against ln(1/eps).
    pub energy_fit: Option<FitLine>,
}

impl MultiSweepReport {
    fn compute_fits(&mut self, k: usize) {
        self.mu_fits.clear();
        self.energy_fit = None;
        if self.records.len() < 3 {
            return;
        }
        let x: Vec<f64> = self.records.iter().map(|r| (1.0 / r.epsilon).ln()).collect();
        for i in 0..k {
            let y: Vec<f64> = self.records.iter().map(|r| r.mus[i]).collect();
            self.mu_fits.push(least_squares(&x, &y));
        }
        let et: Vec<f64> = self.records.iter().map(|r| r.energy_total).collect();
        self.energy_fit = Some(least_squares(&x, &et));
    }
}

/// Multi-vortex epsilon sweep; per-record resolution meets the adequacy
/// rule for every component, warm-starting component fields across eps.
pub fn epsilon_sweep_multi(
    op: &GreenOperator,
    spec: &MultiVortexSpec,
    params: &IterationParams,
    epsilons: &[f64],
    opts: &SweepOptions,
) -> Result<MultiSweepReport, AsymptoticsError> {
    if epsilons.len() < 3 {
        return Err(AsymptoticsError::BadInput(format!(
            "need >= 3 epsilons, got {}",
            epsilons.len()
        )));
    }
    let mut eps_sorted = epsilons.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    let k = spec.components.len();

    let mut cache = GridCache::new(op);
    let mut report = MultiSweepReport::default();
    let mut prev: Option<(crate::solver::MultiSolveResult, f64)> = None;

    for &eps in &eps_sorted {
        let resolution = spec
            .components
            .iter()
            .map(|c| adequate_resolution(eps, c.strength.abs()))
            .fold(16.0, f64::max);
        let op_eps = cache.op_at(resolution)?;
        let mut spec_eps = spec.clone();
        spec_eps.epsilon = eps;

        let init: Option<Vec<ScalarField>> = match (&prev, opts.cold) {
            (Some((prev_result, prev_eps)), false) => {
                let s = prev_eps / eps;
                Some(
                    prev_result
                        .components
                        .iter()
                        .map(|c| {
                            let cen = c.center;
                            let field = c.omega.field().clone();
                            ScalarField::from_fn(op_eps.grid().clone(), move |p| {
                                let q = cen + (p - cen) * s;
                                s * s * field.sample(q)
                            })
                        })
                        .collect(),
                )
            }
            _ => None,
        };

        match multi_solve_with_init(&op_eps, &spec_eps, params, init.as_deref()) {
            Ok(result) => {
                report.records.push(MultiSweepRecord {
                    epsilon: eps,
                    resolution,
                    mus: result.components.iter().map(|c| c.mu).collect(),
                    centers: result.components.iter().map(|c| c.center).collect(),
                    diameters: result.components.iter().map(|c| c.support_diameter).collect(),
                    patch_areas: result.components.iter().map(|c| c.patch_area).collect(),
                    component_energies: result
                        .components
                        .iter()
                        .map(|c| c.energy_component)
                        .collect(),
                    energy_kinetic: result.energy_kinetic,
                    energy_total: result.energy_total,
                    iterations: result.iterations,
                    residual: result.residual_l1,
                });
                prev = Some((result, eps));
            }
            Err(e) => {
                report.compute_fits(k);
                return Err(AsymptoticsError::MultiAborted {
                    epsilon: eps,
                    source: Box::new(e),
                    partial: Box::new(report),
                });
            }
        }
    }
    report.compute_fits(k);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use crate::profiles::power_profile;

    #[test]
    fn least_squares_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let fit = least_squares(&x, &y);
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adequate_resolution_is_power_of_two_and_adequate() {
        for (eps, kappa) in [(0.2, 1.0), (0.1, 1.0), (0.05, 1.0), (0.025, 1.0), (0.1, 2.5)] {
            let res: f64 = adequate_resolution(eps, kappa);
            assert_eq!(res.log2().fract(), 0.0, "not a power of two: {res}");
            let h = 1.0 / res;
            assert!(eps * (kappa / std::f64::consts::PI).sqrt() >= 6.0 * h);
            assert!(eps * (kappa / std::f64::consts::PI).sqrt() < 12.0 * h + 1e-12);
        }
    }

    #[test]
    fn manufactured_field_compares_to_its_own_profile() {
        // omega = eps^-2 f(U((x - c)/eps)) must match the limit closely
        let f = power_profile(1.0).unwrap();
        let limit = limiting_profile(&f, 1.0, 1e-10).unwrap();
        let eps = 0.1;
        let grid = build_domain(
            Geometry::Disc { center: Point::ZERO, radius: 1.0 },
            128.0,
        )
        .unwrap();
        let op = GreenOperator::new(grid.clone());
        let c = Point::new(0.05, -0.02);
        let lim = limit.clone();
        let field = ScalarField::from_fn(grid.clone(), move |p| {
            let r = p.dist(c) / eps;
            if r < lim.support_radius {
                f.f(lim.eval(r)) / (eps * eps)
            } else {
                0.0
            }
        });
        let omega = crate::solver::VorticityField::new(field).unwrap();
        let stats = crate::solver::support_stats(&omega).unwrap();
        let result = SolveResult {
            psi: op.apply(omega.field()).unwrap(),
            omega,
            mu: 0.0,
            energy_kinetic: 0.0,
            energy_penalty: 0.0,
            energy_total: 0.0,
            energy_initial: 0.0,
            iterations: 0,
            residual_l1: 0.0,
            patch_area: 0.0,
            support_diameter: stats.diameter,
            center: stats.center,
            steady_residual: 0.0,
            epsilon: eps,
            lambda: 50.0,
        };
        let cmp = profile_compare(&result, &limit).unwrap();
        assert!(cmp.rel_l2 <= 0.05, "self comparison error {}", cmp.rel_l2);
        // binned zeta radially nonincreasing within 5% of the peak
        let peak = cmp.bins.iter().map(|b| b.1).fold(0.0, f64::max);
        let mut prev = f64::INFINITY;
        for &(_, z, _) in &cmp.bins {
            assert!(z <= prev + 0.05 * peak, "binned profile not monotone");
            prev = z;
        }
    }

    #[test]
    fn sweep_rejects_short_epsilon_lists() {
        let grid = build_domain(
            Geometry::Disc { center: Point::ZERO, radius: 1.0 },
            64.0,
        )
        .unwrap();
        let op = GreenOperator::new(grid);
        let cfg = SolverConfig::new(0.1, 50.0, 1.0, power_profile(1.0).unwrap());
        let err = epsilon_sweep(&op, &cfg, &[0.2, 0.1], &SweepOptions::default());
        assert!(matches!(err, Err(AsymptoticsError::BadInput(_))));
    }
}
