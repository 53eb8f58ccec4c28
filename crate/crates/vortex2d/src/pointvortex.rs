//! Point-vortex dynamics: the Kirchhoff-Routh system integrated with
//! classical RK4, its Hamiltonian structure, and the equilibrium <->
//! critical-point correspondence.

use crate::domain::{DomainError, GreenOperator};
use crate::geom::Point;
use crate::landscape::{kirchhoff_routh, LandscapeError, VortexConfiguration};

#[derive(Debug, thiserror::Error)]
pub enum PvError {
    #[error("invalid time stepping: dt = {dt}, horizon = {t_end}")]
    BadStepping { dt: f64, t_end: f64 },
    #[error("vortices closer than the collision guard at t = {t}")]
    Collision { t: f64, partial: Trajectory },
    #[error("vortex left the domain (or its guard band) at t = {t}")]
    BoundaryExit { t: f64, partial: Trajectory },
    #[error("sign-convention self-test failed: W drift {drift:e} over 100 steps")]
    ConventionSelfTest { drift: f64 },
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Snapshot of the point-vortex system.
#[derive(Debug, Clone)]
pub struct PointVortexState {
    pub configuration: VortexConfiguration,
    pub time: f64,
}

impl PointVortexState {
    pub fn new(configuration: VortexConfiguration) -> Self {
        PointVortexState { configuration, time: 0.0 }
    }
}

/// Sampled trajectory with the Kirchhoff-Routh Hamiltonian per sample.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
    pub hamiltonian: Vec<f64>,
}

impl Trajectory {
    pub fn last_state(&self, strengths: &[f64]) -> Option<PointVortexState> {
        let pts = self.positions.last()?.clone();
        let cfg = VortexConfiguration::new(pts, strengths.to_vec()).ok()?;
        Some(PointVortexState { configuration: cfg, time: *self.times.last()? })
    }
}

fn collision_guard(op: &GreenOperator) -> f64 {
    1e-6 * op.grid().diameter()
}

fn check_state(op: &GreenOperator, pts: &[Point], t: f64) -> Result<(), GuardHit> {
    let guard = collision_guard(op);
    for (i, p) in pts.iter().enumerate() {
        if !op.grid().contains(*p) || op.grid().boundary_distance(*p) < guard {
            return Err(GuardHit::Boundary(t));
        }
        for q in pts.iter().skip(i + 1) {
            if p.dist(*q) < guard {
                return Err(GuardHit::Collision(t));
            }
        }
    }
    Ok(())
}

enum GuardHit {
    Collision(f64),
    Boundary(f64),
}

fn velocity_raw(
    op: &GreenOperator,
    pts: &[Point],
    strengths: &[f64],
) -> Result<Vec<Point>, PvError> {
    let k = pts.len();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        // dx_i/dt = -kappa_i (d1 h(x_i, x_i))^perp
        //           + sum_{j != i} kappa_j (d1 G(x_i, x_j))^perp
        let mut v = op.grad1_regular(pts[i], pts[i])?.perp() * (-strengths[i]);
        for j in 0..k {
            if j == i {
                continue;
            }
            v = v + op.grad1_green(pts[i], pts[j])?.perp() * strengths[j];
        }
        out.push(v);
    }
    Ok(out)
}

/// Right-hand side of the point-vortex system at the given state.
pub fn pv_velocity(op: &GreenOperator, state: &PointVortexState) -> Result<Vec<Point>, PvError> {
    let pts = &state.configuration.points;
    match check_state(op, pts, state.time) {
        Ok(()) => {}
        Err(GuardHit::Collision(t)) => {
            return Err(PvError::Collision { t, partial: Trajectory::default() })
        }
        Err(GuardHit::Boundary(t)) => {
            return Err(PvError::BoundaryExit { t, partial: Trajectory::default() })
        }
    }
    velocity_raw(op, pts, &state.configuration.strengths)
}

/// Maximum vortex speed; zero exactly at critical points of W_k.
pub fn equilibrium_residual(
    op: &GreenOperator,
    state: &PointVortexState,
) -> Result<f64, PvError> {
    Ok(pv_velocity(op, state)?
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max))
}

/// Classical fixed-step RK4 over the horizon; records every
/// `sample_stride`-th step (and always the final one) together with W_k.
/// A collision or boundary exit aborts with the partial trajectory.
pub fn pv_integrate(
    op: &GreenOperator,
    state: &PointVortexState,
    dt: f64,
    t_end: f64,
    sample_stride: usize,
) -> Result<Trajectory, PvError> {
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(PvError::BadStepping { dt, t_end });
    }
    let stride = sample_stride.max(1);
    let strengths = state.configuration.strengths.clone();
    let n_steps = (t_end / dt).round() as usize;

    let mut traj = Trajectory::default();
    let mut pts = state.configuration.points.clone();
    let mut t = state.time;

    let record = |traj: &mut Trajectory, t: f64, pts: &[Point]| -> Result<(), PvError> {
        let cfg = VortexConfiguration::new(pts.to_vec(), strengths.clone())?;
        traj.times.push(t);
        traj.positions.push(pts.to_vec());
        traj.hamiltonian.push(kirchhoff_routh(op, &cfg)?);
        Ok(())
    };

    let abort = |hit: GuardHit, partial: Trajectory| match hit {
        GuardHit::Collision(t) => PvError::Collision { t, partial },
        GuardHit::Boundary(t) => PvError::BoundaryExit { t, partial },
    };

    if let Err(hit) = check_state(op, &pts, t) {
        return Err(abort(hit, traj));
    }
    record(&mut traj, t, &pts)?;

    for step in 1..=n_steps {
        let k1 = velocity_raw(op, &pts, &strengths)?;
        let mid1: Vec<Point> = pts.iter().zip(&k1).map(|(p, v)| *p + *v * (dt / 2.0)).collect();
        if let Err(hit) = check_state(op, &mid1, t + dt / 2.0) {
            return Err(abort(hit, traj));
        }
        let k2 = velocity_raw(op, &mid1, &strengths)?;
        let mid2: Vec<Point> = pts.iter().zip(&k2).map(|(p, v)| *p + *v * (dt / 2.0)).collect();
        if let Err(hit) = check_state(op, &mid2, t + dt / 2.0) {
            return Err(abort(hit, traj));
        }
        let k3 = velocity_raw(op, &mid2, &strengths)?;
        let end: Vec<Point> = pts.iter().zip(&k3).map(|(p, v)| *p + *v * dt).collect();
        if let Err(hit) = check_state(op, &end, t + dt) {
            return Err(abort(hit, traj));
        }
        let k4 = velocity_raw(op, &end, &strengths)?;
        for i in 0..pts.len() {
            pts[i] = pts[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        t = state.time + step as f64 * dt;
        if let Err(hit) = check_state(op, &pts, t) {
            return Err(abort(hit, traj));
        }
        if step % stride == 0 || step == n_steps {
            record(&mut traj, t, &pts)?;
        }
    }
    Ok(traj)
}

/// Validates the slot convention for the diagonal gradient of h by
/// integrating a fixed two-vortex state for 100 steps and requiring the
/// Hamiltonian drift to stay at the RK4 roundoff level. With the wrong
/// convention the drift is orders of magnitude larger.
pub fn convention_self_test(op: &GreenOperator) -> Result<(), PvError> {
    let grid = op.grid();
    let diam = grid.diameter();
    // two interior points well away from the boundary
    let centroid = {
        let n = grid.n_cells();
        let mut c = Point::ZERO;
        for k in 0..n {
            c = c + grid.cell_center(k);
        }
        c / n as f64
    };
    let offset = Point::new(0.93, 0.37) * (0.12 * diam / (0.93f64.hypot(0.37)));
    let pts = vec![centroid + offset, centroid - offset * 0.8];
    for p in &pts {
        if grid.boundary_distance(*p) < 0.05 * diam {
            return Ok(()); // domain too thin for the canned test geometry
        }
    }
    let cfg = VortexConfiguration::new(pts, vec![1.0, -1.3])?;
    let state = PointVortexState::new(cfg);
    let dt = 1e-3 * diam;
    let traj = pv_integrate(op, &state, dt, 100.0 * dt, 100)?;
    let drift = (traj.hamiltonian.last().unwrap() - traj.hamiltonian[0]).abs();
    let scale = traj.hamiltonian[0].abs().max(1.0);
    if drift > 1e-9 * scale {
        return Err(PvError::ConventionSelfTest { drift });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, Geometry};
    use crate::landscape::{kr_grad, kr_minimize, KrInit, KrMinimizeOptions};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn disc_op(res: f64) -> GreenOperator {
        let grid: Arc<_> =
            build_domain(Geometry::Disc { center: Point::ZERO, radius: 1.0 }, res).unwrap();
        GreenOperator::new(grid)
    }

    #[test]
    fn single_vortex_center_is_steady() {
        let op = disc_op(32.0);
        let cfg = VortexConfiguration::new(vec![Point::ZERO], vec![1.0]).unwrap();
        let v = pv_velocity(&op, &PointVortexState::new(cfg)).unwrap();
        assert!(v[0].norm() < 1e-14);
    }

    #[test]
    fn single_vortex_speed_matches_images_formula() {
        let op = disc_op(32.0);
        let x = Point::new(0.5, 0.0);
        let cfg = VortexConfiguration::new(vec![x], vec![1.0]).unwrap();
        let v = pv_velocity(&op, &PointVortexState::new(cfg)).unwrap()[0];
        // |v| = |d1 h(x, x)| = (1/2pi) |x| / (1 - |x|^2)
        let want = 0.5 / (2.0 * PI * 0.75);
        assert!((v.norm() - want).abs() < 1e-12, "{} vs {want}", v.norm());
        assert!((want - 0.1061).abs() < 1e-4);
        // tangential: perpendicular to the radius
        assert!(v.dot(x).abs() < 1e-14);
    }

    #[test]
    fn velocity_gradient_identity() {
        // v_i = -(1/(2 kappa_i)) (grad_i W_k)^perp
        let op = disc_op(32.0);
        let cfg = VortexConfiguration::new(
            vec![Point::new(0.4, 0.1), Point::new(-0.3, -0.2), Point::new(0.1, 0.5)],
            vec![1.0, -0.7, 1.3],
        )
        .unwrap();
        let v = pv_velocity(&op, &PointVortexState::new(cfg.clone())).unwrap();
        let g = kr_grad(&op, &cfg).unwrap();
        for i in 0..3 {
            let want = g[i].perp() * (-1.0 / (2.0 * cfg.strengths[i]));
            assert!(
                (v[i] - want).norm() <= 1e-8 * want.norm().max(1.0),
                "component {i}: {:?} vs {:?}",
                v[i],
                want
            );
        }
    }

    #[test]
    fn single_vortex_orbit_conserves_radius() {
        let op = disc_op(32.0);
        let cfg = VortexConfiguration::new(vec![Point::new(0.5, 0.0)], vec![1.0]).unwrap();
        // speed (1/2pi) r/(1-r^2) at r = 0.5 -> period 2 pi r / speed
        let speed = 0.5 / (2.0 * PI * 0.75);
        let period = 2.0 * PI * 0.5 / speed;
        let traj =
            pv_integrate(&op, &PointVortexState::new(cfg), 1e-3, period, 50).unwrap();
        for pts in &traj.positions {
            assert!((pts[0].norm() - 0.5).abs() < 1e-6);
        }
        // roughly one full revolution
        let last = *traj.positions.last().unwrap().first().unwrap();
        assert!((last - Point::new(0.5, 0.0)).norm() < 1e-2);
    }

    #[test]
    fn critical_pair_is_equilibrium_of_the_flow() {
        let op = disc_op(64.0);
        let a = (5f64.sqrt() - 2.0).sqrt();
        let cfg = VortexConfiguration::new(
            vec![Point::new(a, 0.0), Point::new(-a, 0.0)],
            vec![1.0, -1.0],
        )
        .unwrap();
        let traj = pv_integrate(&op, &PointVortexState::new(cfg.clone()), 1e-2, 10.0, 100)
            .unwrap();
        let last = traj.positions.last().unwrap();
        for (p, q) in last.iter().zip(&cfg.points) {
            assert!(p.dist(*q) <= 1e-5, "drifted {}", p.dist(*q));
        }
    }

    #[test]
    fn kr_minimize_output_has_small_equilibrium_residual() {
        let op = disc_op(64.0);
        let rep = kr_minimize(
            &op,
            &[1.0, -1.0],
            KrInit::Multistart { seed: 1 },
            &KrMinimizeOptions::default(),
        )
        .unwrap();
        let state = PointVortexState::new(rep.configuration.clone());
        let res = equilibrium_residual(&op, &state).unwrap();
        let bound = rep.grad_norm.max(1e-8) / (2.0 * 1.0);
        assert!(res <= bound * (1.0 + 1e-9), "residual {res} vs bound {bound}");
        // off-center single vortex is not steady
        let off = VortexConfiguration::new(vec![Point::new(0.3, 0.0)], vec![1.0]).unwrap();
        assert!(equilibrium_residual(&op, &PointVortexState::new(off)).unwrap() > 1e-3);
    }

    #[test]
    fn hamiltonian_drift_scales_as_dt4() {
        let op = disc_op(32.0);
        let cfg = VortexConfiguration::new(
            vec![Point::new(0.4, 0.0), Point::new(-0.35, 0.15), Point::new(0.05, -0.45)],
            vec![1.0, 0.8, -1.2],
        )
        .unwrap();
        let state = PointVortexState::new(cfg);
        let drift = |dt: f64| {
            let traj = pv_integrate(&op, &state, dt, 2.0, 1000000).unwrap();
            (traj.hamiltonian.last().unwrap() - traj.hamiltonian[0]).abs()
        };
        let d1 = drift(0.02);
        let d2 = drift(0.01);
        let ratio = d1 / d2;
        assert!(
            (8.0..32.0).contains(&ratio),
            "RK4 drift ratio {ratio} (d1 = {d1:e}, d2 = {d2:e})"
        );
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let op = disc_op(32.0);
        let cfg = VortexConfiguration::new(
            vec![Point::new(0.4, 0.0), Point::new(-0.35, 0.15), Point::new(0.05, -0.45)],
            vec![1.0, 0.8, -1.2],
        )
        .unwrap();
        let state = PointVortexState::new(cfg.clone());
        let dt = 5e-3;
        let t_end = 1.0;
        let fwd = pv_integrate(&op, &state, dt, t_end, 1000000).unwrap();
        // one-way positional error estimated by step halving
        let fine = pv_integrate(&op, &state, dt / 2.0, t_end, 1000000).unwrap();
        let one_way: f64 = fwd
            .positions
            .last()
            .unwrap()
            .iter()
            .zip(fine.positions.last().unwrap())
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        // reverse by negating strengths (the flow field flips sign)
        let back_cfg = VortexConfiguration::new(
            fwd.positions.last().unwrap().clone(),
            cfg.strengths.iter().map(|k| -k).collect(),
        )
        .unwrap();
        let back =
            pv_integrate(&op, &PointVortexState::new(back_cfg), dt, t_end, 1000000).unwrap();
        let err: f64 = back
            .positions
            .last()
            .unwrap()
            .iter()
            .zip(&cfg.points)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        assert!(
            err <= 10.0 * one_way.max(1e-12),
            "reversal error {err:e} vs one-way {one_way:e}"
        );
    }

    #[test]
    fn collision_and_boundary_guards_fire() {
        let op = disc_op(32.0);
        // co-rotating tight pair spirals are stable, so instead aim a
        // vortex straight at its negative mirror image near the boundary:
        // close same-sign pair stays put but a point almost on the
        // boundary trips the boundary guard
        let cfg = VortexConfiguration::new(vec![Point::new(0.9999999, 0.0)], vec![1.0])
            .unwrap();
        let err = pv_velocity(&op, &PointVortexState::new(cfg)).unwrap_err();
        assert!(matches!(err, PvError::BoundaryExit { .. }));

        let cfg = VortexConfiguration::new(
            vec![Point::new(0.1, 0.0), Point::new(0.1 + 1e-7, 0.0)],
            vec![1.0, 1.0],
        )
        .unwrap();
        let err = pv_velocity(&op, &PointVortexState::new(cfg)).unwrap_err();
        assert!(matches!(err, PvError::Collision { .. }));
    }

    #[test]
    fn sign_convention_self_test_passes() {
        let op = disc_op(32.0);
        convention_self_test(&op).unwrap();
    }
}
