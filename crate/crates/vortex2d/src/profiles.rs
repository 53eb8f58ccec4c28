//! Profile nonlinearities f with their inverse and primitive, numerical
//! hypothesis checks, and the limiting radial core profile obtained by
//! shooting on -U'' - U'/r = f(U).

use std::fmt;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("power profile requires p > 0, got {0}")]
    BadExponent(f64),
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("profile does not compactify: no zero crossing within r <= {0:e}")]
    NoCompactSupport(f64),
    #[error("shooting bracket expansion exhausted after {0} doublings")]
    BracketExhausted(u32),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The nonlinearity f with inverse on [0, inf) (zero on the negative
/// axis), primitive F of the inverse, and the constants of (H2)/(H2)'.
#[derive(Clone)]
pub struct ProfileFunction {
    f: ScalarFn,
    f_inv: ScalarFn,
    big_f: ScalarFn,
    pub delta0: f64,
    pub delta1: f64,
    pub label: String,
}

impl fmt::Debug for ProfileFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ProfileFunction")
            .field("label", &self.label)
            .field("delta0", &self.delta0)
            .field("delta1", &self.delta1)
            .finish()
    }
}

impl ProfileFunction {
    pub fn f(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    pub fn f_inv(&self, s: f64) -> f64 {
        (self.f_inv)(s)
    }

    /// F(s) = integral of f^{-1} from 0 to s.
    pub fn big_f(&self, s: f64) -> f64 {
        (self.big_f)(s)
    }

    pub fn from_callables(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        big_f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        delta0: f64,
        delta1: f64,
        label: impl Into<String>,
    ) -> Self {
        ProfileFunction {
            f: Arc::new(f),
            f_inv: Arc::new(f_inv),
            big_f: Arc::new(big_f),
            delta0,
            delta1,
            label: label.into(),
        }
    }
}

/// f(s) = max(s, 0)^p. Satisfies (H1)-(H3) for every p > 0 with
/// delta0 = 1/(p+1) and delta1 = p/(p+1).
pub fn power_profile(p: f64) -> Result<ProfileFunction, ProfileError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(ProfileError::BadExponent(p));
    }
    let q = 1.0 / p;
    let expo = 1.0 + q;
    Ok(ProfileFunction::from_callables(
        move |s: f64| if s <= 0.0 { 0.0 } else { s.powf(p) },
        move |s: f64| if s <= 0.0 { 0.0 } else { s.powf(q) },
        move |s: f64| if s <= 0.0 { 0.0 } else { s.powf(expo) / expo },
        1.0 / (p + 1.0),
        p / (p + 1.0),
        format!("power(p={p})"),
    ))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisCheck {
    pub passed: bool,
    /// First sample where the inequality failed, with the two sides.
    pub counterexample: Option<(f64, f64, f64)>,
}

impl HypothesisCheck {
    fn pass() -> Self {
        HypothesisCheck { passed: true, counterexample: None }
    }

    fn fail(s: f64, lhs: f64, rhs: f64) -> Self {
        HypothesisCheck { passed: false, counterexample: Some((s, lhs, rhs)) }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisReport {
    pub h1: HypothesisCheck,
    pub h2: HypothesisCheck,
    pub h2_prime: HypothesisCheck,
    /// One check per requested decay rate tau.
    pub h3: Vec<(f64, HypothesisCheck)>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.h1.passed
            && self.h2.passed
            && self.h2_prime.passed
            && self.h3.iter().all(|(_, c)| c.passed)
    }
}

/// Samples the hypotheses (H1), (H2) with the stored delta0, (H2)' with
/// delta1, and the (H3) decay of f(s) e^{-tau s} over the top decade of
/// samples. A failed hypothesis is a report entry, not an error.
pub fn check_hypotheses(
    f: &ProfileFunction,
    s_max: f64,
    n: usize,
    taus: &[f64],
) -> Result<HypothesisReport, ProfileError> {
    if !(s_max > 0.0) {
        return Err(ProfileError::BadArgument(format!("s_max = {s_max}")));
    }
    if n < 100 {
        return Err(ProfileError::BadArgument(format!("n = {n}, need >= 100")));
    }

    let ds = s_max / n as f64;
    let samples: Vec<f64> = (1..=n).map(|i| i as f64 * ds).collect();

    // (H1): vanishing on the negative axis, strict monotonicity on samples.
    let mut h1 = HypothesisCheck::pass();
    for s in [-1.0, -1e-6, 0.0] {
        let v = f.f(s);
        if v != 0.0 {
            h1 = HypothesisCheck::fail(s, v, 0.0);
            break;
        }
    }
    if h1.passed {
        let mut prev = 0.0;
        for &s in &samples {
            let v = f.f(s);
            if !(v > prev) {
                h1 = HypothesisCheck::fail(s, v, prev);
                break;
            }
            prev = v;
        }
    }

    // (H2): cumulative Simpson of f against delta0 * f(s) * s.
    let mut h2 = HypothesisCheck::pass();
    let mut integral = 0.0;
    let mut prev_s = 0.0;
    for &s in &samples {
        let mid = 0.5 * (prev_s + s);
        integral += (s - prev_s) / 6.0 * (f.f(prev_s) + 4.0 * f.f(mid) + f.f(s));
        let bound = f.delta0 * f.f(s) * s;
        if integral > bound + 1e-9 * bound.abs().max(1.0) {
            h2 = HypothesisCheck::fail(s, integral, bound);
            break;
        }
        prev_s = s;
    }

    // (H2)': F(s) >= delta1 * s * f^{-1}(s).
    let mut h2_prime = HypothesisCheck::pass();
    for &s in &samples {
        let lhs = f.big_f(s);
        let rhs = f.delta1 * s * f.f_inv(s);
        if lhs < rhs - 1e-9 * rhs.abs().max(1.0) {
            h2_prime = HypothesisCheck::fail(s, lhs, rhs);
            break;
        }
    }

    // (H3): f(s) e^{-tau s} decreasing over the top decade of samples.
    let top: Vec<f64> = samples.iter().cloned().filter(|&s| s >= 0.9 * s_max).collect();
    let h3 = taus
        .iter()
        .map(|&tau| {
            let mut check = HypothesisCheck::pass();
            let mut prev: Option<(f64, f64)> = None;
            for &s in &top {
                let g = f.f(s) * (-tau * s).exp();
                if let Some((ps, pg)) = prev {
                    if g > pg * (1.0 + 1e-12) + 1e-300 {
                        check = HypothesisCheck::fail(s, g, pg);
                        let _ = ps;
                        break;
                    }
                }
                prev = Some((s, g));
            }
            (tau, check)
        })
        .collect();

    Ok(HypothesisReport { h1, h2, h2_prime, h3 })
}

/// Radial solution of -Laplace U = f(U) with total mass kappa: the
/// blow-up shape of the vortex core.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub kappa: f64,
    /// U(0).
    pub peak: f64,
    /// First zero crossing of U.
    pub support_radius: f64,
    /// (r, U(r), f(U(r))) on a uniform grid over [0, support_radius].
    pub samples: Vec<(f64, f64, f64)>,
    /// Sampled monotonicity of the shooting mass map a -> m(a); false
    /// flags a detected non-monotonicity (reported, not resolved).
    pub mass_map_monotone: bool,
    knots: Vec<Knot>,
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    r: f64,
    u: f64,
    v: f64, // U'
}

impl RadialProfile {
    /// U(r) by cubic Hermite interpolation of the shooting knots;
    /// harmonic continuation -m/(2 pi) ln(r/rho) outside the support.
    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.support_radius {
            return -self.kappa / (2.0 * std::f64::consts::PI) * (r / self.support_radius).ln();
        }
        let knots = &self.knots;
        if r <= knots[0].r {
            // series around the origin
            return self.peak - 0.25 * self.f_at_peak() * r * r;
        }
        let mut lo = 0;
        let mut hi = knots.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if knots[mid].r <= r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hermite(&knots[lo], &knots[hi], r).0
    }

    fn f_at_peak(&self) -> f64 {
        // f(U(0)) is the first sample's third component
        self.samples.first().map(|s| s.2).unwrap_or(0.0)
    }

    /// Boundary-flux mass -2 pi rho U'(rho).
    pub fn mass(&self) -> f64 {
        let last = self.knots.last().expect("profile has knots");
        -2.0 * std::f64::consts::PI * last.r * last.v
    }
}

fn hermite(a: &Knot, b: &Knot, r: f64) -> (f64, f64) {
    let dt = b.r - a.r;
    let t = (r - a.r) / dt;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let u = h00 * a.u + h10 * dt * a.v + h01 * b.u + h11 * dt * b.v;
    // derivative of the basis in r
    let d00 = (6.0 * t2 - 6.0 * t) / dt;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / dt;
    let d11 = 3.0 * t2 - 2.0 * t;
    let v = d00 * a.u + d10 * a.v + d01 * b.u + d11 * b.v;
    (u, v)
}

const R_MAX: f64 = 1e6;

/// One shot: integrate U'' + U'/r + f(U) = 0 from U(0) = a until the first
/// zero crossing. Returns the knot list ending exactly at the crossing.
fn shoot(f: &ProfileFunction, a: f64) -> Result<Vec<Knot>, ProfileError> {
    let fa = f.f(a);
    if !(fa > 0.0) {
        return Err(ProfileError::BadArgument(format!(
            "profile start f({a}) = {fa} must be positive"
        )));
    }
    // removable singularity at r = 0: U ~ a - f(a) r^2 / 4
    let r0 = 1e-4 * (a / fa).sqrt().min(1.0);
    let mut knots = vec![Knot { r: r0, u: a - 0.25 * fa * r0 * r0, v: -0.5 * fa * r0 }];

    let rhs = |r: f64, y: [f64; 2]| -> [f64; 2] { [y[1], -y[1] / r - f.f(y[0])] };

    let mut r = r0;
    let mut y = [knots[0].u, knots[0].v];
    let mut dt: f64 = 1e-3;
    let rtol = 1e-12;
    let atol = 1e-14 * a.max(1.0);

    while r < R_MAX {
        let max_step = 0.01 * r.max(1.0);
        dt = dt.min(max_step);
        let (y_new, err) = dopri_step(&rhs, r, y, dt);
        let scale = |i: usize| atol + rtol * y[i].abs().max(y_new[i].abs());
        let err_norm =
            ((err[0] / scale(0)).powi(2) + (err[1] / scale(1)).powi(2)).sqrt() / 2f64.sqrt();
        if err_norm <= 1.0 {
            let r_new = r + dt;
            let prev = Knot { r, u: y[0], v: y[1] };
            let next = Knot { r: r_new, u: y_new[0], v: y_new[1] };
            if y_new[0] <= 0.0 {
                // bisect the crossing on the cubic Hermite of this step
                let (mut lo, mut hi) = (prev.r, next.r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if hermite(&prev, &next, mid).0 > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                let rho = 0.5 * (lo + hi);
                let (u_rho, v_rho) = hermite(&prev, &next, rho);
                let _ = u_rho;
                knots.push(Knot { r: rho, u: 0.0, v: v_rho });
                return Ok(knots);
            }
            knots.push(next);
            r = r_new;
            y = y_new;
        }
        let factor = if err_norm > 0.0 { 0.9 * err_norm.powf(-0.2) } else { 5.0 };
        dt *= factor.clamp(0.2, 5.0);
        dt = dt.max(1e-12);
    }
    Err(ProfileError::NoCompactSupport(R_MAX))
}

/// One Dormand-Prince 5(4) step; returns the 5th-order solution and the
/// embedded error estimate.
fn dopri_step(
    rhs: &impl Fn(f64, [f64; 2]) -> [f64; 2],
    t: f64,
    y: [f64; 2],
    dt: f64,
) -> ([f64; 2], [f64; 2]) {
    let add = |y: [f64; 2], ks: &[([f64; 2], f64)]| -> [f64; 2] {
        let mut out = y;
        for (k, c) in ks {
            out[0] += dt * c * k[0];
            out[1] += dt * c * k[1];
        }
        out
    };
    let k1 = rhs(t, y);
    let k2 = rhs(t + dt / 5.0, add(y, &[(k1, 1.0 / 5.0)]));
    let k3 = rhs(t + 3.0 / 10.0 * dt, add(y, &[(k1, 3.0 / 40.0), (k2, 9.0 / 40.0)]));
    let k4 = rhs(
        t + 4.0 / 5.0 * dt,
        add(y, &[(k1, 44.0 / 45.0), (k2, -56.0 / 15.0), (k3, 32.0 / 9.0)]),
    );
    let k5 = rhs(
        t + 8.0 / 9.0 * dt,
        add(
            y,
            &[
                (k1, 19372.0 / 6561.0),
                (k2, -25360.0 / 2187.0),
                (k3, 64448.0 / 6561.0),
                (k4, -212.0 / 729.0),
            ],
        ),
    );
    let k6 = rhs(
        t + dt,
        add(
            y,
            &[
                (k1, 9017.0 / 3168.0),
                (k2, -355.0 / 33.0),
                (k3, 46732.0 / 5247.0),
                (k4, 49.0 / 176.0),
                (k5, -5103.0 / 18656.0),
            ],
        ),
    );
    let y5 = add(
        y,
        &[
            (k1, 35.0 / 384.0),
            (k3, 500.0 / 1113.0),
            (k4, 125.0 / 192.0),
            (k5, -2187.0 / 6784.0),
            (k6, 11.0 / 84.0),
        ],
    );
    let k7 = rhs(t + dt, y5);
    let y4 = add(
        y,
        &[
            (k1, 5179.0 / 57600.0),
            (k3, 7571.0 / 16695.0),
            (k4, 393.0 / 640.0),
            (k5, -92097.0 / 339200.0),
            (k6, 187.0 / 2100.0),
            (k7, 1.0 / 40.0),
        ],
    );
    (y5, [y5[0] - y4[0], y5[1] - y4[1]])
}

fn shot_mass(knots: &[Knot]) -> f64 {
    let last = knots.last().expect("nonempty");
    -2.0 * std::f64::consts::PI * last.r * last.v
}

/// Solves the free boundary problem (radial, whole plane) for the profile
/// f and circulation kappa by bisecting the peak value a on the shooting
/// mass map m(a), treated as monotone increasing.
pub fn limiting_profile(
    f: &ProfileFunction,
    kappa: f64,
    tol: f64,
) -> Result<RadialProfile, ProfileError> {
    if !(kappa > 0.0) {
        return Err(ProfileError::BadArgument(format!("kappa = {kappa}")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(ProfileError::BadArgument(format!("tol = {tol}")));
    }

    let mut shots: Vec<(f64, f64)> = Vec::new();
    let mut mass_at = |a: f64| -> Result<f64, ProfileError> {
        let m = shot_mass(&shoot(f, a)?);
        shots.push((a, m));
        Ok(m)
    };

    // geometric bracket expansion, up to 60 doublings each way
    let mut a_hi = kappa.max(1e-8);
    let mut m_hi = mass_at(a_hi)?;
    let mut doublings = 0;
    while m_hi < kappa {
        a_hi *= 2.0;
        m_hi = mass_at(a_hi)?;
        doublings += 1;
        if doublings > 60 {
            return Err(ProfileError::BracketExhausted(doublings));
        }
    }
    let mut a_lo = a_hi;
    let mut m_lo = m_hi;
    while m_lo > kappa {
        a_lo *= 0.5;
        m_lo = mass_at(a_lo)?;
        doublings += 1;
        if doublings > 120 {
            return Err(ProfileError::BracketExhausted(doublings));
        }
    }

    let mut best = (a_hi, m_hi);
    for _ in 0..200 {
        if (best.1 - kappa).abs() <= tol * kappa {
            break;
        }
        let mid = 0.5 * (a_lo + a_hi);
        let m_mid = mass_at(mid)?;
        best = (mid, m_mid);
        if m_mid < kappa {
            a_lo = mid;
        } else {
            a_hi = mid;
        }
        if (a_hi - a_lo) <= 1e-15 * a_hi {
            break;
        }
    }
    if (best.1 - kappa).abs() > tol * kappa {
        return Err(ProfileError::BadArgument(format!(
            "shooting stalled at mass {} for target {kappa}",
            best.1
        )));
    }

    // sampled monotonicity of the mass map
    shots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mass_map_monotone = shots.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9 * kappa);

    let knots = shoot(f, best.0)?;
    let rho = knots.last().unwrap().r;
    let mut profile = RadialProfile {
        kappa,
        peak: best.0,
        support_radius: rho,
        samples: Vec::new(),
        mass_map_monotone,
        knots,
    };
    let n_samples = 512;
    profile.samples = (0..=n_samples)
        .map(|i| {
            let r = rho * i as f64 / n_samples as f64;
            let u = if i == 0 { profile.peak } else { profile.eval(r) };
            (r, u, f.f(u))
        })
        .collect();
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bessel oracle by power series, independent of the shooter.
    fn bessel_j0(x: f64) -> f64 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..60 {
            term *= -q / (m as f64 * m as f64);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    }

    fn bessel_j1(x: f64) -> f64 {
        let q = 0.25 * x * x;
        let mut term = 0.5 * x;
        let mut sum = term;
        for m in 1..60 {
            term *= -q / (m as f64 * (m as f64 + 1.0));
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    }

    fn j0_first_zero() -> f64 {
        let mut x = 2.4_f64;
        for _ in 0..60 {
            x += bessel_j0(x) / bessel_j1(x); // J0' = -J1
        }
        x
    }

    #[test]
    fn power_profile_closed_forms() {
        let p1 = power_profile(1.0).unwrap();
        assert_eq!(p1.f(2.0), 2.0);
        assert!((p1.big_f(4.0) - 8.0).abs() < 1e-12);
        assert_eq!(p1.delta0, 0.5);
        assert_eq!(p1.delta1, 0.5);

        let p2 = power_profile(2.0).unwrap();
        let s = 1.7;
        assert!((p2.big_f(s) - 2.0 / 3.0 * s * p2.f_inv(s)).abs() < 1e-12);
        assert!((p2.delta1 - 2.0 / 3.0).abs() < 1e-15);

        for p in [0.5, 1.0, 2.0, 3.5] {
            let f = power_profile(p).unwrap();
            assert_eq!(f.f(-1.0), 0.0);
            assert_eq!(f.big_f(-1.0), 0.0);
            // inverse consistency
            for s in [0.1, 1.0, 7.3] {
                assert!((f.f_inv(f.f(s)) - s).abs() < 1e-10);
            }
        }
        assert!(power_profile(0.0).is_err());
        assert!(power_profile(-2.0).is_err());
    }

    #[test]
    fn hypotheses_pass_for_powers() {
        let rep = check_hypotheses(&power_profile(1.0).unwrap(), 100.0, 400, &[0.5, 1.0]).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        let half = power_profile(0.5).unwrap();
        assert!((half.delta0 - 2.0 / 3.0).abs() < 1e-15);
        let rep = check_hypotheses(&half, 100.0, 400, &[0.5]).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
    }

    #[test]
    fn hypothesis_h3_fails_for_exponential() {
        // f(s) = e^s - 1 grows too fast for tau = 0.5
        let f = ProfileFunction::from_callables(
            |s| if s <= 0.0 { 0.0 } else { s.exp() - 1.0 },
            |s| if s <= 0.0 { 0.0 } else { (1.0 + s).ln() },
            |s| if s <= 0.0 { 0.0 } else { (1.0 + s) * (1.0 + s).ln() - s },
            0.9,
            0.1,
            "exp",
        );
        let rep = check_hypotheses(&f, 100.0, 400, &[0.5]).unwrap();
        assert!(!rep.h3[0].1.passed);
    }

    #[test]
    fn plasma_profile_matches_bessel_oracle() {
        let f = power_profile(1.0).unwrap();
        let prof = limiting_profile(&f, 1.0, 1e-10).unwrap();
        let j0 = j0_first_zero();
        assert!((j0 - 2.404826).abs() < 1e-6, "oracle j0 = {j0}");
        assert!(
            (prof.support_radius - j0).abs() < 1e-6,
            "rho = {} vs j0 = {j0}",
            prof.support_radius
        );
        let peak_oracle = 1.0 / (2.0 * std::f64::consts::PI * j0 * bessel_j1(j0));
        assert!((bessel_j1(j0) - 0.519147).abs() < 1e-6);
        assert!(
            (prof.peak - peak_oracle).abs() < 1e-6,
            "peak {} vs {peak_oracle}",
            prof.peak
        );
        // pointwise: U(r) = a J0(r)
        for i in 0..40 {
            let r = j0 * i as f64 / 40.0;
            let want = peak_oracle * bessel_j0(r);
            assert!(
                (prof.eval(r) - want).abs() < 1e-6,
                "U({r}) = {} vs {want}",
                prof.eval(r)
            );
        }
        assert!(prof.mass_map_monotone);
    }

    #[test]
    fn plasma_support_radius_independent_of_kappa() {
        let f = power_profile(1.0).unwrap();
        let p1 = limiting_profile(&f, 1.0, 1e-10).unwrap();
        let p2 = limiting_profile(&f, 2.0, 1e-10).unwrap();
        assert!((p1.support_radius - p2.support_radius).abs() < 1e-8);
        assert!((p2.peak - 2.0 * p1.peak).abs() < 1e-8 * p2.peak.max(1.0));
    }

    #[test]
    fn peak_monotone_in_kappa() {
        let f = power_profile(2.0).unwrap();
        let mut prev = 0.0;
        for kappa in [0.5, 1.0, 2.0, 4.0] {
            let prof = limiting_profile(&f, kappa, 1e-8).unwrap();
            assert!(prof.peak > prev);
            prev = prof.peak;
        }
    }

    #[test]
    fn flux_identity_against_volume_quadrature() {
        // -2 pi rho U'(rho) equals the volume integral of f(U) 2 pi r dr
        for p in [1.0, 2.0] {
            let f = power_profile(p).unwrap();
            let prof = limiting_profile(&f, 1.3, 1e-10).unwrap();
            let n = 4000;
            let rho = prof.support_radius;
            let dr = rho / n as f64;
            let mut integral = 0.0;
            for i in 0..n {
                let r0 = i as f64 * dr;
                let r1 = r0 + dr;
                let rm = 0.5 * (r0 + r1);
                let g = |r: f64| f.f(prof.eval(r)) * r;
                integral += dr / 6.0 * (g(r0) + 4.0 * g(rm) + g(r1));
            }
            integral *= 2.0 * std::f64::consts::PI;
            let mass = prof.mass();
            assert!(
                (integral - mass).abs() < 1e-6 * mass,
                "p={p}: flux {mass} vs volume {integral}"
            );
        }
    }

    #[test]
    fn radial_profile_nonincreasing() {
        let f = power_profile(1.5).unwrap();
        let prof = limiting_profile(&f, 0.8, 1e-9).unwrap();
        let mut prev = f64::INFINITY;
        for &(_, u, fu) in &prof.samples {
            assert!(u <= prev + 1e-12);
            assert!(fu <= f.f(prev.min(prof.peak)) + 1e-12);
            prev = u;
        }
        assert!(prof.samples.last().unwrap().1.abs() < 1e-9);
    }
}
