//! Reachable-set and reachable-tube over-approximation.
//!
//! Linear affine systems `dx/dt = A x + b + u` with `u(t) in U` are handled in
//! closed form with additive bloating. Nonlinear systems are linearized about
//! an expansion point, and the Lagrange remainder over a box `B_r` around that
//! point is enclosed and treated as an extra input set.

use thiserror::Error;

use crate::expr::{ExprError, SystemModel};
use crate::linalg::{mat_exp, mat_exp_integral, LinalgError, Matrix};
use crate::sim::integrate;
use crate::zonotope::{quad_map, BoxVec, ZonoError, Zonotope};

/// Generator budget per dimension applied after each reach computation.
pub const DEFAULT_MAX_ORDER: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("duration must be finite and nonnegative, got {0}")]
    NegativeDuration(f64),
    #[error("linearization radius must be positive and match the state dimension")]
    BadRadius,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Zono(#[from] ZonoError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// `dx/dt = A x + b + u`, `u(t) in input_set`.
#[derive(Clone, Debug)]
pub struct LinAffineSys {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub input_set: Zonotope,
}

#[derive(Clone, Debug)]
pub struct ReachResult {
    /// Encloses the states reachable at exactly `tau`.
    pub at_time: Zonotope,
    /// Encloses the states reachable at any time in `[0, tau]`.
    pub tube: Zonotope,
    pub tau: f64,
}

/// Scalar bloating radii; each applies uniformly to every coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bloat {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// `e^x - 1 - x` without cancellation for small `x`.
fn exp_remainder(x: f64) -> f64 {
    if x < 0.5 {
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        let mut k = 2.0;
        while term > sum * f64::EPSILON * 0.25 {
            sum += term;
            k += 1.0;
            term *= x / k;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn bloat_params(
    a: &Matrix,
    x0: &Zonotope,
    u: &Zonotope,
    b: &[f64],
    tau: f64,
) -> Result<Bloat, ReachError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(ReachError::NegativeDuration(tau));
    }
    let norm_a = a.norm_inf();
    let factor = exp_remainder(tau * norm_a);
    let alpha = factor * x0.interval_hull().max_norm();
    let (beta, gamma) = if norm_a == 0.0 {
        (0.0, 0.0)
    } else {
        let k = factor / norm_a;
        (k * u.interval_hull().max_norm(), k * norm_inf(b))
    };
    Ok(Bloat { alpha, beta, gamma })
}

/// Zonotope of the box `B_r(0)`; the empty generator list when `r = 0`.
fn ball(n: usize, r: f64) -> Zonotope {
    if r == 0.0 {
        Zonotope::point(&vec![0.0; n])
    } else {
        Zonotope::from_box(&BoxVec::centered(&vec![0.0; n], &vec![r; n]))
    }
}

pub fn linear_reach(
    sys: &LinAffineSys,
    x0: &Zonotope,
    tau: f64,
    max_order: f64,
) -> Result<ReachResult, ReachError> {
    let n = x0.dim();
    let bloat = bloat_params(&sys.a, x0, &sys.input_set, &sys.b, tau)?;
    let e_at = mat_exp(&sys.a, tau)?;
    let g = mat_exp_integral(&sys.a, tau)?;

    let at_time = x0
        .linear_map(&e_at)?
        .translate(&g.mul_vec(&sys.b))?
        .minkowski_sum(&sys.input_set.scale(tau))?
        .minkowski_sum(&ball(n, bloat.beta))?
        .reduce_order(max_order);
    let tube = x0
        .convex_hull_overapprox(&at_time.minkowski_sum(&ball(n, bloat.alpha + bloat.gamma))?)?
        .reduce_order(max_order);
    Ok(ReachResult { at_time, tube, tau })
}

/// First-order model about an expansion point with an enclosure of the
/// second-order remainder.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub a: Matrix,
    /// `f(x*, u)`.
    pub c: Vec<f64>,
    /// Encloses the remainder for every state in `B_r(x*)`.
    pub err: BoxVec,
}

pub fn local_linearize(
    model: &SystemModel,
    x_star: &[f64],
    u: &[f64],
    r: &[f64],
) -> Result<Linearization, ReachError> {
    let n = model.state_dim();
    if r.len() != n || r.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(ReachError::BadRadius);
    }
    let a = model.jacobian_at(x_star, u)?;
    let c = model.eval_field(x_star, u)?;
    let region = BoxVec::centered(x_star, r);
    let inputs = BoxVec::point(u);
    let hs = (0..n)
        .map(|i| model.hessian_bounds(i, &region, &inputs))
        .collect::<Result<Vec<_>, _>>()?;
    let err = quad_map(&hs, &Zonotope::from_box(&BoxVec::centered(&vec![0.0; n], r)))?;
    Ok(Linearization { a, c, err })
}

#[derive(Clone, Debug)]
pub struct NonlinearReach {
    pub reach: ReachResult,
    /// The initial set was not inside `B_r(x*)`, so the remainder bound does
    /// not cover it.
    pub initial_outside: bool,
}

/// Reach sets from a precomputed linearization about `x_star`.
pub fn nonlinear_reach_with(
    lin: &Linearization,
    x_star: &[f64],
    r: &[f64],
    x0: &Zonotope,
    tau: f64,
    max_order: f64,
) -> Result<NonlinearReach, ReachError> {
    let shift: Vec<f64> = x_star.iter().map(|v| -v).collect();
    let shifted = x0.translate(&shift)?;
    let initial_outside = !shifted.contained_in_box(&BoxVec::centered(&vec![0.0; r.len()], r));
    let sys = LinAffineSys { a: lin.a.clone(), b: lin.c.clone(), input_set: Zonotope::from_box(&lin.err) };
    let res = linear_reach(&sys, &shifted, tau, max_order)?;
    Ok(NonlinearReach {
        reach: ReachResult {
            at_time: res.at_time.translate(x_star)?,
            tube: res.tube.translate(x_star)?,
            tau,
        },
        initial_outside,
    })
}

pub fn nonlinear_reach(
    model: &SystemModel,
    x_star: &[f64],
    u: &[f64],
    x0: &Zonotope,
    r: &[f64],
    tau: f64,
    max_order: f64,
) -> Result<NonlinearReach, ReachError> {
    let lin = local_linearize(model, x_star, u, r)?;
    nonlinear_reach_with(&lin, x_star, r, x0, tau, max_order)
}

/// Global Lipschitz constant of the field in the infinity norm over the
/// model's state and input domains.
pub fn lipschitz_constant(model: &SystemModel) -> Result<f64, ReachError> {
    Ok(model.jacobian_norm_bound(model.state_domain(), model.input_domain())?)
}

/// Box around the nominal trajectory from `x_star` whose radius grows as
/// `e^{L tau}` times the initial distance from `x_star`.
pub fn lipschitz_baseline_reach(
    model: &SystemModel,
    x_star: &[f64],
    u: &[f64],
    x0: &BoxVec,
    tau: f64,
) -> Result<BoxVec, ReachError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(ReachError::NegativeDuration(tau));
    }
    let l = lipschitz_constant(model)?;
    let rho0 = x0
        .intervals()
        .iter()
        .zip(x_star)
        .map(|(i, &c)| (i.lo() - c).abs().max((i.hi() - c).abs()))
        .fold(0.0, f64::max);
    let end = if tau == 0.0 {
        x_star.to_vec()
    } else {
        integrate(model, x_star, u, tau, tau / 64.0)?.pop().expect("nonempty trajectory")
    };
    let rho = rho0 * (l * tau).exp();
    Ok(BoxVec::centered(&end, &vec![rho; end.len()]))
}
