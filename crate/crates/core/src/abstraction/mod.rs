//! Grid-based finite abstractions with state-dependent robustness margins.
//!
//! States are the lattice points of the state domain and inputs the lattice
//! points of the input domain. Each state/input pair is assigned one hold
//! duration, the longest verified multiple of the sampling period for which
//! the reachable tube stays inside the linearization box `B_r(q)`. Its
//! successors are the states whose inflated cells meet the reachable set.

mod export;
mod grid;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::SystemModel;
use crate::reach::{local_linearize, nonlinear_reach_with, Linearization, ReachError, ReachResult, DEFAULT_MAX_ORDER};
use crate::zonotope::{BoxVec, Zonotope};

pub use export::{write_inputs_csv, write_states_csv, write_transitions_csv};
pub use grid::Grid;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("invalid abstraction parameters: {0}")]
    InvalidParams(String),
    #[error("the domain contains no lattice points")]
    EmptyGrid,
    #[error(
        "delay horizon exceeds linearization validity at state {state}: \
         increase r or decrease the maximum delay"
    )]
    DelayHorizon { state: usize },
    #[error(transparent)]
    Reach(#[from] ReachError),
}

/// Bit set in [`Abstraction::labels`] when the state satisfies the safety
/// region robustly.
pub const LABEL_SAFE: u8 = 1;
/// Bit set when the state satisfies the target region robustly.
pub const LABEL_TARGET: u8 = 2;

fn default_p0() -> u32 {
    8
}

fn default_n_max() -> u32 {
    64
}

fn default_max_order() -> f64 {
    DEFAULT_MAX_ORDER
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionParams {
    /// State granularity.
    pub eta: Vec<f64>,
    /// Input granularity.
    pub mu: Vec<f64>,
    /// Sampling period in seconds.
    pub tau_s: f64,
    /// Linearization radius.
    pub r: Vec<f64>,
    /// Label inflation radius; defaults to `r`.
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
    /// Measurement error bound.
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    /// Maximum measurement delay in seconds.
    #[serde(default)]
    pub max_delay: f64,
    /// Exclusive bound on candidate duration multipliers.
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    /// Initial duration multiplier guess.
    #[serde(default = "default_p0")]
    pub p0: u32,
    #[serde(default = "default_max_order")]
    pub max_order: f64,
    /// Also accept a stay action at a state outside the robust target
    /// label when its whole reachable tube lies in the target region.
    #[serde(default)]
    pub target_by_tube: bool,
}

impl AbstractionParams {
    pub fn delta(&self) -> Vec<f64> {
        self.delta.clone().unwrap_or_else(|| self.r.clone())
    }

    pub fn epsilon(&self) -> Vec<f64> {
        self.epsilon.clone().unwrap_or_else(|| vec![0.0; self.r.len()])
    }

    /// Fills in every defaulted field.
    pub fn materialized(&self) -> AbstractionParams {
        AbstractionParams { delta: Some(self.delta()), epsilon: Some(self.epsilon()), ..self.clone() }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), AbstractionError> {
        let bad = |msg: &str| Err(AbstractionError::InvalidParams(msg.to_string()));
        let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        let (delta, eps) = (self.delta(), self.epsilon());
        if self.eta.len() != n || self.r.len() != n || delta.len() != n || eps.len() != n {
            return bad("eta, r, delta and epsilon must have one entry per state");
        }
        if self.mu.len() != m {
            return bad("mu must have one entry per input");
        }
        if !positive(&self.eta) || !positive(&self.mu) || !positive(&self.r) {
            return bad("eta, mu and r must be positive");
        }
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            return bad("tau_s must be positive");
        }
        if self.r.iter().zip(&delta).any(|(r, d)| r > d) {
            return bad("r must not exceed delta");
        }
        if eps.iter().any(|&e| !(e >= 0.0 && e.is_finite())) || !(self.max_delay >= 0.0 && self.max_delay.is_finite()) {
            return bad("epsilon and max_delay must be nonnegative");
        }
        if self.p0 < 1 || self.p0 >= self.n_max {
            return bad("p0 must lie in [1, n_max)");
        }
        if !(self.max_order >= 1.0) {
            return bad("max_order must be at least 1");
        }
        Ok(())
    }
}

/// Safety and target regions, each a union of boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRegions {
    pub safe: Vec<BoxVec>,
    #[serde(default)]
    pub target: Vec<BoxVec>,
}

impl SpecRegions {
    pub fn in_safe(&self, x: &[f64]) -> bool {
        self.safe.iter().any(|b| b.contains_point(x))
    }

    pub fn in_target(&self, x: &[f64]) -> bool {
        self.target.iter().any(|b| b.contains_point(x))
    }
}

/// `b ⊆ ∪ boxes`, decided exactly by splitting `b` at every box boundary
/// and probing the center of each resulting sub-box.
pub fn box_in_union(b: &BoxVec, boxes: &[BoxVec]) -> bool {
    let n = b.dim();
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let iv = b.intervals()[i];
        let mut c = vec![iv.lo(), iv.hi()];
        for u in boxes {
            for v in [u.intervals()[i].lo(), u.intervals()[i].hi()] {
                if v > iv.lo() && v < iv.hi() {
                    c.push(v);
                }
            }
        }
        c.sort_by(f64::total_cmp);
        c.dedup();
        let mids = if c.len() == 1 { c } else { c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect() };
        cuts.push(mids);
    }
    let mut idx = vec![0usize; n];
    let mut probe = vec![0.0; n];
    loop {
        for i in 0..n {
            probe[i] = cuts[i][idx[i]];
        }
        if !boxes.iter().any(|u| u.contains_point(&probe)) {
            return false;
        }
        let mut i = n;
        loop {
            if i == 0 {
                return true;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < cuts[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Relative slack granted to region boundaries when labeling, so that a
/// cell whose `B_delta` touches a boundary up to rounding still counts.
const LABEL_TOL: f64 = 1e-9;

/// A proposition holds at `q` iff `B_delta(q) ∩ X` lies in its region.
pub fn label_states(grid: &Grid, regions: &SpecRegions, delta: &[f64]) -> Vec<u8> {
    let slack: Vec<f64> = delta.iter().map(|d| LABEL_TOL * d.max(1.0)).collect();
    let grow = |bs: &[BoxVec]| bs.iter().map(|b| b.inflate(&slack)).collect::<Vec<_>>();
    let (safe, target) = (grow(&regions.safe), grow(&regions.target));
    let domain = grid.domain().intervals();
    (0..grid.len())
        .map(|id| {
            let q = grid.point(id);
            let cell = BoxVec::new(
                BoxVec::centered(&q, delta)
                    .intervals()
                    .iter()
                    .zip(domain)
                    .map(|(a, d)| {
                        crate::expr::Interval::new(a.lo().max(d.lo()).min(d.hi()), a.hi().min(d.hi()).max(d.lo()))
                    })
                    .collect(),
            );
            let mut bits = 0;
            if box_in_union(&cell, &safe) {
                bits |= LABEL_SAFE;
            }
            if !target.is_empty() && box_in_union(&cell, &target) {
                bits |= LABEL_TARGET;
            }
            bits
        })
        .collect()
}

/// Margin `Gamma1(q)` absorbing measurement error and the reach of any input
/// during the maximum delay.
pub fn compute_gamma1(
    model: &SystemModel,
    state: usize,
    q: &[f64],
    inputs: &Grid,
    params: &AbstractionParams,
) -> Result<Vec<f64>, AbstractionError> {
    let eps = params.epsilon();
    if params.max_delay == 0.0 {
        return Ok(eps);
    }
    let half: Vec<f64> = params.eta.iter().map(|e| 0.5 * e).collect();
    let init_rad: Vec<f64> = half.iter().zip(&eps).map(|(h, e)| h + e).collect();
    let region = BoxVec::centered(q, &params.r);
    if !region.contains_box(&BoxVec::centered(q, &init_rad)) {
        return Err(AbstractionError::DelayHorizon { state });
    }
    let x0 = Zonotope::from_box(&BoxVec::centered(q, &init_rad));
    let mut rad = init_rad.clone();
    for v in inputs.points() {
        let lin = local_linearize(model, q, &v, &params.r)?;
        let tube = nonlinear_reach_with(&lin, q, &params.r, &x0, params.max_delay, params.max_order)?.reach.tube;
        if !tube.contained_in_box(&region) {
            return Err(AbstractionError::DelayHorizon { state });
        }
        let hull = tube.interval_hull();
        for (i, iv) in hull.intervals().iter().enumerate() {
            rad[i] = rad[i].max(q[i] - iv.lo()).max(iv.hi() - q[i]);
        }
    }
    Ok(rad.iter().zip(&half).zip(&eps).map(|((r, h), e)| (r - h).max(*e)).collect())
}

/// Outcome of the duration search for one state/input pair.
#[derive(Clone, Debug)]
pub struct DurationSearch {
    /// Duration multiplier `a`; the hold time is `a * tau_s`.
    pub multiplier: u32,
    pub reach: ReachResult,
}

/// Bracketing search for a long multiplier whose tube stays inside
/// `B_r(q)`: doubling while verified, halving back otherwise, and stopping
/// once the candidate reaches `n_max`. Returns `None` if no multiplier is
/// verified.
pub fn max_duration_search(
    lin: &Linearization,
    q: &[f64],
    x0: &Zonotope,
    params: &AbstractionParams,
) -> Result<Option<DurationSearch>, AbstractionError> {
    let region = BoxVec::centered(q, &params.r);
    if !x0.contained_in_box(&region) {
        return Ok(None);
    }
    let n_max = params.n_max;
    let (mut a, mut b, mut p) = (0u32, params.p0, params.p0);
    let mut best = None;
    while a != b && p > 0 && p < n_max {
        let tau = p as f64 * params.tau_s;
        let res = nonlinear_reach_with(lin, q, &params.r, x0, tau, params.max_order)?.reach;
        if res.tube.contained_in_box(&region) {
            best = Some(res);
            p = 2 * b - a;
            a = b;
            b = p;
        } else {
            p = (a + b) / 2;
            b = p;
        }
    }
    Ok(best.filter(|_| a > 0).map(|reach| DurationSearch { multiplier: a, reach }))
}

/// One enabled input at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub input: usize,
    pub multiplier: u32,
    pub tau: f64,
    /// Sorted successor ids; the sink id may appear last.
    pub successors: Vec<usize>,
    /// Every state along the hold is guaranteed to satisfy the target.
    pub holds_target: bool,
}

/// A state/input pair (or a whole state, when `input` is `None`) whose
/// computation failed.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFailure {
    pub state: usize,
    pub input: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Abstraction {
    pub states: Grid,
    pub inputs: Grid,
    /// Label bits per state (sink excluded; it carries none).
    pub labels: Vec<u8>,
    pub gamma1: Vec<Vec<f64>>,
    pub gamma2: Vec<f64>,
    /// Enabled actions per state, ordered by input id. The sink has none.
    pub actions: Vec<Vec<Action>>,
    pub failures: Vec<PairFailure>,
    pub params: AbstractionParams,
}

impl Abstraction {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// The absorbing out-of-domain state.
    pub fn sink(&self) -> usize {
        self.states.len()
    }

    /// Number of states including the sink.
    pub fn n_total(&self) -> usize {
        self.states.len() + 1
    }

    pub fn label(&self, id: usize) -> u8 {
        self.labels.get(id).copied().unwrap_or(0)
    }

    pub fn action(&self, state: usize, input: usize) -> Option<&Action> {
        let acts = self.actions.get(state)?;
        acts.binary_search_by_key(&input, |a| a.input).ok().map(|i| &acts[i])
    }

    pub fn n_transitions(&self) -> usize {
        self.actions.iter().flatten().map(|a| a.successors.len()).sum()
    }
}

/// Computes the action for one state/input pair with the initial set `x0`.
pub fn pair_action(
    model: &SystemModel,
    states: &Grid,
    q: &[f64],
    input: usize,
    v: &[f64],
    x0: &Zonotope,
    gamma2: &[f64],
    params: &AbstractionParams,
) -> Result<Option<(Action, DurationSearch)>, AbstractionError> {
    let lin = local_linearize(model, q, v, &params.r)?;
    let Some(found) = max_duration_search(&lin, q, x0, params)? else {
        return Ok(None);
    };
    let w: Vec<f64> = params.eta.iter().zip(gamma2).map(|(e, g)| 0.5 * e + g).collect();
    let hull = found.reach.at_time.interval_hull();
    let mut successors = states.ids_within(&hull, &w);
    let domain = states.domain();
    if !domain.contains_box(&hull) || !domain.contains_box(&found.reach.tube.interval_hull()) {
        successors.push(states.len());
    }
    let action = Action {
        input,
        multiplier: found.multiplier,
        tau: found.multiplier as f64 * params.tau_s,
        successors,
        holds_target: false,
    };
    Ok(Some((action, found)))
}

/// Initial set `B_{eta/2 + Gamma1}(q)`.
pub fn initial_cell(q: &[f64], eta: &[f64], gamma1: &[f64]) -> Zonotope {
    let rad: Vec<f64> = eta.iter().zip(gamma1).map(|(e, g)| 0.5 * e + g).collect();
    Zonotope::from_box(&BoxVec::centered(q, &rad))
}

/// Builds the abstraction on the current rayon pool. The result does not
/// depend on the number of worker threads.
pub fn build_abstraction(
    model: &SystemModel,
    regions: &SpecRegions,
    params: &AbstractionParams,
) -> Result<Abstraction, AbstractionError> {
    params.validate(model.state_dim(), model.input_dim())?;
    let states = Grid::new(model.state_domain(), &params.eta)?;
    let inputs = Grid::new(model.input_domain(), &params.mu)?;
    let labels = label_states(&states, regions, &params.delta());
    let target_slack: Vec<f64> = params.r.iter().map(|r| LABEL_TOL * r.max(1.0)).collect();
    let target: Vec<BoxVec> = regions.target.iter().map(|b| b.inflate(&target_slack)).collect();
    let gamma2 = params.epsilon();
    let input_points: Vec<Vec<f64>> = inputs.points().collect();

    let per_state: Vec<(Vec<f64>, Vec<Action>, Vec<PairFailure>)> = (0..states.len())
        .into_par_iter()
        .map(|s| {
            let q = states.point(s);
            let mut failures = Vec::new();
            let gamma1 = match compute_gamma1(model, s, &q, &inputs, params) {
                Ok(g) => g,
                Err(e) => {
                    failures.push(PairFailure { state: s, input: None, message: e.to_string() });
                    return (vec![f64::NAN; q.len()], Vec::new(), failures);
                }
            };
            let x0 = initial_cell(&q, &params.eta, &gamma1);
            let mut actions = Vec::new();
            for (i, v) in input_points.iter().enumerate() {
                match pair_action(model, &states, &q, i, v, &x0, &gamma2, params) {
                    Ok(Some((mut a, found))) => {
                        a.holds_target = labels[s] & LABEL_TARGET != 0
                            || (params.target_by_tube
                                && !target.is_empty()
                                && box_in_union(&found.reach.tube.interval_hull(), &target));
                        actions.push(a);
                    }
                    Ok(None) => {}
                    Err(e) => failures.push(PairFailure { state: s, input: Some(i), message: e.to_string() }),
                }
            }
            (gamma1, actions, failures)
        })
        .collect();

    let mut gamma1 = Vec::with_capacity(states.len());
    let mut actions = Vec::with_capacity(states.len());
    let mut failures = Vec::new();
    for (g, a, f) in per_state {
        gamma1.push(g);
        actions.push(a);
        failures.extend(f);
    }
    Ok(Abstraction { states, inputs, labels, gamma1, gamma2, actions, failures, params: params.materialized() })
}
