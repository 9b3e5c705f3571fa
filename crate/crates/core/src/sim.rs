//! Closed-loop simulation under measurement delay and error, and a
//! bounded-horizon monitor for `□ safe ∧ ◇□ target`.

use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{Abstraction, SpecRegions};
use crate::expr::{ExprError, SystemModel};
use crate::synthesis::Strategy;

/// Classical fourth-order Runge-Kutta under the constant input `u`, with
/// equal steps no longer than `max_step`. Returns every mesh state,
/// starting with `x0` and ending at time `tau`.
pub fn integrate(
    model: &SystemModel,
    x0: &[f64],
    u: &[f64],
    tau: f64,
    max_step: f64,
) -> Result<Vec<Vec<f64>>, ExprError> {
    assert!(max_step > 0.0, "integration step must be positive");
    let steps = (tau / max_step - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.to_vec());
    if steps == 0 {
        return Ok(out);
    }
    let h = tau / steps as f64;
    let mut rk = Rk4::new(model.state_dim());
    let mut x = x0.to_vec();
    for _ in 0..steps {
        rk.step(model, &mut x, u, h)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Scratch buffers for repeated RK4 steps.
pub(crate) struct Rk4 {
    env: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self { env: Vec::new(), k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    pub(crate) fn step(&mut self, model: &SystemModel, x: &mut [f64], u: &[f64], h: f64) -> Result<(), ExprError> {
        let Rk4 { env, k, tmp } = self;
        let [k1, k2, k3, k4] = k;
        model.eval_field_into(x, u, env, k1)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        model.eval_field_into(tmp, u, env, k2)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        model.eval_field_into(tmp, u, env, k3)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k3[i];
        }
        model.eval_field_into(tmp, u, env, k4)?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DelayPolicy {
    Zero,
    Constant(f64),
    Uniform,
    AdversarialMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    Zero,
    Uniform,
    /// `±epsilon`, signed away from the center of the first target box.
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub delay: DelayPolicy,
    pub error: ErrorPolicy,
    pub max_delay: f64,
    pub epsilon: Vec<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none(n: usize) -> Self {
        Self { delay: DelayPolicy::Zero, error: ErrorPolicy::Zero, max_delay: 0.0, epsilon: vec![0.0; n], seed: 0 }
    }
}

struct NoiseSource<'a> {
    model: &'a NoiseModel,
    rng: ChaCha8Rng,
    away_from: Vec<f64>,
}

impl NoiseSource<'_> {
    fn delay(&mut self) -> f64 {
        let d = match self.model.delay {
            DelayPolicy::Zero => 0.0,
            DelayPolicy::Constant(d) => d,
            DelayPolicy::Uniform => self.rng.gen::<f64>() * self.model.max_delay,
            DelayPolicy::AdversarialMax => self.model.max_delay,
        };
        d.clamp(0.0, self.model.max_delay)
    }

    fn error(&mut self, x: &[f64]) -> Vec<f64> {
        let eps = &self.model.epsilon;
        match self.model.error {
            ErrorPolicy::Zero => vec![0.0; x.len()],
            ErrorPolicy::Uniform => eps.iter().map(|&e| e * (2.0 * self.rng.gen::<f64>() - 1.0)).collect(),
            ErrorPolicy::Adversarial => x
                .iter()
                .zip(&self.away_from)
                .zip(eps)
                .map(|((xi, ci), &e)| if xi < ci { -e } else { e })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Waiting out the measurement delay under the previous input.
    Delay,
    /// Holding the newly chosen input.
    Hold,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Delay => "delay",
            Phase::Hold => "hold",
        })
    }
}

/// One integration mesh point.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    /// Input acting from this point on.
    pub u: Vec<f64>,
    /// Most recent measurement.
    pub measured: Vec<f64>,
    pub phase: Phase,
}

/// One controller invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub measured: Vec<f64>,
    pub state: usize,
    pub input: usize,
    pub tau: f64,
    pub delay: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn end_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("strategy fallout at t = {time}: measured state maps to abstract state {state}, outside the winning set")]
    StrategyFallout { time: f64, state: usize, trace: Box<Trace> },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Settings shared by every closed-loop run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSettings {
    pub horizon: f64,
    pub max_step: f64,
}

/// Appends mesh rows for holding `u` over `dur`, stopping at `t_end`.
fn advance(
    model: &SystemModel,
    x: &mut Vec<f64>,
    t: &mut f64,
    u: &[f64],
    dur: f64,
    t_end: f64,
    max_step: f64,
    measured: &[f64],
    phase: Phase,
    rows: &mut Vec<TraceRow>,
) -> Result<(), ExprError> {
    let dur = dur.min(t_end - *t).max(0.0);
    if dur == 0.0 {
        return Ok(());
    }
    if let Some(last) = rows.last_mut() {
        last.u = u.to_vec();
        last.phase = phase;
        last.measured = measured.to_vec();
    }
    let steps = (dur / max_step - 1e-9).ceil().max(1.0) as usize;
    let h = dur / steps as f64;
    let t0 = *t;
    let mut rk = Rk4::new(x.len());
    for k in 1..=steps {
        rk.step(model, x, u, h)?;
        let tk = if k == steps { t0 + dur } else { t0 + k as f64 * h };
        rows.push(TraceRow { t: tk, x: x.clone(), u: u.to_vec(), measured: measured.to_vec(), phase });
    }
    *t = t0 + dur;
    Ok(())
}

/// Runs the sampled closed loop from `x0` until `settings.horizon`.
///
/// At each sampling time the state is measured with error, quantized to
/// the nearest grid state, and the strategy's input is applied once the
/// delay has elapsed; until then the previous input stays active (the very
/// first input also covers the first delay). The next sample follows after
/// the chosen hold time.
pub fn closed_loop(
    model: &SystemModel,
    abs: &Abstraction,
    strategy: &Strategy,
    regions: &SpecRegions,
    x0: &[f64],
    noise: &NoiseModel,
    settings: SimSettings,
) -> Result<Trace, SimError> {
    let away_from = regions
        .target
        .first()
        .map(|b| b.center())
        .unwrap_or_else(|| model.state_domain().center());
    let mut src = NoiseSource { model: noise, rng: ChaCha8Rng::seed_from_u64(noise.seed), away_from };
    let mut trace = Trace::default();
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut prev_u: Option<Vec<f64>> = None;
    trace.rows.push(TraceRow {
        t,
        x: x.clone(),
        u: vec![0.0; model.input_dim()],
        measured: x.clone(),
        phase: Phase::Delay,
    });

    while t < settings.horizon {
        let delay = src.delay();
        let err = src.error(&x);
        let measured: Vec<f64> = x.iter().zip(&err).map(|(a, b)| a + b).collect();
        let state = abs.states.nearest(&measured);
        let Some(choice) = strategy.choice(state).filter(|_| strategy.winning.contains(state)) else {
            return Err(SimError::StrategyFallout { time: t, state, trace: Box::new(trace) });
        };
        let u = abs.inputs.point(choice.input);
        trace.samples.push(Sample {
            t,
            x: x.clone(),
            measured: measured.clone(),
            state,
            input: choice.input,
            tau: choice.tau,
            delay,
        });
        let coast = prev_u.clone().unwrap_or_else(|| u.clone());
        let (h, hz) = (settings.max_step, settings.horizon);
        advance(model, &mut x, &mut t, &coast, delay, hz, h, &measured, Phase::Delay, &mut trace.rows)?;
        advance(model, &mut x, &mut t, &u, choice.tau, hz, h, &measured, Phase::Hold, &mut trace.rows)?;
        prev_u = Some(u);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Holds,
    Violated,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub result: VerdictKind,
    /// Earliest mesh time witnessing a violation.
    pub witness_time: Option<f64>,
    /// Start of the final stretch inside the target region.
    pub settle_time: Option<f64>,
}

/// Bounded-horizon check of `□ safe` and, when target boxes are given,
/// `◇□ target` with the stretch inside the target starting no later than
/// `settle_deadline`.
pub fn check_trace(trace: &Trace, regions: &SpecRegions, settle_deadline: f64, horizon: f64) -> Verdict {
    let rows: Vec<&TraceRow> = trace.rows.iter().filter(|r| r.t <= horizon).collect();
    let complete = trace.end_time() >= horizon * (1.0 - 1e-12);

    if let Some(r) = rows.iter().find(|r| !regions.in_safe(&r.x)) {
        return Verdict { result: VerdictKind::Violated, witness_time: Some(r.t), settle_time: None };
    }
    if regions.target.is_empty() {
        let result = if complete { VerdictKind::Holds } else { VerdictKind::Inconclusive };
        return Verdict { result, witness_time: None, settle_time: None };
    }
    let last_out = rows.iter().rposition(|r| !regions.in_target(&r.x));
    let settle_time = match last_out {
        None => rows.first().map(|r| r.t),
        Some(i) => rows.get(i + 1).map(|r| r.t),
    };
    let late = rows.iter().find(|r| r.t >= settle_deadline && !regions.in_target(&r.x));
    if let Some(r) = late {
        return Verdict { result: VerdictKind::Violated, witness_time: Some(r.t), settle_time };
    }
    let result = if complete { VerdictKind::Holds } else { VerdictKind::Inconclusive };
    Verdict { result, witness_time: None, settle_time }
}

/// `t,x1..xn,u1..um,measured_x1..xn,phase`.
pub fn write_trace_csv(trace: &Trace, w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash: {h}")?;
    }
    let Some(first) = trace.rows.first() else {
        return Ok(());
    };
    let names = |p: &str, n: usize| (1..=n).map(|i| format!("{p}{i}")).collect::<Vec<_>>().join(",");
    let (n, m) = (first.x.len(), first.u.len());
    writeln!(w, "t,{},{},{},phase", names("x", n), names("u", m), names("measured_x", n))?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
    for r in &trace.rows {
        writeln!(w, "{:.16e},{},{},{},{}", r.t, fmt(&r.x), fmt(&r.u), fmt(&r.measured), r.phase)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Interval, ModelDesc};
    use crate::zonotope::BoxVec;

    fn model(states: &[&str], dynamics: &[&str], dom: &[(f64, f64)]) -> SystemModel {
        SystemModel::new(ModelDesc {
            states: states.iter().map(|s| s.to_string()).collect(),
            inputs: vec!["u".into()],
            dynamics: dynamics.iter().map(|s| s.to_string()).collect(),
            constants: Default::default(),
            state_domain: dom.iter().map(|&(l, h)| Interval::new(l, h)).collect(),
            input_domain: vec![Interval::new(-1.0, 1.0)],
        })
        .unwrap()
    }

    fn row(t: f64, x: f64) -> TraceRow {
        TraceRow { t, x: vec![x], u: vec![0.0], measured: vec![x], phase: Phase::Hold }
    }

    fn regions() -> SpecRegions {
        SpecRegions {
            safe: vec![BoxVec::from_bounds(&[(0.0, 10.0)])],
            target: vec![BoxVec::from_bounds(&[(4.0, 6.0)])],
        }
    }

    #[test]
    fn integrate_constant_and_decay() {
        let m = model(&["x"], &["0*x"], &[(-1.0, 1.0)]);
        let tr = integrate(&m, &[0.4], &[0.0], 1.0, 0.1).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.iter().all(|x| x[0] == 0.4));
        let m = model(&["x"], &["-x"], &[(-1.0, 1.0)]);
        let tr = integrate(&m, &[1.0], &[0.0], 1.0, 1e-3).unwrap();
        assert!((tr.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn damped_pendulum_energy_decreases() {
        let m = model(&["x1", "x2"], &["x2", "-1.96*sin(x1)-6*x2+u"], &[(-1.0, 1.0), (-1.0, 1.0)]);
        let tr = integrate(&m, &[0.3, 0.0], &[0.0], 5.0, 1e-3).unwrap();
        let energy = |x: &Vec<f64>| 0.5 * x[1] * x[1] + 1.96 * (1.0 - x[0].cos());
        for w in tr.windows(2) {
            assert!(energy(&w[1]) <= energy(&w[0]) + 1e-15);
        }
    }

    #[test]
    fn monitor_examples() {
        let inside = Trace { rows: (0..=20).map(|k| row(k as f64, 5.0)).collect(), samples: vec![] };
        assert_eq!(check_trace(&inside, &regions(), 10.0, 20.0).result, VerdictKind::Holds);

        let mut rows: Vec<TraceRow> = (0..=20).map(|k| row(k as f64, 5.0)).collect();
        rows[7].x = vec![11.0];
        let v = check_trace(&Trace { rows, samples: vec![] }, &regions(), 10.0, 20.0);
        assert_eq!((v.result, v.witness_time), (VerdictKind::Violated, Some(7.0)));

        let settling = Trace {
            rows: (0..=20).map(|k| row(k as f64, if k < 4 { 1.0 } else { 5.0 })).collect(),
            samples: vec![],
        };
        let v = check_trace(&settling, &regions(), 10.0, 20.0);
        assert_eq!((v.result, v.settle_time), (VerdictKind::Holds, Some(4.0)));

        let late = Trace {
            rows: (0..=20).map(|k| row(k as f64, if k == 15 { 7.0 } else { 5.0 })).collect(),
            samples: vec![],
        };
        let v = check_trace(&late, &regions(), 10.0, 20.0);
        assert_eq!((v.result, v.witness_time), (VerdictKind::Violated, Some(15.0)));

        let short = Trace { rows: (0..=12).map(|k| row(k as f64, 5.0)).collect(), samples: vec![] };
        assert_eq!(check_trace(&short, &regions(), 10.0, 20.0).result, VerdictKind::Inconclusive);
    }

    #[test]
    fn adversarial_error_points_away_from_target() {
        let nm = NoiseModel {
            delay: DelayPolicy::AdversarialMax,
            error: ErrorPolicy::Adversarial,
            max_delay: 0.01,
            epsilon: vec![0.1, 0.2],
            seed: 1,
        };
        let mut src = NoiseSource { model: &nm, rng: ChaCha8Rng::seed_from_u64(1), away_from: vec![0.0, 0.0] };
        assert_eq!(src.error(&[-1.0, 1.0]), vec![-0.1, 0.2]);
        assert_eq!(src.delay(), 0.01);
    }
}
