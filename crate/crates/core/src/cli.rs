//! Run configuration and the `abstract → synthesize → simulate → compare`
//! pipeline behind the `zonoabs` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abstraction::{
    build_abstraction, compute_gamma1, initial_cell, pair_action, write_inputs_csv, write_states_csv,
    write_transitions_csv, Abstraction, AbstractionError, AbstractionParams, Grid, SpecRegions,
};
use crate::expr::{ModelDesc, ModelError, SystemModel};
use crate::reach::{lipschitz_baseline_reach, lipschitz_constant, ReachError};
use crate::sim::{
    check_trace, closed_loop, write_trace_csv, DelayPolicy, ErrorPolicy, NoiseModel, SimError, SimSettings, Trace,
    Verdict, VerdictKind,
};
use crate::synthesis::{synthesize_reach_stay, synthesize_safety, write_strategy_csv, write_winning_csv, Mode, Strategy};
use crate::zonotope::BoxVec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Json(_) => "config",
            CliError::Model(_) => "model",
            CliError::Abstraction(_) => "abstraction",
            CliError::Reach(_) => "reach",
            CliError::Sim(_) => "simulation",
            CliError::Io { .. } => "io",
            CliError::Threads(_) => "threads",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Safety,
    ReachStay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub kind: SpecKind,
    pub safe: Vec<BoxVec>,
    #[serde(default)]
    pub target: Vec<BoxVec>,
}

impl SpecConfig {
    pub fn regions(&self) -> SpecRegions {
        SpecRegions { safe: self.safe.clone(), target: self.target.clone() }
    }
}

fn default_runs() -> usize {
    50
}

fn zero_delay() -> DelayPolicy {
    DelayPolicy::Zero
}

fn zero_error() -> ErrorPolicy {
    ErrorPolicy::Zero
}

/// Closed-loop simulation settings. `max_delay` and `epsilon` describe the
/// simulated plant and may differ from the abstraction's margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "zero_delay")]
    pub delay: DelayPolicy,
    #[serde(default = "zero_error")]
    pub error: ErrorPolicy,
    #[serde(default)]
    pub max_delay: f64,
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub horizon: f64,
    /// Defaults to half the horizon.
    #[serde(default)]
    pub settle_deadline: Option<f64>,
    /// Explicit initial states; when absent, starts are drawn from winning
    /// cells.
    #[serde(default)]
    pub initial_states: Option<Vec<Vec<f64>>>,
}

impl SimConfig {
    pub fn settle_deadline(&self) -> f64 {
        self.settle_deadline.unwrap_or(0.5 * self.horizon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelDesc,
    pub params: AbstractionParams,
    pub spec: SpecConfig,
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub io: IoConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Parses the model and checks every block against it.
    pub fn validate(&self) -> Result<SystemModel, CliError> {
        let model = SystemModel::new(self.model.clone())?;
        let (n, m) = (model.state_dim(), model.input_dim());
        self.params.validate(n, m)?;
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.spec.safe.is_empty() {
            return bad("spec.safe must contain at least one box".into());
        }
        if self.spec.safe.iter().chain(&self.spec.target).any(|b| b.dim() != n) {
            return bad(format!("spec boxes must have dimension {n}"));
        }
        if self.spec.kind == SpecKind::ReachStay && self.spec.target.is_empty() {
            return bad("reach_stay needs at least one target box".into());
        }
        if let Some(sim) = &self.sim {
            if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
                return bad("sim.horizon must be positive".into());
            }
            let d = sim.settle_deadline();
            if !(d >= 0.0 && d <= sim.horizon) {
                return bad("sim.settle_deadline must lie in [0, horizon]".into());
            }
            if !(sim.max_delay >= 0.0 && sim.max_delay.is_finite()) {
                return bad("sim.max_delay must be nonnegative".into());
            }
            if let DelayPolicy::Constant(c) = sim.delay {
                if !(c >= 0.0 && c <= sim.max_delay) {
                    return bad("constant delay must lie in [0, sim.max_delay]".into());
                }
            }
            if let Some(e) = &sim.epsilon {
                if e.len() != n || e.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return bad(format!("sim.epsilon must have {n} nonnegative entries"));
                }
            }
            if let Some(starts) = &sim.initial_states {
                if starts.iter().any(|x| x.len() != n) {
                    return bad(format!("sim.initial_states must have dimension {n}"));
                }
            }
        }
        if let Some(c) = &self.compare {
            if c.state.len() != n || c.input.len() != m {
                return bad("compare.state/compare.input dimensions do not match the model".into());
            }
        }
        Ok(model)
    }

    /// The configuration with every default filled in.
    pub fn effective(&self) -> RunConfig {
        let mut cfg = self.clone();
        cfg.params = cfg.params.materialized();
        if let Some(sim) = &mut cfg.sim {
            sim.settle_deadline = Some(sim.settle_deadline());
            if sim.epsilon.is_none() {
                sim.epsilon = Some(vec![0.0; cfg.model.states.len()]);
            }
        }
        cfg
    }

    /// SHA-256 of the effective configuration, excluding the output
    /// location.
    pub fn hash(&self) -> String {
        let mut cfg = self.effective();
        cfg.io = IoConfig::default();
        let bytes = serde_json::to_vec(&cfg).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Abstract,
    Synthesize,
    Simulate,
    Compare,
    All,
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    /// Realizability verdict, when synthesis ran.
    pub realizable: Option<bool>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.realizable == Some(false) {
            2
        } else {
            0
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    hash: String,
}

impl Artifacts {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
        }
        File::create(&path).map(BufWriter::new).map_err(|source| CliError::Io { path, source })
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>, &str) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        f(&mut w, &self.hash)
            .and_then(|_| w.flush())
            .map_err(|source| CliError::Io { path: self.dir.join(name), source })
    }

    fn write_json(&self, name: &str, mut value: serde_json::Value) -> Result<(), CliError> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("config_hash".into(), json!(self.hash));
        }
        self.write_with(name, |w, _| {
            serde_json::to_writer_pretty(&mut *w, &value)?;
            writeln!(w)
        })
    }
}

/// Runs `command` on a dedicated pool of `options.threads` workers.
pub fn run(command: Command, config: &RunConfig, options: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = options.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Threads(e.to_string()))?;
    pool.install(|| run_in_pool(command, config, options))
}

fn run_in_pool(command: Command, config: &RunConfig, options: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut config = config.clone();
    if let (Some(seed), Some(sim)) = (options.seed, config.sim.as_mut()) {
        sim.seed = seed;
    }
    let model = config.validate()?;
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| config.io.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir).map_err(|source| CliError::Io { path: out_dir.clone(), source })?;
    let art = Artifacts { dir: out_dir.clone(), hash: config.hash() };
    art.write_with("effective_config.json", |w, _| {
        serde_json::to_writer_pretty(&mut *w, &config.effective())?;
        writeln!(w)
    })?;

    let mut realizable = None;
    if command == Command::Compare || command == Command::All {
        compare(&model, &config, &art)?;
    }
    if matches!(command, Command::Abstract | Command::Synthesize | Command::Simulate | Command::All) {
        let abs = run_abstract(&model, &config, &art)?;
        if command != Command::Abstract {
            let strategy = run_synthesize(&config, &abs, &art)?;
            realizable = Some(strategy.is_realizable());
            if strategy.is_realizable() && command != Command::Synthesize {
                run_simulate(&model, &config, &abs, &strategy, &art)?;
            }
        }
    }
    Ok(RunOutcome { realizable, out_dir })
}

fn run_abstract(model: &SystemModel, config: &RunConfig, art: &Artifacts) -> Result<Abstraction, CliError> {
    let start = Instant::now();
    let abs = build_abstraction(model, &config.spec.regions(), &config.params)?;
    let wall = start.elapsed().as_secs_f64();
    art.write_with("states.csv", |w, h| write_states_csv(&abs, w, Some(h)))?;
    art.write_with("inputs.csv", |w, h| write_inputs_csv(&abs, w, Some(h)))?;
    art.write_with("transitions.csv", |w, h| write_transitions_csv(&abs, w, Some(h)))?;

    let n = abs.states.dim();
    let finite: Vec<&Vec<f64>> = abs.gamma1.iter().filter(|g| g.iter().all(|v| v.is_finite())).collect();
    let stat = |f: fn(f64, f64) -> f64, init: f64| -> Vec<f64> {
        (0..n).map(|i| finite.iter().map(|g| g[i]).fold(init, f)).collect()
    };
    let mean: Vec<f64> = (0..n)
        .map(|i| finite.iter().map(|g| g[i]).sum::<f64>() / finite.len().max(1) as f64)
        .collect();
    let failures: Vec<_> = abs
        .failures
        .iter()
        .map(|f| json!({ "state": f.state, "input": f.input, "message": f.message }))
        .collect();
    art.write_json(
        "abstraction_summary.json",
        json!({
            "states": abs.n_states(),
            "inputs": abs.inputs.len(),
            "actions": abs.actions.iter().map(Vec::len).sum::<usize>(),
            "transitions": abs.n_transitions(),
            "gamma1": { "min": stat(f64::min, f64::INFINITY), "max": stat(f64::max, 0.0), "mean": mean },
            "failures": failures,
            "wall_time_s": wall,
        }),
    )?;
    Ok(abs)
}

/// Strategy for the configured objective.
pub fn synthesize(config: &RunConfig, abs: &Abstraction) -> Strategy {
    match config.spec.kind {
        SpecKind::Safety => synthesize_safety(abs),
        SpecKind::ReachStay => synthesize_reach_stay(abs),
    }
}

fn run_synthesize(config: &RunConfig, abs: &Abstraction, art: &Artifacts) -> Result<Strategy, CliError> {
    let strategy = synthesize(config, abs);
    art.write_with("winning.csv", |w, h| write_winning_csv(&strategy, w, Some(h)))?;
    art.write_with("strategy.csv", |w, h| write_strategy_csv(&strategy, w, Some(h)))?;
    let stay = strategy
        .winning
        .iter()
        .filter(|&s| strategy.choice(s).is_some_and(|c| c.mode == Mode::Stay))
        .count();
    art.write_json(
        "synthesis.json",
        json!({
            "kind": config.spec.kind,
            "realizable": strategy.is_realizable(),
            "winning_states": strategy.winning.len(),
            "stay_states": stay,
        }),
    )?;
    Ok(strategy)
}

/// Grid points of winning cells that remain winning under any measurement
/// error of size `eps`.
pub fn robust_starts(abs: &Abstraction, strategy: &Strategy, eps: &[f64]) -> Vec<usize> {
    let half: Vec<f64> = abs.states.granularity().iter().map(|e| 0.5 * e).collect();
    let winning: Vec<usize> = strategy.winning.iter().filter(|&s| s < abs.n_states()).collect();
    let robust: Vec<usize> = winning
        .iter()
        .copied()
        .filter(|&s| {
            let ball = BoxVec::centered(&abs.states.point(s), eps);
            abs.states.ids_within(&ball, &half).iter().all(|&t| strategy.winning.contains(t))
        })
        .collect();
    if robust.is_empty() {
        winning
    } else {
        robust
    }
}

/// Result of one seeded closed-loop run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub x0: Vec<f64>,
    pub trace: Trace,
    pub verdict: Verdict,
    /// Time of a strategy fallout, if one cut the run short.
    pub fallout: Option<f64>,
}

/// Runs `sim.runs` seeded closed loops in parallel; run `k` uses seed
/// `sim.seed + k` for its noise.
pub fn simulate_batch(
    model: &SystemModel,
    config: &RunConfig,
    abs: &Abstraction,
    strategy: &Strategy,
) -> Result<Vec<RunRecord>, CliError> {
    let Some(sim) = &config.sim else {
        return Err(CliError::Config("the sim block is required for simulation".into()));
    };
    let n = model.state_dim();
    let eps = sim.epsilon.clone().unwrap_or_else(|| vec![0.0; n]);
    let starts: Vec<Vec<f64>> = match &sim.initial_states {
        Some(xs) => (0..sim.runs).map(|k| xs[k % xs.len().max(1)].clone()).collect(),
        None => {
            let pool = robust_starts(abs, strategy, &eps);
            if pool.is_empty() {
                return Err(CliError::Config("no winning cell to start from".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
            (0..sim.runs).map(|_| abs.states.point(pool[rng.gen_range(0..pool.len())])).collect()
        }
    };
    let regions = config.spec.regions();
    let settings = SimSettings { horizon: sim.horizon, max_step: config.params.tau_s / 20.0 };
    let deadline = sim.settle_deadline();
    starts
        .into_par_iter()
        .enumerate()
        .map(|(k, x0)| {
            let seed = sim.seed.wrapping_add(k as u64);
            let noise = NoiseModel { delay: sim.delay, error: sim.error, max_delay: sim.max_delay, epsilon: eps.clone(), seed };
            let (trace, fallout) = match closed_loop(model, abs, strategy, &regions, &x0, &noise, settings) {
                Ok(t) => (t, None),
                Err(SimError::StrategyFallout { time, trace, .. }) => (*trace, Some(time)),
                Err(e) => return Err(e.into()),
            };
            let verdict = check_trace(&trace, &regions, deadline, sim.horizon);
            Ok(RunRecord { seed, x0, trace, verdict, fallout })
        })
        .collect()
}

fn run_simulate(
    model: &SystemModel,
    config: &RunConfig,
    abs: &Abstraction,
    strategy: &Strategy,
    art: &Artifacts,
) -> Result<(), CliError> {
    let records = simulate_batch(model, config, abs, strategy)?;
    let mut counts = [0usize; 3];
    let mut fallouts = 0;
    for (k, rec) in records.iter().enumerate() {
        art.write_with(&format!("traces/trace_{k:03}.csv"), |w, h| write_trace_csv(&rec.trace, w, Some(h)))?;
        let mut v = serde_json::to_value(rec.verdict)?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("seed".into(), json!(rec.seed));
            obj.insert("x0".into(), json!(rec.x0));
            obj.insert("fallout_time".into(), json!(rec.fallout));
        }
        art.write_json(&format!("traces/verdict_{k:03}.json"), v)?;
        counts[match rec.verdict.result {
            VerdictKind::Holds => 0,
            VerdictKind::Violated => 1,
            VerdictKind::Inconclusive => 2,
        }] += 1;
        fallouts += rec.fallout.is_some() as usize;
    }
    art.write_json(
        "simulation_summary.json",
        json!({ "runs": records.len(), "holds": counts[0], "violated": counts[1], "inconclusive": counts[2], "fallouts": fallouts }),
    )
}

/// One-step successor counts of the linearization method and the
/// Lipschitz baseline at a single state/input pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub tau: f64,
    pub lipschitz: f64,
    pub method_count: usize,
    pub baseline_count: usize,
    pub linearization_box: BoxVec,
    pub initial_box: BoxVec,
    pub method_hull: BoxVec,
    pub baseline_box: BoxVec,
}

/// Snaps the configured pair to the grids and compares both reach
/// computations over the method's hold duration.
pub fn comparison(model: &SystemModel, params: &AbstractionParams, state: &[f64], input: &[f64]) -> Result<Comparison, CliError> {
    let states = Grid::new(model.state_domain(), &params.eta)?;
    let inputs = Grid::new(model.input_domain(), &params.mu)?;
    let sid = states.nearest(state);
    let iid = inputs.nearest(input);
    let (q, v) = (states.point(sid), inputs.point(iid));
    let gamma1 = compute_gamma1(model, sid, &q, &inputs, params)?;
    let gamma2 = params.epsilon();
    let x0 = initial_cell(&q, &params.eta, &gamma1);
    let Some((action, found)) = pair_action(model, &states, &q, iid, &v, &x0, &gamma2, params)? else {
        return Err(CliError::Config("the compared pair admits no verified hold duration".into()));
    };
    let initial_box = x0.interval_hull();
    let baseline_box = lipschitz_baseline_reach(model, &q, &v, &initial_box, action.tau)?;
    let w: Vec<f64> = params.eta.iter().zip(&gamma2).map(|(e, g)| 0.5 * e + g).collect();
    let mut baseline_count = states.ids_within(&baseline_box, &w).len();
    if !states.domain().contains_box(&baseline_box) {
        baseline_count += 1;
    }
    Ok(Comparison {
        state: q.clone(),
        input: v,
        tau: action.tau,
        lipschitz: lipschitz_constant(model)?,
        method_count: action.successors.len(),
        baseline_count,
        linearization_box: BoxVec::centered(&q, &params.r),
        initial_box,
        method_hull: found.reach.at_time.interval_hull(),
        baseline_box,
    })
}

fn compare(model: &SystemModel, config: &RunConfig, art: &Artifacts) -> Result<(), CliError> {
    let Some(c) = &config.compare else {
        return Ok(());
    };
    let cmp = comparison(model, &config.params, &c.state, &c.input)?;
    art.write_json(
        "compare.json",
        json!({
            "state": cmp.state,
            "input": cmp.input,
            "tau": cmp.tau,
            "lipschitz_constant": cmp.lipschitz,
            "method_successors": cmp.method_count,
            "baseline_successors": cmp.baseline_count,
        }),
    )?;
    let n = cmp.state.len();
    art.write_with("compare_regions.csv", |w, h| {
        writeln!(w, "# config_hash: {h}")?;
        let cols: Vec<String> = (1..=n).map(|i| format!("lo{i}")).chain((1..=n).map(|i| format!("hi{i}"))).collect();
        writeln!(w, "region,{}", cols.join(","))?;
        for (name, b) in [
            ("linearization", &cmp.linearization_box),
            ("initial", &cmp.initial_box),
            ("method", &cmp.method_hull),
            ("baseline", &cmp.baseline_box),
        ] {
            let vals: Vec<String> = b.lo().into_iter().chain(b.hi()).map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{name},{}", vals.join(","))?;
        }
        Ok(())
    })
}
