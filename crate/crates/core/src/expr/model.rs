use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_expr, Expr, ExprError, Interval, IntervalMatrix};
use crate::linalg::Matrix;
use crate::zonotope::BoxVec;

/// Textual model description, as it appears in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDesc {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    /// One expression per state, in the state order.
    pub dynamics: Vec<String>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub state_domain: Vec<Interval>,
    pub input_domain: Vec<Interval>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dynamics component {component}: {source}")]
    Expr {
        component: usize,
        #[source]
        source: ExprError,
    },
    #[error("duplicate identifier `{0}`")]
    DuplicateName(String),
    #[error("`{0}` is a reserved function name")]
    ReservedName(String),
    #[error("expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("{0} domain must have positive width in every coordinate")]
    EmptyDomain(&'static str),
    #[error("constant `{0}` is not finite")]
    BadConstant(String),
    #[error("invalid model description: {0}")]
    Json(#[from] serde_json::Error),
}

/// Parsed control system `dx/dt = f(x, u)` with its symbolic Jacobian and
/// Hessians.
#[derive(Clone, Debug)]
pub struct SystemModel {
    desc: ModelDesc,
    slot_names: Vec<String>,
    constant_values: Vec<f64>,
    dynamics: Vec<Expr>,
    /// `jacobian[i][j] = d f_i / d x_j`.
    jacobian: Vec<Vec<Expr>>,
    /// `hessians[i][j][k] = d^2 f_i / d x_j d x_k`.
    hessians: Vec<Vec<Vec<Expr>>>,
    state_domain: BoxVec,
    input_domain: BoxVec,
}

/// Parses a model description into a [`SystemModel`].
pub fn parse_model(desc: &ModelDesc) -> Result<SystemModel, ModelError> {
    SystemModel::new(desc.clone())
}

impl SystemModel {
    pub fn new(desc: ModelDesc) -> Result<Self, ModelError> {
        let n = desc.states.len();
        let m = desc.inputs.len();
        if desc.dynamics.len() != n {
            return Err(ModelError::Dimension { what: "dynamics components", expected: n, got: desc.dynamics.len() });
        }
        if desc.state_domain.len() != n {
            return Err(ModelError::Dimension { what: "state domain intervals", expected: n, got: desc.state_domain.len() });
        }
        if desc.input_domain.len() != m {
            return Err(ModelError::Dimension { what: "input domain intervals", expected: m, got: desc.input_domain.len() });
        }
        if n == 0 {
            return Err(ModelError::Dimension { what: "states", expected: 1, got: 0 });
        }
        if desc.state_domain.iter().any(|i| i.width() <= 0.0) {
            return Err(ModelError::EmptyDomain("state"));
        }
        if desc.input_domain.iter().any(|i| i.width() <= 0.0) {
            return Err(ModelError::EmptyDomain("input"));
        }

        let mut slot_names: Vec<String> = desc.states.clone();
        slot_names.extend(desc.inputs.iter().cloned());
        slot_names.extend(desc.constants.keys().cloned());
        for (k, name) in slot_names.iter().enumerate() {
            if super::Func::from_name(name).is_some() {
                return Err(ModelError::ReservedName(name.clone()));
            }
            if slot_names[..k].contains(name) {
                return Err(ModelError::DuplicateName(name.clone()));
            }
        }
        let constant_values: Vec<f64> = desc.constants.values().copied().collect();
        if let Some((name, _)) = desc.constants.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::BadConstant(name.clone()));
        }

        let dynamics = desc
            .dynamics
            .iter()
            .enumerate()
            .map(|(component, src)| {
                parse_expr(src, &slot_names).map_err(|source| ModelError::Expr { component, source })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let jacobian: Vec<Vec<Expr>> =
            dynamics.iter().map(|f| (0..n).map(|j| f.derivative(j)).collect()).collect();
        let hessians = jacobian
            .iter()
            .map(|row| {
                let mut h = vec![vec![Expr::Const(0.0); n]; n];
                for j in 0..n {
                    for k in j..n {
                        let d = row[j].derivative(k);
                        h[k][j] = d.clone();
                        h[j][k] = d;
                    }
                }
                h
            })
            .collect();

        Ok(Self {
            state_domain: BoxVec::new(desc.state_domain.clone()),
            input_domain: BoxVec::new(desc.input_domain.clone()),
            desc,
            slot_names,
            constant_values,
            dynamics,
            jacobian,
            hessians,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn desc(&self) -> &ModelDesc {
        &self.desc
    }

    pub fn state_dim(&self) -> usize {
        self.desc.states.len()
    }

    pub fn input_dim(&self) -> usize {
        self.desc.inputs.len()
    }

    pub fn state_domain(&self) -> &BoxVec {
        &self.state_domain
    }

    pub fn input_domain(&self) -> &BoxVec {
        &self.input_domain
    }

    /// Names of all variable slots: states, inputs, constants.
    pub fn slot_names(&self) -> &[String] {
        &self.slot_names
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.dynamics
    }

    pub fn jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.jacobian
    }

    pub fn hessian_exprs(&self, i: usize) -> &[Vec<Expr>] {
        &self.hessians[i]
    }

    fn env(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.state_dim(), "state dimension");
        assert_eq!(u.len(), self.input_dim(), "input dimension");
        let mut env = Vec::with_capacity(self.slot_names.len());
        env.extend_from_slice(x);
        env.extend_from_slice(u);
        env.extend_from_slice(&self.constant_values);
        env
    }

    /// Interval environment over a state box and an input box.
    pub fn interval_env(&self, x: &BoxVec, u: &BoxVec) -> Vec<Interval> {
        assert_eq!(x.dim(), self.state_dim(), "state dimension");
        assert_eq!(u.dim(), self.input_dim(), "input dimension");
        let mut env = Vec::with_capacity(self.slot_names.len());
        env.extend_from_slice(x.intervals());
        env.extend_from_slice(u.intervals());
        env.extend(self.constant_values.iter().map(|&c| Interval::point(c)));
        env
    }

    /// `f(x, u)`.
    pub fn eval_field(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ExprError> {
        let env = self.env(x, u);
        self.dynamics.iter().map(|f| f.eval(&env)).collect()
    }

    /// Writes `f(x, u)` into `out`, reusing `env` as scratch space.
    pub(crate) fn eval_field_into(
        &self,
        x: &[f64],
        u: &[f64],
        env: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), ExprError> {
        env.clear();
        env.extend_from_slice(x);
        env.extend_from_slice(u);
        env.extend_from_slice(&self.constant_values);
        for (o, f) in out.iter_mut().zip(&self.dynamics) {
            *o = f.eval(env)?;
        }
        Ok(())
    }

    /// `df/dx` evaluated at `(x, u)`.
    pub fn jacobian_at(&self, x: &[f64], u: &[f64]) -> Result<Matrix, ExprError> {
        let env = self.env(x, u);
        let n = self.state_dim();
        let mut m = Matrix::zeros(n, n);
        for (i, row) in self.jacobian.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m[(i, j)] = e.eval(&env)?;
            }
        }
        Ok(m)
    }

    /// Entrywise enclosure of the Hessian of `f_i` over the state box, with
    /// inputs ranging over `input_box`.
    pub fn hessian_bounds(
        &self,
        i: usize,
        state_box: &BoxVec,
        input_box: &BoxVec,
    ) -> Result<IntervalMatrix, ExprError> {
        let env = self.interval_env(state_box, input_box);
        let n = self.state_dim();
        let h = &self.hessians[i];
        let mut out = vec![vec![Interval::point(0.0); n]; n];
        for j in 0..n {
            for k in j..n {
                let v = h[j][k].eval_interval(&env)?;
                out[j][k] = v;
                out[k][j] = v;
            }
        }
        Ok(out)
    }

    /// Upper bound on `max_i sum_j |df_i/dx_j|` over the given boxes.
    pub fn jacobian_norm_bound(&self, state_box: &BoxVec, input_box: &BoxVec) -> Result<f64, ExprError> {
        let env = self.interval_env(state_box, input_box);
        let mut best = 0.0f64;
        for row in &self.jacobian {
            let mut s = 0.0;
            for e in row {
                s += e.eval_interval(&env)?.mag();
            }
            best = best.max(s);
        }
        Ok(best)
    }
}
