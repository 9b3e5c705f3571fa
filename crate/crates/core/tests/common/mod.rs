#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use zonoabs::cli::RunConfig;
use zonoabs::zonotope::BoxVec;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).expect("shipped configuration loads")
}

/// Pendulum field written out by hand, independent of the expression engine.
pub fn pendulum_field(x: &[f64], u: &[f64]) -> Vec<f64> {
    let (g, l, m, k) = (9.8, 5.0, 0.5, 3.0);
    vec![x[1], -(g / l) * x[0].sin() - (k / m) * x[1] + u[0]]
}

pub fn cruise_field(x: &[f64], u: &[f64]) -> Vec<f64> {
    vec![u[0] - 0.1 - 0.00016 * x[0] * x[0]]
}

/// Classical RK4 with `steps` equal steps; returns every mesh state.
pub fn rk4_mesh(f: &dyn Fn(&[f64]) -> Vec<f64>, x0: &[f64], t: f64, steps: usize) -> Vec<Vec<f64>> {
    let h = t / steps as f64;
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    let axpy = |x: &[f64], k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, &k1, 0.5 * h));
        let k3 = f(&axpy(&x, &k2, 0.5 * h));
        let k4 = f(&axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x.clone());
    }
    out
}

/// Uniform sample from a box; with probability 1/4 each coordinate snaps to
/// a face so that extreme points are exercised.
pub fn sample_box(rng: &mut impl Rng, b: &BoxVec) -> Vec<f64> {
    b.intervals()
        .iter()
        .map(|iv| match rng.gen_range(0..8) {
            0 => iv.lo(),
            1 => iv.hi(),
            _ => rng.gen_range(iv.lo()..=iv.hi()),
        })
        .collect()
}

pub fn inflated(b: &BoxVec, tol: f64) -> BoxVec {
    b.inflate(&vec![tol; b.dim()])
}
