//! Zonotopes `{c + sum_i l_i g_i : l_i in [-1, 1]}` and axis-aligned boxes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Interval, IntervalMatrix};
use crate::linalg::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZonoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("interval matrix {index} is not symmetric")]
    Asymmetric { index: usize },
}

fn check_dim(expected: usize, got: usize) -> Result<(), ZonoError> {
    if expected == got {
        Ok(())
    } else {
        Err(ZonoError::Dimension { expected, got })
    }
}

/// Componentwise interval vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxVec(Vec<Interval>);

impl BoxVec {
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self(intervals)
    }

    /// Panics if any pair has `lo > hi`.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Self {
        Self(bounds.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect())
    }

    /// `B_r(c)`.
    pub fn centered(center: &[f64], radius: &[f64]) -> Self {
        assert_eq!(center.len(), radius.len(), "center/radius dimension");
        Self(center.iter().zip(radius).map(|(&c, &r)| Interval::centered(c, r)).collect())
    }

    pub fn point(p: &[f64]) -> Self {
        Self(p.iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn lo(&self) -> Vec<f64> {
        self.0.iter().map(Interval::lo).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.0.iter().map(Interval::hi).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(Interval::mid).collect()
    }

    pub fn radius(&self) -> Vec<f64> {
        self.0.iter().map(Interval::rad).collect()
    }

    /// Largest infinity norm of any member.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(Interval::mag).fold(0.0, f64::max)
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        self.dim() == p.len() && self.0.iter().zip(p).all(|(i, &x)| i.contains(x))
    }

    /// `other ⊆ self`, boundaries included.
    pub fn contains_box(&self, other: &BoxVec) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a.contains_interval(b))
    }

    pub fn intersects(&self, other: &BoxVec) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a.intersects(b))
    }

    /// Grows every coordinate by `by[i]` on both sides.
    pub fn inflate(&self, by: &[f64]) -> BoxVec {
        assert_eq!(self.dim(), by.len(), "inflation dimension");
        Self(self.0.iter().zip(by).map(|(i, &r)| i.inflate(r)).collect())
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxVec) -> BoxVec {
        assert_eq!(self.dim(), other.dim(), "hull dimension");
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a.hull(b)).collect())
    }
}

/// Center plus generator list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zonotope {
    center: Vec<f64>,
    generators: Vec<Vec<f64>>,
}

impl Zonotope {
    pub fn new(center: Vec<f64>, generators: Vec<Vec<f64>>) -> Result<Self, ZonoError> {
        for g in &generators {
            check_dim(center.len(), g.len())?;
        }
        Ok(Self { center, generators })
    }

    pub fn point(p: &[f64]) -> Self {
        Self { center: p.to_vec(), generators: Vec::new() }
    }

    /// Box as a zonotope: midpoint center and one axis generator per
    /// coordinate carrying the half-width.
    pub fn from_box(b: &BoxVec) -> Self {
        let n = b.dim();
        let generators = b
            .radius()
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut g = vec![0.0; n];
                g[i] = r;
                g
            })
            .collect();
        Self { center: b.center(), generators }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn order(&self) -> f64 {
        self.generators.len() as f64 / self.dim() as f64
    }

    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope, ZonoError> {
        check_dim(self.dim(), other.dim())?;
        let center = self.center.iter().zip(&other.center).map(|(a, b)| a + b).collect();
        let generators = self.generators.iter().chain(&other.generators).cloned().collect();
        Ok(Zonotope { center, generators })
    }

    pub fn translate(&self, by: &[f64]) -> Result<Zonotope, ZonoError> {
        check_dim(self.dim(), by.len())?;
        Ok(Zonotope {
            center: self.center.iter().zip(by).map(|(a, b)| a + b).collect(),
            generators: self.generators.clone(),
        })
    }

    pub fn linear_map(&self, m: &Matrix) -> Result<Zonotope, ZonoError> {
        check_dim(m.cols(), self.dim())?;
        Ok(Zonotope {
            center: m.mul_vec(&self.center),
            generators: self.generators.iter().map(|g| m.mul_vec(g)).collect(),
        })
    }

    pub fn scale(&self, k: f64) -> Zonotope {
        Zonotope {
            center: self.center.iter().map(|v| v * k).collect(),
            generators: self.generators.iter().map(|g| g.iter().map(|v| v * k).collect()).collect(),
        }
    }

    /// Half-widths of the tight bounding box.
    pub fn hull_radius(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        for g in &self.generators {
            for (ri, gi) in r.iter_mut().zip(g) {
                *ri += gi.abs();
            }
        }
        r
    }

    /// Tight bounding box.
    pub fn interval_hull(&self) -> BoxVec {
        BoxVec::centered(&self.center, &self.hull_radius())
    }

    /// Support function `max_{x in Z} d . x`.
    pub fn support(&self, d: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(d).map(|(x, y)| x * y).sum::<f64>();
        dot(&self.center) + self.generators.iter().map(|g| dot(g).abs()).sum::<f64>()
    }

    /// Zonotope enclosing the convex hull of `self` and `other`.
    pub fn convex_hull_overapprox(&self, other: &Zonotope) -> Result<Zonotope, ZonoError> {
        check_dim(self.dim(), other.dim())?;
        let n = self.dim();
        let zero = vec![0.0; n];
        let l = self.generators.len().max(other.generators.len());
        let half = |a: &[f64], b: &[f64], sign: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| 0.5 * (x + sign * y)).collect()
        };
        let g1 = |i: usize| self.generators.get(i).map_or(zero.as_slice(), Vec::as_slice);
        let g2 = |i: usize| other.generators.get(i).map_or(zero.as_slice(), Vec::as_slice);

        let center = half(&self.center, &other.center, 1.0);
        let mut generators = Vec::with_capacity(2 * l + 1);
        generators.extend((0..l).map(|i| half(g1(i), g2(i), 1.0)));
        generators.push(half(&self.center, &other.center, -1.0));
        generators.extend((0..l).map(|i| half(g1(i), g2(i), -1.0)));
        Ok(Zonotope { center, generators })
    }

    /// Caps the generator count at `floor(max_order * n)`. The smallest
    /// generators (Euclidean norm) are replaced by the axis-aligned box
    /// enclosing their sum.
    pub fn reduce_order(&self, max_order: f64) -> Zonotope {
        let n = self.dim();
        let budget = ((max_order * n as f64).floor() as usize).max(n);
        if self.generators.len() <= budget {
            return self.clone();
        }
        let keep = budget - n;
        let norm2 = |g: &Vec<f64>| g.iter().map(|v| v * v).sum::<f64>();
        let mut idx: Vec<usize> = (0..self.generators.len()).collect();
        idx.sort_by(|&a, &b| {
            norm2(&self.generators[b])
                .total_cmp(&norm2(&self.generators[a]))
                .then(a.cmp(&b))
        });
        let mut kept: Vec<usize> = idx[..keep].to_vec();
        kept.sort_unstable();

        let mut boxed = vec![0.0; n];
        for &i in &idx[keep..] {
            for (b, g) in boxed.iter_mut().zip(&self.generators[i]) {
                *b += g.abs();
            }
        }
        let mut generators: Vec<Vec<f64>> = kept.iter().map(|&i| self.generators[i].clone()).collect();
        for (i, &r) in boxed.iter().enumerate() {
            if r > 0.0 {
                let mut g = vec![0.0; n];
                g[i] = r;
                generators.push(g);
            }
        }
        Zonotope { center: self.center.clone(), generators }
    }

    /// Exact: the interval hull is the tight bounding box.
    pub fn contained_in_box(&self, b: &BoxVec) -> bool {
        b.contains_box(&self.interval_hull())
    }

    /// Conservative: tests the interval hull against the box.
    pub fn intersects_box(&self, b: &BoxVec) -> bool {
        b.intersects(&self.interval_hull())
    }
}

/// Box enclosing `{1/2 x^T H_i x : x in hull(z), H_i in hs[i]}` for each `i`,
/// by interval arithmetic over the interval hull of `z`.
pub fn quad_map(hs: &[IntervalMatrix], z: &Zonotope) -> Result<BoxVec, ZonoError> {
    let n = z.dim();
    let x = z.interval_hull();
    let x = x.intervals();
    let mut out = Vec::with_capacity(hs.len());
    for (index, h) in hs.iter().enumerate() {
        check_dim(n, h.len())?;
        for row in h {
            check_dim(n, row.len())?;
        }
        let mut acc = Interval::point(0.0);
        for j in 0..n {
            acc = acc + h[j][j].scale(0.5) * x[j].sqr();
            for k in j + 1..n {
                if h[j][k] != h[k][j] {
                    return Err(ZonoError::Asymmetric { index });
                }
                acc = acc + h[j][k] * (x[j] * x[k]);
            }
        }
        out.push(acc);
    }
    Ok(BoxVec::new(out))
}
