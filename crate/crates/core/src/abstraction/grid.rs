use crate::zonotope::BoxVec;

use super::AbstractionError;

const LATTICE_TOL: f64 = 1e-9;

/// Lattice points `eta ∘ k` (integer `k`) inside a box, indexed
/// lexicographically in `k` with the first coordinate most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: BoxVec,
    eta: Vec<f64>,
    k_lo: Vec<i64>,
    counts: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(domain: &BoxVec, eta: &[f64]) -> Result<Self, AbstractionError> {
        if domain.dim() != eta.len() || eta.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(AbstractionError::InvalidParams("granularity must be positive and match the domain".into()));
        }
        let mut k_lo = Vec::with_capacity(eta.len());
        let mut counts = Vec::with_capacity(eta.len());
        for (iv, &e) in domain.intervals().iter().zip(eta) {
            let lo = (iv.lo() / e - LATTICE_TOL).ceil() as i64;
            let hi = (iv.hi() / e + LATTICE_TOL).floor() as i64;
            if hi < lo {
                return Err(AbstractionError::EmptyGrid);
            }
            k_lo.push(lo);
            counts.push((hi - lo + 1) as usize);
        }
        let len = counts.iter().product();
        Ok(Self { domain: domain.clone(), eta: eta.to_vec(), k_lo, counts, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn domain(&self) -> &BoxVec {
        &self.domain
    }

    pub fn granularity(&self) -> &[f64] {
        &self.eta
    }

    /// Number of lattice points along each axis.
    pub fn shape(&self) -> &[usize] {
        &self.counts
    }

    fn offsets(&self, mut id: usize) -> Vec<usize> {
        let mut off = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            off[i] = id % self.counts[i];
            id /= self.counts[i];
        }
        off
    }

    fn id_of(&self, off: &[usize]) -> usize {
        off.iter().zip(&self.counts).fold(0, |acc, (&o, &c)| acc * c + o)
    }

    pub fn point(&self, id: usize) -> Vec<f64> {
        assert!(id < self.len, "grid id {id} out of range");
        self.offsets(id)
            .iter()
            .zip(&self.k_lo)
            .zip(&self.eta)
            .map(|((&o, &k), &e)| (k + o as i64) as f64 * e)
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len).map(|id| self.point(id))
    }

    /// Nearest lattice point (ties toward the smaller coordinate), clamped
    /// to the grid.
    pub fn nearest(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.dim(), "point dimension");
        let off: Vec<usize> = (0..self.dim())
            .map(|i| {
                let k = (x[i] / self.eta[i] - 0.5).ceil() as i64 - self.k_lo[i];
                k.clamp(0, self.counts[i] as i64 - 1) as usize
            })
            .collect();
        self.id_of(&off)
    }

    /// Ids of all points `q` with `B_w(q) ∩ b ≠ ∅`, in increasing order.
    pub fn ids_within(&self, b: &BoxVec, w: &[f64]) -> Vec<usize> {
        let n = self.dim();
        let mut ranges = Vec::with_capacity(n);
        for i in 0..n {
            let iv = b.intervals()[i];
            let lo = ((iv.lo() - w[i]) / self.eta[i] - LATTICE_TOL).ceil() as i64 - self.k_lo[i];
            let hi = ((iv.hi() + w[i]) / self.eta[i] + LATTICE_TOL).floor() as i64 - self.k_lo[i];
            let lo = lo.max(0);
            let hi = hi.min(self.counts[i] as i64 - 1);
            if hi < lo {
                return Vec::new();
            }
            ranges.push((lo as usize, hi as usize));
        }
        let mut out = Vec::new();
        let mut off: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.id_of(&off));
            let mut i = n;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if off[i] < ranges[i].1 {
                    off[i] += 1;
                    break;
                }
                off[i] = ranges[i].0;
            }
        }
    }
}
