//! SBM parameters, latent block assignments and the network generator.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Result, SbmError};
use crate::network::{DyadState, ObservedNetwork};

/// `theta = (alpha, pi)`: block proportions and symmetric connectivity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParameters {
    alpha: Vec<f64>,
    pi: DMatrix<f64>,
}

const ALPHA_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

impl SbmParameters {
    pub fn new(alpha: Vec<f64>, pi: DMatrix<f64>) -> Result<Self> {
        let q = alpha.len();
        if q == 0 {
            return Err(SbmError::InvalidParameters("Q must be at least 1".into()));
        }
        if pi.nrows() != q || pi.ncols() != q {
            return Err(SbmError::DimensionMismatch {
                expected: q,
                found: pi.nrows().max(pi.ncols()),
            });
        }
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(SbmError::InvalidParameters("alpha entries must lie in [0, 1]".into()));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > ALPHA_TOL * q as f64 {
            return Err(SbmError::InvalidParameters(format!("alpha sums to {total}, not 1")));
        }
        for a in 0..q {
            for b in 0..q {
                let p = pi[(a, b)];
                if !(0.0..=1.0).contains(&p) {
                    return Err(SbmError::InvalidParameters(format!("pi[{a},{b}] = {p} outside [0, 1]")));
                }
                if (p - pi[(b, a)]).abs() > SYMMETRY_TOL {
                    return Err(SbmError::InvalidParameters("pi must be symmetric".into()));
                }
            }
        }
        Ok(SbmParameters { alpha, pi })
    }

    /// Builds from row-major nested vectors.
    pub fn from_rows(alpha: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let q = rows.len();
        if rows.iter().any(|r| r.len() != q) {
            return Err(SbmError::InvalidParameters("pi must be square".into()));
        }
        let pi = DMatrix::from_fn(q, q, |a, b| rows[a][b]);
        Self::new(alpha, pi)
    }

    /// Affiliation topology: `1 - epsilon` on the diagonal, `epsilon` elsewhere.
    pub fn affiliation(alpha: Vec<f64>, epsilon: f64) -> Result<Self> {
        let q = alpha.len();
        let pi = DMatrix::from_fn(q, q, |a, b| if a == b { 1.0 - epsilon } else { epsilon });
        Self::new(alpha, pi)
    }

    /// Within-block probability `intra`, between-block probability `inter`.
    pub fn planted_partition(alpha: Vec<f64>, intra: f64, inter: f64) -> Result<Self> {
        let q = alpha.len();
        let pi = DMatrix::from_fn(q, q, |a, b| if a == b { intra } else { inter });
        Self::new(alpha, pi)
    }

    /// Skips validation; used internally by M-steps whose output is valid by construction.
    pub(crate) fn from_parts_unchecked(alpha: Vec<f64>, pi: DMatrix<f64>) -> Self {
        SbmParameters { alpha, pi }
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// Overall connectivity `sum_{q,l} alpha_q alpha_l pi_ql`.
    pub fn connectivity(&self) -> f64 {
        let q = self.q();
        let mut c = 0.0;
        for a in 0..q {
            for b in 0..q {
                c += self.alpha[a] * self.alpha[b] * self.pi[(a, b)];
            }
        }
        c
    }

    /// `pi * alpha`, the expected edge probability of a node in each block.
    pub fn pi_alpha(&self) -> Vec<f64> {
        let q = self.q();
        (0..q)
            .map(|a| (0..q).map(|b| self.pi[(a, b)] * self.alpha[b]).sum())
            .collect()
    }

    /// Largest absolute difference over all entries of alpha and pi.
    pub fn max_abs_diff(&self, other: &SbmParameters) -> f64 {
        let da = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dp = self.pi.iter().zip(other.pi.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        da.max(dp)
    }

    /// Relabels blocks so that new block `k` is old block `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> SbmParameters {
        let q = self.q();
        let alpha = perm.iter().map(|&k| self.alpha[k]).collect();
        let pi = DMatrix::from_fn(q, q, |a, b| self.pi[(perm[a], perm[b])]);
        SbmParameters { alpha, pi }
    }
}

/// Hard block labels `z_i` in `0..q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAssignment {
    labels: Vec<usize>,
    q: usize,
}

impl BlockAssignment {
    pub fn new(labels: Vec<usize>, q: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= q) {
            return Err(SbmError::InvalidParameters(format!("label {bad} not below Q = {q}")));
        }
        Ok(BlockAssignment { labels, q })
    }

    /// MAP labels of a responsibility matrix; ties go to the lowest block index.
    pub fn harden(tau: &DMatrix<f64>) -> Self {
        let labels = (0..tau.nrows())
            .map(|i| {
                let mut best = 0;
                for q in 1..tau.ncols() {
                    if tau[(i, q)] > tau[(i, best)] {
                        best = q;
                    }
                }
                best
            })
            .collect();
        BlockAssignment { labels, q: tau.ncols() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn one_hot(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.labels.len(), self.q, |i, k| if self.labels[i] == k { 1.0 } else { 0.0 })
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.q];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws labels i.i.d. from `alpha`, then each dyad independently from `pi`.
pub fn sample_sbm_network<R: Rng + ?Sized>(
    params: &SbmParameters,
    n: usize,
    rng: &mut R,
) -> Result<(ObservedNetwork, BlockAssignment)> {
    if n == 0 {
        return Err(SbmError::InvalidParameters("n must be at least 1".into()));
    }
    let labels: Vec<usize> = (0..n).map(|_| draw_categorical(&params.alpha, rng)).collect();
    let z = BlockAssignment::new(labels, params.q())?;
    let net = sample_given_blocks(params, &z, rng);
    Ok((net, z))
}

/// Draws the edges of a fully observed network given fixed labels.
pub fn sample_given_blocks<R: Rng + ?Sized>(
    params: &SbmParameters,
    z: &BlockAssignment,
    rng: &mut R,
) -> ObservedNetwork {
    let labels = z.labels();
    ObservedNetwork::from_fn(labels.len(), |i, j| {
        let p = params.pi[(labels[i], labels[j])];
        DyadState::from_edge(rng.random::<f64>() < p)
    })
}
