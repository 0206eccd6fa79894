//! Dense dyad-weight engine shared by the MAR and NMAR estimators.
//!
//! Every estimator works on two symmetric `n x n` matrices with zero diagonal:
//! `ones[i, j]` is the (expected) edge indicator on an included dyad and
//! `zeros[i, j]` its complement. For MAR only observed dyads are included and
//! the indicator is the observed value; for NMAR every dyad is included and
//! missing dyads carry `nu` and `1 - nu`.

use nalgebra::DMatrix;

use crate::error::{Result, SbmError};
use crate::network::{DyadState, ObservedNetwork};
use crate::numeric::{clamp_prob, softmax_in_place, xlogy};

/// Inner fixed-point sweeps stop once the largest responsibility change falls below this.
pub const VE_TOLERANCE: f64 = 1e-6;
pub const VE_MAX_SWEEPS: usize = 50;

/// Value used for a block pair that no included dyad touches.
pub const EMPTY_PAIR_PI: f64 = 0.5;

#[derive(Debug, Clone)]
pub(crate) struct DyadWeights {
    pub ones: DMatrix<f64>,
    pub zeros: DMatrix<f64>,
}

impl DyadWeights {
    /// Observed dyads only.
    pub fn observed(net: &ObservedNetwork) -> Self {
        let n = net.n();
        let mut ones = DMatrix::zeros(n, n);
        let mut zeros = DMatrix::zeros(n, n);
        for (i, j, s) in net.dyads() {
            match s {
                DyadState::Present => {
                    ones[(i, j)] = 1.0;
                    ones[(j, i)] = 1.0;
                }
                DyadState::Absent => {
                    zeros[(i, j)] = 1.0;
                    zeros[(j, i)] = 1.0;
                }
                DyadState::Missing => {}
            }
        }
        DyadWeights { ones, zeros }
    }

    /// All dyads, with missing ones imputed by `nu` (aligned with `missing`).
    pub fn imputed(net: &ObservedNetwork, missing: &[(usize, usize)], nu: &[f64]) -> Self {
        let mut w = Self::observed(net);
        w.set_missing(missing, nu);
        w
    }

    pub fn set_missing(&mut self, missing: &[(usize, usize)], nu: &[f64]) {
        for (&(i, j), &v) in missing.iter().zip(nu) {
            self.ones[(i, j)] = v;
            self.ones[(j, i)] = v;
            self.zeros[(i, j)] = 1.0 - v;
            self.zeros[(j, i)] = 1.0 - v;
        }
    }

    /// Block-pair sums over ordered dyads: `(tau^t ones tau, tau^t zeros tau)`.
    /// Every unordered dyad contributes to both `(q, l)` and `(l, q)`.
    pub fn block_counts(&self, tau: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let t_ones = tau.transpose() * (&self.ones * tau);
        let t_zeros = tau.transpose() * (&self.zeros * tau);
        (symmetrize(t_ones), symmetrize(t_zeros))
    }

    /// `sum_{dyads} sum_{q,l} tau_iq tau_jl log b(x_ij; pi_ql)`.
    pub fn sbm_term(&self, tau: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<f64> {
        let (ones, zeros) = self.block_counts(tau);
        sbm_term_from_counts(&ones, &zeros, pi)
    }

    /// Connectivity maximizing the SBM term, clamped into the open unit interval.
    /// Returns the block pairs whose denominator vanished.
    pub fn m_step_pi(&self, tau: &DMatrix<f64>) -> (DMatrix<f64>, Vec<(usize, usize)>) {
        let (ones, zeros) = self.block_counts(tau);
        let q = tau.ncols();
        let mut empty = Vec::new();
        let pi = DMatrix::from_fn(q, q, |a, b| {
            let den = ones[(a, b)] + zeros[(a, b)];
            if den > 0.0 {
                clamp_prob(ones[(a, b)] / den)
            } else {
                if a <= b {
                    empty.push((a, b));
                }
                EMPTY_PAIR_PI
            }
        });
        (pi, empty)
    }

    /// Gauss-Seidel fixed point for the responsibilities. `log_prior[i, q]` holds
    /// `log alpha_q` plus any design weight `log lambda_iq`; returns the number of
    /// sweeps performed.
    pub fn ve_fixed_point(&self, tau: &mut DMatrix<f64>, log_prior: &DMatrix<f64>, pi: &DMatrix<f64>) -> usize {
        let n = tau.nrows();
        let q = tau.ncols();
        let log_pi = pi.map(|p| clamp_prob(p).ln());
        let log_1m_pi = pi.map(|p| (-clamp_prob(p)).ln_1p());
        let mut a = vec![0.0; q];
        let mut c = vec![0.0; q];
        let mut scores = vec![0.0; q];
        let mut sweeps = 0;
        while sweeps < VE_MAX_SWEEPS {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for i in 0..n {
                let ones_i = self.ones.column(i);
                let zeros_i = self.zeros.column(i);
                for l in 0..q {
                    let tl = tau.column(l);
                    a[l] = ones_i.dot(&tl);
                    c[l] = zeros_i.dot(&tl);
                }
                for k in 0..q {
                    let mut s = log_prior[(i, k)];
                    for l in 0..q {
                        s += xlogy_pair(a[l], log_pi[(k, l)]) + xlogy_pair(c[l], log_1m_pi[(k, l)]);
                    }
                    scores[k] = s;
                }
                softmax_in_place(&mut scores);
                for k in 0..q {
                    max_change = max_change.max((tau[(i, k)] - scores[k]).abs());
                    tau[(i, k)] = scores[k];
                }
            }
            if max_change < VE_TOLERANCE {
                break;
            }
        }
        sweeps
    }
}

/// `w * log_p` with `0 * (-inf) = 0`.
#[inline]
fn xlogy_pair(w: f64, log_p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * log_p
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn sbm_term_from_counts(ones: &DMatrix<f64>, zeros: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<f64> {
    let q = pi.nrows();
    let mut total = 0.0;
    for a in 0..q {
        for b in 0..q {
            let p = pi[(a, b)];
            let term = xlogy(ones[(a, b)], p) + xlogy(zeros[(a, b)], 1.0 - p);
            if term == f64::NEG_INFINITY {
                return Err(SbmError::ImpossibleConfiguration(format!(
                    "pi[{a},{b}] = {p} contradicts the data"
                )));
            }
            total += term;
        }
    }
    // Ordered block sums count each unordered dyad twice.
    Ok(0.5 * total)
}

/// `sum_{i in active} sum_q tau_iq log(alpha_q / tau_iq)`.
pub(crate) fn multinomial_term(tau: &DMatrix<f64>, alpha: &[f64], active: Option<&[bool]>) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..tau.nrows() {
        if let Some(mask) = active {
            if !mask[i] {
                continue;
            }
        }
        for (k, &a) in alpha.iter().enumerate() {
            let t = tau[(i, k)];
            let v = xlogy(t, a) - xlogy(t, t);
            if v == f64::NEG_INFINITY {
                return Err(SbmError::ImpossibleConfiguration(format!("alpha[{k}] = 0 with positive responsibility")));
            }
            total += v;
        }
    }
    Ok(total)
}

/// `log alpha_q` broadcast over rows.
pub(crate) fn log_alpha_prior(n: usize, alpha: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, alpha.len(), |_, k| alpha[k].ln())
}

pub(crate) fn check_tau(tau: &DMatrix<f64>, n: usize, q: usize) -> Result<()> {
    if tau.nrows() != n {
        return Err(SbmError::DimensionMismatch {
            expected: n,
            found: tau.nrows(),
        });
    }
    if tau.ncols() != q {
        return Err(SbmError::DimensionMismatch {
            expected: q,
            found: tau.ncols(),
        });
    }
    for i in 0..n {
        let s = tau.row(i).sum();
        if (s - 1.0).abs() > 1e-8 || tau.row(i).iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(SbmError::InvalidParameters(format!("row {i} of tau is not a distribution")));
        }
    }
    Ok(())
}
