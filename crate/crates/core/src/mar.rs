//! Variational EM restricted to the observed dyads, valid when the sampling is MAR.

use nalgebra::DMatrix;

use crate::engine::{check_tau, log_alpha_prior, multinomial_term, DyadWeights};
use crate::error::{Result, SbmError};
use crate::fit::{FitFlag, FitResult, Method};
use crate::model::SbmParameters;
use crate::network::ObservedNetwork;

/// Mean-field responsibilities `tau[i, q] ~ P(Z_i = q | Y^o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarState {
    pub tau: DMatrix<f64>,
}

/// Outer-loop stopping rule: max-abs change of `(alpha, pi)` below `eps`, or `max_iter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { eps: 1e-6, max_iter: 500 }
    }
}

/// Invariant data of a MAR fit: observed-dyad weights and the touched nodes `N^o`.
pub(crate) struct MarData {
    pub weights: DyadWeights,
    pub active: Vec<bool>,
    pub active_count: usize,
}

impl MarData {
    pub fn new(net: &ObservedNetwork) -> Self {
        let active = net.touched_nodes();
        let active_count = active.iter().filter(|&&a| a).count();
        MarData {
            weights: DyadWeights::observed(net),
            active,
            active_count,
        }
    }

    pub fn bound(&self, params: &SbmParameters, tau: &DMatrix<f64>) -> Result<f64> {
        Ok(self.weights.sbm_term(tau, params.pi())? + multinomial_term(tau, params.alpha(), Some(&self.active))?)
    }

    pub fn m_step(&self, tau: &DMatrix<f64>) -> Result<(SbmParameters, Vec<(usize, usize)>)> {
        if self.active_count == 0 {
            return Err(SbmError::EmptyObservations);
        }
        let q = tau.ncols();
        let mut alpha = vec![0.0; q];
        for (i, _) in self.active.iter().enumerate().filter(|(_, &a)| a) {
            for (k, a) in alpha.iter_mut().enumerate() {
                *a += tau[(i, k)];
            }
        }
        for a in alpha.iter_mut() {
            *a /= self.active_count as f64;
        }
        let (pi, empty) = self.weights.m_step_pi(tau);
        Ok((SbmParameters::from_parts_unchecked(alpha, pi), empty))
    }

    pub fn ve_step(&self, params: &SbmParameters, tau: &mut DMatrix<f64>) {
        let prior = log_alpha_prior(tau.nrows(), params.alpha());
        self.weights.ve_fixed_point(tau, &prior, params.pi());
    }
}

fn check_dims(net: &ObservedNetwork, params: &SbmParameters, tau: &DMatrix<f64>) -> Result<()> {
    check_tau(tau, net.n(), params.q())
}

/// `J = sum_{D^o} sum_{q,l} tau_iq tau_jl log b(Y_ij; pi_ql) + sum_{N^o} sum_q tau_iq log(alpha_q / tau_iq)`.
pub fn lower_bound_mar(net: &ObservedNetwork, params: &SbmParameters, state: &MarState) -> Result<f64> {
    check_dims(net, params, &state.tau)?;
    MarData::new(net).bound(params, &state.tau)
}

/// M-step on `D^o`; also returns the block pairs no observed dyad reaches
/// (their connectivity is set to 0.5).
pub fn m_step_mar(net: &ObservedNetwork, state: &MarState) -> Result<(SbmParameters, Vec<(usize, usize)>)> {
    if net.observed_count() == 0 {
        return Err(SbmError::EmptyObservations);
    }
    check_tau(&state.tau, net.n(), state.tau.ncols())?;
    MarData::new(net).m_step(&state.tau)
}

/// Fixed-point VE-step starting from `state`.
pub fn ve_step_mar(net: &ObservedNetwork, params: &SbmParameters, state: &MarState) -> Result<MarState> {
    check_dims(net, params, &state.tau)?;
    let mut tau = state.tau.clone();
    MarData::new(net).ve_step(params, &mut tau);
    Ok(MarState { tau })
}

/// Alternates M- and VE-steps from `init_tau`. The bound is recorded after every half-step.
pub fn fit_mar(net: &ObservedNetwork, q: usize, init_tau: &DMatrix<f64>, stop: StopRule) -> Result<FitResult> {
    if q == 0 {
        return Err(SbmError::InvalidParameters("q must be at least 1".into()));
    }
    check_tau(init_tau, net.n(), q)?;
    let n = net.n();
    let data = MarData::new(net);
    let mut tau = init_tau.clone();

    if net.observed_count() == 0 {
        let alpha: Vec<f64> = (0..q).map(|k| tau.column(k).sum() / n as f64).collect();
        let pi = DMatrix::from_element(q, q, crate::engine::EMPTY_PAIR_PI);
        return Ok(FitResult {
            method: Method::Mar,
            theta: SbmParameters::from_parts_unchecked(alpha, pi),
            psi: None,
            tau,
            missing_dyads: Vec::new(),
            nu: Vec::new(),
            zeta: None,
            sampled: data.active,
            bound_trace: vec![0.0],
            iterations: 0,
            converged: true,
            flags: vec![FitFlag::NoObservedDyads],
        });
    }

    let mut trace = Vec::new();
    let mut prev: Option<SbmParameters> = None;
    let mut flags = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut theta = None;
    while iterations < stop.max_iter {
        iterations += 1;
        let (params, empty) = data.m_step(&tau)?;
        trace.push(data.bound(&params, &tau)?);
        data.ve_step(&params, &mut tau);
        trace.push(data.bound(&params, &tau)?);

        let change = prev.as_ref().map_or(f64::MAX, |p| p.max_abs_diff(&params));
        flags = empty.into_iter().map(|(a, b)| FitFlag::EmptyBlockPair(a, b)).collect();
        prev = Some(params.clone());
        theta = Some(params);
        if change < stop.eps {
            converged = true;
            break;
        }
    }
    if !converged {
        flags.push(FitFlag::IterationLimit);
    }
    Ok(FitResult {
        method: Method::Mar,
        theta: theta.expect("at least one iteration runs when max_iter >= 1"),
        psi: None,
        tau,
        missing_dyads: Vec::new(),
        nu: Vec::new(),
        zeta: None,
        sampled: data.active,
        bound_trace: trace,
        iterations,
        converged,
        flags,
    })
}
