//! Fit results shared by all estimators and the best-of-restarts driver.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{Centering, SamplingDesign};
use crate::error::{Result, SbmError};
use crate::init::restart_inits;
use crate::mar::{fit_mar, StopRule};
use crate::model::{BlockAssignment, SbmParameters};
use crate::network::ObservedNetwork;
use crate::nmar::{fit_nmar, NmarFamily};

/// Estimation method: the MAR algorithm or the NMAR algorithm for one design family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mar,
    DoubleStandard,
    Class,
    StarDegree,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mar, Method::DoubleStandard, Method::Class, Method::StarDegree];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mar => "mar",
            Method::DoubleStandard => "double-standard",
            Method::Class => "class",
            Method::StarDegree => "star-degree",
        }
    }

    pub fn nmar_family(self) -> Option<NmarFamily> {
        match self {
            Method::Mar => None,
            Method::DoubleStandard => Some(NmarFamily::DoubleStandard),
            Method::Class => Some(NmarFamily::Class),
            Method::StarDegree => Some(NmarFamily::StarDegree),
        }
    }

    /// Centering of the design family; MAR is reported as dyad-centred.
    pub fn centering(self) -> Centering {
        match self {
            Method::Mar | Method::DoubleStandard => Centering::Dyad,
            Method::Class | Method::StarDegree => Centering::Node,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SbmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SbmError::InvalidParameters(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    /// No included dyad joins these blocks; their connectivity is set to 0.5.
    EmptyBlockPair(usize, usize),
    /// Nothing was observed; the fit is prior-only.
    NoObservedDyads,
    /// A design-parameter update fell back because of a zero denominator.
    DegenerateDesign(String),
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub theta: SbmParameters,
    /// Fitted design parameters (NMAR only).
    pub psi: Option<SamplingDesign>,
    pub tau: DMatrix<f64>,
    /// Missing dyads carrying `nu` (NMAR only).
    pub missing_dyads: Vec<(usize, usize)>,
    pub nu: Vec<f64>,
    pub zeta: Option<Vec<f64>>,
    /// Node set used as `N^o`: touched nodes for MAR, sampled nodes for NMAR.
    pub sampled: Vec<bool>,
    pub bound_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
}

impl FitResult {
    pub fn q(&self) -> usize {
        self.theta.q()
    }

    pub fn final_bound(&self) -> f64 {
        *self.bound_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }

    pub fn labels(&self) -> BlockAssignment {
        BlockAssignment::harden(&self.tau)
    }

    pub fn is_degenerate(&self) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, FitFlag::NoObservedDyads | FitFlag::DegenerateDesign(_)))
    }
}

/// One fit of `method` from `init_tau`.
pub fn fit(
    net: &ObservedNetwork,
    q: usize,
    method: Method,
    init_tau: &DMatrix<f64>,
    stop: StopRule,
) -> Result<FitResult> {
    match method.nmar_family() {
        None => fit_mar(net, q, init_tau, stop),
        Some(family) => fit_nmar(net, q, family, init_tau, stop),
    }
}

/// Fits from every starting point and keeps the largest final bound
/// (the earliest one on ties). NMAR methods also start from the MAR optimum
/// reached from each point: once nu imputes the missing dyads an NMAR fit
/// rarely leaves the neighbourhood of its start, and the MAR fit is the
/// better-informed clustering. Starts stay a per-point construction, so a
/// superset of points never lowers the bound.
pub fn fit_best(
    net: &ObservedNetwork,
    q: usize,
    method: Method,
    inits: &[DMatrix<f64>],
    stop: StopRule,
) -> Result<FitResult> {
    let mut starts: Vec<DMatrix<f64>> = Vec::with_capacity(2 * inits.len());
    for init in inits {
        starts.push(init.clone());
        if method != Method::Mar {
            if let Ok(mar) = fit_mar(net, q, init, stop) {
                starts.push(mar.tau);
            }
        }
    }
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for init in &starts {
        match fit(net, q, method, init, stop) {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.final_bound() > b.final_bound()) {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| SbmError::InvalidParameters("no initializations supplied".into())))
}

pub const DEFAULT_RESTARTS: usize = 10;

/// `fit_best` over `restarts` starting points from [`restart_inits`].
pub fn fit_with_restarts<R: Rng + ?Sized>(
    net: &ObservedNetwork,
    q: usize,
    method: Method,
    restarts: usize,
    stop: StopRule,
    rng: &mut R,
) -> Result<FitResult> {
    let inits = restart_inits(net, q, restarts, rng)?;
    fit_best(net, q, method, &inits, stop)
}
