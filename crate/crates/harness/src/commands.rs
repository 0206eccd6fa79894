//! `fit` and `select`: best-of-restarts fits and the ICL grid over `(Q, method)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbm_sampling::{
    fit_best, icl, icl_mar, icl_mar_comparator, icl_nmar, restart_inits, Centering, FitFlag, FitResult, Method,
    ObservedNetwork, SamplingDesign, StopRule,
};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Builds a design from its name and flat parameter list, e.g.
/// `double-standard` with `[rho0, rho1]`.
pub fn parse_design(name: &str, psi: &[f64]) -> Result<SamplingDesign> {
    let want = |k: usize| {
        if psi.len() == k {
            Ok(())
        } else {
            Err(HarnessError::input(format!("design '{name}' takes {k} parameter(s), got {}", psi.len())))
        }
    };
    let design = match name.to_ascii_lowercase().as_str() {
        "random-dyad" => {
            want(1)?;
            SamplingDesign::RandomDyad { rho: psi[0] }
        }
        "star" => {
            want(1)?;
            SamplingDesign::Star { rho: psi[0] }
        }
        "snowball" => {
            want(2)?;
            if psi[1] < 1.0 || psi[1].fract() != 0.0 {
                return Err(HarnessError::input("snowball waves must be a positive integer"));
            }
            SamplingDesign::Snowball {
                rho: psi[0],
                waves: psi[1] as usize,
            }
        }
        "double-standard" => {
            want(2)?;
            SamplingDesign::DoubleStandard { rho0: psi[0], rho1: psi[1] }
        }
        "star-degree" => {
            want(2)?;
            SamplingDesign::StarDegree { a: psi[0], b: psi[1] }
        }
        "class" => {
            if psi.is_empty() {
                return Err(HarnessError::input("class design needs one rate per block"));
            }
            SamplingDesign::Class { rho: psi.to_vec() }
        }
        other => return Err(HarnessError::input(format!("unknown design '{other}'"))),
    };
    design.validate()?;
    Ok(design)
}

/// Starting points for one `Q`, drawn from the stream `q` of `seed` so that
/// every caller fitting that `Q` sees the same ones.
pub fn shared_inits(net: &ObservedNetwork, q: usize, restarts: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if restarts == 0 {
        return Err(HarnessError::input("restarts must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(q as u64);
    Ok(restart_inits(net, q, restarts, &mut rng)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl NuSummary {
    fn of(nu: &[f64]) -> Option<Self> {
        if nu.is_empty() {
            return None;
        }
        Some(NuSummary {
            count: nu.len(),
            mean: nu.iter().sum::<f64>() / nu.len() as f64,
            min: nu.iter().copied().fold(f64::INFINITY, f64::min),
            max: nu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// MAR fits also carry the design-comparison ICLs used by `select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarComparators {
    pub random_dyad: f64,
    pub star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub method: String,
    pub q: usize,
    pub alpha: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub psi: Option<SamplingDesign>,
    /// `None` when the criterion is undefined (nothing observed).
    pub icl: Option<f64>,
    pub icl_comparators: Option<MarComparators>,
    pub final_bound: f64,
    pub bound_trace: Vec<f64>,
    pub labels: Vec<usize>,
    pub nu: Option<NuSummary>,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
    pub restarts: usize,
    pub seed: u64,
}

impl FitRecord {
    pub fn new(net: &ObservedNetwork, fit: &FitResult, restarts: usize, seed: u64) -> Self {
        let q = fit.q();
        let comparators = match fit.method {
            Method::Mar => match (
                icl_mar_comparator(net, fit, Centering::Dyad),
                icl_mar_comparator(net, fit, Centering::Node),
            ) {
                (Ok(random_dyad), Ok(star)) => Some(MarComparators { random_dyad, star }),
                _ => None,
            },
            _ => None,
        };
        FitRecord {
            method: fit.method.name().to_owned(),
            q,
            alpha: fit.theta.alpha().to_vec(),
            pi: (0..q).map(|a| (0..q).map(|b| fit.theta.pi()[(a, b)]).collect()).collect(),
            psi: fit.psi.clone(),
            icl: icl(net, fit).ok(),
            icl_comparators: comparators,
            final_bound: fit.final_bound(),
            bound_trace: fit.bound_trace.clone(),
            labels: fit.labels().labels().to_vec(),
            nu: NuSummary::of(&fit.nu),
            iterations: fit.iterations,
            converged: fit.converged,
            flags: fit.flags.clone(),
            restarts,
            seed,
        }
    }
}

pub fn fit_command(
    net: &ObservedNetwork,
    q: usize,
    method: Method,
    restarts: usize,
    seed: u64,
    stop: StopRule,
) -> Result<(FitResult, FitRecord)> {
    let inits = shared_inits(net, q, restarts, seed)?;
    let fit = fit_best(net, q, method, &inits, stop)?;
    let record = FitRecord::new(net, &fit, restarts, seed);
    Ok((fit, record))
}

/// The criterion `select` ranks a fit by. A MAR fit competing against NMAR
/// designs is scored with its design term included: the random-dyad comparator
/// if a dyad-centred design competes, the star comparator otherwise.
pub fn selection_icl(net: &ObservedNetwork, fit: &FitResult, methods: &[Method]) -> Result<f64> {
    match fit.method {
        Method::Mar if methods.iter().all(|&m| m == Method::Mar) => Ok(icl_mar(net, fit)?),
        Method::Mar => {
            let dyad = methods.iter().any(|m| m.nmar_family().is_some() && m.centering() == Centering::Dyad);
            let centering = if dyad { Centering::Dyad } else { Centering::Node };
            Ok(icl_mar_comparator(net, fit, centering)?)
        }
        _ => Ok(icl_nmar(net, fit)?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub q: usize,
    pub method: String,
    pub icl: f64,
    pub final_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    pub best_q: usize,
    pub best_method: String,
}

/// Methods in tie-break order: MAR first, then the declared order.
fn ordered_methods(methods: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    if methods.contains(&Method::Mar) {
        out.push(Method::Mar);
    }
    for &m in methods {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// Fits every `(q, method)` cell and returns all ICLs with the minimizer. Ties
/// go to the smaller `Q`, then to MAR. Cells whose fit or criterion fails are
/// left out; an error is returned only if every cell fails.
pub fn select_command(
    net: &ObservedNetwork,
    q_grid: &[usize],
    methods: &[Method],
    restarts: usize,
    seed: u64,
    stop: StopRule,
) -> Result<SelectionTable> {
    if q_grid.is_empty() || methods.is_empty() {
        return Err(HarnessError::input("select needs a nonempty Q grid and method list"));
    }
    let mut qs = q_grid.to_vec();
    qs.sort_unstable();
    qs.dedup();
    let methods = ordered_methods(methods);
    let mut rows = Vec::new();
    let mut best: Option<(f64, usize, Method)> = None;
    let mut last_err = None;
    for &q in &qs {
        let inits = shared_inits(net, q, restarts, seed)?;
        for &m in &methods {
            let scored = fit_best(net, q, m, &inits, stop)
                .map_err(HarnessError::from)
                .and_then(|f| Ok((selection_icl(net, &f, &methods)?, f.final_bound())));
            match scored {
                Ok((value, bound)) => {
                    rows.push(SelectionRow {
                        q,
                        method: m.name().to_owned(),
                        icl: value,
                        final_bound: bound,
                    });
                    if value.is_finite() && best.is_none_or(|(b, _, _)| value < b) {
                        best = Some((value, q, m));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    match best {
        Some((_, best_q, m)) => Ok(SelectionTable {
            rows,
            best_q,
            best_method: m.name().to_owned(),
        }),
        None => Err(last_err.unwrap_or_else(|| HarnessError::input("no cell could be scored"))),
    }
}
