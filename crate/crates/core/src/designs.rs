//! Sampling designs: how the observation mask is drawn from a pre-existing network,
//! and the exact conditional log-likelihood of that mask.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbmError};
use crate::model::BlockAssignment;
use crate::network::{DyadState, ObservedNetwork};
use crate::numeric::{logistic, xlogy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    Dyad,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Missingness {
    Mcar,
    Mar,
    Nmar,
}

/// A sampling design together with its parameters `psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "kebab-case")]
pub enum SamplingDesign {
    RandomDyad { rho: f64 },
    Star { rho: f64 },
    Snowball { rho: f64, waves: usize },
    DoubleStandard { rho0: f64, rho1: f64 },
    StarDegree { a: f64, b: f64 },
    Class { rho: Vec<f64> },
}

impl SamplingDesign {
    pub fn centering(&self) -> Centering {
        match self {
            SamplingDesign::RandomDyad { .. } | SamplingDesign::DoubleStandard { .. } => Centering::Dyad,
            _ => Centering::Node,
        }
    }

    pub fn missingness(&self) -> Missingness {
        match self {
            SamplingDesign::RandomDyad { .. } | SamplingDesign::Star { .. } => Missingness::Mcar,
            SamplingDesign::Snowball { .. } => Missingness::Mar,
            _ => Missingness::Nmar,
        }
    }

    /// Number of design parameters `K`.
    pub fn parameter_count(&self) -> usize {
        match self {
            SamplingDesign::RandomDyad { .. } | SamplingDesign::Star { .. } | SamplingDesign::Snowball { .. } => 1,
            SamplingDesign::DoubleStandard { .. } | SamplingDesign::StarDegree { .. } => 2,
            SamplingDesign::Class { rho } => rho.len(),
        }
    }

    /// Design parameters as a flat vector (`waves` is structural and excluded).
    pub fn params(&self) -> Vec<f64> {
        match self {
            SamplingDesign::RandomDyad { rho } | SamplingDesign::Star { rho } | SamplingDesign::Snowball { rho, .. } => {
                vec![*rho]
            }
            SamplingDesign::DoubleStandard { rho0, rho1 } => vec![*rho0, *rho1],
            SamplingDesign::StarDegree { a, b } => vec![*a, *b],
            SamplingDesign::Class { rho } => rho.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingDesign::RandomDyad { .. } => "random-dyad",
            SamplingDesign::Star { .. } => "star",
            SamplingDesign::Snowball { .. } => "snowball",
            SamplingDesign::DoubleStandard { .. } => "double-standard",
            SamplingDesign::StarDegree { .. } => "star-degree",
            SamplingDesign::Class { .. } => "class",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SbmError::InvalidDesign(format!("{what} = {p} outside [0, 1]")))
            }
        };
        match self {
            SamplingDesign::RandomDyad { rho } | SamplingDesign::Star { rho } => check(*rho, "rho"),
            SamplingDesign::Snowball { rho, waves } => {
                if *waves == 0 {
                    return Err(SbmError::InvalidDesign("snowball needs at least one wave".into()));
                }
                check(*rho, "rho")
            }
            SamplingDesign::DoubleStandard { rho0, rho1 } => {
                check(*rho0, "rho0")?;
                check(*rho1, "rho1")
            }
            SamplingDesign::StarDegree { a, b } => {
                if a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(SbmError::InvalidDesign("star-degree parameters must be finite".into()))
                }
            }
            SamplingDesign::Class { rho } => {
                if rho.is_empty() {
                    return Err(SbmError::InvalidDesign("class design needs one rate per block".into()));
                }
                rho.iter().try_for_each(|&r| check(r, "rho_q"))
            }
        }
    }
}

fn select_nodes<R: Rng + ?Sized, F: FnMut(usize) -> f64>(n: usize, mut prob: F, rng: &mut R) -> Vec<bool> {
    (0..n).map(|i| rng.random::<f64>() < prob(i)).collect()
}

fn node_centered(full: &ObservedNetwork, selected: Vec<bool>) -> Result<ObservedNetwork> {
    let sel = selected.clone();
    ObservedNetwork::masked(full, |i, j| sel[i] || sel[j]).with_selection(selected)
}

/// Draws the observation mask of `design` on the fully observed `full`.
///
/// Node-centred designs record the selected nodes on the returned network.
pub fn apply_design<R: Rng + ?Sized>(
    full: &ObservedNetwork,
    z: &BlockAssignment,
    design: &SamplingDesign,
    rng: &mut R,
) -> Result<ObservedNetwork> {
    design.validate()?;
    if !full.is_complete() {
        return Err(SbmError::InvalidParameters("design must act on a fully observed network".into()));
    }
    let n = full.n();
    if z.n() != n {
        return Err(SbmError::DimensionMismatch { expected: n, found: z.n() });
    }
    match design {
        SamplingDesign::RandomDyad { rho } => Ok(ObservedNetwork::masked(full, |_, _| rng.random::<f64>() < *rho)),
        SamplingDesign::DoubleStandard { rho0, rho1 } => Ok(ObservedNetwork::masked(full, |i, j| {
            let p = if full.get(i, j) == DyadState::Present { *rho1 } else { *rho0 };
            rng.random::<f64>() < p
        })),
        SamplingDesign::Star { rho } => {
            let sel = select_nodes(n, |_| *rho, rng);
            node_centered(full, sel)
        }
        SamplingDesign::Snowball { rho, waves } => {
            let mut selected = select_nodes(n, |_| *rho, rng);
            let mut frontier: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
            for _ in 1..*waves {
                let mut next = Vec::new();
                for &i in &frontier {
                    for j in 0..n {
                        if j != i && !selected[j] && full.get(i, j) == DyadState::Present {
                            selected[j] = true;
                            next.push(j);
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
            node_centered(full, selected)
        }
        SamplingDesign::StarDegree { a, b } => {
            let degrees = full.degrees();
            let sel = select_nodes(n, |i| logistic(a + b * degrees[i] as f64), rng);
            node_centered(full, sel)
        }
        SamplingDesign::Class { rho } => {
            if rho.len() != z.q() {
                return Err(SbmError::DimensionMismatch {
                    expected: z.q(),
                    found: rho.len(),
                });
            }
            let labels = z.labels();
            let sel = select_nodes(n, |i| rho[labels[i]], rng);
            node_centered(full, sel)
        }
    }
}

fn finite_or_impossible(v: f64, what: &str) -> Result<f64> {
    if v == f64::NEG_INFINITY {
        Err(SbmError::ImpossibleConfiguration(what.to_string()))
    } else {
        Ok(v)
    }
}

/// Exact `log p_psi(R | Y)` (or `log p_psi(R | Z)` for class sampling) of the mask
/// carried by `net`, given the complete network `y_full` and labels `z`.
///
/// Node-centred designs read the selected nodes from `net`. Snowball needs the
/// full wave-process likelihood and is not supported.
pub fn design_log_likelihood(
    design: &SamplingDesign,
    net: &ObservedNetwork,
    y_full: &ObservedNetwork,
    z: &BlockAssignment,
) -> Result<f64> {
    design.validate()?;
    let n = net.n();
    if y_full.n() != n || !y_full.is_complete() {
        return Err(SbmError::InvalidParameters("y_full must be the complete network on the same nodes".into()));
    }
    let value = match design {
        SamplingDesign::RandomDyad { rho } => {
            let o = net.observed_count() as f64;
            let m = net.missing_count() as f64;
            xlogy(o, *rho) + xlogy(m, 1.0 - rho)
        }
        SamplingDesign::DoubleStandard { rho0, rho1 } => {
            let (mut so, mut sbar_o, mut sm, mut sbar_m) = (0.0, 0.0, 0.0, 0.0);
            for (i, j, s) in net.dyads() {
                let edge = y_full.get(i, j) == DyadState::Present;
                match (s.is_observed(), edge) {
                    (true, true) => so += 1.0,
                    (true, false) => sbar_o += 1.0,
                    (false, true) => sm += 1.0,
                    (false, false) => sbar_m += 1.0,
                }
            }
            xlogy(so, *rho1) + xlogy(sbar_o, *rho0) + xlogy(sm, 1.0 - rho1) + xlogy(sbar_m, 1.0 - rho0)
        }
        SamplingDesign::Star { rho } => {
            let sel = net.sampled_nodes();
            sel.iter().map(|&s| if s { rho.ln() } else { (-rho).ln_1p() }).sum()
        }
        SamplingDesign::StarDegree { a, b } => {
            let sel = net.sampled_nodes();
            let degrees = y_full.degrees();
            sel.iter()
                .zip(&degrees)
                .map(|(&s, &d)| {
                    let rho = logistic(a + b * d as f64);
                    if s {
                        rho.ln()
                    } else {
                        (-rho).ln_1p()
                    }
                })
                .sum()
        }
        SamplingDesign::Class { rho } => {
            if rho.len() != z.q() {
                return Err(SbmError::DimensionMismatch {
                    expected: z.q(),
                    found: rho.len(),
                });
            }
            let sel = net.sampled_nodes();
            sel.iter()
                .zip(z.labels())
                .map(|(&s, &l)| if s { rho[l].ln() } else { (-rho[l]).ln_1p() })
                .sum()
        }
        SamplingDesign::Snowball { .. } => {
            return Err(SbmError::Unsupported("snowball mask likelihood".into()));
        }
    };
    finite_or_impossible(value, "the design gives this mask probability zero")
}
