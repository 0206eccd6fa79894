//! Integrated classification likelihood for choosing `Q` and the sampling design.
//!
//! Each criterion is `-2` times the completed-data log-likelihood, evaluated at
//! hardened labels, plus a BIC-type penalty. Missing dyads are integrated out
//! under `nu`: the expected log-likelihood plus the entropy of `nu`, which for
//! hard labels and per-dyad `nu` is the marginal over the missing dyads.

use nalgebra::DMatrix;

use crate::designs::Centering;
use crate::engine::{multinomial_term, DyadWeights};
use crate::error::{Result, SbmError};
use crate::fit::{FitResult, Method};
use crate::network::ObservedNetwork;
use crate::nmar::{degree_stats, star_degree_term, DyadStats, NmarFamily};
use crate::numeric::{clamp_prob, logistic, logit, xlogy};
use crate::designs::SamplingDesign;

fn n_blocks_params(q: usize) -> f64 {
    (q * (q + 1) / 2) as f64
}

/// `Q(Q+1)/2 log|D^o| + (Q-1) log|N^o|`.
pub fn mar_penalty(q: usize, observed_dyads: usize, observed_nodes: usize) -> f64 {
    n_blocks_params(q) * (observed_dyads as f64).ln() + (q as f64 - 1.0) * (observed_nodes as f64).ln()
}

/// NMAR penalty with `k` design parameters: they are charged to the dyad count
/// for dyad-centred designs and to the node count for node-centred ones.
pub fn nmar_penalty(q: usize, k: usize, n: usize, centering: Centering) -> f64 {
    let log_dyads = ((n * (n - 1) / 2) as f64).ln();
    let log_n = (n as f64).ln();
    let (kd, kn) = match centering {
        Centering::Dyad => (k as f64, 0.0),
        Centering::Node => (0.0, k as f64),
    };
    (kd + n_blocks_params(q)) * log_dyads + (kn + q as f64 - 1.0) * log_n
}

fn check_fit(net: &ObservedNetwork, fit: &FitResult) -> Result<()> {
    if fit.tau.nrows() != net.n() {
        return Err(SbmError::DimensionMismatch {
            expected: net.n(),
            found: fit.tau.nrows(),
        });
    }
    Ok(())
}

/// ICL of a MAR fit on the observed part of the network.
pub fn icl_mar(net: &ObservedNetwork, fit: &FitResult) -> Result<f64> {
    check_fit(net, fit)?;
    let dyads = net.observed_count();
    if dyads == 0 {
        return Err(SbmError::EmptyObservations);
    }
    let active = net.touched_nodes();
    let nodes = active.iter().filter(|&&a| a).count();
    let z = fit.labels().one_hot();
    let loglik = DyadWeights::observed(net).sbm_term(&z, fit.theta.pi())?
        + multinomial_term(&z, fit.theta.alpha(), Some(&active))?;
    Ok(-2.0 * loglik + mar_penalty(fit.q(), dyads, nodes))
}

/// SBM log-likelihood over all dyads with hard memberships `z`, the missing
/// ones integrated out under `nu`.
fn completed_sbm(net: &ObservedNetwork, fit: &FitResult, z: &DMatrix<f64>, missing: &[(usize, usize)], nu: &[f64]) -> Result<f64> {
    let entropy: f64 = nu.iter().map(|&v| -xlogy(v, v) - xlogy(1.0 - v, 1.0 - v)).sum();
    Ok(DyadWeights::imputed(net, missing, nu).sbm_term(z, fit.theta.pi())?
        + multinomial_term(z, fit.theta.alpha(), None)?
        + entropy)
}

/// ICL of an NMAR fit, using the fitted design parameters.
pub fn icl_nmar(net: &ObservedNetwork, fit: &FitResult) -> Result<f64> {
    check_fit(net, fit)?;
    let n = net.n();
    if n < 2 {
        return Err(SbmError::InvalidParameters("ICL needs at least two nodes".into()));
    }
    let psi = fit
        .psi
        .as_ref()
        .ok_or_else(|| SbmError::InvalidParameters("NMAR ICL needs a fit with design parameters".into()))?;
    let family = NmarFamily::of(psi)?;
    let z = fit.labels().one_hot();
    let design = match psi {
        SamplingDesign::DoubleStandard { rho0, rho1 } => {
            let s = DyadStats::new(net, &fit.nu);
            let (r0, r1) = (clamp_prob(*rho0), clamp_prob(*rho1));
            s.s_o * r1.ln() + s.sbar_o * r0.ln() + s.s_m * (-r1).ln_1p() + s.sbar_m * (-r0).ln_1p()
        }
        SamplingDesign::Class { rho } => {
            let mut total = 0.0;
            for (i, &l) in fit.labels().labels().iter().enumerate() {
                let r = clamp_prob(rho[l]);
                total += if fit.sampled[i] { r.ln() } else { (-r).ln_1p() };
            }
            total
        }
        SamplingDesign::StarDegree { a, b } => {
            let zeta = fit
                .zeta
                .as_deref()
                .ok_or_else(|| SbmError::InvalidParameters("star-degree fit carries no zeta".into()))?;
            let stats = degree_stats(net, &fit.missing_dyads, &fit.nu);
            star_degree_term(*a, *b, zeta, &stats, &fit.sampled)?
        }
        _ => unreachable!("NmarFamily::of accepted the design"),
    };
    let loglik = design + completed_sbm(net, fit, &z, &fit.missing_dyads, &fit.nu)?;
    let penalty = nmar_penalty(fit.q(), psi.parameter_count(), n, family.method().centering());
    Ok(-2.0 * loglik + penalty)
}

/// ICL of a MAR fit treated as a full model of `(Y, R)` with a one-parameter
/// MCAR design, so that it can be compared with NMAR criteria. `centering`
/// selects random-dyad (`Dyad`) or star (`Node`) sampling.
pub fn icl_mar_comparator(net: &ObservedNetwork, fit: &FitResult, centering: Centering) -> Result<f64> {
    check_fit(net, fit)?;
    let n = net.n();
    if n < 2 {
        return Err(SbmError::InvalidParameters("ICL needs at least two nodes".into()));
    }
    let missing = net.missing_dyads();
    let lp = fit.theta.pi().map(|p| logit(clamp_prob(p)));
    let u = &fit.tau * lp;
    let nu: Vec<f64> = missing
        .iter()
        .map(|&(i, j)| clamp_prob(logistic(u.row(i).dot(&fit.tau.row(j)))))
        .collect();
    let z = fit.labels().one_hot();
    let design = match centering {
        Centering::Dyad => {
            let (o, m) = (net.observed_count() as f64, net.missing_count() as f64);
            let rho = o / (o + m);
            xlogy(o, rho) + xlogy(m, 1.0 - rho)
        }
        Centering::Node => {
            let sampled = net.sampled_nodes();
            let o = sampled.iter().filter(|&&s| s).count() as f64;
            let m = n as f64 - o;
            let rho = o / n as f64;
            xlogy(o, rho) + xlogy(m, 1.0 - rho)
        }
    };
    let loglik = design + completed_sbm(net, fit, &z, &missing, &nu)?;
    Ok(-2.0 * loglik + nmar_penalty(fit.q(), 1, n, centering))
}

/// The native criterion of the fit's method: plain MAR ICL or NMAR ICL.
pub fn icl(net: &ObservedNetwork, fit: &FitResult) -> Result<f64> {
    match fit.method {
        Method::Mar => icl_mar(net, fit),
        _ => icl_nmar(net, fit),
    }
}
