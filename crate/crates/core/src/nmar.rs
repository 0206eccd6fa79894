//! Double mean-field variational EM for NMAR designs: double standard, class
//! and star-degree sampling.
//!
//! The variational family factorizes over node memberships `tau` and missing
//! dyads `nu`; star-degree sampling adds one Jaakkola parameter `zeta_i` per node.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::designs::SamplingDesign;
use crate::engine::{check_tau, multinomial_term, DyadWeights, EMPTY_PAIR_PI};
use crate::error::{Result, SbmError};
use crate::fit::{FitFlag, FitResult, Method};
use crate::mar::StopRule;
use crate::model::SbmParameters;
use crate::network::ObservedNetwork;
use crate::numeric::{clamp_prob, log_logistic, logistic, logit, neg_bernoulli_entropy, PROB_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmarFamily {
    DoubleStandard,
    Class,
    StarDegree,
}

impl NmarFamily {
    pub fn method(self) -> Method {
        match self {
            NmarFamily::DoubleStandard => Method::DoubleStandard,
            NmarFamily::Class => Method::Class,
            NmarFamily::StarDegree => Method::StarDegree,
        }
    }

    fn matches(self, psi: &SamplingDesign) -> bool {
        matches!(
            (self, psi),
            (NmarFamily::DoubleStandard, SamplingDesign::DoubleStandard { .. })
                | (NmarFamily::Class, SamplingDesign::Class { .. })
                | (NmarFamily::StarDegree, SamplingDesign::StarDegree { .. })
        )
    }

    pub fn of(psi: &SamplingDesign) -> Result<Self> {
        match psi {
            SamplingDesign::DoubleStandard { .. } => Ok(NmarFamily::DoubleStandard),
            SamplingDesign::Class { .. } => Ok(NmarFamily::Class),
            SamplingDesign::StarDegree { .. } => Ok(NmarFamily::StarDegree),
            other => Err(SbmError::InvalidDesign(format!("{} is not an NMAR design", other.name()))),
        }
    }
}

/// Variational state. `nu[k]` belongs to dyad `missing[k]`, listed in the
/// network's dyad order.
#[derive(Debug, Clone, PartialEq)]
pub struct NmarState {
    pub tau: DMatrix<f64>,
    pub missing: Vec<(usize, usize)>,
    pub nu: Vec<f64>,
    pub zeta: Option<Vec<f64>>,
}

impl NmarState {
    fn check(&self, net: &ObservedNetwork, q: usize) -> Result<()> {
        check_tau(&self.tau, net.n(), q)?;
        if self.missing.len() != net.missing_count() || self.nu.len() != self.missing.len() {
            return Err(SbmError::DimensionMismatch {
                expected: net.missing_count(),
                found: self.nu.len(),
            });
        }
        if let Some(z) = &self.zeta {
            if z.len() != net.n() {
                return Err(SbmError::DimensionMismatch {
                    expected: net.n(),
                    found: z.len(),
                });
            }
        }
        Ok(())
    }
}

/// Observed edge / non-edge counts and their expected missing counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadStats {
    pub s_o: f64,
    pub sbar_o: f64,
    pub s_m: f64,
    pub sbar_m: f64,
}

impl DyadStats {
    pub fn new(net: &ObservedNetwork, nu: &[f64]) -> Self {
        let s_o = net.present_count() as f64;
        let sbar_o = (net.observed_count() - net.present_count()) as f64;
        let s_m: f64 = nu.iter().sum();
        let sbar_m = nu.len() as f64 - s_m;
        DyadStats { s_o, sbar_o, s_m, sbar_m }
    }
}

/// Expected degrees under the variational law of the missing dyads.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    /// `E[D_i]`: observed edges plus `nu` over incident missing dyads.
    pub d_tilde: Vec<f64>,
    /// `Var[D_i] = sum nu (1 - nu)` over incident missing dyads.
    pub variance: Vec<f64>,
}

impl DegreeStats {
    /// `E[D_i^2]`.
    pub fn d2_tilde(&self, i: usize) -> f64 {
        self.variance[i] + self.d_tilde[i] * self.d_tilde[i]
    }

    /// `E[D_k]` without the contribution of the missing dyad carrying `nu_kl`.
    pub fn d_tilde_minus(&self, k: usize, nu_kl: f64) -> f64 {
        self.d_tilde[k] - nu_kl
    }

    fn shift(&mut self, i: usize, old: f64, new: f64) {
        self.d_tilde[i] += new - old;
        self.variance[i] += new * (1.0 - new) - old * (1.0 - old);
    }
}

pub fn degree_stats(net: &ObservedNetwork, missing: &[(usize, usize)], nu: &[f64]) -> DegreeStats {
    let n = net.n();
    let mut d_tilde: Vec<f64> = net.degrees().into_iter().map(|d| d as f64).collect();
    let mut variance = vec![0.0; n];
    for (&(i, j), &v) in missing.iter().zip(nu) {
        d_tilde[i] += v;
        d_tilde[j] += v;
        variance[i] += v * (1.0 - v);
        variance[j] += v * (1.0 - v);
    }
    DegreeStats { d_tilde, variance }
}

/// Jaakkola-Jordan coefficient `h(zeta) = -(logistic(zeta) - 1/2) / (2 zeta)`.
pub fn jaakkola_h(zeta: f64) -> f64 {
    let z = zeta.abs();
    if z < 1e-4 {
        // logistic(z) - 1/2 = z/4 - z^3/48 + O(z^5)
        -0.125 + z * z / 96.0
    } else {
        -(logistic(z) - 0.5) / (2.0 * z)
    }
}

/// The quadratic lower bound of `E[log p_psi(R | Y)]` for star-degree sampling.
pub fn star_degree_term(a: f64, b: f64, zeta: &[f64], stats: &DegreeStats, sampled: &[bool]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &z) in zeta.iter().enumerate() {
        if z <= 0.0 || !z.is_finite() {
            return Err(SbmError::InvalidParameters(format!("zeta[{i}] = {z} must be positive")));
        }
        let mean = a + b * stats.d_tilde[i];
        if !sampled[i] {
            total -= mean;
        }
        let second = a * a + 2.0 * a * b * stats.d_tilde[i] + b * b * stats.d2_tilde(i);
        total += log_logistic(z) + 0.5 * (mean - z) + jaakkola_h(z) * (second - z * z);
    }
    Ok(total)
}

/// Class-sampling weights `lambda_iq`: `rho_q` for sampled nodes, `1 - rho_q` otherwise.
pub fn class_lambda(rho: &[f64], sampled: &[bool]) -> DMatrix<f64> {
    DMatrix::from_fn(sampled.len(), rho.len(), |i, k| if sampled[i] { rho[k] } else { 1.0 - rho[k] })
}

fn class_term(tau: &DMatrix<f64>, rho: &[f64], sampled: &[bool]) -> f64 {
    let mut total = 0.0;
    for (i, &s) in sampled.iter().enumerate() {
        for (k, &r) in rho.iter().enumerate() {
            let r = clamp_prob(r);
            total += tau[(i, k)] * if s { r.ln() } else { (-r).ln_1p() };
        }
    }
    total
}

fn double_standard_term(stats: &DyadStats, rho0: f64, rho1: f64) -> f64 {
    let (r0, r1) = (clamp_prob(rho0), clamp_prob(rho1));
    stats.s_o * r1.ln() + stats.sbar_o * r0.ln() + stats.s_m * (-r1).ln_1p() + stats.sbar_m * (-r0).ln_1p()
}

/// Invariant data of an NMAR fit.
pub(crate) struct NmarData<'a> {
    pub net: &'a ObservedNetwork,
    pub sampled: Vec<bool>,
    pub missing: Vec<(usize, usize)>,
}

impl<'a> NmarData<'a> {
    pub fn new(net: &'a ObservedNetwork) -> Self {
        NmarData {
            net,
            sampled: net.sampled_nodes(),
            missing: net.missing_dyads(),
        }
    }

    /// Expected design log-likelihood (its zeta-bound for star degree).
    pub fn design_term(&self, psi: &SamplingDesign, tau: &DMatrix<f64>, nu: &[f64], zeta: Option<&[f64]>) -> Result<f64> {
        match psi {
            SamplingDesign::DoubleStandard { rho0, rho1 } => {
                Ok(double_standard_term(&DyadStats::new(self.net, nu), *rho0, *rho1))
            }
            SamplingDesign::Class { rho } => {
                if rho.len() != tau.ncols() {
                    return Err(SbmError::DimensionMismatch {
                        expected: tau.ncols(),
                        found: rho.len(),
                    });
                }
                Ok(class_term(tau, rho, &self.sampled))
            }
            SamplingDesign::StarDegree { a, b } => {
                let zeta = zeta.ok_or_else(|| SbmError::InvalidParameters("star-degree bound needs zeta".into()))?;
                let stats = degree_stats(self.net, &self.missing, nu);
                star_degree_term(*a, *b, zeta, &stats, &self.sampled)
            }
            other => Err(SbmError::InvalidDesign(format!("{} is not an NMAR design", other.name()))),
        }
    }

    pub fn bound(
        &self,
        weights: &DyadWeights,
        params: &SbmParameters,
        psi: &SamplingDesign,
        tau: &DMatrix<f64>,
        nu: &[f64],
        zeta: Option<&[f64]>,
    ) -> Result<f64> {
        let entropy: f64 = -nu.iter().map(|&v| neg_bernoulli_entropy(v)).sum::<f64>();
        Ok(self.design_term(psi, tau, nu, zeta)?
            + weights.sbm_term(tau, params.pi())?
            + multinomial_term(tau, params.alpha(), None)?
            + entropy)
    }

    pub fn log_prior(&self, params: &SbmParameters, psi: &SamplingDesign) -> Result<DMatrix<f64>> {
        let n = self.net.n();
        let q = params.q();
        let mut prior = DMatrix::from_fn(n, q, |_, k| params.alpha()[k].ln());
        if let SamplingDesign::Class { rho } = psi {
            let lambda = class_lambda(rho, &self.sampled);
            add_log_lambda(&mut prior, &lambda.map(clamp_prob))?;
        }
        Ok(prior)
    }

    pub fn update_nu(
        &self,
        params: &SbmParameters,
        psi: &SamplingDesign,
        tau: &DMatrix<f64>,
        zeta: Option<&[f64]>,
        nu: &mut [f64],
    ) -> Result<()> {
        match psi {
            SamplingDesign::DoubleStandard { rho0, rho1 } => {
                let offset = (-clamp_prob(*rho1)).ln_1p() - (-clamp_prob(*rho0)).ln_1p();
                fill_nu(params, tau, &self.missing, offset, nu);
            }
            SamplingDesign::Class { .. } => fill_nu(params, tau, &self.missing, 0.0, nu),
            SamplingDesign::StarDegree { a, b } => {
                let zeta = zeta.ok_or_else(|| SbmError::InvalidParameters("star-degree update needs zeta".into()))?;
                let mut stats = degree_stats(self.net, &self.missing, nu);
                star_degree_nu_sweeps(params, *a, *b, tau, zeta, &self.sampled, &self.missing, &mut stats, nu);
            }
            other => return Err(SbmError::InvalidDesign(format!("{} is not an NMAR design", other.name()))),
        }
        Ok(())
    }
}

fn add_log_lambda(prior: &mut DMatrix<f64>, lambda: &DMatrix<f64>) -> Result<()> {
    for i in 0..lambda.nrows() {
        if lambda.row(i).iter().all(|&l| l <= 0.0) {
            return Err(SbmError::InvalidParameters(format!("lambda row {i} is identically zero")));
        }
        for k in 0..lambda.ncols() {
            prior[(i, k)] += lambda[(i, k)].ln();
        }
    }
    Ok(())
}

/// `U = tau logit(pi)`, so that `sum_{q,l} tau_iq tau_jl logit(pi_ql) = U_i . tau_j`.
fn logit_projection(params: &SbmParameters, tau: &DMatrix<f64>) -> DMatrix<f64> {
    let lp = params.pi().map(|p| logit(clamp_prob(p)));
    tau * lp
}

fn pair_logit(u: &DMatrix<f64>, tau: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    u.row(i).dot(&tau.row(j))
}

fn fill_nu(params: &SbmParameters, tau: &DMatrix<f64>, missing: &[(usize, usize)], offset: f64, nu: &mut [f64]) {
    let u = logit_projection(params, tau);
    for (v, &(i, j)) in nu.iter_mut().zip(missing) {
        *v = clamp_prob(logistic(offset + pair_logit(&u, tau, i, j)));
    }
}

const NU_SWEEP_TOLERANCE: f64 = 1e-10;
const NU_MAX_SWEEPS: usize = 100;

#[allow(clippy::too_many_arguments)]
fn star_degree_nu_sweeps(
    params: &SbmParameters,
    a: f64,
    b: f64,
    tau: &DMatrix<f64>,
    zeta: &[f64],
    sampled: &[bool],
    missing: &[(usize, usize)],
    stats: &mut DegreeStats,
    nu: &mut [f64],
) -> usize {
    let u = logit_projection(params, tau);
    let h: Vec<f64> = zeta.iter().map(|&z| jaakkola_h(z)).collect();
    let base: Vec<f64> = missing.iter().map(|&(i, j)| pair_logit(&u, tau, i, j)).collect();
    let node_linear = |k: usize| b * (0.5 - if sampled[k] { 0.0 } else { 1.0 });
    let mut sweeps = 0;
    while sweeps < NU_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for (idx, &(i, j)) in missing.iter().enumerate() {
            let old = nu[idx];
            let di = stats.d_tilde_minus(i, old);
            let dj = stats.d_tilde_minus(j, old);
            let arg = base[idx]
                + node_linear(i)
                + node_linear(j)
                + h[i] * (2.0 * a * b + b * b * (1.0 + 2.0 * di))
                + h[j] * (2.0 * a * b + b * b * (1.0 + 2.0 * dj));
            let new = clamp_prob(logistic(arg));
            stats.shift(i, old, new);
            stats.shift(j, old, new);
            nu[idx] = new;
            max_change = max_change.max((new - old).abs());
        }
        if max_change < NU_SWEEP_TOLERANCE {
            break;
        }
    }
    sweeps
}

/// Result of a closed-form design-parameter update. `degenerate` marks a
/// vanishing denominator, in which case the affected entries take a fallback value.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiUpdate {
    pub psi: SamplingDesign,
    pub degenerate: bool,
}

/// `rho0 = Sbar^o / (Sbar^o + sbar^m)`, `rho1 = S^o / (S^o + s^m)`; 0.5 on empty denominators.
pub fn update_psi_double_standard(stats: &DyadStats) -> PsiUpdate {
    let ratio = |num: f64, den: f64| if den > 0.0 { (num / den, false) } else { (0.5, true) };
    let (rho0, d0) = ratio(stats.sbar_o, stats.sbar_o + stats.sbar_m);
    let (rho1, d1) = ratio(stats.s_o, stats.s_o + stats.s_m);
    PsiUpdate {
        psi: SamplingDesign::DoubleStandard { rho0, rho1 },
        degenerate: d0 || d1,
    }
}

/// `rho_q = sum_{N^o} tau_iq / sum_N tau_iq`; 0.5 on empty columns.
pub fn update_psi_class(tau: &DMatrix<f64>, sampled: &[bool]) -> PsiUpdate {
    let mut degenerate = false;
    let rho = (0..tau.ncols())
        .map(|k| {
            let total: f64 = tau.column(k).sum();
            let obs: f64 = tau.column(k).iter().zip(sampled).filter(|(_, &s)| s).map(|(t, _)| t).sum();
            if total > 0.0 {
                obs / total
            } else {
                degenerate = true;
                0.5
            }
        })
        .collect();
    PsiUpdate {
        psi: SamplingDesign::Class { rho },
        degenerate,
    }
}

/// Joint maximizer in `(a, b)` of the star-degree zeta-bound (a concave
/// quadratic) via its 2x2 normal equations. When the system is singular the
/// previous values are kept.
pub fn update_psi_star_degree(stats: &DegreeStats, zeta: &[f64], sampled: &[bool], previous: (f64, f64)) -> PsiUpdate {
    let n = zeta.len() as f64;
    let n_m = sampled.iter().filter(|&&s| !s).count() as f64;
    let (mut sh, mut shd, mut shd2, mut sd, mut sd_m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &z) in zeta.iter().enumerate() {
        let h = jaakkola_h(z);
        let d = stats.d_tilde[i];
        sh += h;
        shd += h * d;
        shd2 += h * stats.d2_tilde(i);
        sd += d;
        if !sampled[i] {
            sd_m += d;
        }
    }
    // [2 sh, 2 shd; 2 shd, 2 shd2] (a, b) = (n_m - n/2, sd_m - sd/2)
    let det = sh * shd2 - shd * shd;
    let scale = (sh * shd2).abs().max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale || !det.is_finite() {
        return PsiUpdate {
            psi: SamplingDesign::StarDegree {
                a: previous.0,
                b: previous.1,
            },
            degenerate: true,
        };
    }
    let r1 = 0.5 * (n_m - 0.5 * n);
    let r2 = 0.5 * (sd_m - 0.5 * sd);
    let a = (r1 * shd2 - shd * r2) / det;
    let b = (sh * r2 - shd * r1) / det;
    PsiUpdate {
        psi: SamplingDesign::StarDegree { a, b },
        degenerate: false,
    }
}

pub const ZETA_FLOOR: f64 = 1e-8;

/// `zeta_i = sqrt(a^2 + b^2 E[D_i^2] + 2 a b E[D_i])`, floored at `ZETA_FLOOR`.
pub fn update_zeta(a: f64, b: f64, stats: &DegreeStats) -> Vec<f64> {
    (0..stats.d_tilde.len())
        .map(|i| {
            let r = a * a + b * b * stats.d2_tilde(i) + 2.0 * a * b * stats.d_tilde[i];
            // r = E[(a + b D_i)^2] >= 0 up to rounding
            debug_assert!(r >= -1e-9 * (1.0 + a * a + b * b * stats.d2_tilde(i)));
            r.max(0.0).sqrt().max(ZETA_FLOOR)
        })
        .collect()
}

/// Closed-form `nu` for double standard sampling.
pub fn update_nu_double_standard(
    params: &SbmParameters,
    rho0: f64,
    rho1: f64,
    tau: &DMatrix<f64>,
    missing: &[(usize, usize)],
) -> Vec<f64> {
    let offset = (-clamp_prob(rho1)).ln_1p() - (-clamp_prob(rho0)).ln_1p();
    let mut nu = vec![0.0; missing.len()];
    fill_nu(params, tau, missing, offset, &mut nu);
    nu
}

/// Closed-form `nu` for class sampling: the SBM posterior edge probability.
pub fn update_nu_class(params: &SbmParameters, tau: &DMatrix<f64>, missing: &[(usize, usize)]) -> Vec<f64> {
    let mut nu = vec![0.0; missing.len()];
    fill_nu(params, tau, missing, 0.0, &mut nu);
    nu
}

/// Gauss-Seidel sweeps of the exact coordinate maximizers of `nu` for star-degree
/// sampling, in the order of `state.missing`, until the largest change is below 1e-10.
pub fn update_nu_star_degree(
    net: &ObservedNetwork,
    params: &SbmParameters,
    a: f64,
    b: f64,
    state: &NmarState,
) -> Result<Vec<f64>> {
    state.check(net, params.q())?;
    let zeta = state
        .zeta
        .as_deref()
        .ok_or_else(|| SbmError::InvalidParameters("star-degree update needs zeta".into()))?;
    let mut nu = state.nu.clone();
    let mut stats = degree_stats(net, &state.missing, &nu);
    star_degree_nu_sweeps(params, a, b, &state.tau, zeta, &net.sampled_nodes(), &state.missing, &mut stats, &mut nu);
    Ok(nu)
}

/// Full NMAR bound: design term + SBM term on all dyads + multinomial term + entropy of `nu`.
pub fn lower_bound_nmar(
    net: &ObservedNetwork,
    params: &SbmParameters,
    psi: &SamplingDesign,
    state: &NmarState,
) -> Result<f64> {
    state.check(net, params.q())?;
    let data = NmarData::new(net);
    let weights = DyadWeights::imputed(net, &state.missing, &state.nu);
    data.bound(&weights, params, psi, &state.tau, &state.nu, state.zeta.as_deref())
}

/// `alpha_q = mean_i tau_iq`, `pi` from observed values and `nu` on all dyads.
pub fn m_step_theta(net: &ObservedNetwork, state: &NmarState) -> Result<(SbmParameters, Vec<(usize, usize)>)> {
    state.check(net, state.tau.ncols())?;
    let weights = DyadWeights::imputed(net, &state.missing, &state.nu);
    Ok(theta_from(&weights, &state.tau))
}

fn theta_from(weights: &DyadWeights, tau: &DMatrix<f64>) -> (SbmParameters, Vec<(usize, usize)>) {
    let n = tau.nrows() as f64;
    let alpha = (0..tau.ncols()).map(|k| tau.column(k).sum() / n).collect();
    let (pi, empty) = weights.m_step_pi(tau);
    (SbmParameters::from_parts_unchecked(alpha, pi), empty)
}

/// Fixed-point update of `tau` with design weights `lambda` (all ones for double
/// standard and star degree).
pub fn ve_step_tau(
    net: &ObservedNetwork,
    params: &SbmParameters,
    state: &NmarState,
    lambda: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    state.check(net, params.q())?;
    if lambda.shape() != state.tau.shape() {
        return Err(SbmError::DimensionMismatch {
            expected: state.tau.nrows(),
            found: lambda.nrows(),
        });
    }
    let weights = DyadWeights::imputed(net, &state.missing, &state.nu);
    let mut prior = DMatrix::from_fn(net.n(), params.q(), |_, k| params.alpha()[k].ln());
    add_log_lambda(&mut prior, lambda)?;
    let mut tau = state.tau.clone();
    weights.ve_fixed_point(&mut tau, &prior, params.pi());
    Ok(tau)
}

/// Design parameters clamped into the open unit interval where they are probabilities.
fn clamp_psi(psi: SamplingDesign) -> SamplingDesign {
    match psi {
        SamplingDesign::DoubleStandard { rho0, rho1 } => SamplingDesign::DoubleStandard {
            rho0: clamp_prob(rho0),
            rho1: clamp_prob(rho1),
        },
        SamplingDesign::Class { rho } => SamplingDesign::Class {
            rho: rho.into_iter().map(clamp_prob).collect(),
        },
        other => other,
    }
}

/// Options of an NMAR fit beyond the starting responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct NmarConfig {
    pub family: NmarFamily,
    /// Starting design parameters; `None` uses the family default.
    pub initial_psi: Option<SamplingDesign>,
    /// Keep the design parameters at their initial value.
    pub freeze_psi: bool,
}

impl NmarConfig {
    pub fn new(family: NmarFamily) -> Self {
        NmarConfig {
            family,
            initial_psi: None,
            freeze_psi: false,
        }
    }
}

fn default_psi(family: NmarFamily, tau: &DMatrix<f64>, sampled: &[bool]) -> SamplingDesign {
    match family {
        NmarFamily::DoubleStandard => SamplingDesign::DoubleStandard { rho0: 0.5, rho1: 0.5 },
        NmarFamily::Class => update_psi_class(tau, sampled).psi,
        NmarFamily::StarDegree => {
            let frac = sampled.iter().filter(|&&s| s).count() as f64 / sampled.len() as f64;
            SamplingDesign::StarDegree {
                a: logit(frac.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)),
                b: 0.0,
            }
        }
    }
}

pub fn fit_nmar(
    net: &ObservedNetwork,
    q: usize,
    family: NmarFamily,
    init_tau: &DMatrix<f64>,
    stop: StopRule,
) -> Result<FitResult> {
    fit_nmar_with(net, q, &NmarConfig::new(family), init_tau, stop)
}

/// Algorithm: repeat theta-step, psi-step, (zeta-step), tau-step, nu-step,
/// recording the bound after each, until the max-abs change of theta is below `eps`.
pub fn fit_nmar_with(
    net: &ObservedNetwork,
    q: usize,
    config: &NmarConfig,
    init_tau: &DMatrix<f64>,
    stop: StopRule,
) -> Result<FitResult> {
    if q == 0 {
        return Err(SbmError::InvalidParameters("q must be at least 1".into()));
    }
    let n = net.n();
    if n < 2 {
        return Err(SbmError::InvalidParameters("need at least two nodes".into()));
    }
    check_tau(init_tau, n, q)?;
    let family = config.family;
    let data = NmarData::new(net);
    let mut tau = init_tau.clone();

    // nu starts at the SBM edge probability under the observed-data M-step.
    let observed = DyadWeights::observed(net);
    let pi0 = if net.observed_count() > 0 {
        observed.m_step_pi(&tau).0
    } else {
        DMatrix::from_element(q, q, EMPTY_PAIR_PI)
    };
    let mut nu: Vec<f64> = data
        .missing
        .iter()
        .map(|&(i, j)| {
            let mut p = 0.0;
            for k in 0..q {
                for l in 0..q {
                    p += tau[(i, k)] * tau[(j, l)] * pi0[(k, l)];
                }
            }
            clamp_prob(p)
        })
        .collect();
    let mut weights = observed;
    weights.set_missing(&data.missing, &nu);

    let mut psi = match &config.initial_psi {
        Some(p) => {
            if !family.matches(p) {
                return Err(SbmError::InvalidDesign(format!("{} does not fit the chosen family", p.name())));
            }
            p.validate()?;
            if let SamplingDesign::Class { rho } = p {
                if rho.len() != q {
                    return Err(SbmError::DimensionMismatch {
                        expected: q,
                        found: rho.len(),
                    });
                }
            }
            clamp_psi(p.clone())
        }
        None => clamp_psi(default_psi(family, &tau, &data.sampled)),
    };
    let mut zeta = match (&psi, family) {
        (SamplingDesign::StarDegree { a, b }, NmarFamily::StarDegree) => {
            Some(update_zeta(*a, *b, &degree_stats(net, &data.missing, &nu)))
        }
        _ => None,
    };

    let mut trace = Vec::new();
    let mut prev: Option<SbmParameters> = None;
    let mut theta = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut flags: Vec<FitFlag> = Vec::new();
    let mut design_flag = None;
    while iterations < stop.max_iter {
        iterations += 1;
        let (params, empty) = theta_from(&weights, &tau);
        trace.push(data.bound(&weights, &params, &psi, &tau, &nu, zeta.as_deref())?);

        if !config.freeze_psi {
            let update = match &psi {
                SamplingDesign::DoubleStandard { .. } => update_psi_double_standard(&DyadStats::new(net, &nu)),
                SamplingDesign::Class { .. } => update_psi_class(&tau, &data.sampled),
                SamplingDesign::StarDegree { a, b } => update_psi_star_degree(
                    &degree_stats(net, &data.missing, &nu),
                    zeta.as_deref().expect("star degree carries zeta"),
                    &data.sampled,
                    (*a, *b),
                ),
                _ => unreachable!("family checked above"),
            };
            design_flag = update.degenerate.then(|| format!("{} update hit a zero denominator", psi.name()));
            psi = clamp_psi(update.psi);
            trace.push(data.bound(&weights, &params, &psi, &tau, &nu, zeta.as_deref())?);
        }

        if let SamplingDesign::StarDegree { a, b } = psi {
            zeta = Some(update_zeta(a, b, &degree_stats(net, &data.missing, &nu)));
            trace.push(data.bound(&weights, &params, &psi, &tau, &nu, zeta.as_deref())?);
        }

        let prior = data.log_prior(&params, &psi)?;
        weights.ve_fixed_point(&mut tau, &prior, params.pi());
        trace.push(data.bound(&weights, &params, &psi, &tau, &nu, zeta.as_deref())?);

        data.update_nu(&params, &psi, &tau, zeta.as_deref(), &mut nu)?;
        weights.set_missing(&data.missing, &nu);
        trace.push(data.bound(&weights, &params, &psi, &tau, &nu, zeta.as_deref())?);

        let change = prev.as_ref().map_or(f64::MAX, |p| p.max_abs_diff(&params));
        flags = empty.into_iter().map(|(a, b)| FitFlag::EmptyBlockPair(a, b)).collect();
        prev = Some(params.clone());
        theta = Some(params);
        if change < stop.eps {
            converged = true;
            break;
        }
    }
    if let Some(msg) = design_flag {
        flags.push(FitFlag::DegenerateDesign(msg));
    }
    if !converged {
        flags.push(FitFlag::IterationLimit);
    }
    Ok(FitResult {
        method: family.method(),
        theta: theta.expect("at least one iteration runs when max_iter >= 1"),
        psi: Some(psi),
        tau,
        missing_dyads: data.missing,
        nu,
        zeta,
        sampled: data.sampled,
        bound_trace: trace,
        iterations,
        converged,
        flags,
    })
}
