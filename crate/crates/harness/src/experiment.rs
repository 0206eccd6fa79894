//! Simulation study runner: replicated networks over a grid of design
//! parameters, fitted for every `(Q, method)`, one CSV row per fit.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sbm_sampling::{
    adjusted_rand_index, apply_design, fit_best, frobenius_rel_error, restart_inits, sample_sbm_network,
    FitResult, Method, ObservedNetwork, SamplingDesign, SbmParameters, StopRule,
};
use serde::{Deserialize, Serialize};

use crate::commands::{parse_design, selection_icl};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Affiliation,
    Star,
    Bipartite,
}

impl Topology {
    pub fn default_alpha(self) -> Vec<f64> {
        match self {
            Topology::Affiliation => vec![1.0 / 3.0; 3],
            Topology::Star => vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0],
            Topology::Bipartite => vec![0.25; 4],
        }
    }

    /// Connectivity with inter/intra contrast `epsilon`; lower is more contrasted.
    pub fn pi(self, epsilon: f64) -> DMatrix<f64> {
        let (h, l) = (1.0 - epsilon, epsilon);
        match self {
            Topology::Affiliation => DMatrix::from_fn(3, 3, |a, b| if a == b { h } else { l }),
            Topology::Star => DMatrix::from_row_slice(
                4,
                4,
                &[h, h, 0.0, 0.0, h, 0.0, l, 0.0, 0.0, l, h, h, 0.0, 0.0, h, 0.0],
            ),
            Topology::Bipartite => {
                DMatrix::from_row_slice(4, 4, &[l, h, l, l, h, l, l, l, l, l, l, h, l, l, h, l])
            }
        }
    }
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_replications() -> usize {
    50
}

fn default_restarts() -> usize {
    sbm_sampling::DEFAULT_RESTARTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Topology,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Overrides the topology's block proportions.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// Overrides the topology's connectivity matrix.
    #[serde(default)]
    pub pi: Option<Vec<Vec<f64>>>,
    pub n: usize,
    /// Design name as accepted by `--design`.
    pub design: String,
    /// One flat parameter list per grid cell.
    pub psi_grid: Vec<Vec<f64>>,
    pub q_grid: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn params(&self) -> Result<SbmParameters> {
        let alpha = self.alpha.clone().unwrap_or_else(|| self.topology.default_alpha());
        let pi = match &self.pi {
            Some(rows) => {
                let q = rows.len();
                if rows.iter().any(|r| r.len() != q) {
                    return Err(HarnessError::input("pi must be square"));
                }
                DMatrix::from_fn(q, q, |a, b| rows[a][b])
            }
            None => self.topology.pi(self.epsilon),
        };
        Ok(SbmParameters::new(alpha, pi)?)
    }

    pub fn designs(&self) -> Result<Vec<SamplingDesign>> {
        self.psi_grid.iter().map(|psi| parse_design(&self.design, psi)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi_grid.is_empty() || self.q_grid.is_empty() || self.methods.is_empty() {
            return Err(HarnessError::input("psi_grid, q_grid and methods must be nonempty"));
        }
        if self.replications == 0 || self.restarts == 0 {
            return Err(HarnessError::input("replications and restarts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(HarnessError::input("epsilon must lie in [0, 1]"));
        }
        let params = self.params()?;
        if self.q_grid.iter().any(|&q| q == 0 || q > self.n) {
            return Err(HarnessError::input(format!("every Q must lie in 1..={}", self.n)));
        }
        for d in self.designs()? {
            if let SamplingDesign::Class { rho } = &d {
                if rho.len() != params.q() {
                    return Err(HarnessError::input("class rates must have one entry per true block"));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One fit of one replicate. List-valued fields are `;`-joined; an empty
/// field means the quantity does not apply to this row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub replicate: usize,
    pub psi: String,
    pub q: usize,
    pub method: String,
    pub sampling_rate: f64,
    pub ari: Option<f64>,
    /// Against the truth; only when `q` equals the true number of blocks.
    pub frob_err: Option<f64>,
    /// Relative error of each fitted design parameter, when the method matches the design.
    pub rho_err: String,
    /// Whether the ICL over the `Q` grid (this method, this replicate) picks the true `Q`.
    pub icl_correct: bool,
    pub icl: Option<f64>,
    pub selected_q: Option<usize>,
}

impl ExperimentRow {
    pub fn psi_values(&self) -> Vec<f64> {
        split_list(&self.psi)
    }

    pub fn rho_errors(&self) -> Vec<f64> {
        split_list(&self.rho_err)
    }
}

fn join_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn split_list(s: &str) -> Vec<f64> {
    s.split(';').filter(|t| !t.is_empty()).filter_map(|t| t.parse().ok()).collect()
}

/// The fitted design parameters in the truth's block order, when comparable.
fn fitted_psi(truth: &SamplingDesign, fit: &FitResult, perm: Option<&[usize]>) -> Option<Vec<f64>> {
    let psi = fit.psi.as_ref()?;
    match (truth, psi) {
        (SamplingDesign::DoubleStandard { .. }, SamplingDesign::DoubleStandard { .. })
        | (SamplingDesign::StarDegree { .. }, SamplingDesign::StarDegree { .. }) => Some(psi.params()),
        (SamplingDesign::Class { rho }, SamplingDesign::Class { rho: hat }) if rho.len() == hat.len() => {
            let perm = perm?;
            Some((0..rho.len()).map(|k| hat[perm[k]]).collect())
        }
        _ => None,
    }
}

struct CellFit {
    q: usize,
    method: Method,
    fit: Option<FitResult>,
    icl: Option<f64>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    params: &SbmParameters,
    design: &SamplingDesign,
    replicate: usize,
    cell: u64,
) -> Result<Vec<ExperimentRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cell);
    let (full, z) = sample_sbm_network(params, cfg.n, &mut rng)?;
    let net: ObservedNetwork = apply_design(&full, &z, design, &mut rng)?;
    let mut qs = cfg.q_grid.clone();
    qs.sort_unstable();
    qs.dedup();
    let stop = StopRule::default();
    let mut fits = Vec::new();
    for &q in &qs {
        let inits = restart_inits(&net, q, cfg.restarts, &mut rng)?;
        for &method in &cfg.methods {
            let fit = fit_best(&net, q, method, &inits, stop).ok();
            let icl = fit.as_ref().and_then(|f| selection_icl(&net, f, &cfg.methods).ok());
            fits.push(CellFit { q, method, fit, icl });
        }
    }
    let true_q = params.q();
    let truth_params = design.params();
    let mut rows = Vec::with_capacity(fits.len());
    for c in &fits {
        let selected_q = fits
            .iter()
            .filter(|o| o.method == c.method)
            .filter_map(|o| o.icl.filter(|v| v.is_finite()).map(|v| (v, o.q)))
            .fold(None, |best: Option<(f64, usize)>, (v, q)| match best {
                Some((b, _)) if b <= v => best,
                _ => Some((v, q)),
            })
            .map(|(_, q)| q);
        let (mut ari, mut frob_err, mut rho_err) = (None, None, String::new());
        if let Some(f) = &c.fit {
            ari = adjusted_rand_index(&f.labels(), &z).ok();
            if c.q == true_q {
                if let Ok((err, perm)) = frobenius_rel_error(f.theta.pi(), params.pi()) {
                    frob_err = Some(err);
                    if let Some(hat) = fitted_psi(design, f, Some(&perm)) {
                        let errs: Vec<f64> =
                            hat.iter().zip(&truth_params).map(|(h, t)| (h - t).abs() / t.abs()).collect();
                        rho_err = join_list(&errs);
                    }
                }
            }
        }
        rows.push(ExperimentRow {
            replicate,
            psi: join_list(&truth_params),
            q: c.q,
            method: c.method.name().to_owned(),
            sampling_rate: net.sampling_rate(),
            ari,
            frob_err,
            rho_err,
            icl_correct: selected_q == Some(true_q),
            icl: c.icl,
            selected_q,
        });
    }
    Ok(rows)
}

/// Runs every `(psi, replicate)` cell in parallel. Each cell draws from its own
/// stream of `seed`, so the rows depend only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let params = cfg.params()?;
    let designs = cfg.designs()?;
    let reps = cfg.replications;
    let cells: Vec<(usize, usize)> = (0..designs.len()).flat_map(|d| (0..reps).map(move |r| (d, r))).collect();
    let per_cell: Vec<Vec<ExperimentRow>> = cells
        .par_iter()
        .map(|&(d, r)| run_cell(cfg, &params, &designs[d], r, (d * reps + r) as u64))
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

pub fn write_rows<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<ExperimentRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
