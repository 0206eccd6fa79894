//! Stochastic block models fitted to partially observed networks.
//!
//! Dyads are `Present`, `Absent` or `Missing`. The missingness is produced by a
//! [`SamplingDesign`]; MCAR/MAR designs are handled by [`fit_mar`], which ignores
//! the missing dyads, and NMAR designs by [`fit_nmar`], which models them jointly
//! with the design. [`icl`] compares numbers of blocks and designs, and the
//! [`identifiability`] module recovers parameters from exact moments.

mod engine;
pub mod designs;
pub mod error;
pub mod fit;
pub mod icl;
pub mod identifiability;
pub mod init;
pub mod mar;
pub mod metrics;
pub mod model;
pub mod network;
pub mod nmar;
pub mod numeric;

pub use designs::{apply_design, design_log_likelihood, Centering, Missingness, SamplingDesign};
pub use engine::{EMPTY_PAIR_PI, VE_MAX_SWEEPS, VE_TOLERANCE};
pub use error::{Result, SbmError};
pub use fit::{fit, fit_best, fit_with_restarts, FitFlag, FitResult, Method, DEFAULT_RESTARTS};
pub use icl::{icl, icl_mar, icl_mar_comparator, icl_nmar, mar_penalty, nmar_penalty};
pub use identifiability::{exact_moments, recover_class, recover_mar, MomentSequence, VandermondeSystem};
pub use init::{init_clustering, restart_inits, InitStrategy};
pub use mar::{fit_mar, lower_bound_mar, m_step_mar, ve_step_mar, MarState, StopRule};
pub use metrics::{adjusted_rand_index, frobenius_rel_error, frobenius_rel_error_with};
pub use model::{sample_given_blocks, sample_sbm_network, BlockAssignment, SbmParameters};
pub use network::{DyadState, ObservedNetwork};
pub use nmar::{
    degree_stats, fit_nmar, fit_nmar_with, jaakkola_h, lower_bound_nmar, m_step_theta, update_nu_class,
    update_nu_double_standard, update_nu_star_degree, update_psi_class, update_psi_double_standard,
    update_psi_star_degree, update_zeta, ve_step_tau, DegreeStats, DyadStats, NmarConfig, NmarFamily, NmarState,
};
