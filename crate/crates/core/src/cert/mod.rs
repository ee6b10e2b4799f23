//! Policy-level and action-level certification.

pub mod action;
pub mod beta;
pub mod policy;

pub use action::{
    certified_at, certify_episode, max_tolerable_radius, simuem_bounds, stability_ratio, vote, RadiusRecord,
    ScoreBounds, VoteCounts,
};
pub use beta::{beta_quantile, betainc};
pub use policy::{
    certify_policy_adp, certify_policy_rdp, certify_policy_real, dkw_epsilon, j_lower_clean, policy_cert_curve,
    CleanBound, EmpiricalCdf, PolicyCertRow, PolicyCurve,
};
