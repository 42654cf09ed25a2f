//! Bayesian quickest detection of a change in the drift of a Brownian motion
//! when the post-change drift magnitude is random with finite support.
//!
//! * [`model`]: problem instance, validation and JSON format.
//! * [`sim`]: seeded scenario and observation generation.
//! * [`filter`]: posterior filters.
//! * [`shiryaev`]: closed-form value and threshold of the one-atom problem.
//! * [`risk`]: Monte Carlo Bayes risk of stopping rules.
//! * [`dp`]: value iteration on the posterior simplex.
//! * [`experiments`]: reproducible experiment drivers and reports.

pub mod dp;
pub mod experiments;
pub mod filter;
pub mod model;
pub mod quadrature;
pub mod risk;
pub mod shiryaev;
pub mod sim;
pub mod stats;
