//! Microscopic information-diffusion modeling on social networks.
//!
//! `diffnet` predicts, edge by edge, whether one account will forward another
//! account's content, and packages the full workflow around that question:
//!
//! * [`graph`] — directed followership graphs and social homogeneity;
//! * [`eventlog`] — posts, reactions, topics, profiles, sentiment scoring;
//! * [`simulator`] — asynchronous independent-cascade simulation and a
//!   planted-signal synthetic data generator;
//! * [`features`] — 55-value edge samples over six-hour time bins;
//! * [`blr`] — Bayesian logistic regression (Gaussian prior, MAP fit);
//! * [`forest`] — random-forest feature ranking and top-k selection;
//! * [`eval`] — classification metrics, AUC, cross-validation, holdout,
//!   cross-model testing, and best-time-to-post reports;
//! * [`virality`] — crowd-sourced per-message verdicts from per-interaction
//!   classifications;
//! * [`cli`] — the `diffnet` command-line pipeline.
//!
//! Everything stochastic derives from one root seed (see [`rngs`]), and every
//! artifact writer is deterministic, so identical configurations reproduce
//! identical bytes.

pub mod blr;
pub mod cli;
pub mod eval;
pub mod eventlog;
pub mod features;
pub mod forest;
pub mod graph;
pub mod rngs;
pub mod simulator;
pub mod virality;

#[cfg(doctest)]
pub mod book;
