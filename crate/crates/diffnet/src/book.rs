//! Compiles and runs every code block of the guide in `book/` as a
//! documentation test, so the chapters can never drift from the crate.
//! Built only under `cfg(doctest)`; nothing here is part of the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}

#[doc = include_str!("../../../book/src/event-logs.md")]
pub mod event_logs {}

#[doc = include_str!("../../../book/src/cascades.md")]
pub mod cascades {}

#[doc = include_str!("../../../book/src/synthetic-worlds.md")]
pub mod synthetic_worlds {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/logistic-model.md")]
pub mod logistic_model {}

#[doc = include_str!("../../../book/src/feature-ranking.md")]
pub mod feature_ranking {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/virality.md")]
pub mod virality {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
