//! Screenshot-to-HTML benchmarking.
//!
//! A run feeds each screenshot of a [`dataset`] to a generation
//! [`method`], which calls a model through the [`llm`] gateway. The HTML
//! that comes back is rendered by [`render`] and scored by [`metrics`];
//! [`run`] persists every step so runs survive crashes, and [`report`]
//! summarizes finished runs.

pub mod dataset;
pub mod llm;
pub mod method;
pub mod metrics;
pub mod render;
pub mod report;
pub mod run;

/// The guide's chapters, compiled as doc-tests so their examples stay
/// correct.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/models.md")]
    pub struct Models;
    #[doc = include_str!("../../../book/src/methods.md")]
    pub struct Methods;
    #[doc = include_str!("../../../book/src/runs.md")]
    pub struct Runs;
    #[doc = include_str!("../../../book/src/rendering.md")]
    pub struct Rendering;
}
