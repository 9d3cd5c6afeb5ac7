//! Attribute-aware top-κ spatial keyword search over a two-layer index:
//! keyword clusters on top, dual-filtering R-trees below.

pub mod baselines;
pub mod bench;
pub mod bitmap;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod drtree;
pub mod error;
pub mod index;
pub mod metric;
pub mod model;
pub mod persist;
pub mod qctree;
pub mod search;
pub mod skyline;
pub mod synth;

pub use error::{QdrError, Result};
pub use index::{IndexParams, IndexSummary, QdrIndex};
pub use metric::{EmbeddingStore, KeywordMetric, MetricParams};
pub use model::{GeoObject, Point, Query, ScoredResult};
pub use search::SearchStats;
