//! Optional TOML settings file for the command line. Every key mirrors a
//! flag of the same name; a flag given on the command line wins.
//!
//! ```toml
//! tau_cluster = 0.3
//! tau_dup = 0.05
//! kappa = 20
//! higher_better = [1]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Direction, LoadOptions};
use crate::error::{QdrError, Result};
use crate::index::IndexParams;
use crate::model::Query;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub delta: Option<f64>,
    pub tau_cluster: Option<f64>,
    pub tau_dup: Option<f64>,
    pub kernel_sigma: Option<f64>,
    pub cluster_seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub max_entries: Option<usize>,
    pub tau_merge: Option<f64>,
    pub kappa: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tau_relax: Option<f64>,
    pub d_max: Option<f64>,
    /// Zero-based attribute dimensions where larger raw values are better.
    pub higher_better: Option<Vec<usize>>,
    pub prenormalized: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(QdrError::file(path))?;
        toml::from_str(&text).map_err(|e| QdrError::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Settings) -> Self {
        overlay!(self, top; delta, tau_cluster, tau_dup, kernel_sigma, cluster_seed, max_iters,
            max_entries, tau_merge, kappa, alpha, beta, tau_relax, d_max, higher_better, prenormalized);
        self
    }

    pub fn index_params(&self) -> Result<IndexParams> {
        let mut p = IndexParams::default();
        if let Some(v) = self.delta {
            p.metric.delta = v;
        }
        if let Some(v) = self.tau_cluster {
            p.cluster.tau_cluster = v;
        }
        if let Some(v) = self.tau_dup {
            p.cluster.tau_dup = v;
        }
        if let Some(v) = self.kernel_sigma {
            p.cluster.kernel_sigma = v;
        }
        if let Some(v) = self.cluster_seed {
            p.cluster.seed = v;
        }
        if let Some(v) = self.max_iters {
            p.cluster.max_iters = v;
        }
        if let Some(v) = self.max_entries {
            p.dr.max_entries = v;
        }
        if let Some(v) = self.tau_merge {
            p.dr.tau_merge = v;
        }
        if !(0.0..=1.0).contains(&p.metric.delta) {
            return Err(QdrError::InvalidParameter("delta must lie in [0, 1]".into()));
        }
        if p.dr.max_entries < 2 {
            return Err(QdrError::InvalidParameter("max_entries must be at least 2".into()));
        }
        p.cluster.validate()?;
        Ok(p)
    }

    pub fn load_options(&self) -> LoadOptions {
        let mut directions = Vec::new();
        for &d in self.higher_better.iter().flatten() {
            if directions.len() <= d {
                directions.resize(d + 1, Direction::LowerBetter);
            }
            directions[d] = Direction::HigherBetter;
        }
        LoadOptions {
            directions,
            prenormalized: self.prenormalized.unwrap_or(false),
        }
    }

    /// Overrides the ranking parameters of `q` with whatever is set here.
    pub fn apply_to_query(&self, q: &mut Query) {
        if let Some(v) = self.kappa {
            q.kappa = v;
        }
        if let Some(v) = self.alpha {
            q.alpha = v;
        }
        if let Some(v) = self.beta {
            q.beta = v;
        }
        if let Some(v) = self.tau_relax {
            q.tau_relax = v;
        }
        if let Some(v) = self.d_max {
            q.d_max = v;
        }
    }
}
