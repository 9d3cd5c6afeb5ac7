//! Domain types shared across the index and the two ranking functions: the
//! per-object score and the per-node lower bound used by best-first search.

use serde::{Deserialize, Serialize};

use crate::drtree::{min_dist, DrNode};
use crate::error::{QdrError, Result};
use crate::skyline::min_weighted_attribute;

/// Default weight of the spatial-vs-attribute split.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Default weight of the keyword term against the other two.
pub const DEFAULT_BETA: f64 = 0.67;
pub const DEFAULT_KAPPA: usize = 10;
/// Default query-time relaxation threshold.
pub const DEFAULT_TAU_RELAX: f64 = 0.3;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Planar Euclidean distance.
pub fn euclidean_distance(a: Point, b: Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// An indexed entity. Attributes are normalized to `[0, 1]` with smaller
/// values preferred; keywords are lowercase, sorted and unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoObject {
    pub id: String,
    pub location: Point,
    pub keywords: Vec<String>,
    pub attributes: Vec<f64>,
}

impl GeoObject {
    pub fn new<I, S>(id: impl Into<String>, location: Point, keywords: I, attributes: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let id = id.into();
        let mut keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        keywords.sort();
        keywords.dedup();
        if keywords.is_empty() {
            return Err(QdrError::InvalidParameter(format!("object {id:?} has no keywords")));
        }
        if !location.is_finite() {
            return Err(QdrError::InvalidParameter(format!(
                "object {id:?} has a non-finite location"
            )));
        }
        if let Some(a) = attributes.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(QdrError::InvalidParameter(format!(
                "object {id:?} has attribute {a} outside [0, 1]"
            )));
        }
        Ok(Self {
            id,
            location,
            keywords,
            attributes,
        })
    }

    pub fn has_keyword(&self, keyword: &str) -> bool {
        self.keywords.binary_search_by(|k| k.as_str().cmp(keyword)).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub alpha: f64,
    pub beta: f64,
    pub d_max: f64,
}

impl ScoreParams {
    pub fn new(alpha: f64, beta: f64, d_max: f64) -> Result<Self> {
        let p = Self { alpha, beta, d_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(QdrError::InvalidQuery(format!(
                "alpha and beta must lie in [0, 1] (got {}, {})",
                self.alpha, self.beta
            )));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(QdrError::InvalidQuery(format!(
                "d_max must be positive (got {})",
                self.d_max
            )));
        }
        Ok(())
    }

    /// Combines the three ranking terms. `phi == 0` means no keyword overlap
    /// and ranks at +infinity.
    ///
    /// Objects and nodes share this function so the node bound stays below the
    /// object score under IEEE rounding, not just in exact arithmetic.
    #[inline]
    pub fn combine(&self, spatial: f64, phi: u32, weighted_attributes: f64) -> f64 {
        if phi == 0 {
            return f64::INFINITY;
        }
        self.alpha * self.beta * (spatial / self.d_max)
            + (1.0 - self.beta) * (1.0 / phi as f64)
            + (1.0 - self.alpha) * self.beta * weighted_attributes
    }
}

/// An attribute-aware spatial keyword query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub location: Point,
    pub keywords: Vec<String>,
    pub weights: Vec<f64>,
    pub kappa: usize,
    pub d_max: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Keyword distance under which a universe keyword counts as a match.
    pub tau_relax: f64,
}

impl Query {
    /// A query with the default ranking parameters. Keywords are lowercased
    /// and deduplicated.
    pub fn new<I, S>(location: Point, keywords: I, weights: Vec<f64>, kappa: usize, d_max: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        keywords.sort();
        keywords.dedup();
        Self {
            location,
            keywords,
            weights,
            kappa,
            d_max,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            tau_relax: DEFAULT_TAU_RELAX,
        }
    }

    pub fn score_params(&self) -> ScoreParams {
        ScoreParams {
            alpha: self.alpha,
            beta: self.beta,
            d_max: self.d_max,
        }
    }

    /// `kappa == 0` is accepted and yields an empty answer.
    pub fn validate(&self) -> Result<()> {
        if self.keywords.is_empty() {
            return Err(QdrError::InvalidQuery("query needs at least one keyword".into()));
        }
        if !self.location.is_finite() {
            return Err(QdrError::InvalidQuery("query location must be finite".into()));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !(0.0..).contains(w) || !w.is_finite()) {
            return Err(QdrError::InvalidQuery("weights must be non-negative and finite".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(QdrError::InvalidQuery(format!("weights must sum to 1 (got {sum})")));
        }
        if !(0.0..).contains(&self.tau_relax) {
            return Err(QdrError::InvalidQuery("tau_relax must be non-negative".into()));
        }
        self.score_params().validate()
    }
}

/// One ranked answer. Lists of results are ordered by `(score, id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub id: String,
    pub score: f64,
    pub distance: f64,
    pub phi: u32,
    pub attribute_term: f64,
}

/// Σ wᵢ·aᵢ.
#[inline]
pub fn weighted_sum(weights: &[f64], attributes: &[f64]) -> f64 {
    weights.iter().zip(attributes).map(|(w, a)| w * a).sum()
}

pub fn score_object(q: &Query, o: &GeoObject, phi: u32) -> Result<f64> {
    if q.weights.len() != o.attributes.len() {
        return Err(QdrError::DimensionMismatch {
            expected: q.weights.len(),
            actual: o.attributes.len(),
        });
    }
    Ok(q.score_params().combine(
        euclidean_distance(q.location, o.location),
        phi,
        weighted_sum(&q.weights, &o.attributes),
    ))
}

/// Lower bound on the score of every object below `node`.
pub fn score_node(q: &Query, node: &DrNode, phi_node: u32) -> Result<f64> {
    if node.sp.points.is_empty() {
        return Err(QdrError::Corrupt("node with empty skyline set".into()));
    }
    if let Some(p) = node.sp.points.iter().find(|p| p.len() != q.weights.len()) {
        return Err(QdrError::DimensionMismatch {
            expected: q.weights.len(),
            actual: p.len(),
        });
    }
    let attr = min_weighted_attribute(&node.sp, &q.weights)?;
    Ok(q.score_params()
        .combine(min_dist(q.location, &node.mbr), phi_node, attr))
}

/// Orders results by ascending score, ties by ascending id.
pub fn sort_results(results: &mut [ScoredResult]) {
    results.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ScoreParams {
        ScoreParams::new(0.5, 0.67, 1.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(Point::new(0.0, 0.0), Point::new(0.0, 0.0)), 0.0);
        assert_eq!(euclidean_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        assert_eq!(euclidean_distance(Point::new(1.5, 2.5), Point::new(4.5, 6.5)), 5.0);
    }

    #[test]
    fn combine_matches_hand_arithmetic() {
        // 0.335*0.5 + 0.33*0.5 + 0.335*0.4
        let s = params().combine(0.5, 2, 0.4);
        assert!((s - 0.4665).abs() < 1e-12, "{s}");
    }

    #[test]
    fn zero_overlap_is_infinite() {
        assert_eq!(params().combine(0.1, 0, 0.1), f64::INFINITY);
    }

    #[test]
    fn pure_spatial_at_zero_distance() {
        let p = ScoreParams::new(1.0, 1.0, 10.0).unwrap();
        assert_eq!(p.combine(0.0, 3, 0.9), 0.0);
    }

    #[test]
    fn score_object_rejects_dimension_mismatch() {
        let q = Query::new(Point::new(0.0, 0.0), ["a"], vec![0.5, 0.5], 1, 1.0);
        let o = GeoObject::new("o", Point::new(1.0, 1.0), ["a"], vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(
            score_object(&q, &o, 1),
            Err(QdrError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn query_validation() {
        let mut q = Query::new(Point::new(0.0, 0.0), ["a"], vec![0.3, 0.7], 1, 1.0);
        assert!(q.validate().is_ok());
        q.weights = vec![0.3, 0.6];
        assert!(q.validate().is_err());
        q.weights = vec![-0.1, 1.1];
        assert!(q.validate().is_err());
        q.weights = vec![0.5, 0.5];
        q.d_max = 0.0;
        assert!(q.validate().is_err());
        q.d_max = 1.0;
        q.keywords.clear();
        assert!(q.validate().is_err());
    }

    #[test]
    fn object_keywords_normalized() {
        let o = GeoObject::new("x", Point::new(0.0, 0.0), ["Pizza", "steak", "pizza"], vec![0.0]).unwrap();
        assert_eq!(o.keywords, vec!["pizza", "steak"]);
        assert!(GeoObject::new("x", Point::new(0.0, 0.0), Vec::<&str>::new(), vec![0.0]).is_err());
        assert!(GeoObject::new("x", Point::new(0.0, 0.0), ["a"], vec![1.5]).is_err());
    }
}
