//! Attribute skylines (smaller is better in every dimension) and the
//! point-compression operator that keeps node skylines small.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{QdrError, Result};

/// Default cosine-similarity threshold above which two skyline points merge.
pub const DEFAULT_TAU_MERGE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SkylineSet {
    pub points: Vec<Vec<f64>>,
    /// When set, members may dominate each other; the set is only guaranteed
    /// to lower-bound the points it was built from.
    pub compressed: bool,
}

impl SkylineSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when some member is component-wise `<=` `p`.
    pub fn lower_bounds(&self, p: &[f64]) -> bool {
        self.points.iter().any(|m| m.iter().zip(p).all(|(a, b)| a <= b))
    }
}

pub fn dominates(p: &[f64], q: &[f64]) -> Result<bool> {
    if p.len() != q.len() {
        return Err(QdrError::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    Ok(dominates_unchecked(p, q))
}

#[inline]
pub(crate) fn dominates_unchecked(p: &[f64], q: &[f64]) -> bool {
    let mut strictly = false;
    for (a, b) in p.iter().zip(q) {
        if a > b {
            return false;
        }
        strictly |= a < b;
    }
    strictly
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Sort-filter skyline: after sorting by component sum (ties
/// lexicographic), a point can only be dominated by one that precedes it.
pub fn compute_skyline<P: AsRef<[f64]>>(points: &[P]) -> SkylineSet {
    let mut order: Vec<(&[f64], f64)> = points
        .iter()
        .map(|p| (p.as_ref(), p.as_ref().iter().sum::<f64>()))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| lexicographic(a.0, b.0)));

    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (p, _) in order {
        if kept.iter().any(|k| k.as_slice() == p || dominates_unchecked(k, p)) {
            continue;
        }
        kept.push(p.to_vec());
    }
    SkylineSet {
        points: kept,
        compressed: false,
    }
}

/// Cosine similarity; a zero vector counts as similar to everything.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    dot / (na * nb)
}

/// Greedily merges pairs whose cosine similarity is at least `tau_merge`
/// into their component-wise minimum, scanning in lexicographic order until
/// nothing merges. Points dominated by a merged point are then dropped.
pub fn compress_skyline(s: &SkylineSet, tau_merge: f64) -> SkylineSet {
    let mut points = s.points.clone();
    let mut merged_any = false;
    loop {
        points.sort_by(|a, b| lexicographic(a, b));
        let mut changed = false;
        let mut i = 0;
        while i < points.len() {
            let mut j = i + 1;
            while j < points.len() {
                if cosine_similarity(&points[i], &points[j]) >= tau_merge {
                    let other = points.remove(j);
                    for (a, b) in points[i].iter_mut().zip(&other) {
                        *a = a.min(*b);
                    }
                    changed = true;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !changed {
            break;
        }
        merged_any = true;
    }
    if merged_any {
        points = compute_skyline(&points).points;
    }
    SkylineSet {
        points,
        compressed: true,
    }
}

/// min over members of Σ wᵢ·pᵢ.
pub fn min_weighted_attribute(s: &SkylineSet, weights: &[f64]) -> Result<f64> {
    if s.points.is_empty() {
        return Err(QdrError::Corrupt("empty skyline set".into()));
    }
    Ok(s.points
        .iter()
        .map(|p| crate::model::weighted_sum(weights, p))
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[0.1, 0.1], &[0.2, 0.2]).unwrap());
        assert!(!dominates(&[0.1, 0.1], &[0.1, 0.1]).unwrap());
        assert!(!dominates(&[0.1, 0.9], &[0.9, 0.1]).unwrap());
        assert!(!dominates(&[0.9, 0.1], &[0.1, 0.9]).unwrap());
        assert!(dominates(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn skyline_examples() {
        let pts = vec![vec![0.2, 0.8], vec![0.8, 0.2], vec![0.5, 0.5], vec![0.6, 0.6]];
        let mut sky = compute_skyline(&pts).points;
        sky.sort_by(|a, b| lexicographic(a, b));
        assert_eq!(sky, vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.8, 0.2]]);

        assert_eq!(compute_skyline(&[vec![0.3, 0.4]]).points, vec![vec![0.3, 0.4]]);

        let chain = vec![vec![0.3, 0.3], vec![0.1, 0.1], vec![0.2, 0.2]];
        assert_eq!(compute_skyline(&chain).points, vec![vec![0.1, 0.1]]);

        let dup = vec![vec![0.4, 0.2], vec![0.4, 0.2]];
        assert_eq!(compute_skyline(&dup).len(), 1);
    }

    #[test]
    fn compression_merges_near_parallel_pair() {
        let s = SkylineSet {
            points: vec![vec![0.4, 0.41], vec![0.41, 0.4]],
            compressed: false,
        };
        // cos = (0.164 + 0.164) / (0.4^2 + 0.41^2) ≈ 0.9997
        let c = compress_skyline(&s, 0.99);
        assert_eq!(c.points, vec![vec![0.4, 0.4]]);
        assert!(c.compressed);
    }

    #[test]
    fn compression_without_merges_is_identity() {
        let s = compute_skyline(&[vec![0.1, 0.9], vec![0.9, 0.1]]);
        let c = compress_skyline(&s, 0.99);
        let mut expected = s.points.clone();
        expected.sort_by(|a, b| lexicographic(a, b));
        assert_eq!(c.points, expected);
    }

    #[test]
    fn exact_threshold_merges_only_parallel() {
        let s = SkylineSet {
            points: vec![vec![0.2, 0.4], vec![0.1, 0.2], vec![0.4, 0.1]],
            compressed: false,
        };
        let c = compress_skyline(&s, 1.0);
        for p in &s.points {
            assert!(c.lower_bounds(p));
        }
        assert!(c.len() >= 2, "non-parallel points must survive: {:?}", c.points);
    }

    #[test]
    fn zero_vector_absorbs() {
        let s = SkylineSet {
            points: vec![vec![0.0, 0.0], vec![0.3, 0.1]],
            compressed: false,
        };
        assert_eq!(compress_skyline(&s, 0.999).points, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn min_weighted_examples() {
        let zero = SkylineSet {
            points: vec![vec![0.0; 3]],
            compressed: false,
        };
        assert_eq!(min_weighted_attribute(&zero, &[0.2, 0.3, 0.5]).unwrap(), 0.0);
        let s = SkylineSet {
            points: vec![vec![0.3, 0.9], vec![0.7, 0.2]],
            compressed: false,
        };
        assert_eq!(min_weighted_attribute(&s, &[0.0, 1.0]).unwrap(), 0.2);
        assert!(min_weighted_attribute(&SkylineSet::default(), &[1.0]).is_err());
    }
}
