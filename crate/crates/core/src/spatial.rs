//! Spatial verification: one similarity-transform hypothesis per match,
//! scored by inlier counting, best hypothesis kept.

use thiserror::Error;

use crate::features::{ratio_test_match, FeatureSet, Match};
use crate::scalar::{lit, Scalar};

/// Configuration for [`spatial_verify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialConfig<T> {
    /// Inlier distance threshold in pixels.
    pub epsilon: T,
    /// Hypothesis budget; matches are consumed in ascending ratio order.
    pub max_hypotheses: usize,
    /// Zero out the orientation difference when building hypotheses.
    pub clamp_rotation: bool,
}

impl<T: Scalar> Default for SpatialConfig<T> {
    fn default() -> Self {
        Self { epsilon: lit(8.0), max_hypotheses: 512, clamp_rotation: false }
    }
}

/// A 3x3 similarity transform (row-major, last row `[0, 0, 1]`) generated
/// from a single match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineHypothesis<T> {
    pub m: [[T; 3]; 3],
    /// `idx1` of the generating match; `None` for the fallback identity.
    pub source_match: Option<usize>,
}

impl<T: Scalar> AffineHypothesis<T> {
    pub fn identity() -> Self {
        let (o, l) = (T::zero(), T::one());
        Self { m: [[l, o, o], [o, l, o], [o, o, l]], source_match: None }
    }

    /// Maps an image-1 location into image 2.
    pub fn apply(&self, p: [T; 2]) -> [T; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.m[0][2],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.m[1][2],
        ]
    }

    /// Upper-left 2x2 determinant magnitude above 1e-12.
    pub fn is_invertible(&self) -> bool {
        let det = self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0];
        det.abs() > lit(1e-12)
    }
}

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("invalid keypoint for hypothesis construction: {0}")]
    InvalidKeypoint(String),
}

/// Verification outcome: the winning hypothesis and its inliers.
#[derive(Debug, Clone)]
pub struct SpResult<T> {
    pub best: AffineHypothesis<T>,
    pub inlier_count: usize,
    pub inlier_matches: Vec<Match<T>>,
}

/// Builds the similarity transform taking keypoint 1 onto keypoint 2 using
/// the position offset, the scale ratio, and the orientation difference
/// (dropped when `clamp_rotation` is set).
pub fn hypothesis_from_match<T: Scalar>(
    m: &Match<T>,
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    clamp_rotation: bool,
) -> Result<AffineHypothesis<T>, SpatialError> {
    let k1 = p1.keypoint(m.idx1);
    let k2 = p2.keypoint(m.idx2);
    if !(k1.scale > T::zero()) || !(k2.scale > T::zero()) {
        return Err(SpatialError::InvalidKeypoint("non-positive scale".into()));
    }
    let s = k2.scale / k1.scale;
    let theta = if clamp_rotation { T::zero() } else { k2.orientation - k1.orientation };
    let (sin, cos) = theta.sin_cos();
    let (a, b) = (s * cos, s * sin);
    // t = c2 - s R c1
    let tx = k2.x - (a * k1.x - b * k1.y);
    let ty = k2.y - (b * k1.x + a * k1.y);
    let (o, l) = (T::zero(), T::one());
    Ok(AffineHypothesis {
        m: [[a, -b, tx], [b, a, ty], [o, o, l]],
        source_match: Some(m.idx1),
    })
}

/// Counts matches whose image-1 location maps within `epsilon` of its
/// image-2 partner (strict inequality), returning the inlier sublist.
pub fn count_inliers<T: Scalar>(
    h: &AffineHypothesis<T>,
    matches: &[Match<T>],
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    epsilon: T,
) -> (usize, Vec<Match<T>>) {
    let mut inliers = Vec::new();
    for m in matches {
        let k1 = p1.keypoint(m.idx1);
        let k2 = p2.keypoint(m.idx2);
        let mapped = h.apply([k1.x, k1.y]);
        let dx = mapped[0] - k2.x;
        let dy = mapped[1] - k2.y;
        if (dx * dx + dy * dy).sqrt() < epsilon {
            inliers.push(*m);
        }
    }
    (inliers.len(), inliers)
}

/// Spatial verification of a pair: ratio-test matching, one hypothesis per
/// match (budgeted in ascending ratio order), argmax by inlier count with
/// ties broken by the lowest generating-match index. With no usable matches
/// the result is the identity transform with zero inliers.
pub fn spatial_verify<T: Scalar>(
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &SpatialConfig<T>,
    ratio_threshold: T,
) -> SpResult<T> {
    let matches = if p1.is_empty() || p2.len() < 2 {
        Vec::new()
    } else {
        ratio_test_match(p1, p2, ratio_threshold).expect("search set size checked")
    };
    spatial_verify_from_matches(&matches, p1, p2, cfg)
}

/// [`spatial_verify`] over a precomputed match list.
pub fn spatial_verify_from_matches<T: Scalar>(
    matches: &[Match<T>],
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &SpatialConfig<T>,
) -> SpResult<T> {
    let mut ordered: Vec<&Match<T>> = matches.iter().collect();
    ordered.sort_by(|a, b| a.ratio.partial_cmp(&b.ratio).unwrap_or(std::cmp::Ordering::Equal));
    ordered.truncate(cfg.max_hypotheses);

    let mut best: Option<SpResult<T>> = None;
    for m in ordered {
        let Ok(h) = hypothesis_from_match(m, p1, p2, cfg.clamp_rotation) else {
            continue;
        };
        let (count, inliers) = count_inliers(&h, matches, p1, p2, cfg.epsilon);
        let better = match &best {
            None => true,
            Some(b) => {
                count > b.inlier_count
                    || (count == b.inlier_count && h.source_match < b.best.source_match)
            }
        };
        if better {
            best = Some(SpResult { best: h, inlier_count: count, inlier_matches: inliers });
        }
    }
    best.unwrap_or_else(|| SpResult {
        best: AffineHypothesis::identity(),
        inlier_count: 0,
        inlier_matches: Vec::new(),
    })
}
