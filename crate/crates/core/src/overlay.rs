//! Structured overlay emission: a JSON document carrying the verified
//! patch rectangles, adjusted rectangles, matched keypoint coordinates,
//! per-patch scores, and candidate acceptance decisions of one pair
//! verification, sufficient to draw the result externally.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureSet;
use crate::geom::Patch;
use crate::scalar::Scalar;
use crate::topo::TpResult;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RectJson<T> {
    pub cx: T,
    pub cy: T,
    pub half_w: T,
    pub half_h: T,
}

impl<T: Scalar> From<&Patch<T>> for RectJson<T> {
    fn from(p: &Patch<T>) -> Self {
        Self { cx: p.center[0], cy: p.center[1], half_w: p.half_w, half_h: p.half_h }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageJson<T> {
    pub image_id: String,
    pub width: T,
    pub height: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairJson<T> {
    pub r1: RectJson<T>,
    pub r2: RectJson<T>,
    pub score: Option<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchJson<T> {
    pub idx1: usize,
    pub idx2: usize,
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateJson<T> {
    pub seed_match: usize,
    pub r1: RectJson<T>,
    pub r2: RectJson<T>,
    pub r2_adjusted: RectJson<T>,
    pub score: T,
    pub verified: bool,
    pub accepted: bool,
}

/// The overlay document for one verified pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlayDoc<T> {
    pub image1: ImageJson<T>,
    pub image2: ImageJson<T>,
    pub metric: String,
    pub score: T,
    pub seed_match: usize,
    pub pairs: Vec<PairJson<T>>,
    pub matched_keypoints: Vec<MatchJson<T>>,
    /// Every audited fovea decision, accepted or not. Populated when the
    /// verification recorded a trace.
    pub candidates: Vec<CandidateJson<T>>,
}

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("overlay write failed: {0}")]
    Write(String),
}

/// Builds the overlay document for a verification result.
pub fn build_overlay<T: Scalar>(
    result: &TpResult<T>,
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
) -> OverlayDoc<T> {
    let image = |set: &FeatureSet<T>| ImageJson {
        image_id: set.image_id().to_string(),
        width: set.width(),
        height: set.height(),
    };
    OverlayDoc {
        image1: image(p1),
        image2: image(p2),
        metric: result.metric.name().to_string(),
        score: result.score,
        seed_match: result.best.seed,
        pairs: result
            .best
            .pairs
            .iter()
            .map(|p| PairJson { r1: (&p.r1).into(), r2: (&p.r2).into(), score: p.score })
            .collect(),
        matched_keypoints: result
            .best
            .matched_keypoints
            .iter()
            .map(|m| {
                let k1 = p1.keypoint(m.idx1);
                let k2 = p2.keypoint(m.idx2);
                MatchJson { idx1: m.idx1, idx2: m.idx2, x1: k1.x, y1: k1.y, x2: k2.x, y2: k2.y }
            })
            .collect(),
        candidates: result
            .trace
            .iter()
            .map(|t| CandidateJson {
                seed_match: t.seed_match,
                r1: (&t.r1).into(),
                r2: (&t.r2).into(),
                r2_adjusted: (&t.r2_adjusted).into(),
                score: t.score,
                verified: t.verified,
                accepted: t.accepted,
            })
            .collect(),
    }
}

/// Serializes an overlay document to pretty JSON at `path`.
pub fn write_overlay<T: Scalar>(
    doc: &OverlayDoc<T>,
    path: impl AsRef<Path>,
) -> Result<(), OverlayError> {
    let json = serde_json::to_string_pretty(doc).map_err(|e| OverlayError::Write(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| OverlayError::Write(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Keypoint;
    use crate::topo::{topo_verify, TopoConfig};

    #[test]
    fn overlay_carries_pairs_decisions_and_keypoints() {
        let mut set = FeatureSet::new("img", 200.0, 200.0, 16).unwrap();
        for i in 0..16 {
            let mut desc = vec![0.0; 16];
            desc[i] = 1.0;
            set.push(
                Keypoint::new(80.0 + 8.0 * (i % 4) as f64, 80.0 + 8.0 * (i / 4) as f64, 2.0, 0.0),
                &desc,
            )
            .unwrap();
        }
        let cfg = TopoConfig { record_trace: true, ..TopoConfig::default() };
        let result = topo_verify(&set, &set, &cfg, 0.8);
        assert!(result.score > 0.0);
        let doc = build_overlay(&result, &set, &set);
        assert_eq!(doc.pairs.len(), result.best.pairs.len());
        assert!(!doc.candidates.is_empty());
        assert_eq!(doc.matched_keypoints.len(), result.best.matched_keypoints.len());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overlay.json");
        write_overlay(&doc, &path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["image1", "image2", "metric", "score", "pairs", "matched_keypoints", "candidates"]
        {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert_eq!(value["metric"], "pair_count");
        assert!(value["candidates"][0].get("r2_adjusted").is_some());
    }
}
