//! Topological verification: grow regions of locally verified,
//! topologically consistent patch pairs and score pairs by region size.
//!
//! Each ratio-test match seeds a pure translation-plus-scale hypothesis
//! (a patch pair). A saccade step proposes candidate neighbors around the
//! verified patches; a fovea step verifies one candidate pair by restricted
//! matching and a sub-patch agreement score. A grown region satisfies three
//! conditions: every pair is fovea-verified, patch overlaps agree across the
//! two images, and the image-1 patches form one connected component.

use std::collections::VecDeque;

use crate::features::{ratio_test_match, restricted_match, FeatureSet, Match};
use crate::geom::{union_area, Patch};
use crate::scalar::{count, lit, Scalar};

/// Half-extent floor in pixels for adjusted patches, guarding against
/// degenerate bounding boxes of collinear or coincident matched points.
const MIN_HALF_EXTENT_PX: f64 = 0.5;

/// Shrink applied to stored adjusted patches. Keeps patches whose image-1
/// counterparts only touch from overlapping in image 2, so the overlap
/// biconditional is not decided by boundary jitter. The saccade divides
/// this factor back out of the stored extent ratio when scaling offsets
/// and sizing candidate search patches.
pub const ADJUST_SHRINK: f64 = 0.9;

/// A corresponding patch pair. `score` is present only after the pair has
/// been fovea-verified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchPair<T> {
    pub r1: Patch<T>,
    pub r2: Patch<T>,
    pub score: Option<T>,
}

/// Growth bookkeeping: the verified pairs and the candidate frontier.
/// Candidates intersect exactly one verified patch at the time they are
/// proposed; growth never re-proposes a center it has already seen.
#[derive(Debug, Clone, Default)]
pub struct GrowthState<T> {
    pub verified: Vec<PatchPair<T>>,
    pub frontier: VecDeque<PatchPair<T>>,
}

/// A verified region: families of corresponding patches plus the keypoint
/// matches recorded inside them. `seed` is the `idx1` of the generating
/// match.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeomorphismRegion<T> {
    pub pairs: Vec<PatchPair<T>>,
    pub matched_keypoints: Vec<Match<T>>,
    pub seed: usize,
}

impl<T: Scalar> HomeomorphismRegion<T> {
    pub fn empty(seed: usize) -> Self {
        Self { pairs: Vec::new(), matched_keypoints: Vec::new(), seed }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Region size metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrMetric {
    /// Number of verified patch pairs (default).
    PairCount,
    /// Total matched keypoints recorded in the region.
    MatchedKeypoints,
    /// Union area of the image-1 patches over the image-1 area.
    AreaFraction,
}

impl HrMetric {
    pub fn name(self) -> &'static str {
        match self {
            HrMetric::PairCount => "pair_count",
            HrMetric::MatchedKeypoints => "matched_keypoints",
            HrMetric::AreaFraction => "area_fraction",
        }
    }
}

/// Configuration for region growth and scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoConfig<T> {
    /// Patch side as a fraction of the smaller image-1 dimension.
    pub patch_fraction: T,
    /// Fovea acceptance threshold in `[0, 1]`.
    pub alpha: T,
    /// Sub-patch grid order for the fovea score.
    pub grid: usize,
    /// Saccade stride as a fraction of the patch side, in `(0, 1)`.
    pub overlap_step: T,
    /// Hypothesis budget; matches are consumed in ascending ratio order.
    pub max_hypotheses: usize,
    /// Minimum restricted matches for a patch to verify or adjust.
    pub min_keypoints_per_patch: usize,
    /// Skip seeds whose image-1 keypoint already lies inside a previously
    /// grown region of at least four pairs.
    pub skip_covered_seeds: bool,
    /// Keep every grown region in the result, not only the best.
    pub collect_all_regions: bool,
    /// Record a per-candidate decision trace in the result.
    pub record_trace: bool,
    /// Region size metric.
    pub metric: HrMetric,
}

impl<T: Scalar> Default for TopoConfig<T> {
    fn default() -> Self {
        Self {
            patch_fraction: lit(0.125),
            alpha: lit(0.2),
            grid: 3,
            overlap_step: lit(0.5),
            max_hypotheses: 128,
            min_keypoints_per_patch: 4,
            skip_covered_seeds: true,
            collect_all_regions: false,
            record_trace: false,
            metric: HrMetric::PairCount,
        }
    }
}

/// A seed hypothesis: the patch pair around one match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedHypothesis<T> {
    pub pair: PatchPair<T>,
    /// `idx1` of the generating match.
    pub match_index: usize,
    pub ratio: T,
}

/// Pair verification outcome produced by a [`PatchVerifier`].
#[derive(Debug, Clone)]
pub struct FoveaOutcome<T> {
    pub r2_adjusted: Patch<T>,
    pub score: T,
    pub verified: bool,
    pub matches: Vec<Match<T>>,
}

/// A fovea oracle: verifies one candidate patch pair. Region growth is
/// generic over this so tests can substitute memoized decisions.
pub trait PatchVerifier<T: Scalar> {
    fn verify(&mut self, r1: &Patch<T>, r2: &Patch<T>) -> FoveaOutcome<T>;
}

/// The production verifier: descriptor-based [`fovea`].
pub struct DescriptorFovea<'a, T> {
    pub p1: &'a FeatureSet<T>,
    pub p2: &'a FeatureSet<T>,
    pub cfg: &'a TopoConfig<T>,
}

impl<T: Scalar> PatchVerifier<T> for DescriptorFovea<'_, T> {
    fn verify(&mut self, r1: &Patch<T>, r2: &Patch<T>) -> FoveaOutcome<T> {
        fovea(r1, r2, self.p1, self.p2, self.cfg)
    }
}

/// One audited fovea decision during growth.
#[derive(Debug, Clone)]
pub struct CandidateTrace<T> {
    /// `idx1` of the region's seed match.
    pub seed_match: usize,
    pub r1: Patch<T>,
    pub r2: Patch<T>,
    pub r2_adjusted: Patch<T>,
    pub score: T,
    pub verified: bool,
    /// Verified and consistent with every region member.
    pub accepted: bool,
}

/// Verification outcome for an image pair.
#[derive(Debug, Clone)]
pub struct TpResult<T> {
    pub best: HomeomorphismRegion<T>,
    pub score: T,
    pub all_regions: Option<Vec<HomeomorphismRegion<T>>>,
    pub metric: HrMetric,
    pub trace: Vec<CandidateTrace<T>>,
}

/// Builds one seed patch pair per match, budgeted in ascending ratio order.
///
/// The image-1 patch is a square of side `patch_fraction * min(w1, h1)`
/// centered on keypoint 1; the image-2 patch sits on keypoint 2 with the
/// image-1 extent scaled by the keypoint scale ratio. The hypothesis is pure
/// translation plus scale.
pub fn build_hypotheses<T: Scalar>(
    matches: &[Match<T>],
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &TopoConfig<T>,
) -> Vec<SeedHypothesis<T>> {
    let min_dim = p1.width().min(p1.height());
    if !(min_dim > T::zero()) {
        return Vec::new();
    }
    let half1 = cfg.patch_fraction * min_dim * lit(0.5);
    let mut ordered: Vec<&Match<T>> = matches.iter().collect();
    ordered.sort_by(|a, b| a.ratio.partial_cmp(&b.ratio).unwrap_or(std::cmp::Ordering::Equal));
    ordered.truncate(cfg.max_hypotheses);

    let mut seeds = Vec::with_capacity(ordered.len());
    for m in ordered {
        let k1 = p1.keypoint(m.idx1);
        let k2 = p2.keypoint(m.idx2);
        if !(k1.scale > T::zero() && k2.scale > T::zero()) {
            continue;
        }
        let ratio = k2.scale / k1.scale;
        let r1 = Patch::square([k1.x, k1.y], half1);
        let r2 = Patch::square([k2.x, k2.y], half1 * ratio);
        seeds.push(SeedHypothesis {
            pair: PatchPair { r1, r2, score: None },
            match_index: m.idx1,
            ratio: m.ratio,
        });
    }
    seeds
}

const NEIGHBOR_OFFSETS: [(i8, i8); 8] =
    [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Proposes candidate pairs around the verified patches.
///
/// Around each verified pair up to eight neighbors are placed at offsets of
/// `overlap_step` patch sides in image 1, with the matching offset scaled by
/// that pair's image-1 to image-2 size ratio in image 2 (the ratio is read
/// from the stored extents, which [`fovea`] records shrunk by
/// [`ADJUST_SHRINK`]; the shrink is divided back out here). A candidate is
/// dropped when its image-1 patch intersects zero or more than one verified
/// patch, duplicates a verified, enqueued, or already-emitted center within
/// half a stride, or does not lie fully inside image 1. Candidates whose
/// image-2 patch has no area inside image 2 are dropped early; the fovea
/// would reject them regardless, having nothing to match against.
pub fn saccade<T: Scalar>(
    state: &GrowthState<T>,
    cfg: &TopoConfig<T>,
    bounds1: (T, T),
    bounds2: (T, T),
) -> Vec<PatchPair<T>> {
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    let shrink = lit::<T>(ADJUST_SHRINK);
    let mut out: Vec<PatchPair<T>> = Vec::new();
    for parent in &state.verified {
        let sx = cfg.overlap_step * two * parent.r1.half_w;
        let sy = cfg.overlap_step * two * parent.r1.half_h;
        let rx = parent.r2.half_w / parent.r1.half_w / shrink;
        let ry = parent.r2.half_h / parent.r1.half_h / shrink;
        for (ox, oy) in NEIGHBOR_OFFSETS {
            let (fx, fy) = (lit::<T>(ox as f64), lit::<T>(oy as f64));
            let c1 = [parent.r1.center[0] + fx * sx, parent.r1.center[1] + fy * sy];
            let r1 = Patch::new(c1, parent.r1.half_w, parent.r1.half_h);
            if !r1.inside_image(bounds1.0, bounds1.1) {
                continue;
            }
            let c2 = [
                parent.r2.center[0] + fx * sx * rx,
                parent.r2.center[1] + fy * sy * ry,
            ];
            let r2 = Patch::new(c2, parent.r2.half_w / shrink, parent.r2.half_h / shrink);
            if !r2.intersects_image(bounds2.0, bounds2.1) {
                continue;
            }
            let overlapping = state.verified.iter().filter(|v| v.r1.overlaps(&r1)).count();
            if overlapping != 1 {
                continue;
            }
            let near = |c: &[T; 2]| {
                (c[0] - c1[0]).abs() < sx * half && (c[1] - c1[1]).abs() < sy * half
            };
            let duplicate = state.verified.iter().map(|v| &v.r1.center).any(near)
                || state.frontier.iter().map(|v| &v.r1.center).any(near)
                || out.iter().map(|v| &v.r1.center).any(near);
            if duplicate {
                continue;
            }
            out.push(PatchPair { r1, r2, score: None });
        }
    }
    out
}

/// Shrinks `r2` to the bounding rectangle of the matched locations in
/// image 2, expanded by a 5% margin. With fewer than `min_matches` matches
/// the patch is returned unchanged.
pub fn adjust_patch<T: Scalar>(
    r2: &Patch<T>,
    matches: &[Match<T>],
    p2: &FeatureSet<T>,
    min_matches: usize,
) -> Patch<T> {
    if matches.len() < min_matches {
        return *r2;
    }
    Patch::from_points(
        matches.iter().map(|m| {
            let kp = p2.keypoint(m.idx2);
            [kp.x, kp.y]
        }),
        lit(1.05),
        lit(MIN_HALF_EXTENT_PX),
    )
    .unwrap_or(*r2)
}

/// Verifies one candidate patch pair.
///
/// Matching is restricted to the pair. When enough matches exist, both
/// sides are renormalized to the bounding boxes of their matched points, so
/// the sub-patch comparison is invariant to the offset and scale mismatch
/// left by the saccade placement. Both boxes are partitioned into
/// `grid` x `grid` congruent cells; each occupied image-1 cell scores the
/// fraction of its matched keypoints whose partner lands in the
/// corresponding image-2 cell, and the pair's score is the mean over
/// occupied cells. The pair verifies when the score reaches `alpha` and the
/// match count reaches `min_keypoints_per_patch`.
///
/// The returned adjusted patch sits on the partner cloud's center with the
/// image-1 extent scaled by the per-axis cloud-to-cloud ratio (independent
/// of how densely the cloud fills the patch, so patch extents stay stable
/// as a region grows), then shrunk by [`ADJUST_SHRINK`].
pub fn fovea<T: Scalar>(
    r1: &Patch<T>,
    r2: &Patch<T>,
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &TopoConfig<T>,
) -> FoveaOutcome<T> {
    let m0 = restricted_match(p1, r1, p2, r2);
    if m0.is_empty() {
        return FoveaOutcome { r2_adjusted: *r2, score: T::zero(), verified: false, matches: m0 };
    }
    let adjusted = m0.len() >= cfg.min_keypoints_per_patch;
    let bbox2 = adjust_patch(r2, &m0, p2, cfg.min_keypoints_per_patch);
    let bbox1 = if adjusted {
        Patch::from_points(
            m0.iter().map(|m| {
                let kp = p1.keypoint(m.idx1);
                [kp.x, kp.y]
            }),
            lit(1.05),
            lit(MIN_HALF_EXTENT_PX),
        )
        .unwrap_or(*r1)
    } else {
        *r1
    };

    let cells = cfg.grid * cfg.grid;
    let mut total = vec![0usize; cells];
    let mut hits = vec![0usize; cells];
    for m in &m0 {
        let k1 = p1.keypoint(m.idx1);
        let k2 = p2.keypoint(m.idx2);
        let c1 = bbox1.cell_of(k1.x, k1.y, cfg.grid);
        total[c1] += 1;
        if bbox2.contains(k2.x, k2.y) && bbox2.cell_of(k2.x, k2.y, cfg.grid) == c1 {
            hits[c1] += 1;
        }
    }
    let mut acc = T::zero();
    let mut occupied = 0usize;
    for k in 0..cells {
        if total[k] > 0 {
            acc = acc + count::<T>(hits[k]) / count::<T>(total[k]);
            occupied += 1;
        }
    }
    let score = acc / count::<T>(occupied);
    let verified = score >= cfg.alpha && m0.len() >= cfg.min_keypoints_per_patch;

    let r2_adjusted = if adjusted {
        let shrink = lit::<T>(ADJUST_SHRINK);
        Patch::new(
            bbox2.center,
            (shrink * r1.half_w * (bbox2.half_w / bbox1.half_w)).max(lit(MIN_HALF_EXTENT_PX)),
            (shrink * r1.half_h * (bbox2.half_h / bbox1.half_h)).max(lit(MIN_HALF_EXTENT_PX)),
        )
    } else {
        *r2
    };

    // Record the matches of the stored geometry: re-run against the
    // adjusted patch so recounting the region reproduces them exactly.
    let matches = if verified && r2_adjusted != *r2 {
        restricted_match(p1, r1, p2, &r2_adjusted)
    } else {
        m0
    };
    FoveaOutcome { r2_adjusted, score, verified, matches }
}

/// Grows a region from a seed with the descriptor fovea.
pub fn grow_region<T: Scalar>(
    seed: &SeedHypothesis<T>,
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &TopoConfig<T>,
) -> HomeomorphismRegion<T> {
    let mut verifier = DescriptorFovea { p1, p2, cfg };
    grow_region_with(
        seed,
        &mut verifier,
        cfg,
        (p1.width(), p1.height()),
        (p2.width(), p2.height()),
    )
    .0
}

/// Grows a region from a seed with an arbitrary verifier, returning the
/// region and the per-candidate decision trace.
///
/// The seed is verified first; rejection yields an empty region. Otherwise
/// the frontier is consumed first-in-first-out: each popped candidate is
/// verified, checked for overlap consistency against every current member
/// (its image-1 patch must overlap exactly the members whose image-2
/// patches its adjusted image-2 patch overlaps), and on acceptance stored
/// with its adjusted image-2 patch while the saccade extends the frontier.
/// Every candidate center is visited at most once, which bounds growth by
/// the candidate lattice and guarantees termination.
pub fn grow_region_with<T: Scalar, V: PatchVerifier<T>>(
    seed: &SeedHypothesis<T>,
    verifier: &mut V,
    cfg: &TopoConfig<T>,
    bounds1: (T, T),
    bounds2: (T, T),
) -> (HomeomorphismRegion<T>, Vec<CandidateTrace<T>>) {
    let mut trace = Vec::new();
    let outcome = verifier.verify(&seed.pair.r1, &seed.pair.r2);
    trace.push(CandidateTrace {
        seed_match: seed.match_index,
        r1: seed.pair.r1,
        r2: seed.pair.r2,
        r2_adjusted: outcome.r2_adjusted,
        score: outcome.score,
        verified: outcome.verified,
        accepted: outcome.verified,
    });
    if !outcome.verified {
        return (HomeomorphismRegion::empty(seed.match_index), trace);
    }

    let half = lit::<T>(0.5);
    let stride_x = cfg.overlap_step * lit::<T>(2.0) * seed.pair.r1.half_w;
    let stride_y = cfg.overlap_step * lit::<T>(2.0) * seed.pair.r1.half_h;
    let mut matched = outcome.matches;
    let mut state = GrowthState {
        verified: vec![PatchPair {
            r1: seed.pair.r1,
            r2: outcome.r2_adjusted,
            score: Some(outcome.score),
        }],
        frontier: VecDeque::new(),
    };
    let mut visited: Vec<[T; 2]> = vec![seed.pair.r1.center];
    let enqueue = |state: &mut GrowthState<T>, visited: &mut Vec<[T; 2]>| {
        for cand in saccade(state, cfg, bounds1, bounds2) {
            let seen = visited.iter().any(|c| {
                (c[0] - cand.r1.center[0]).abs() < stride_x * half
                    && (c[1] - cand.r1.center[1]).abs() < stride_y * half
            });
            if !seen {
                visited.push(cand.r1.center);
                state.frontier.push_back(cand);
            }
        }
    };
    enqueue(&mut state, &mut visited);

    while let Some(cand) = state.frontier.pop_front() {
        let outcome = verifier.verify(&cand.r1, &cand.r2);
        let mut accepted = outcome.verified;
        if accepted {
            // Overlap biconditional against every member, image-1 patch
            // versus the adjusted image-2 patch.
            for member in &state.verified {
                if cand.r1.overlaps(&member.r1) != outcome.r2_adjusted.overlaps(&member.r2) {
                    accepted = false;
                    break;
                }
            }
        }
        trace.push(CandidateTrace {
            seed_match: seed.match_index,
            r1: cand.r1,
            r2: cand.r2,
            r2_adjusted: outcome.r2_adjusted,
            score: outcome.score,
            verified: outcome.verified,
            accepted,
        });
        if accepted {
            state.verified.push(PatchPair {
                r1: cand.r1,
                r2: outcome.r2_adjusted,
                score: Some(outcome.score),
            });
            matched.extend(outcome.matches);
            enqueue(&mut state, &mut visited);
        }
    }

    (
        HomeomorphismRegion {
            pairs: state.verified,
            matched_keypoints: matched,
            seed: seed.match_index,
        },
        trace,
    )
}

/// Region size under the chosen metric. `image_extent` is the image-1
/// extent, used by the area metric.
pub fn hr_score<T: Scalar>(
    region: &HomeomorphismRegion<T>,
    metric: HrMetric,
    image_extent: (T, T),
) -> T {
    match metric {
        HrMetric::PairCount => count(region.pairs.len()),
        HrMetric::MatchedKeypoints => count(region.matched_keypoints.len()),
        HrMetric::AreaFraction => {
            let image_area = image_extent.0 * image_extent.1;
            if !(image_area > T::zero()) {
                return T::zero();
            }
            let patches: Vec<Patch<T>> = region.pairs.iter().map(|p| p.r1).collect();
            union_area(&patches) / image_area
        }
    }
}

/// A violated region condition, with the offending pair indices.
#[derive(Debug, Clone, PartialEq)]
pub enum HrViolation<T> {
    /// A pair is unverified or scored below `alpha`.
    LocalConsistency { pair: usize, score: Option<T> },
    /// Two pairs overlap in one image but not the other.
    TopologicalConsistency { pair_a: usize, pair_b: usize },
    /// A pair's image-1 patch overlaps no other pair.
    Connectivity { pair: usize },
}

/// Exhaustively checks the three region conditions: every pair verified at
/// `alpha` or above, the overlap biconditional over all pairs of pairs, and
/// connectivity of the image-1 overlap graph.
pub fn check_hr_validity<T: Scalar>(
    region: &HomeomorphismRegion<T>,
    alpha: T,
) -> Result<(), HrViolation<T>> {
    for (i, pair) in region.pairs.iter().enumerate() {
        match pair.score {
            Some(s) if s >= alpha => {}
            other => return Err(HrViolation::LocalConsistency { pair: i, score: other }),
        }
    }
    let n = region.pairs.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let o1 = region.pairs[i].r1.overlaps(&region.pairs[j].r1);
            let o2 = region.pairs[i].r2.overlaps(&region.pairs[j].r2);
            if o1 != o2 {
                return Err(HrViolation::TopologicalConsistency { pair_a: i, pair_b: j });
            }
        }
    }
    if n > 1 {
        let mut reached = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !reached[j] && region.pairs[i].r1.overlaps(&region.pairs[j].r1) {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(first) = reached.iter().position(|r| !r) {
            return Err(HrViolation::Connectivity { pair: first });
        }
    }
    Ok(())
}

/// Full pair verification: ratio-test matching, seed construction, region
/// growth per seed, argmax by region score with ties broken by the lowest
/// seed match index.
///
/// When `skip_covered_seeds` is set, seeds whose image-1 keypoint already
/// lies inside a previously grown region of at least four pairs are skipped.
pub fn topo_verify<T: Scalar>(
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &TopoConfig<T>,
    ratio_threshold: T,
) -> TpResult<T> {
    let matches = if p1.is_empty() || p2.len() < 2 {
        Vec::new()
    } else {
        ratio_test_match(p1, p2, ratio_threshold).expect("search set size checked")
    };
    topo_verify_from_matches(&matches, p1, p2, cfg)
}

/// [`topo_verify`] over a precomputed match list.
pub fn topo_verify_from_matches<T: Scalar>(
    matches: &[Match<T>],
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    cfg: &TopoConfig<T>,
) -> TpResult<T> {
    let seeds = build_hypotheses(matches, p1, p2, cfg);
    let bounds1 = (p1.width(), p1.height());
    let bounds2 = (p2.width(), p2.height());
    let extent = bounds1;

    let mut regions: Vec<HomeomorphismRegion<T>> = Vec::new();
    let mut trace = Vec::new();
    for seed in &seeds {
        if cfg.skip_covered_seeds {
            let covered = regions.iter().any(|r| {
                r.pairs.len() >= 4
                    && r.pairs.iter().any(|pp| {
                        pp.r1.contains(seed.pair.r1.center[0], seed.pair.r1.center[1])
                    })
            });
            if covered {
                continue;
            }
        }
        let mut verifier = DescriptorFovea { p1, p2, cfg };
        let (region, region_trace) =
            grow_region_with(seed, &mut verifier, cfg, bounds1, bounds2);
        if cfg.record_trace {
            trace.extend(region_trace);
        }
        regions.push(region);
    }

    let mut best_index: Option<usize> = None;
    let mut best_score = T::zero();
    for (i, region) in regions.iter().enumerate() {
        let score = hr_score(region, cfg.metric, extent);
        let better = match best_index {
            None => true,
            Some(b) => {
                score > best_score || (score == best_score && region.seed < regions[b].seed)
            }
        };
        if better {
            best_index = Some(i);
            best_score = score;
        }
    }

    let best = match best_index {
        Some(i) => regions[i].clone(),
        None => HomeomorphismRegion::empty(0),
    };
    let score = hr_score(&best, cfg.metric, extent);
    TpResult {
        best,
        score,
        all_regions: if cfg.collect_all_regions { Some(regions) } else { None },
        metric: cfg.metric,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Keypoint;

    fn grid_set(id: &str, positions: &[[f64; 2]], size: f64) -> FeatureSet<f64> {
        let dim = positions.len().max(2);
        let mut set = FeatureSet::new(id, size, size, dim).unwrap();
        for (i, p) in positions.iter().enumerate() {
            let mut desc = vec![0.0; dim];
            desc[i] = 1.0;
            set.push(Keypoint::new(p[0], p[1], 2.0, 0.0), &desc).unwrap();
        }
        set
    }

    fn pair(c1: [f64; 2], c2: [f64; 2], half: f64, score: Option<f64>) -> PatchPair<f64> {
        PatchPair { r1: Patch::square(c1, half), r2: Patch::square(c2, half), score }
    }

    #[test]
    fn build_hypotheses_orders_by_ratio_and_scales_r2() {
        let p1 = grid_set("a", &[[100.0, 100.0], [200.0, 200.0]], 400.0);
        let mut p2 = FeatureSet::new("b", 400.0, 400.0, 2).unwrap();
        p2.push(Keypoint::new(100.0, 100.0, 4.0, 0.0), &[1.0, 0.0]).unwrap();
        p2.push(Keypoint::new(200.0, 200.0, 2.0, 0.0), &[0.0, 1.0]).unwrap();
        let matches = vec![
            Match { idx1: 0, idx2: 0, distance: 0.1, ratio: 0.7 },
            Match { idx1: 1, idx2: 1, distance: 0.1, ratio: 0.3 },
        ];
        let cfg = TopoConfig::default();
        let seeds = build_hypotheses(&matches, &p1, &p2, &cfg);
        assert_eq!(seeds.len(), 2);
        assert_eq!(seeds[0].match_index, 1); // lower ratio first
        // patch side = 400 / 8 = 50, half = 25; scale ratio 2 doubles r2
        assert_eq!(seeds[1].pair.r1.half_w, 25.0);
        assert_eq!(seeds[1].pair.r2.half_w, 50.0);
        assert_eq!(seeds[1].pair.r1.center, [100.0, 100.0]);

        let capped = build_hypotheses(
            &matches,
            &p1,
            &p2,
            &TopoConfig { max_hypotheses: 1, ..cfg },
        );
        assert_eq!(capped.len(), 1);
        assert_eq!(capped[0].match_index, 1);
    }

    #[test]
    fn saccade_proposes_eight_neighbors_in_the_open() {
        let state = GrowthState {
            verified: vec![pair([500.0, 500.0], [500.0, 500.0], 32.0, Some(1.0))],
            frontier: VecDeque::new(),
        };
        let cfg = TopoConfig::default();
        let cands = saccade(&state, &cfg, (1000.0, 1000.0), (1000.0, 1000.0));
        assert_eq!(cands.len(), 8);
        for c in &cands {
            assert_eq!(c.r1.half_w, 32.0);
            assert!(state.verified[0].r1.overlaps(&c.r1));
        }
    }

    #[test]
    fn saccade_in_a_corner_keeps_three() {
        // Patch flush against the image corner: half 32, center (32, 32).
        let state = GrowthState {
            verified: vec![pair([32.0, 32.0], [32.0, 32.0], 32.0, Some(1.0))],
            frontier: VecDeque::new(),
        };
        let cfg = TopoConfig::default();
        let cands = saccade(&state, &cfg, (1000.0, 1000.0), (1000.0, 1000.0));
        assert_eq!(cands.len(), 3);
        let mut centers: Vec<[f64; 2]> = cands.iter().map(|c| c.r1.center).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(centers, vec![[32.0, 64.0], [64.0, 32.0], [64.0, 64.0]]);
    }

    #[test]
    fn saccade_rejects_candidates_between_two_verified() {
        // Two adjacent verified pairs one stride apart on the x axis.
        let state = GrowthState {
            verified: vec![
                pair([500.0, 500.0], [500.0, 500.0], 32.0, Some(1.0)),
                pair([532.0, 500.0], [532.0, 500.0], 32.0, Some(1.0)),
            ],
            frontier: VecDeque::new(),
        };
        let cfg = TopoConfig::default();
        let cands = saccade(&state, &cfg, (1000.0, 1000.0), (1000.0, 1000.0));
        // Hand enumeration: cells above/below the adjacent pair overlap both
        // verified patches and are rejected; three survive on each free side.
        assert_eq!(cands.len(), 6);
        for c in &cands {
            let n = state.verified.iter().filter(|v| v.r1.overlaps(&c.r1)).count();
            assert_eq!(n, 1);
            let x = c.r1.center[0];
            assert!(x <= 468.0 + 1e-9 || x >= 564.0 - 1e-9, "in-between candidate {x} kept");
        }
    }

    #[test]
    fn adjust_patch_shrinks_to_cluster_or_falls_back() {
        let positions: Vec<[f64; 2]> = vec![[10.0, 10.0], [14.0, 12.0], [12.0, 18.0], [11.0, 15.0]];
        let p2 = grid_set("b", &positions, 100.0);
        let r2 = Patch::square([20.0, 20.0], 18.0);
        let matches: Vec<Match<f64>> = (0..4)
            .map(|i| Match { idx1: i, idx2: i, distance: 0.0, ratio: 0.0 })
            .collect();
        let adjusted = adjust_patch(&r2, &matches, &p2, 4);
        assert!(adjusted.half_w < r2.half_w && adjusted.half_h < r2.half_h);
        assert!((adjusted.center[0] - 12.0).abs() < 1e-9);
        for p in &positions {
            assert!(adjusted.contains(p[0], p[1]));
        }

        // Below the match floor the patch is unchanged.
        let unchanged = adjust_patch(&r2, &matches[..2], &p2, 4);
        assert_eq!(unchanged, r2);
        let empty = adjust_patch(&r2, &[], &p2, 0);
        assert_eq!(empty, r2);
    }

    #[test]
    fn fovea_identity_scores_one() {
        let positions: Vec<[f64; 2]> = (0..9)
            .map(|i| [30.0 + 15.0 * (i % 3) as f64, 30.0 + 15.0 * (i / 3) as f64])
            .collect();
        let set = grid_set("a", &positions, 100.0);
        let r = Patch::square([45.0, 45.0], 30.0);
        let out = fovea(&r, &r, &set, &set, &TopoConfig::default());
        assert_eq!(out.score, 1.0);
        assert!(out.verified);
        assert_eq!(out.matches.len(), 9);
    }

    #[test]
    fn fovea_empty_patch_scores_zero() {
        let set = grid_set("a", &[[90.0, 90.0], [95.0, 95.0]], 100.0);
        let r = Patch::square([20.0, 20.0], 10.0);
        let out = fovea(&r, &r, &set, &set, &TopoConfig::default());
        assert_eq!(out.score, 0.0);
        assert!(!out.verified);
        assert!(out.matches.is_empty());
    }

    // Hand-enumerated third-of-nine fixture: three occupied diagonal cells,
    // three points each, exactly one partner per cell lands in the
    // corresponding cell of the adjusted grid.
    #[test]
    fn fovea_one_third_fixture() {
        let q: Vec<[f64; 2]> = vec![
            [25.0, 25.0], [30.0, 30.0], [35.0, 25.0], // cell (0,0)
            [45.0, 45.0], [50.0, 50.0], [55.0, 45.0], // cell (1,1)
            [65.0, 65.0], [70.0, 70.0], [75.0, 65.0], // cell (2,2)
        ];
        let partners: Vec<[f64; 2]> = vec![
            [25.0, 25.0], [55.0, 25.0], [75.0, 25.0], // one hit, two strays
            [50.0, 50.0], [25.0, 50.0], [75.0, 50.0],
            [75.0, 75.0], [25.0, 75.0], [50.0, 75.0],
        ];
        // Independent enumeration of the expected score: both grids cover
        // the bounding box [25, 75]^2 expanded by 5% -> [23.75, 76.25]^2.
        let cell = |x: f64, y: f64| -> (usize, usize) {
            let lo = 23.75;
            let w = 52.5 / 3.0;
            ((((x - lo) / w).floor() as usize).min(2), (((y - lo) / w).floor() as usize).min(2))
        };
        let mut expected_hits = 0;
        for (a, b) in q.iter().zip(partners.iter()) {
            if cell(a[0], a[1]) == cell(b[0], b[1]) {
                expected_hits += 1;
            }
        }
        assert_eq!(expected_hits, 3);

        let p1 = grid_set("q", &q, 100.0);
        let p2 = grid_set("c", &partners, 100.0);
        let r1 = Patch::square([50.0, 50.0], 30.0);
        let r2 = Patch::square([50.0, 50.0], 30.0);
        let out = fovea(&r1, &r2, &p1, &p2, &TopoConfig::default());
        assert!((out.score - 1.0 / 3.0).abs() < 1e-12, "score {}", out.score);
        assert!(out.verified);
    }

    #[test]
    fn rejected_seed_gives_empty_region() {
        struct RejectAll;
        impl PatchVerifier<f64> for RejectAll {
            fn verify(&mut self, _r1: &Patch<f64>, r2: &Patch<f64>) -> FoveaOutcome<f64> {
                FoveaOutcome { r2_adjusted: *r2, score: 0.0, verified: false, matches: vec![] }
            }
        }
        let seed = SeedHypothesis {
            pair: pair([50.0, 50.0], [50.0, 50.0], 10.0, None),
            match_index: 3,
            ratio: 0.1,
        };
        let (region, trace) = grow_region_with(
            &seed,
            &mut RejectAll,
            &TopoConfig::default(),
            (100.0, 100.0),
            (100.0, 100.0),
        );
        assert!(region.is_empty());
        assert_eq!(region.seed, 3);
        assert_eq!(trace.len(), 1);
        assert!(!trace[0].accepted);
    }

    // Accepts everything and mirrors image 1 as its own partner, with the
    // stored-extent shrink the growth machinery expects.
    struct AcceptAll;
    impl PatchVerifier<f64> for AcceptAll {
        fn verify(&mut self, r1: &Patch<f64>, _r2: &Patch<f64>) -> FoveaOutcome<f64> {
            let r2 = Patch::new(r1.center, ADJUST_SHRINK * r1.half_w, ADJUST_SHRINK * r1.half_h);
            FoveaOutcome { r2_adjusted: r2, score: 1.0, verified: true, matches: vec![] }
        }
    }

    #[test]
    fn growth_fills_bounded_lattice() {
        // 96 x 96 image, patch half 16, stride 16: centers on a 5 x 5 lattice.
        let seed = SeedHypothesis {
            pair: pair([48.0, 48.0], [48.0, 48.0], 16.0, None),
            match_index: 0,
            ratio: 0.0,
        };
        let (region, _) = grow_region_with(
            &seed,
            &mut AcceptAll,
            &TopoConfig::default(),
            (96.0, 96.0),
            (96.0, 96.0),
        );
        assert_eq!(region.pairs.len(), 25);
        assert!(check_hr_validity(&region, 0.2).is_ok());
    }

    #[test]
    fn hr_score_metrics() {
        let mut region = HomeomorphismRegion::empty(0);
        assert_eq!(hr_score(&region, HrMetric::PairCount, (100.0, 100.0)), 0.0);
        for i in 0..7 {
            region.pairs.push(pair([10.0 + 5.0 * i as f64, 10.0], [0.0, 0.0], 5.0, Some(1.0)));
        }
        region.matched_keypoints =
            vec![Match { idx1: 0, idx2: 0, distance: 0.0, ratio: 0.0 }; 11];
        assert_eq!(hr_score(&region, HrMetric::PairCount, (100.0, 100.0)), 7.0);
        assert_eq!(hr_score(&region, HrMetric::MatchedKeypoints, (100.0, 100.0)), 11.0);
        let area = hr_score(&region, HrMetric::AreaFraction, (100.0, 100.0));
        // Union spans x in [5, 45], y in [5, 15]: 400 px^2 of 10000.
        assert!((area - 0.04).abs() < 1e-12);
    }

    #[test]
    fn validity_catches_constructed_violations() {
        // Overlapping r1s with disjoint r2s: topological violation.
        let bad2 = HomeomorphismRegion {
            pairs: vec![
                pair([10.0, 10.0], [10.0, 10.0], 5.0, Some(1.0)),
                pair([14.0, 10.0], [200.0, 200.0], 5.0, Some(1.0)),
            ],
            matched_keypoints: vec![],
            seed: 0,
        };
        assert_eq!(
            check_hr_validity(&bad2, 0.2),
            Err(HrViolation::TopologicalConsistency { pair_a: 0, pair_b: 1 })
        );

        // An isolated pair: connectivity violation.
        let bad3 = HomeomorphismRegion {
            pairs: vec![
                pair([10.0, 10.0], [10.0, 10.0], 5.0, Some(1.0)),
                pair([14.0, 10.0], [14.0, 10.0], 5.0, Some(1.0)),
                pair([90.0, 90.0], [90.0, 90.0], 5.0, Some(1.0)),
            ],
            matched_keypoints: vec![],
            seed: 0,
        };
        assert_eq!(check_hr_validity(&bad3, 0.2), Err(HrViolation::Connectivity { pair: 2 }));

        // Unverified pair: local-consistency violation.
        let bad1 = HomeomorphismRegion {
            pairs: vec![pair([10.0, 10.0], [10.0, 10.0], 5.0, None)],
            matched_keypoints: vec![],
            seed: 0,
        };
        assert!(matches!(
            check_hr_validity(&bad1, 0.2),
            Err(HrViolation::LocalConsistency { pair: 0, .. })
        ));
    }

    #[test]
    fn topo_verify_empty_matches() {
        let p1 = grid_set("a", &[[10.0, 10.0]], 100.0);
        let p2 = grid_set("b", &[[10.0, 10.0]], 100.0);
        let result = topo_verify(&p1, &p2, &TopoConfig::default(), 0.8);
        assert_eq!(result.score, 0.0);
        assert!(result.best.is_empty());
    }

    #[test]
    fn self_pair_beats_unrelated_set() {
        // Patch side is 200 / 8 = 25 px; an 8 px pitch keeps several
        // keypoints in every patch.
        let positions: Vec<[f64; 2]> = (0..64)
            .map(|i| [60.0 + 8.0 * (i % 8) as f64, 60.0 + 8.0 * (i / 8) as f64])
            .collect();
        let a = grid_set("a", &positions, 200.0);
        let shifted: Vec<[f64; 2]> =
            positions.iter().map(|p| [p[0] + 3.0, p[1] + 5.0]).collect();
        let mut unrelated = FeatureSet::new("u", 200.0, 200.0, 64).unwrap();
        for (i, p) in shifted.iter().enumerate() {
            let mut desc = vec![0.0; 64];
            desc[(i * 31 + 7) % 64] = 1.0; // permuted identities, wrong geometry
            unrelated.push(Keypoint::new(p[0], p[1], 2.0, 0.0), &desc).unwrap();
        }
        let cfg = TopoConfig::default();
        let self_score = topo_verify(&a, &a, &cfg, 0.8).score;
        let other_score = topo_verify(&a, &unrelated, &cfg, 0.8).score;
        assert!(self_score > other_score, "self {self_score} vs unrelated {other_score}");
    }
}
