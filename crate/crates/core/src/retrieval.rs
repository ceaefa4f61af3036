//! Reranking harness and Medium/Hard mean-average-precision evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{load_features, ratio_test_match, FeatureSet};
use crate::scalar::{count, Scalar};
use crate::spatial::{spatial_verify_from_matches, SpatialConfig};
use crate::topo::{topo_verify_from_matches, TopoConfig};

/// Per-query relevance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroundTruth<T> {
    pub bbox: Option<[T; 4]>,
    pub easy: BTreeSet<String>,
    pub hard: BTreeSet<String>,
    pub junk: BTreeSet<String>,
}

/// Ground truth for a whole benchmark, keyed by query id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth<T> {
    pub queries: BTreeMap<String, QueryGroundTruth<T>>,
}

/// An ordered candidate list for one query; scores are non-increasing when
/// parsed from an initial-ranking file.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<T> {
    pub query_id: String,
    pub candidates: Vec<(String, T)>,
}

impl<T: Scalar> RankedList<T> {
    pub fn ids(&self) -> Vec<String> {
        self.candidates.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// Evaluation protocol: which labels count as positive versus junk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Medium,
    Hard,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Medium => "medium",
            Protocol::Hard => "hard",
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("query has an empty positive set")]
    UndefinedQuery,
    #[error("missing ground truth for query {0:?}")]
    MissingGroundTruth(String),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("ground truth for query {query:?} has overlapping easy/hard/junk sets")]
    OverlappingLabels { query: String },
}

/// Average precision of a ranked list against a positive set.
///
/// Junk ids are removed before computation. The result is the mean over all
/// positives of the precision at each positive's rank; positives absent from
/// the list contribute zero.
pub fn average_precision<T: Scalar>(
    ranked: &[String],
    positives: &BTreeSet<String>,
    junk: &BTreeSet<String>,
) -> Result<T, EvalError> {
    if positives.is_empty() {
        return Err(EvalError::UndefinedQuery);
    }
    let mut hits = 0usize;
    let mut rank = 0usize;
    let mut acc = T::zero();
    for id in ranked.iter().filter(|id| !junk.contains(*id)) {
        rank += 1;
        if positives.contains(id) {
            hits += 1;
            acc = acc + count::<T>(hits) / count::<T>(rank);
        }
    }
    Ok(acc / count::<T>(positives.len()))
}

/// Per-query outcome of [`map_eval`]; `ap` is `None` for queries excluded by
/// the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAp<T> {
    pub query_id: String,
    pub ap: Option<T>,
}

/// Evaluation summary: the mean AP over included queries plus the per-query
/// table in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct MapReport<T> {
    pub mean: T,
    pub per_query: Vec<QueryAp<T>>,
}

/// Mean average precision under a protocol.
///
/// Medium treats easy and hard labels as positive; Hard treats only hard
/// labels as positive and folds easy labels into the junk set. Queries with
/// an empty positive set under the protocol are excluded from the mean.
/// The mean accumulates in query-id order, so it is exactly invariant to
/// the order of `results`.
pub fn map_eval<T: Scalar>(
    results: &[RankedList<T>],
    gt: &GroundTruth<T>,
    protocol: Protocol,
) -> Result<MapReport<T>, EvalError> {
    let mut per_query = Vec::with_capacity(results.len());
    let mut included: Vec<(String, T)> = Vec::new();
    for list in results {
        let q = gt
            .queries
            .get(&list.query_id)
            .ok_or_else(|| EvalError::MissingGroundTruth(list.query_id.clone()))?;
        let (positives, junk): (BTreeSet<String>, BTreeSet<String>) = match protocol {
            Protocol::Medium => {
                (q.easy.union(&q.hard).cloned().collect(), q.junk.clone())
            }
            Protocol::Hard => {
                (q.hard.clone(), q.junk.union(&q.easy).cloned().collect())
            }
        };
        if positives.is_empty() {
            per_query.push(QueryAp { query_id: list.query_id.clone(), ap: None });
            continue;
        }
        let ap = average_precision(&list.ids(), &positives, &junk)?;
        included.push((list.query_id.clone(), ap));
        per_query.push(QueryAp { query_id: list.query_id.clone(), ap: Some(ap) });
    }
    included.sort_by(|a, b| a.0.cmp(&b.0));
    let mean = if included.is_empty() {
        T::zero()
    } else {
        let mut acc = T::zero();
        for (_, ap) in &included {
            acc = acc + *ap;
        }
        acc / count::<T>(included.len())
    };
    Ok(MapReport { mean, per_query })
}

/// Resolves image ids to feature sets.
pub trait FeatureStore<T>: Sync {
    fn resolve(&self, id: &str) -> Option<FeatureSet<T>>;
}

/// Directory-backed store: `<root>/<id>.feat` in either file form.
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl<T: Scalar> FeatureStore<T> for DirStore {
    fn resolve(&self, id: &str) -> Option<FeatureSet<T>> {
        load_features(self.root.join(format!("{id}.feat"))).ok()
    }
}

/// In-memory store for tests and toy benchmarks.
#[derive(Default)]
pub struct MemStore<T> {
    map: BTreeMap<String, FeatureSet<T>>,
}

impl<T: Scalar> MemStore<T> {
    pub fn new() -> Self {
        Self { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, set: FeatureSet<T>) {
        self.map.insert(id.into(), set);
    }
}

impl<T: Scalar> FeatureStore<T> for MemStore<T> {
    fn resolve(&self, id: &str) -> Option<FeatureSet<T>> {
        self.map.get(id).cloned()
    }
}

/// Pairwise verifier used to re-score candidates.
pub trait PairScorer<T>: Sync {
    fn score(&self, query: &FeatureSet<T>, candidate: &FeatureSet<T>) -> T;
}

/// Scores a pair by topological verification; optionally pre-filters the
/// hypothesis matches to the spatial verifier's inliers.
pub struct TpScorer<T> {
    pub cfg: TopoConfig<T>,
    pub ratio_threshold: T,
    pub sp_prefilter: Option<SpatialConfig<T>>,
}

impl<T: Scalar> PairScorer<T> for TpScorer<T> {
    fn score(&self, query: &FeatureSet<T>, candidate: &FeatureSet<T>) -> T {
        let matches = if query.is_empty() || candidate.len() < 2 {
            Vec::new()
        } else {
            ratio_test_match(query, candidate, self.ratio_threshold)
                .expect("search set size checked")
        };
        let matches = match &self.sp_prefilter {
            Some(sp_cfg) => {
                spatial_verify_from_matches(&matches, query, candidate, sp_cfg).inlier_matches
            }
            None => matches,
        };
        topo_verify_from_matches(&matches, query, candidate, &self.cfg).score
    }
}

/// Scores a pair by spatial verification inlier count.
pub struct SpScorer<T> {
    pub cfg: SpatialConfig<T>,
    pub ratio_threshold: T,
}

impl<T: Scalar> PairScorer<T> for SpScorer<T> {
    fn score(&self, query: &FeatureSet<T>, candidate: &FeatureSet<T>) -> T {
        let matches = if query.is_empty() || candidate.len() < 2 {
            Vec::new()
        } else {
            ratio_test_match(query, candidate, self.ratio_threshold)
                .expect("search set size checked")
        };
        count(spatial_verify_from_matches(&matches, query, candidate, &self.cfg).inlier_count)
    }
}

/// Rerank outcome: the new list plus any candidate ids the store could not
/// resolve (those keep their initial positions).
#[derive(Debug, Clone)]
pub struct RerankOutcome<T> {
    pub list: RankedList<T>,
    pub skipped: Vec<String>,
}

/// Re-scores the top `k` candidates of an initial list with a pairwise
/// verifier and reorders them by score, descending, ties broken by initial
/// rank. Candidates past `k` keep their order after the reranked block.
/// When `query_bbox` is given only query keypoints strictly inside it
/// participate. Unresolvable candidates stay at their initial positions and
/// are reported. Scoring runs on `threads` threads; the outcome is
/// independent of the thread count.
pub fn rerank<T: Scalar>(
    query: &FeatureSet<T>,
    query_bbox: Option<[T; 4]>,
    initial: &RankedList<T>,
    store: &dyn FeatureStore<T>,
    k: usize,
    scorer: &dyn PairScorer<T>,
    threads: usize,
) -> RerankOutcome<T> {
    let k = k.min(initial.candidates.len());
    let cropped;
    let query = match query_bbox {
        Some(bbox) => {
            cropped = query.crop_to_bbox(bbox);
            &cropped
        }
        None => query,
    };

    let head = &initial.candidates[..k];
    let score_one = |(id, _): &(String, T)| -> Option<T> {
        store.resolve(id).map(|candidate| scorer.score(query, &candidate))
    };
    let scores: Vec<Option<T>> = if threads > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| head.par_iter().map(score_one).collect())
    } else {
        head.iter().map(score_one).collect()
    };

    // Sort resolved candidates by (score desc, initial rank asc) and lay
    // them back into the slots not pinned by unresolved candidates.
    let mut resolved: Vec<(usize, T)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .collect();
    resolved.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
    });
    let open_slots: Vec<usize> =
        (0..k).filter(|&i| scores[i].is_some()).collect();
    let mut candidates: Vec<(String, T)> = initial.candidates.clone();
    for (&slot, &(src, score)) in open_slots.iter().zip(resolved.iter()) {
        candidates[slot] = (initial.candidates[src].0.clone(), score);
    }
    let skipped: Vec<String> = (0..k)
        .filter(|&i| scores[i].is_none())
        .map(|i| initial.candidates[i].0.clone())
        .collect();
    RerankOutcome {
        list: RankedList { query_id: initial.query_id.clone(), candidates },
        skipped,
    }
}

// ── File formats ──────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct GtQueryJson<T> {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<[T; 4]>,
    #[serde(default)]
    easy: Vec<String>,
    #[serde(default)]
    hard: Vec<String>,
    #[serde(default)]
    junk: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GtJson<T> {
    queries: Vec<GtQueryJson<T>>,
}

/// Reads a ground-truth JSON file
/// (`{"queries": [{id, bbox?, easy[], hard[], junk[]}]}`), checking that
/// the label sets are pairwise disjoint.
pub fn read_ground_truth_file<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<GroundTruth<T>, EvalError> {
    let path = path.as_ref();
    let file_err = |reason: String| EvalError::File { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let parsed: GtJson<T> = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
    let mut gt = GroundTruth::default();
    for q in parsed.queries {
        let easy: BTreeSet<String> = q.easy.into_iter().collect();
        let hard: BTreeSet<String> = q.hard.into_iter().collect();
        let junk: BTreeSet<String> = q.junk.into_iter().collect();
        let disjoint = easy.intersection(&hard).next().is_none()
            && easy.intersection(&junk).next().is_none()
            && hard.intersection(&junk).next().is_none();
        if !disjoint {
            return Err(EvalError::OverlappingLabels { query: q.id });
        }
        gt.queries.insert(q.id, QueryGroundTruth { bbox: q.bbox, easy, hard, junk });
    }
    Ok(gt)
}

pub fn write_ground_truth_file<T: Scalar>(
    gt: &GroundTruth<T>,
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let file_err = |reason: String| EvalError::File { path: path.to_path_buf(), reason };
    let queries = gt
        .queries
        .iter()
        .map(|(id, q)| GtQueryJson {
            id: id.clone(),
            bbox: q.bbox,
            easy: q.easy.iter().cloned().collect(),
            hard: q.hard.iter().cloned().collect(),
            junk: q.junk.iter().cloned().collect(),
        })
        .collect();
    let json = serde_json::to_string_pretty(&GtJson { queries })
        .map_err(|e| file_err(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| file_err(e.to_string()))
}

/// Reads an initial-ranking file: one `query_id: img1 img2 ...` line per
/// query. Scores are implicit, descending with rank.
pub fn read_ranking_file<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<Vec<RankedList<T>>, EvalError> {
    let path = path.as_ref();
    let file_err = |reason: String| EvalError::File { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let mut lists = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (query_id, rest) = line
            .split_once(':')
            .ok_or_else(|| file_err(format!("line {}: missing `:`", lineno + 1)))?;
        let query_id = query_id.trim();
        if query_id.is_empty() {
            return Err(file_err(format!("line {}: empty query id", lineno + 1)));
        }
        let ids: Vec<&str> = rest.split_whitespace().collect();
        let n = ids.len();
        let candidates = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), count::<T>(n - i)))
            .collect();
        lists.push(RankedList { query_id: query_id.to_string(), candidates });
    }
    Ok(lists)
}

/// Writes ranked lists in the initial-ranking format.
pub fn write_ranking_file<T: Scalar>(
    lists: &[RankedList<T>],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut out = String::new();
    for list in lists {
        out.push_str(&list.query_id);
        out.push(':');
        for (id, _) in &list.candidates {
            out.push(' ');
            out.push_str(id);
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| EvalError::File { path: path.to_path_buf(), reason: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Keypoint;
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ap_hand_computed_cases() {
        // [pos, neg, pos] -> (1/1 + 2/3) / 2
        let ap: f64 =
            average_precision(&ids(&["p1", "n1", "p2"]), &set(&["p1", "p2"]), &set(&[])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);

        // junk removed before computation
        let ap: f64 =
            average_precision(&ids(&["p1", "j", "p2"]), &set(&["p1", "p2"]), &set(&["j"]))
                .unwrap();
        assert_eq!(ap, 1.0);

        // all-miss
        let ap: f64 = average_precision(&ids(&["n1", "n2"]), &set(&["p"]), &set(&[])).unwrap();
        assert_eq!(ap, 0.0);

        assert!(matches!(
            average_precision::<f64>(&ids(&["a"]), &set(&[]), &set(&[])),
            Err(EvalError::UndefinedQuery)
        ));
    }

    fn three_query_fixture() -> (Vec<RankedList<f64>>, GroundTruth<f64>) {
        let lists = vec![
            RankedList {
                query_id: "q1".into(),
                candidates: vec![
                    ("e1".into(), 5.0),
                    ("n1".into(), 4.0),
                    ("h1".into(), 3.0),
                    ("j1".into(), 2.0),
                    ("h2".into(), 1.0),
                ],
            },
            RankedList {
                query_id: "q2".into(),
                candidates: vec![("x".into(), 2.0), ("e2".into(), 1.0)],
            },
            RankedList {
                query_id: "q3".into(),
                candidates: vec![("e3a".into(), 2.0), ("n".into(), 1.0)],
            },
        ];
        let mut gt = GroundTruth::default();
        gt.queries.insert(
            "q1".into(),
            QueryGroundTruth {
                bbox: None,
                easy: set(&["e1"]),
                hard: set(&["h1", "h2"]),
                junk: set(&["j1"]),
            },
        );
        gt.queries.insert(
            "q2".into(),
            QueryGroundTruth { bbox: None, easy: set(&["e2"]), hard: set(&[]), junk: set(&[]) },
        );
        gt.queries.insert(
            "q3".into(),
            QueryGroundTruth {
                bbox: None,
                easy: set(&["e3a", "e3b"]),
                hard: set(&[]),
                junk: set(&[]),
            },
        );
        (lists, gt)
    }

    #[test]
    fn map_eval_three_query_fixture() {
        let (lists, gt) = three_query_fixture();
        // Medium hand values: q1 = (1 + 2/3 + 3/4)/3 = 29/36, q2 = 1/2,
        // q3 = 1/2; mean = 65/108.
        let medium = map_eval(&lists, &gt, Protocol::Medium).unwrap();
        assert!((medium.mean - 65.0 / 108.0).abs() < 1e-12);
        assert_eq!(medium.per_query.len(), 3);
        assert!((medium.per_query[0].ap.unwrap() - 29.0 / 36.0).abs() < 1e-12);

        // Hard: only q1 has hard positives; easy ids join the junk set.
        // q1 = (1/2 + 2/3)/2 = 7/12; q2 and q3 are excluded.
        let hard = map_eval(&lists, &gt, Protocol::Hard).unwrap();
        assert!((hard.mean - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(hard.per_query[1].ap, None);
        assert_eq!(hard.per_query[2].ap, None);
    }

    #[test]
    fn map_eval_is_permutation_invariant() {
        let (mut lists, gt) = three_query_fixture();
        let forward = map_eval(&lists, &gt, Protocol::Medium).unwrap().mean;
        lists.reverse();
        let backward = map_eval(&lists, &gt, Protocol::Medium).unwrap().mean;
        assert_eq!(forward, backward);
    }

    #[test]
    fn map_eval_names_missing_queries() {
        let (lists, _) = three_query_fixture();
        let gt = GroundTruth::<f64>::default();
        match map_eval(&lists, &gt, Protocol::Medium) {
            Err(EvalError::MissingGroundTruth(q)) => assert_eq!(q, "q1"),
            other => panic!("expected missing ground truth, got {other:?}"),
        }
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let lists = vec![RankedList::<f64> {
            query_id: "q".into(),
            candidates: vec![("a".into(), 2.0), ("b".into(), 1.0)],
        }];
        let mut gt = GroundTruth::default();
        gt.queries.insert(
            "q".into(),
            QueryGroundTruth { bbox: None, easy: set(&["a", "b"]), hard: set(&[]), junk: set(&[]) },
        );
        assert_eq!(map_eval(&lists, &gt, Protocol::Medium).unwrap().mean, 1.0);
    }

    struct FixedScorer {
        table: BTreeMap<String, f64>,
    }

    impl PairScorer<f64> for FixedScorer {
        fn score(&self, _q: &FeatureSet<f64>, c: &FeatureSet<f64>) -> f64 {
            *self.table.get(c.image_id()).unwrap_or(&0.0)
        }
    }

    fn tiny_set(id: &str) -> FeatureSet<f64> {
        let mut s = FeatureSet::new(id, 10.0, 10.0, 2).unwrap();
        s.push(Keypoint::new(5.0, 5.0, 1.0, 0.0), &[1.0, 0.0]).unwrap();
        s
    }

    fn store_of(ids: &[&str]) -> MemStore<f64> {
        let mut store = MemStore::new();
        for id in ids {
            store.insert(*id, tiny_set(id));
        }
        store
    }

    fn initial(ids: &[&str]) -> RankedList<f64> {
        RankedList {
            query_id: "q".into(),
            candidates: ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), (ids.len() - i) as f64))
                .collect(),
        }
    }

    #[test]
    fn rerank_k_zero_is_identity() {
        let store = store_of(&["a", "b", "c"]);
        let list = initial(&["a", "b", "c"]);
        let scorer = FixedScorer { table: BTreeMap::new() };
        let out = rerank(&tiny_set("q"), None, &list, &store, 0, &scorer, 1);
        assert_eq!(out.list, list);
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn rerank_ties_keep_initial_order() {
        let store = store_of(&["a", "b", "c"]);
        let list = initial(&["a", "b", "c"]);
        let scorer = FixedScorer {
            table: [("a".to_string(), 1.0), ("b".to_string(), 1.0), ("c".to_string(), 1.0)]
                .into_iter()
                .collect(),
        };
        let out = rerank(&tiny_set("q"), None, &list, &store, 3, &scorer, 1);
        assert_eq!(out.list.ids(), ids(&["a", "b", "c"]));
    }

    #[test]
    fn rerank_reorders_and_pins_unresolved() {
        let store = store_of(&["a", "c", "d"]); // b is unresolvable
        let list = initial(&["a", "b", "c", "d", "e"]);
        let scorer = FixedScorer {
            table: [
                ("a".to_string(), 1.0),
                ("c".to_string(), 9.0),
                ("d".to_string(), 5.0),
            ]
            .into_iter()
            .collect(),
        };
        let out = rerank(&tiny_set("q"), None, &list, &store, 4, &scorer, 1);
        // b stays at slot 1; resolved order c > d > a fills slots 0, 2, 3;
        // e sits past k untouched.
        assert_eq!(out.list.ids(), ids(&["c", "b", "d", "a", "e"]));
        assert_eq!(out.skipped, ids(&["b"]));
    }

    #[test]
    fn rerank_thread_count_does_not_change_result() {
        let store = store_of(&["a", "b", "c", "d"]);
        let list = initial(&["a", "b", "c", "d"]);
        let scorer = FixedScorer {
            table: [
                ("a".to_string(), 2.0),
                ("b".to_string(), 7.0),
                ("c".to_string(), 5.0),
                ("d".to_string(), 7.0),
            ]
            .into_iter()
            .collect(),
        };
        let seq = rerank(&tiny_set("q"), None, &list, &store, 4, &scorer, 1);
        let par = rerank(&tiny_set("q"), None, &list, &store, 4, &scorer, 4);
        assert_eq!(seq.list, par.list);
        assert_eq!(seq.list.ids(), ids(&["b", "d", "c", "a"]));
    }

    #[test]
    fn ranking_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rank.txt");
        std::fs::write(&path, "q1: a b c\nq2: d\n").unwrap();
        let lists: Vec<RankedList<f64>> = read_ranking_file(&path).unwrap();
        assert_eq!(lists.len(), 2);
        assert_eq!(lists[0].ids(), ids(&["a", "b", "c"]));
        assert!(lists[0].candidates[0].1 > lists[0].candidates[1].1);
        let out = dir.path().join("out.txt");
        write_ranking_file(&lists, &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "q1: a b c\nq2: d\n");
    }

    #[test]
    fn ground_truth_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        let (_, gt) = three_query_fixture();
        write_ground_truth_file(&gt, &path).unwrap();
        let back: GroundTruth<f64> = read_ground_truth_file(&path).unwrap();
        assert_eq!(back, gt);

        std::fs::write(
            &path,
            r#"{"queries": [{"id": "q", "easy": ["a"], "hard": ["a"], "junk": []}]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_ground_truth_file::<f64>(&path),
            Err(EvalError::OverlappingLabels { .. })
        ));
    }

    proptest! {
        // Inserting junk anywhere in a ranked list never changes AP.
        #[test]
        fn junk_insertion_never_changes_ap(
            seed in 0u64..300,
            n in 2usize..10,
            n_junk in 1usize..5,
        ) {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut list: Vec<String> = (0..n).map(|i| format!("img{i}")).collect();
            let positives: BTreeSet<String> =
                list.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
            prop_assume!(!positives.is_empty());
            let junk: BTreeSet<String> = (0..n_junk).map(|i| format!("junk{i}")).collect();
            let base: f64 = average_precision(&list, &positives, &junk).unwrap();
            for (i, j) in junk.iter().enumerate() {
                let at = rng.gen_range(0..=list.len());
                list.insert(at, j.clone());
                let with_junk: f64 = average_precision(&list, &positives, &junk).unwrap();
                prop_assert!((with_junk - base).abs() < 1e-15, "iteration {i}");
            }
        }

        // A perfect scorer can only improve AP when k covers the list.
        #[test]
        fn perfect_scorer_never_hurts(seed in 0u64..200, n in 2usize..12) {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let names: Vec<String> = (0..n).map(|i| format!("img{i}")).collect();
            let positives: BTreeSet<String> =
                names.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect();
            prop_assume!(!positives.is_empty());

            let list = RankedList {
                query_id: "q".into(),
                candidates: names
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), (n - i) as f64))
                    .collect(),
            };
            let mut store = MemStore::new();
            for id in &names {
                store.insert(id.clone(), tiny_set(id));
            }
            let table: BTreeMap<String, f64> = names
                .iter()
                .map(|id| (id.clone(), if positives.contains(id) { 1.0 } else { 0.0 }))
                .collect();
            let scorer = FixedScorer { table };
            let out = rerank(&tiny_set("q"), None, &list, &store, n, &scorer, 1);

            let before: f64 =
                average_precision(&list.ids(), &positives, &BTreeSet::new()).unwrap();
            let after: f64 =
                average_precision(&out.list.ids(), &positives, &BTreeSet::new()).unwrap();
            prop_assert!(after >= before - 1e-15, "AP fell from {before} to {after}");
        }
    }
}
