//! Geometric verification of local-feature image pairs.
//!
//! Two verifiers share one hypothesis-and-test loop. Spatial verification
//! ([`spatial::spatial_verify`]) scores a pair by the inliers of a global
//! similarity transform. Topological verification ([`topo::topo_verify`])
//! instead grows regions of locally verified, mutually consistent patch
//! pairs and scores the pair by region size, which tolerates non-planar
//! scenes and repeated structure. Around them sit a synthetic
//! correspondence generator with brute-force oracles ([`synth`]), a
//! reranking and mean-average-precision harness ([`retrieval`]), feature
//! file formats ([`features`]), and overlay emission ([`overlay`]).
//!
//! Core math is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

pub mod features;
pub mod geom;
pub mod overlay;
pub mod retrieval;
pub mod scalar;
pub mod spatial;
pub mod synth;
pub mod topo;

pub use scalar::Scalar;

pub type Keypoint = features::Keypoint<f64>;
pub type FeatureSet = features::FeatureSet<f64>;
pub type Match = features::Match<f64>;
pub type Patch = geom::Patch<f64>;
pub type PatchPair = topo::PatchPair<f64>;
pub type HomeomorphismRegion = topo::HomeomorphismRegion<f64>;
pub type TopoConfig = topo::TopoConfig<f64>;
pub type TpResult = topo::TpResult<f64>;
pub type SpatialConfig = spatial::SpatialConfig<f64>;
pub type SpResult = spatial::SpResult<f64>;
pub type AffineHypothesis = spatial::AffineHypothesis<f64>;
pub type SynthSpec = synth::SynthSpec<f64>;
pub type SynthPair = synth::SynthPair<f64>;
pub type GroundTruth = retrieval::GroundTruth<f64>;
pub type RankedList = retrieval::RankedList<f64>;
