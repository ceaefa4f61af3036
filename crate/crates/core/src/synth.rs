//! Synthetic correspondence problems with exact ground truth, plus
//! brute-force oracles for desk-scale validation.
//!
//! Three regimes cover the failure modes the verifiers are tested against:
//! `Planar` applies one global anisotropic-affine transform; `Multiplane`
//! splits the image into vertical strips that each move under their own
//! transform while staying contiguous, so no single affine fits globally;
//! `Repeated` lays instance-noised copies of a small motif pool on a
//! periodic lattice and duplicates a fraction of them, descriptors copied
//! exactly, into an unrelated area of the second image.
//!
//! Generation is bit-deterministic in the seed: all randomness flows from a
//! `ChaCha8Rng` seeded with `SynthSpec::seed`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::features::{FeatureSet, Keypoint};
use crate::geom::Patch;
use crate::scalar::{lit, Scalar};
use crate::topo::{FoveaOutcome, PatchPair, PatchVerifier, ADJUST_SHRINK};

/// Correspondence-problem family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Planar,
    Multiplane,
    Repeated,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Planar => "planar",
            Regime::Multiplane => "multiplane",
            Regime::Repeated => "repeated",
        }
    }
}

/// Transform controls; fields are read per regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams<T> {
    pub scale_range: (T, T),
    pub anisotropy_range: (T, T),
    pub translation_range: (T, T),
    pub plane_count: usize,
    pub pattern_period: T,
}

/// Full description of one synthetic pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec<T> {
    pub seed: u64,
    pub regime: Regime,
    pub keypoint_count: usize,
    pub image_size: T,
    pub descriptor_dim: usize,
    pub transform: TransformParams<T>,
    /// Fraction of correspondences whose second-image descriptor is
    /// replaced with a fresh random vector.
    pub corruption_rate: T,
}

impl<T: Scalar> SynthSpec<T> {
    /// Regime-appropriate defaults for a 512 px square image.
    pub fn new(seed: u64, regime: Regime) -> Self {
        let size = lit::<T>(512.0);
        let transform = match regime {
            Regime::Planar => TransformParams {
                scale_range: (lit(0.9), lit(1.2)),
                anisotropy_range: (lit(1.0), lit(1.0)),
                translation_range: (lit(-40.0), lit(40.0)),
                plane_count: 1,
                pattern_period: size / lit(24.0),
            },
            // Both plane scales sit away from 1, so no plane reduces to a
            // pure translation a single similarity hypothesis could fit.
            Regime::Multiplane => TransformParams {
                scale_range: (lit(1.2), lit(1.7)),
                anisotropy_range: (lit(1.0), lit(1.0)),
                translation_range: (lit(-30.0), lit(-10.0)),
                plane_count: 2,
                pattern_period: size / lit(24.0),
            },
            Regime::Repeated => TransformParams {
                scale_range: (lit(1.0), lit(1.0)),
                anisotropy_range: (lit(1.0), lit(1.0)),
                translation_range: (lit(-8.0), lit(8.0)),
                plane_count: 1,
                pattern_period: size / lit(24.0),
            },
        };
        let keypoint_count = match regime {
            Regime::Repeated => 400,
            _ => 64,
        };
        Self {
            seed,
            regime,
            keypoint_count,
            image_size: size,
            descriptor_dim: 64,
            transform,
            corruption_rate: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let t = &self.transform;
        if self.keypoint_count < 8 {
            return Err(SynthError::Param("keypoint_count must be at least 8".into()));
        }
        if !(self.image_size > lit(32.0)) {
            return Err(SynthError::Param("image_size must exceed 32 px".into()));
        }
        if self.descriptor_dim < 2 {
            return Err(SynthError::Param("descriptor_dim must be at least 2".into()));
        }
        if !(self.corruption_rate >= T::zero() && self.corruption_rate < T::one()) {
            return Err(SynthError::Param("corruption_rate must lie in [0, 1)".into()));
        }
        if !(t.scale_range.0 > T::zero() && t.scale_range.1 >= t.scale_range.0) {
            return Err(SynthError::Param("scale_range must be positive and ordered".into()));
        }
        if !(t.anisotropy_range.0 > T::zero() && t.anisotropy_range.1 >= t.anisotropy_range.0) {
            return Err(SynthError::Param("anisotropy_range must be positive and ordered".into()));
        }
        if t.translation_range.1 < t.translation_range.0 {
            return Err(SynthError::Param("translation_range must be ordered".into()));
        }
        if self.regime == Regime::Multiplane && t.plane_count < 2 {
            return Err(SynthError::Param("multiplane needs plane_count >= 2".into()));
        }
        if self.regime == Regime::Repeated && !(t.pattern_period > lit(4.0)) {
            return Err(SynthError::Param("pattern_period must exceed 4 px".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth parameter: {0}")]
    Param(String),
    #[error("candidate lattice {0} x {1} exceeds the 64 x 64 oracle limit")]
    LatticeTooLarge(usize, usize),
    #[error("ground-truth file error: {0}")]
    GroundTruthFile(String),
}

/// One ground-truth correspondence: indices into the two feature sets and
/// the plane whose transform maps it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub a: usize,
    pub b: usize,
    pub plane: usize,
}

/// A generated pair with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair<T> {
    pub a: FeatureSet<T>,
    pub b: FeatureSet<T>,
    pub true_correspondences: Vec<Correspondence>,
    /// Per-plane 3x3 transforms (row-major, last row `[0, 0, 1]`).
    pub transforms: Vec<[[T; 3]; 3]>,
    /// Convex polygons (image-1 coordinates) with valid counterparts.
    pub overlap: Vec<Vec<[T; 2]>>,
    /// Image-1 indices whose second-image descriptor was corrupted.
    pub corrupted: Vec<usize>,
}

// Internal f64 working form of one keypoint record.
#[derive(Clone)]
struct Record {
    x: f64,
    y: f64,
    scale: f64,
    orientation: f64,
    desc: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, cosine branch only.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Random unit descriptors with a minimum pairwise separation, by rejection.
fn separated_unit_vectors(
    rng: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    min_sep: f64,
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut candidate = unit_vector(rng, dim);
        for _ in 0..64 {
            if out.iter().all(|v| dist(v, &candidate) >= min_sep) {
                break;
            }
            candidate = unit_vector(rng, dim);
        }
        out.push(candidate);
    }
    out
}

fn range_sample(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

fn build_set<T: Scalar>(id: &str, size: f64, records: &[Record]) -> FeatureSet<T> {
    let mut set = FeatureSet::new(id, lit::<T>(size), lit::<T>(size), records[0].desc.len())
        .expect("generator image extent");
    for r in records {
        let kp = Keypoint::new(
            lit::<T>(r.x),
            lit::<T>(r.y),
            lit::<T>(r.scale),
            lit::<T>(r.orientation),
        );
        let desc: Vec<T> = r.desc.iter().map(|&v| lit::<T>(v)).collect();
        set.push(kp, &desc).expect("generator keeps keypoints in bounds");
    }
    set
}

fn build_empty_aware_set<T: Scalar>(
    id: &str,
    size: f64,
    dim: usize,
    records: &[Record],
) -> FeatureSet<T> {
    if records.is_empty() {
        FeatureSet::new(id, lit::<T>(size), lit::<T>(size), dim).expect("generator image extent")
    } else {
        build_set(id, size, records)
    }
}

fn affine_row_pair(sx: f64, sy: f64, tx: f64, ty: f64) -> [[f64; 3]; 3] {
    [[sx, 0.0, tx], [0.0, sy, ty], [0.0, 0.0, 1.0]]
}

fn convert_transform<T: Scalar>(m: &[[f64; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[i][j] = lit(*v);
        }
    }
    out
}

/// Axis-aligned overlap rectangle: the part of `[0,w]^2` (clipped to
/// `strip`) that maps into `[0,w]^2` under a scale-plus-translation
/// transform. Returned as a 4-corner polygon.
fn overlap_rect<T: Scalar>(
    m: &[[f64; 3]; 3],
    size: f64,
    strip: (f64, f64),
) -> Option<Vec<[T; 2]>> {
    let (sx, tx) = (m[0][0], m[0][2]);
    let (sy, ty) = (m[1][1], m[1][2]);
    let x0 = ((0.0 - tx) / sx).max(strip.0).max(0.0);
    let x1 = ((size - tx) / sx).min(strip.1).min(size);
    let y0 = ((0.0 - ty) / sy).max(0.0);
    let y1 = ((size - ty) / sy).min(size);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    Some(vec![
        [lit(x0), lit(y0)],
        [lit(x1), lit(y0)],
        [lit(x1), lit(y1)],
        [lit(x0), lit(y1)],
    ])
}

/// Deterministically generates one synthetic pair.
pub fn generate<T: Scalar>(spec: &SynthSpec<T>) -> Result<SynthPair<T>, SynthError> {
    spec.validate()?;
    match spec.regime {
        Regime::Planar => gen_planar(spec),
        Regime::Multiplane => gen_multiplane(spec),
        Regime::Repeated => Ok(gen_repeated(spec).0),
    }
}

fn spec_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar convertible to f64")
}

fn corrupt_and_shuffle<T: Scalar>(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec<T>,
    mut mapped: Vec<(usize, usize, Record)>, // (a index, plane, record)
) -> (Vec<Record>, Vec<Correspondence>, Vec<usize>) {
    mapped.shuffle(rng);
    let rate = spec_f64(spec.corruption_rate);
    let n_corrupt = (rate * mapped.len() as f64).floor() as usize;
    let picks = rand::seq::index::sample(rng, mapped.len().max(1), n_corrupt.min(mapped.len()));
    let mut corrupted: Vec<usize> = Vec::new();
    for slot in picks.iter() {
        mapped[slot].2.desc = unit_vector(rng, spec.descriptor_dim);
        corrupted.push(mapped[slot].0);
    }
    corrupted.sort_unstable();
    let mut records = Vec::with_capacity(mapped.len());
    let mut correspondences = Vec::with_capacity(mapped.len());
    for (slot, (a_idx, plane, record)) in mapped.into_iter().enumerate() {
        records.push(record);
        correspondences.push(Correspondence { a: a_idx, b: slot, plane });
    }
    correspondences.sort_by_key(|c| c.a);
    (records, correspondences, corrupted)
}

fn gen_planar<T: Scalar>(spec: &SynthSpec<T>) -> Result<SynthPair<T>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec_f64(spec.image_size);
    let t = &spec.transform;

    let s = range_sample(&mut rng, (spec_f64(t.scale_range.0), spec_f64(t.scale_range.1)));
    let anis = range_sample(
        &mut rng,
        (spec_f64(t.anisotropy_range.0), spec_f64(t.anisotropy_range.1)),
    );
    let trange = (spec_f64(t.translation_range.0), spec_f64(t.translation_range.1));
    let tx = range_sample(&mut rng, trange);
    let ty = range_sample(&mut rng, trange);
    let m = affine_row_pair(s * anis, s, tx, ty);

    let n = spec.keypoint_count;
    let descs = separated_unit_vectors(&mut rng, n, spec.descriptor_dim, 1.0);
    let mut a_records = Vec::with_capacity(n);
    for desc in descs {
        a_records.push(Record {
            x: rng.gen_range(0.04 * w..0.96 * w),
            y: rng.gen_range(0.04 * w..0.96 * w),
            scale: rng.gen_range(2.0..4.0),
            orientation: rng.gen_range(0.0..std::f64::consts::TAU),
            desc,
        });
    }

    let scale_factor = s * anis.sqrt();
    let mapped: Vec<(usize, usize, Record)> = a_records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let bx = m[0][0] * r.x + m[0][2];
            let by = m[1][1] * r.y + m[1][2];
            if (0.0..=w).contains(&bx) && (0.0..=w).contains(&by) {
                Some((
                    i,
                    0usize,
                    Record {
                        x: bx,
                        y: by,
                        scale: r.scale * scale_factor,
                        orientation: r.orientation,
                        desc: r.desc.clone(),
                    },
                ))
            } else {
                None
            }
        })
        .collect();
    let (b_records, correspondences, corrupted) = corrupt_and_shuffle(&mut rng, spec, mapped);

    Ok(SynthPair {
        a: build_set("synth_a", w, &a_records),
        b: build_empty_aware_set("synth_b", w, spec.descriptor_dim, &b_records),
        true_correspondences: correspondences,
        transforms: vec![convert_transform(&m)],
        overlap: overlap_rect(&m, w, (0.0, w)).into_iter().collect(),
        corrupted,
    })
}

fn gen_multiplane<T: Scalar>(spec: &SynthSpec<T>) -> Result<SynthPair<T>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec_f64(spec.image_size);
    let t = &spec.transform;
    let pc = t.plane_count;
    let sw = w / pc as f64;

    let (lo, hi) = (spec_f64(t.scale_range.0), spec_f64(t.scale_range.1));
    let trange = (spec_f64(t.translation_range.0), spec_f64(t.translation_range.1));
    let tx = range_sample(&mut rng, trange);
    let ty = range_sample(&mut rng, trange);

    // Per-plane x scales spread across the range; strips map contiguously
    // so adjacency survives while no single affine fits globally.
    let mut transforms_f = Vec::with_capacity(pc);
    let mut c = tx;
    for k in 0..pc {
        let f = if pc == 1 { lo } else { lo + (hi - lo) * k as f64 / (pc - 1) as f64 };
        transforms_f.push(affine_row_pair(f, 1.0, c - f * (k as f64 * sw), ty));
        c += f * sw;
    }

    let n = spec.keypoint_count;
    let descs = separated_unit_vectors(&mut rng, n, spec.descriptor_dim, 1.0);
    let mut a_records = Vec::with_capacity(n);
    for desc in descs {
        a_records.push(Record {
            x: rng.gen_range(0.04 * w..0.96 * w),
            y: rng.gen_range(0.04 * w..0.96 * w),
            scale: rng.gen_range(2.0..4.0),
            orientation: rng.gen_range(0.0..std::f64::consts::TAU),
            desc,
        });
    }

    let mapped: Vec<(usize, usize, Record)> = a_records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let plane = ((r.x / sw) as usize).min(pc - 1);
            let m = &transforms_f[plane];
            let bx = m[0][0] * r.x + m[0][2];
            let by = m[1][1] * r.y + m[1][2];
            if (0.0..=w).contains(&bx) && (0.0..=w).contains(&by) {
                Some((
                    i,
                    plane,
                    Record {
                        x: bx,
                        y: by,
                        scale: r.scale * m[0][0].sqrt(),
                        orientation: r.orientation,
                        desc: r.desc.clone(),
                    },
                ))
            } else {
                None
            }
        })
        .collect();
    let (b_records, correspondences, corrupted) = corrupt_and_shuffle(&mut rng, spec, mapped);

    let overlap = transforms_f
        .iter()
        .enumerate()
        .filter_map(|(k, m)| overlap_rect(m, w, (k as f64 * sw, (k + 1) as f64 * sw)))
        .collect();
    Ok(SynthPair {
        a: build_set("synth_a", w, &a_records),
        b: build_empty_aware_set("synth_b", w, spec.descriptor_dim, &b_records),
        true_correspondences: correspondences,
        transforms: transforms_f.iter().map(convert_transform).collect(),
        overlap,
        corrupted,
    })
}

/// Lattice bookkeeping the repeated regime exposes to [`repeated_triplet`].
struct RepeatedLayout {
    /// `(a index, column, row)` of every lattice instance.
    lattice: Vec<(usize, i64, i64)>,
}

/// Fraction of lattice instances duplicated verbatim into the unrelated
/// structure of image b.
const DUPLICATE_FRACTION: f64 = 0.3;
const MOTIF_COUNT: usize = 12;
const INSTANCE_NOISE: f64 = 0.12;
const COPY_NOISE: f64 = 0.04;

fn gen_repeated<T: Scalar>(spec: &SynthSpec<T>) -> (SynthPair<T>, RepeatedLayout) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec_f64(spec.image_size);
    let period = spec_f64(spec.transform.pattern_period);
    let origin = 0.1 * w;
    let cols = ((0.8 * w) / period).floor() as i64;

    let motifs = separated_unit_vectors(&mut rng, MOTIF_COUNT, spec.descriptor_dim, 1.2);

    // Image a: the motif lattice plus unique background features.
    let mut a_records: Vec<Record> = Vec::new();
    let mut lattice: Vec<(usize, i64, i64)> = Vec::new();
    for i in 0..cols {
        for j in 0..cols {
            let motif = &motifs[((7 * i + 13 * j).rem_euclid(MOTIF_COUNT as i64)) as usize];
            let mut desc: Vec<f64> =
                motif.iter().map(|&v| v + INSTANCE_NOISE * gaussian(&mut rng)).collect();
            desc = normalized(desc);
            let jitter_x = rng.gen_range(-2.0..2.0);
            let jitter_y = rng.gen_range(-2.0..2.0);
            lattice.push((a_records.len(), i, j));
            a_records.push(Record {
                x: origin + (i as f64 + 0.5) * period + jitter_x,
                y: origin + (j as f64 + 0.5) * period + jitter_y,
                scale: rng.gen_range(2.0..4.0),
                orientation: rng.gen_range(0.0..std::f64::consts::TAU),
                desc,
            });
        }
    }
    let uniques = spec.keypoint_count.saturating_sub(a_records.len()).max(8);
    for _ in 0..uniques {
        a_records.push(Record {
            x: rng.gen_range(0.04 * w..0.96 * w),
            y: rng.gen_range(0.04 * w..0.96 * w),
            scale: rng.gen_range(2.0..4.0),
            orientation: rng.gen_range(0.0..std::f64::consts::TAU),
            desc: unit_vector(&mut rng, spec.descriptor_dim),
        });
    }

    // True transform: a strong rightward shift so only the left part of a
    // survives in b.
    let trange = (
        spec_f64(spec.transform.translation_range.0),
        spec_f64(spec.transform.translation_range.1),
    );
    let tx = 0.7 * w;
    let ty = range_sample(&mut rng, trange);
    let m = affine_row_pair(1.0, 1.0, tx, ty);

    let mapped: Vec<(usize, usize, Record)> = a_records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let bx = r.x + tx;
            let by = r.y + ty;
            if (0.0..=w).contains(&bx) && (0.0..=w).contains(&by) {
                let desc = normalized(
                    r.desc.iter().map(|&v| v + COPY_NOISE * gaussian(&mut rng)).collect(),
                );
                Some((i, 0usize, Record { x: bx, y: by, scale: r.scale, orientation: r.orientation, desc }))
            } else {
                None
            }
        })
        .collect();
    let (mut b_records, mut correspondences, corrupted) =
        corrupt_and_shuffle(&mut rng, spec, mapped);

    // Unrelated structure: duplicate a fraction of the lattice instances,
    // descriptors copied exactly, onto a periodic lattice in the free left
    // region of b, at positions unrelated to the originals.
    let n_dup = (DUPLICATE_FRACTION * lattice.len() as f64).round() as usize;
    let dup_picks = rand::seq::index::sample(&mut rng, lattice.len(), n_dup.min(lattice.len()));
    let poll_cols = ((0.55 * w) / period).floor() as i64;
    let poll_rows = ((0.88 * w) / period).floor() as i64;
    let mut poll_cells: Vec<(i64, i64)> = (0..poll_cols)
        .flat_map(|i| (0..poll_rows).map(move |j| (i, j)))
        .collect();
    poll_cells.shuffle(&mut rng);
    for (slot, pick) in dup_picks.iter().enumerate() {
        let (a_idx, _, _) = lattice[pick];
        let (ci, cj) = poll_cells[slot % poll_cells.len()];
        let src = &a_records[a_idx];
        b_records.push(Record {
            x: 0.04 * w + (ci as f64 + 0.5) * period,
            y: 0.04 * w + (cj as f64 + 0.5) * period,
            scale: src.scale,
            orientation: src.orientation,
            desc: src.desc.clone(),
        });
    }
    // One extra shuffle so duplicates are not clustered at the tail.
    let mut order: Vec<usize> = (0..b_records.len()).collect();
    order.shuffle(&mut rng);
    let mut slot_of = vec![0usize; b_records.len()];
    for (new_slot, &old_slot) in order.iter().enumerate() {
        slot_of[old_slot] = new_slot;
    }
    let b_records: Vec<Record> = {
        let mut shuffled = vec![None; b_records.len()];
        for (old_slot, record) in b_records.into_iter().enumerate() {
            shuffled[slot_of[old_slot]] = Some(record);
        }
        shuffled.into_iter().map(Option::unwrap).collect()
    };
    for c in &mut correspondences {
        c.b = slot_of[c.b];
    }

    let pair = SynthPair {
        a: build_set("synth_a", w, &a_records),
        b: build_empty_aware_set("synth_b", w, spec.descriptor_dim, &b_records),
        true_correspondences: correspondences,
        transforms: vec![convert_transform(&m)],
        overlap: overlap_rect(&m, w, (0.0, w)).into_iter().collect(),
        corrupted,
    };
    (pair, RepeatedLayout { lattice })
}

/// A repeated-pattern pair plus a wrong image: scattered exact-descriptor
/// duplicates of part of the query lattice, placed under one global
/// similarity so they agree spatially while every duplicate sits isolated,
/// its surroundings unrelated to the query's.
#[derive(Debug, Clone)]
pub struct RepeatedTriplet<T> {
    /// Ground truth for `(query, correct)`.
    pub pair: SynthPair<T>,
    pub wrong: FeatureSet<T>,
}

/// Scale of the wrong image's duplicate field relative to the query.
const WRONG_SCALE: f64 = 0.75;

pub fn repeated_triplet<T: Scalar>(spec: &SynthSpec<T>) -> Result<RepeatedTriplet<T>, SynthError> {
    if spec.regime != Regime::Repeated {
        return Err(SynthError::Param("triplets require the repeated regime".into()));
    }
    spec.validate()?;
    let (pair, layout) = gen_repeated(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x77726f_6e67);
    let w = spec_f64(spec.image_size);

    // Every second lattice cell, so duplicates stay apart by two periods.
    let mut records: Vec<Record> = Vec::new();
    for &(a_idx, i, j) in &layout.lattice {
        if i % 2 != 0 || j % 2 != 0 {
            continue;
        }
        let kp = pair.a.keypoint(a_idx);
        let desc: Vec<f64> =
            pair.a.descriptor(a_idx).iter().map(|v| spec_f64(*v)).collect();
        records.push(Record {
            x: spec_f64(kp.x) * WRONG_SCALE + 12.0,
            y: spec_f64(kp.y) * WRONG_SCALE + 12.0,
            scale: spec_f64(kp.scale) * WRONG_SCALE,
            orientation: spec_f64(kp.orientation),
            desc,
        });
    }
    records.shuffle(&mut rng);
    let wrong = build_empty_aware_set("synth_wrong", w, spec.descriptor_dim, &records);
    Ok(RepeatedTriplet { pair, wrong })
}

/// Memoized accept/reject decisions over a candidate lattice.
pub trait LatticeDecisions {
    fn accept(&self, i: i64, j: i64) -> bool;
}

impl<F: Fn(i64, i64) -> bool> LatticeDecisions for F {
    fn accept(&self, i: i64, j: i64) -> bool {
        self(i, j)
    }
}

/// Adapts lattice decisions to the region-growth verifier interface. The
/// adjusted image-2 patch mirrors the image-1 lattice around the seed, with
/// the extent shrink the growth machinery expects of stored patches, so
/// image-2 overlap topology is an exact copy of image 1's.
pub struct LatticeFovea<'a, T, D> {
    pub seed: PatchPair<T>,
    pub stride: (T, T),
    pub decisions: &'a D,
}

impl<'a, T: Scalar, D: LatticeDecisions> LatticeFovea<'a, T, D> {
    pub fn new(seed: &PatchPair<T>, overlap_step: T, decisions: &'a D) -> Self {
        let two = lit::<T>(2.0);
        LatticeFovea {
            seed: *seed,
            stride: (overlap_step * two * seed.r1.half_w, overlap_step * two * seed.r1.half_h),
            decisions,
        }
    }

    pub fn index_of(&self, center: [T; 2]) -> (i64, i64) {
        let i = ((center[0] - self.seed.r1.center[0]) / self.stride.0).round();
        let j = ((center[1] - self.seed.r1.center[1]) / self.stride.1).round();
        (i.to_i64().unwrap_or(0), j.to_i64().unwrap_or(0))
    }
}

impl<T: Scalar, D: LatticeDecisions> PatchVerifier<T> for LatticeFovea<'_, T, D> {
    fn verify(&mut self, r1: &Patch<T>, _r2: &Patch<T>) -> FoveaOutcome<T> {
        let (i, j) = self.index_of(r1.center);
        let verified = self.decisions.accept(i, j);
        let shrink = lit::<T>(ADJUST_SHRINK);
        let r2_adjusted = Patch::new(
            [
                self.seed.r2.center[0] + (lit::<T>(i as f64)) * self.stride.0,
                self.seed.r2.center[1] + (lit::<T>(j as f64)) * self.stride.1,
            ],
            shrink * r1.half_w,
            shrink * r1.half_h,
        );
        FoveaOutcome {
            r2_adjusted,
            score: if verified { T::one() } else { T::zero() },
            verified,
            matches: Vec::new(),
        }
    }
}

/// Exhaustive breadth search over the candidate lattice: the maximal
/// connected accepted set containing the seed, patches fully inside image 1
/// and connected by positive-area overlap. Lattice indices are relative to
/// the seed. Refuses lattices beyond 64 x 64.
pub fn brute_force_region<T: Scalar, D: LatticeDecisions>(
    seed: &PatchPair<T>,
    decisions: &D,
    bounds1: (T, T),
    overlap_step: T,
) -> Result<Vec<PatchPair<T>>, SynthError> {
    let two = lit::<T>(2.0);
    let sx = overlap_step * two * seed.r1.half_w;
    let sy = overlap_step * two * seed.r1.half_h;
    let rx = seed.r2.half_w / seed.r1.half_w;
    let ry = seed.r2.half_h / seed.r1.half_h;

    let place = |i: i64, j: i64| -> PatchPair<T> {
        let fi = lit::<T>(i as f64);
        let fj = lit::<T>(j as f64);
        PatchPair {
            r1: Patch::new(
                [seed.r1.center[0] + fi * sx, seed.r1.center[1] + fj * sy],
                seed.r1.half_w,
                seed.r1.half_h,
            ),
            r2: Patch::new(
                [seed.r2.center[0] + fi * sx * rx, seed.r2.center[1] + fj * sy * ry],
                seed.r2.half_w,
                seed.r2.half_h,
            ),
            score: Some(T::one()),
        }
    };

    let in_bounds = |i: i64, j: i64| place(i, j).r1.inside_image(bounds1.0, bounds1.1);
    let extent = |step: T, half: T, c: T, size: T| -> (i64, i64) {
        let lo = ((half - c) / step).ceil().to_i64().unwrap_or(0);
        let hi = ((size - half - c) / step).floor().to_i64().unwrap_or(0);
        (lo, hi)
    };
    let (i_lo, i_hi) = extent(sx, seed.r1.half_w, seed.r1.center[0], bounds1.0);
    let (j_lo, j_hi) = extent(sy, seed.r1.half_h, seed.r1.center[1], bounds1.1);
    let ni = (i_hi - i_lo + 1).max(0) as usize;
    let nj = (j_hi - j_lo + 1).max(0) as usize;
    if ni > 64 || nj > 64 {
        return Err(SynthError::LatticeTooLarge(ni, nj));
    }

    if !in_bounds(0, 0) || !decisions.accept(0, 0) {
        return Ok(Vec::new());
    }
    let mut accepted = std::collections::BTreeSet::new();
    accepted.insert((0i64, 0i64));
    let mut queue = std::collections::VecDeque::from([(0i64, 0i64)]);
    while let Some((i, j)) = queue.pop_front() {
        let here = place(i, j);
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i + di, j + dj);
                if accepted.contains(&(ni, nj)) || !in_bounds(ni, nj) {
                    continue;
                }
                let neighbor = place(ni, nj);
                if here.r1.overlaps(&neighbor.r1) && decisions.accept(ni, nj) {
                    accepted.insert((ni, nj));
                    queue.push_back((ni, nj));
                }
            }
        }
    }
    Ok(accepted.into_iter().map(|(i, j)| place(i, j)).collect())
}

/// JSON sidecar mirroring a [`SynthPair`]'s ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthGroundTruth<T> {
    pub regime: String,
    pub seed: u64,
    pub correspondences: Vec<Correspondence>,
    pub transforms: Vec<[[T; 3]; 3]>,
    pub overlap: Vec<Vec<[T; 2]>>,
    pub corrupted: Vec<usize>,
}

impl<T: Scalar> SynthGroundTruth<T> {
    pub fn new(spec: &SynthSpec<T>, pair: &SynthPair<T>) -> Self {
        Self {
            regime: spec.regime.name().to_string(),
            seed: spec.seed,
            correspondences: pair.true_correspondences.clone(),
            transforms: pair.transforms.clone(),
            overlap: pair.overlap.clone(),
            corrupted: pair.corrupted.clone(),
        }
    }
}

pub fn write_ground_truth<T: Scalar>(
    gt: &SynthGroundTruth<T>,
    path: impl AsRef<Path>,
) -> Result<(), SynthError> {
    let json = serde_json::to_string_pretty(gt)
        .map_err(|e| SynthError::GroundTruthFile(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| SynthError::GroundTruthFile(e.to_string()))
}

pub fn read_ground_truth<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<SynthGroundTruth<T>, SynthError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SynthError::GroundTruthFile(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| SynthError::GroundTruthFile(e.to_string()))
}
