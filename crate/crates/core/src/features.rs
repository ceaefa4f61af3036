//! Feature-set ingestion, descriptor nearest-neighbor matching, and the
//! feature file formats.
//!
//! A [`FeatureSet`] holds the keypoints and descriptors of one image. Two
//! interchangeable on-disk forms exist: a whitespace text form with a
//! `image_id width height count dim` header, and a binary form introduced by
//! the magic bytes `TPFV1` (little-endian u32 count and dim, then per record
//! four f32 keypoint fields followed by `dim` f32 descriptor entries). The
//! binary form carries no image id or extent; loading derives the id from the
//! file stem and the extent from the keypoint bounding box.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geom::Patch;
use crate::scalar::Scalar;

/// Magic bytes introducing the binary feature file form.
pub const BINARY_MAGIC: &[u8; 5] = b"TPFV1";

/// A local feature location: position, characteristic scale, orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint<T> {
    pub x: T,
    pub y: T,
    pub scale: T,
    pub orientation: T,
}

impl<T: Scalar> Keypoint<T> {
    pub fn new(x: T, y: T, scale: T, orientation: T) -> Self {
        Self { x, y, scale, orientation }
    }
}

/// Fixed-dimension descriptor rows in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptors<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Descriptors<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Errors raised while building a [`FeatureSet`].
#[derive(Debug, Error)]
pub enum FeatureSetError {
    #[error("invalid image id {0:?}: must be non-empty without whitespace")]
    InvalidImageId(String),
    #[error("invalid image extent {width} x {height}")]
    InvalidExtent { width: f64, height: f64 },
    #[error("invalid keypoint: {0}")]
    InvalidKeypoint(String),
    #[error("descriptor has {found} values, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("descriptor contains a non-finite value")]
    NonFiniteDescriptor,
}

/// Keypoints with parallel descriptors for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    image_id: String,
    width: T,
    height: T,
    keypoints: Vec<Keypoint<T>>,
    descriptors: Descriptors<T>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(
        image_id: impl Into<String>,
        width: T,
        height: T,
        dim: usize,
    ) -> Result<Self, FeatureSetError> {
        let image_id = image_id.into();
        if image_id.is_empty() || image_id.chars().any(char::is_whitespace) {
            return Err(FeatureSetError::InvalidImageId(image_id));
        }
        if !(width.is_finite() && height.is_finite() && width >= T::zero() && height >= T::zero())
        {
            return Err(FeatureSetError::InvalidExtent {
                width: width.to_f64().unwrap_or(f64::NAN),
                height: height.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            image_id,
            width,
            height,
            keypoints: Vec::new(),
            descriptors: Descriptors::new(dim),
        })
    }

    /// Appends one keypoint with its descriptor, checking the invariants:
    /// finite fields, position inside `[0,width] x [0,height]`, positive
    /// scale, and the set's descriptor dimension.
    pub fn push(&mut self, kp: Keypoint<T>, descriptor: &[T]) -> Result<(), FeatureSetError> {
        if !(kp.x.is_finite() && kp.y.is_finite() && kp.orientation.is_finite()) {
            return Err(FeatureSetError::InvalidKeypoint("non-finite field".into()));
        }
        if kp.x < T::zero() || kp.y < T::zero() || kp.x > self.width || kp.y > self.height {
            return Err(FeatureSetError::InvalidKeypoint(
                "location outside image bounds".into(),
            ));
        }
        if !(kp.scale.is_finite() && kp.scale > T::zero()) {
            return Err(FeatureSetError::InvalidKeypoint("non-positive scale".into()));
        }
        if descriptor.len() != self.descriptors.dim {
            return Err(FeatureSetError::DimensionMismatch {
                expected: self.descriptors.dim,
                found: descriptor.len(),
            });
        }
        if descriptor.iter().any(|v| !v.is_finite()) {
            return Err(FeatureSetError::NonFiniteDescriptor);
        }
        self.keypoints.push(kp);
        self.descriptors.data.extend_from_slice(descriptor);
        Ok(())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn width(&self) -> T {
        self.width
    }

    pub fn height(&self) -> T {
        self.height
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.descriptors.dim()
    }

    pub fn keypoint(&self, i: usize) -> &Keypoint<T> {
        &self.keypoints[i]
    }

    pub fn keypoints(&self) -> &[Keypoint<T>] {
        &self.keypoints
    }

    pub fn descriptor(&self, i: usize) -> &[T] {
        self.descriptors.row(i)
    }

    /// New set keeping only keypoints strictly inside `[x0,x1] x [y0,y1]`.
    pub fn crop_to_bbox(&self, bbox: [T; 4]) -> Self {
        let [x0, y0, x1, y1] = bbox;
        let mut out = Self {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            keypoints: Vec::new(),
            descriptors: Descriptors::new(self.descriptors.dim),
        };
        for (i, kp) in self.keypoints.iter().enumerate() {
            if kp.x > x0 && kp.x < x1 && kp.y > y0 && kp.y < y1 {
                out.keypoints.push(*kp);
                out.descriptors.data.extend_from_slice(self.descriptor(i));
            }
        }
        out
    }
}

/// A descriptor correspondence from set 1 into set 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match<T> {
    pub idx1: usize,
    pub idx2: usize,
    /// Euclidean descriptor distance.
    pub distance: T,
    /// Nearest over second-nearest distance ratio; 0 when the search pool
    /// held a single candidate.
    pub ratio: T,
}

/// Error raised when the search set cannot support a ratio test.
#[derive(Debug, Error)]
pub enum MatchError {
    #[error("ratio test needs at least 2 features in the search set, found {found}")]
    InsufficientFeatures { found: usize },
}

fn sq_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    acc
}

/// Ratio-test matching of every keypoint of `p1` against all of `p2`.
///
/// Each keypoint of `p1` yields at most one match: its nearest neighbor in
/// `p2` by Euclidean descriptor distance, kept only when the nearest over
/// second-nearest ratio is at or below `ratio_threshold`. Nearest-neighbor
/// ties resolve to the lowest index in `p2`. Output is ordered by `idx1`.
pub fn ratio_test_match<T: Scalar>(
    p1: &FeatureSet<T>,
    p2: &FeatureSet<T>,
    ratio_threshold: T,
) -> Result<Vec<Match<T>>, MatchError> {
    if p2.len() < 2 {
        return Err(MatchError::InsufficientFeatures { found: p2.len() });
    }
    let mut out = Vec::new();
    for i in 0..p1.len() {
        let d1 = p1.descriptor(i);
        let mut best = T::infinity();
        let mut best_j = 0usize;
        let mut second = T::infinity();
        for j in 0..p2.len() {
            let d = sq_distance(d1, p2.descriptor(j));
            if d < best {
                second = best;
                best = d;
                best_j = j;
            } else if d < second {
                second = d;
            }
        }
        // An exact tie (best == second) gives ratio 1 and fails any
        // threshold below 1; duplicate zero-distance candidates give NaN
        // and fail as well.
        let ratio = (best / second).sqrt();
        if ratio <= ratio_threshold {
            out.push(Match { idx1: i, idx2: best_j, distance: best.sqrt(), ratio });
        }
    }
    Ok(out)
}

/// Nearest-neighbor matching restricted to a patch pair: every keypoint of
/// `p1` inside `r1` is matched against only the keypoints of `p2` inside
/// `r2`, with no ratio test. An empty `r2` population yields no matches.
pub fn restricted_match<T: Scalar>(
    p1: &FeatureSet<T>,
    r1: &Patch<T>,
    p2: &FeatureSet<T>,
    r2: &Patch<T>,
) -> Vec<Match<T>> {
    let pool: Vec<usize> = (0..p2.len())
        .filter(|&j| {
            let kp = p2.keypoint(j);
            r2.contains(kp.x, kp.y)
        })
        .collect();
    if pool.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..p1.len() {
        let kp = p1.keypoint(i);
        if !r1.contains(kp.x, kp.y) {
            continue;
        }
        let d1 = p1.descriptor(i);
        let mut best = T::infinity();
        let mut best_j = pool[0];
        let mut second = T::infinity();
        for &j in &pool {
            let d = sq_distance(d1, p2.descriptor(j));
            if d < best {
                second = best;
                best = d;
                best_j = j;
            } else if d < second {
                second = d;
            }
        }
        let ratio = if second.is_finite() && second > T::zero() {
            (best / second).sqrt()
        } else {
            T::zero()
        };
        out.push(Match { idx1: i, idx2: best_j, distance: best.sqrt(), ratio });
    }
    out
}

/// On-disk encoding selector for [`save_features`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Text,
    Binary,
}

/// Errors raised by the feature file reader and writer.
#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: record {record}: {reason}")]
    Format { path: PathBuf, record: usize, reason: String },
    #[error("{path}: record {record}: descriptor has {found} values, expected {expected}")]
    Dimension { path: PathBuf, record: usize, expected: usize, found: usize },
}

impl FeatureFileError {
    fn format(path: &Path, record: usize, reason: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), record, reason: reason.into() }
    }
}

/// Loads a feature set from either file form, sniffing the binary magic.
pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureSet<T>, FeatureFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|source| FeatureFileError::Io { path: path.to_path_buf(), source })?;
    if bytes.len() >= BINARY_MAGIC.len() && &bytes[..BINARY_MAGIC.len()] == BINARY_MAGIC {
        parse_binary(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| FeatureFileError::format(path, 0, "file is neither TPFV1 nor UTF-8 text"))?;
        parse_text(path, text)
    }
}

/// Writes a feature set in the requested form.
pub fn save_features<T: Scalar>(
    set: &FeatureSet<T>,
    path: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<(), FeatureFileError> {
    let path = path.as_ref();
    let bytes = match format {
        FeatureFormat::Text => render_text(set).into_bytes(),
        FeatureFormat::Binary => render_binary(set),
    };
    std::fs::write(path, bytes)
        .map_err(|source| FeatureFileError::Io { path: path.to_path_buf(), source })
}

fn render_text<T: Scalar>(set: &FeatureSet<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        set.image_id,
        set.width,
        set.height,
        set.len(),
        set.dim()
    ));
    for i in 0..set.len() {
        let kp = set.keypoint(i);
        out.push_str(&format!("{} {} {} {}", kp.x, kp.y, kp.scale, kp.orientation));
        for v in set.descriptor(i) {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

fn render_binary<T: Scalar>(set: &FeatureSet<T>) -> Vec<u8> {
    let dim = set.dim();
    let mut out = Vec::with_capacity(13 + set.len() * (4 + dim) * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    let f = |v: T| (v.to_f32().unwrap_or(f32::NAN)).to_le_bytes();
    for i in 0..set.len() {
        let kp = set.keypoint(i);
        out.extend_from_slice(&f(kp.x));
        out.extend_from_slice(&f(kp.y));
        out.extend_from_slice(&f(kp.scale));
        out.extend_from_slice(&f(kp.orientation));
        for &v in set.descriptor(i) {
            out.extend_from_slice(&f(v));
        }
    }
    out
}

fn parse_scalar<T: Scalar>(token: &str) -> Option<T> {
    token.parse::<f64>().ok().and_then(T::from_f64)
}

fn parse_text<T: Scalar>(path: &Path, text: &str) -> Result<FeatureSet<T>, FeatureFileError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| FeatureFileError::format(path, 0, "missing header line"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(FeatureFileError::format(
            path,
            0,
            format!("header has {} fields, expected `image_id width height count dim`", tokens.len()),
        ));
    }
    let width: T = parse_scalar(tokens[1])
        .ok_or_else(|| FeatureFileError::format(path, 0, "unparsable width"))?;
    let height: T = parse_scalar(tokens[2])
        .ok_or_else(|| FeatureFileError::format(path, 0, "unparsable height"))?;
    let count: usize = tokens[3]
        .parse()
        .map_err(|_| FeatureFileError::format(path, 0, "unparsable count"))?;
    let dim: usize = tokens[4]
        .parse()
        .map_err(|_| FeatureFileError::format(path, 0, "unparsable dim"))?;
    let mut set = FeatureSet::new(tokens[0], width, height, dim)
        .map_err(|e| FeatureFileError::format(path, 0, e.to_string()))?;

    for record in 1..=count {
        let line = lines.next().ok_or_else(|| {
            FeatureFileError::format(path, record, format!("missing record ({count} expected)"))
        })?;
        let mut values = Vec::with_capacity(4 + dim);
        for token in line.split_whitespace() {
            let v: T = parse_scalar(token).ok_or_else(|| {
                FeatureFileError::format(path, record, format!("unparsable value {token:?}"))
            })?;
            values.push(v);
        }
        if values.len() != 4 + dim {
            return Err(FeatureFileError::Dimension {
                path: path.to_path_buf(),
                record,
                expected: dim,
                found: values.len().saturating_sub(4),
            });
        }
        let kp = Keypoint::new(values[0], values[1], values[2], values[3]);
        set.push(kp, &values[4..]).map_err(|e| match e {
            FeatureSetError::DimensionMismatch { expected, found } => FeatureFileError::Dimension {
                path: path.to_path_buf(),
                record,
                expected,
                found,
            },
            other => FeatureFileError::format(path, record, other.to_string()),
        })?;
    }
    if lines.next().is_some() {
        return Err(FeatureFileError::format(
            path,
            count + 1,
            "trailing content after the declared record count",
        ));
    }
    Ok(set)
}

fn parse_binary<T: Scalar>(path: &Path, bytes: &[u8]) -> Result<FeatureSet<T>, FeatureFileError> {
    let mut offset = BINARY_MAGIC.len();
    let read_u32 = |offset: &mut usize| -> Result<u32, FeatureFileError> {
        let end = *offset + 4;
        if end > bytes.len() {
            return Err(FeatureFileError::format(path, 0, "truncated header"));
        }
        let v = u32::from_le_bytes(bytes[*offset..end].try_into().unwrap());
        *offset = end;
        Ok(v)
    };
    let count = read_u32(&mut offset)? as usize;
    let dim = read_u32(&mut offset)? as usize;
    let record_len = (4 + dim) * 4;
    let expected = offset + count * record_len;
    if bytes.len() != expected {
        return Err(FeatureFileError::format(
            path,
            0,
            format!("file holds {} bytes, expected {expected}", bytes.len()),
        ));
    }

    // The binary form stores no image id or extent: derive the id from the
    // file stem and the extent from the keypoint bounding box.
    let image_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty() && !s.chars().any(char::is_whitespace))
        .unwrap_or("features")
        .to_string();

    let mut records: Vec<(Keypoint<T>, Vec<T>)> = Vec::with_capacity(count);
    let mut max_x = T::zero();
    let mut max_y = T::zero();
    for record in 1..=count {
        let mut fields = Vec::with_capacity(4 + dim);
        for k in 0..(4 + dim) {
            let start = offset + k * 4;
            let raw = f32::from_le_bytes(bytes[start..start + 4].try_into().unwrap());
            let v = T::from_f32(raw).ok_or_else(|| {
                FeatureFileError::format(path, record, "unrepresentable value")
            })?;
            fields.push(v);
        }
        offset += record_len;
        let kp = Keypoint::new(fields[0], fields[1], fields[2], fields[3]);
        max_x = max_x.max(kp.x);
        max_y = max_y.max(kp.y);
        records.push((kp, fields[4..].to_vec()));
    }

    let mut set = FeatureSet::new(image_id, max_x.ceil(), max_y.ceil(), dim)
        .map_err(|e| FeatureFileError::format(path, 0, e.to_string()))?;
    for (record, (kp, desc)) in records.into_iter().enumerate() {
        set.push(kp, &desc)
            .map_err(|e| FeatureFileError::format(path, record + 1, e.to_string()))?;
    }
    Ok(set)
}
