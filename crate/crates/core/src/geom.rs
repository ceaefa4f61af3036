//! Axis-aligned patch geometry.

use crate::scalar::{count, lit, Scalar};

/// Axis-aligned rectangular image patch stored as a center with half-extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch<T> {
    pub center: [T; 2],
    pub half_w: T,
    pub half_h: T,
}

impl<T: Scalar> Patch<T> {
    pub fn new(center: [T; 2], half_w: T, half_h: T) -> Self {
        debug_assert!(center[0].is_finite() && center[1].is_finite());
        debug_assert!(half_w > T::zero() && half_h > T::zero());
        Self { center, half_w, half_h }
    }

    pub fn square(center: [T; 2], half: T) -> Self {
        Self::new(center, half, half)
    }

    pub fn min_x(&self) -> T {
        self.center[0] - self.half_w
    }

    pub fn max_x(&self) -> T {
        self.center[0] + self.half_w
    }

    pub fn min_y(&self) -> T {
        self.center[1] - self.half_h
    }

    pub fn max_y(&self) -> T {
        self.center[1] + self.half_h
    }

    pub fn width(&self) -> T {
        self.half_w + self.half_w
    }

    pub fn height(&self) -> T {
        self.half_h + self.half_h
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Point containment, edges inclusive.
    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.min_x() && x <= self.max_x() && y >= self.min_y() && y <= self.max_y()
    }

    /// Positive-area intersection. Patches that only share an edge or a
    /// corner do not overlap.
    pub fn overlaps(&self, other: &Self) -> bool {
        self.min_x() < other.max_x()
            && other.min_x() < self.max_x()
            && self.min_y() < other.max_y()
            && other.min_y() < self.max_y()
    }

    /// Positive-area intersection with the image rectangle `[0,w] x [0,h]`.
    pub fn intersects_image(&self, width: T, height: T) -> bool {
        self.min_x() < width
            && self.max_x() > T::zero()
            && self.min_y() < height
            && self.max_y() > T::zero()
    }

    /// Full containment in the image rectangle `[0,w] x [0,h]`.
    pub fn inside_image(&self, width: T, height: T) -> bool {
        self.min_x() >= T::zero()
            && self.max_x() <= width
            && self.min_y() >= T::zero()
            && self.max_y() <= height
    }

    /// Row-major index of the `grid` x `grid` sub-cell holding `(x, y)`.
    ///
    /// Points outside the patch clamp to the nearest edge cell, so callers
    /// that care about containment must check [`Patch::contains`] first.
    pub fn cell_of(&self, x: T, y: T, grid: usize) -> usize {
        let g = count::<T>(grid);
        let ix = clamp_cell(((x - self.min_x()) / self.width() * g).floor(), grid);
        let iy = clamp_cell(((y - self.min_y()) / self.height() * g).floor(), grid);
        iy * grid + ix
    }

    /// Bounding patch of a point set, each half-extent scaled by `margin`
    /// and floored at `min_half`. Returns `None` for an empty set.
    pub fn from_points<I>(points: I, margin: T, min_half: T) -> Option<Self>
    where
        I: IntoIterator<Item = [T; 2]>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let (mut min_x, mut max_x) = (first[0], first[0]);
        let (mut min_y, mut max_y) = (first[1], first[1]);
        for p in iter {
            min_x = min_x.min(p[0]);
            max_x = max_x.max(p[0]);
            min_y = min_y.min(p[1]);
            max_y = max_y.max(p[1]);
        }
        let half = lit::<T>(0.5);
        let cx = (min_x + max_x) * half;
        let cy = (min_y + max_y) * half;
        let hw = ((max_x - min_x) * half * margin).max(min_half);
        let hh = ((max_y - min_y) * half * margin).max(min_half);
        Some(Self::new([cx, cy], hw, hh))
    }
}

fn clamp_cell<T: Scalar>(v: T, grid: usize) -> usize {
    let i = v.to_isize().unwrap_or(0);
    i.clamp(0, grid as isize - 1) as usize
}

/// Shoelace area of a simple polygon.
pub fn polygon_area<T: Scalar>(poly: &[[T; 2]]) -> T {
    if poly.len() < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc = acc + a[0] * b[1] - b[0] * a[1];
    }
    (acc * lit(0.5)).abs()
}

/// Point membership in a convex polygon, edges inclusive. Vertices may wind
/// either way.
pub fn point_in_convex<T: Scalar>(poly: &[[T; 2]], p: [T; 2]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut sign = T::zero();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross.abs() == T::zero() {
            continue;
        }
        if sign == T::zero() {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Exact union area of a set of patches, by coordinate compression.
pub fn union_area<T: Scalar>(patches: &[Patch<T>]) -> T {
    if patches.is_empty() {
        return T::zero();
    }
    let mut xs: Vec<T> = Vec::with_capacity(patches.len() * 2);
    let mut ys: Vec<T> = Vec::with_capacity(patches.len() * 2);
    for p in patches {
        xs.push(p.min_x());
        xs.push(p.max_x());
        ys.push(p.min_y());
        ys.push(p.max_y());
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    xs.dedup();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ys.dedup();

    let half = lit::<T>(0.5);
    let mut area = T::zero();
    for ix in 0..xs.len().saturating_sub(1) {
        let (x0, x1) = (xs[ix], xs[ix + 1]);
        let mx = (x0 + x1) * half;
        for iy in 0..ys.len().saturating_sub(1) {
            let (y0, y1) = (ys[iy], ys[iy + 1]);
            let my = (y0 + y1) * half;
            if patches.iter().any(|p| p.contains(mx, my)) {
                area = area + (x1 - x0) * (y1 - y0);
            }
        }
    }
    area
}
