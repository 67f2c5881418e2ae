//! Normalized bounding-box algebra.
//!
//! All boxes live in normalized image coordinates: `(x1, y1)` is the
//! top-left corner, `(x2, y2)` the bottom-right, every coordinate in
//! `[0, 1]`. Areas are therefore fractions of the frame, which makes the
//! "ROI to feature area ratio" rules direct comparisons against box area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized coordinates, `x1 <= x2`, `y1 <= y2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// Half-width of the fallback box used when a predicted box degenerates
/// (top-left crossing bottom-right after clamping). Half a cell on the
/// default 64-cell grid.
pub const DEGENERATE_HALF_EXTENT: f64 = 1.0 / 128.0;

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

impl BBox {
    /// The whole frame.
    pub const FULL: BBox = BBox {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    /// A validated box. Coordinate order and range violations are
    /// programmer errors.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        let b = BBox { x1, y1, x2, y2 };
        assert!(b.is_valid(), "invalid bbox ({x1}, {y1}, {x2}, {y2})");
        b
    }

    /// Clamp arbitrary finite corners into a valid box: each coordinate is
    /// clamped to `[0, 1]`, then any crossed axis collapses to its midpoint
    /// extended by [`DEGENERATE_HALF_EXTENT`] on both sides.
    pub fn clamped(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        let (x1, y1, x2, y2) = (clamp01(x1), clamp01(y1), clamp01(x2), clamp01(y2));
        let (x1, x2) = uncross(x1, x2);
        let (y1, y2) = uncross(y1, y2);
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        self.x1.is_finite()
            && self.y1.is_finite()
            && self.x2.is_finite()
            && self.y2.is_finite()
            && 0.0 <= self.x1
            && self.x1 <= self.x2
            && self.x2 <= 1.0
            && 0.0 <= self.y1
            && self.y1 <= self.y2
            && self.y2 <= 1.0
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Fraction of the frame covered by the box.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Smallest box containing both inputs.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// True if `other` lies inside this box (within `eps` per coordinate).
    pub fn contains(&self, other: &BBox, eps: f64) -> bool {
        self.x1 <= other.x1 + eps
            && self.y1 <= other.y1 + eps
            && self.x2 >= other.x2 - eps
            && self.y2 >= other.y2 - eps
    }

    /// Move all corners outward by `phi`, clamped back to the frame.
    pub fn pad(&self, phi: f64) -> BBox {
        assert!(phi >= 0.0, "padding must be non-negative, got {phi}");
        BBox {
            x1: clamp01(self.x1 - phi),
            y1: clamp01(self.y1 - phi),
            x2: clamp01(self.x2 + phi),
            y2: clamp01(self.y2 + phi),
        }
    }

    /// Move all corners inward by `phi`; axes that would cross collapse to
    /// their midpoint. Inverse of [`BBox::pad`] on interior boxes.
    pub fn shrink(&self, phi: f64) -> BBox {
        assert!(phi >= 0.0, "shrink must be non-negative, got {phi}");
        let (cx, cy) = self.center();
        BBox {
            x1: (self.x1 + phi).min(cx),
            y1: (self.y1 + phi).min(cy),
            x2: (self.x2 - phi).max(cx),
            y2: (self.y2 - phi).max(cy),
        }
    }

    /// Grow the box about its center until `area >= min_ratio`, preserving
    /// the aspect ratio where the frame boundary permits. The result always
    /// contains the input and is slid (not cut) back inside the frame, so
    /// the area guarantee survives clamping.
    pub fn enforce_min_ratio(&self, min_ratio: f64) -> BBox {
        assert!(
            min_ratio > 0.0 && min_ratio <= 1.0,
            "min_ratio must be in (0, 1], got {min_ratio}"
        );
        if self.area() >= min_ratio {
            return *self;
        }
        let (w, h) = (self.width(), self.height());
        let (mut new_w, mut new_h) = if w > 0.0 && h > 0.0 {
            let scale = (min_ratio / (w * h)).sqrt();
            (w * scale, h * scale)
        } else if w > 0.0 {
            let new_w = w.max(min_ratio.sqrt());
            (new_w, min_ratio / new_w)
        } else if h > 0.0 {
            let new_h = h.max(min_ratio.sqrt());
            (min_ratio / new_h, new_h)
        } else {
            (min_ratio.sqrt(), min_ratio.sqrt())
        };
        // A dimension capped by the frame gives up its aspect share; the
        // other grows to keep the area target.
        if new_w > 1.0 {
            new_w = 1.0;
            new_h = new_h.max(min_ratio).min(1.0);
        }
        if new_h > 1.0 {
            new_h = 1.0;
            new_w = new_w.max(min_ratio).min(1.0);
        }
        let (cx, cy) = self.center();
        let mut x1 = cx - new_w / 2.0;
        let mut y1 = cy - new_h / 2.0;
        // Slide into the frame; new_w, new_h <= 1 so a shift always fits.
        x1 = x1.clamp(0.0, 1.0 - new_w);
        y1 = y1.clamp(0.0, 1.0 - new_h);
        BBox {
            x1,
            y1,
            x2: x1 + new_w,
            y2: y1 + new_h,
        }
    }

    /// Discretize onto an `h x w` feature grid: floor on the top-left
    /// corner, ceiling on the bottom-right, never empty.
    pub fn to_grid(&self, h: usize, w: usize) -> GridRect {
        assert!(h >= 1 && w >= 1, "grid must be at least 1x1");
        let row0 = ((self.y1 * h as f64).floor() as usize).min(h - 1);
        let col0 = ((self.x1 * w as f64).floor() as usize).min(w - 1);
        let row1 = ((self.y2 * h as f64).ceil() as usize).clamp(row0 + 1, h);
        let col1 = ((self.x2 * w as f64).ceil() as usize).clamp(col0 + 1, w);
        GridRect {
            row0,
            col0,
            row1,
            col1,
        }
    }
}

fn uncross(lo: f64, hi: f64) -> (f64, f64) {
    if lo > hi {
        let mid = (lo + hi) / 2.0;
        (
            clamp01(mid - DEGENERATE_HALF_EXTENT),
            clamp01(mid + DEGENERATE_HALF_EXTENT),
        )
    } else {
        (lo, hi)
    }
}

/// Cell-index rectangle on a feature grid, inclusive start, exclusive end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridRect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl GridRect {
    pub fn full(h: usize, w: usize) -> Self {
        GridRect {
            row0: 0,
            col0: 0,
            row1: h,
            col1: w,
        }
    }

    pub fn height(&self) -> usize {
        self.row1 - self.row0
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn cells(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains_cell(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row1 && col >= self.col0 && col < self.col1
    }

    pub fn fits(&self, h: usize, w: usize) -> bool {
        self.row0 < self.row1 && self.col0 < self.col1 && self.row1 <= h && self.col1 <= w
    }

    /// Row-major iteration over the covered `(row, col)` cells.
    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.col0..self.col1;
        (self.row0..self.row1).flat_map(move |r| cols.clone().map(move |c| (r, c)))
    }
}

/// The union of per-object motion paths: for each object `i`, the path is
/// `union(prev[i], pred[i])`, and the result is the union over objects.
///
/// Errors with [`Error::NoLiveObjects`] on empty input so that callers can
/// fall back to a full-frame region.
pub fn motion_path_roi(prev: &[BBox], pred: &[BBox]) -> Result<BBox> {
    assert_eq!(
        prev.len(),
        pred.len(),
        "motion path needs one predicted box per previous box"
    );
    let mut paths = prev.iter().zip(pred).map(|(a, b)| a.union(b));
    let first = paths.next().ok_or(Error::NoLiveObjects)?;
    Ok(paths.fold(first, |acc, b| acc.union(&b)))
}
