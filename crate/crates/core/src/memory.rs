//! Motion-path memory.
//!
//! The bank accumulates `(key, value)` cell features over time. In
//! motion-path mode a write is restricted to the cells inside the united
//! motion paths of the tracked objects, which is where the next frame's
//! queries will land; everything else is redundant context. The very first
//! frame (the ground-truth frame) is always written in full so the bank
//! starts with complete background coverage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, GridRect};
use crate::matching::FeatureGrid;

/// Which cells a memory write may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryMode {
    FullFrame,
    MotionPath,
}

/// Write cadence and mode.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MemoryPolicy {
    /// Frames between writes; frame indices divisible by the interval are
    /// written (frame 0 always qualifies).
    pub update_interval: usize,
    pub mode: MemoryMode,
}

impl MemoryPolicy {
    pub fn new(update_interval: usize, mode: MemoryMode) -> Self {
        assert!(update_interval >= 1, "update interval must be >= 1");
        MemoryPolicy {
            update_interval,
            mode,
        }
    }

    pub fn should_update(&self, frame_index: usize) -> bool {
        frame_index % self.update_interval == 0
    }
}

/// Where a memory entry came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub frame: u32,
    pub row: u16,
    pub col: u16,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MemoryStats {
    pub entries: usize,
    pub bytes: usize,
    /// One `(frame_index, entries_written)` pair per write, in write order.
    pub per_frame: Vec<(u32, usize)>,
}

/// Flat store of key/value feature vectors with per-entry provenance.
#[derive(Clone, Debug)]
pub struct MemoryBank {
    key_dim: usize,
    value_dim: usize,
    keys: Vec<f32>,
    values: Vec<f32>,
    provenance: Vec<Provenance>,
    writes: Vec<(u32, usize)>,
    max_entries: Option<usize>,
}

impl MemoryBank {
    pub fn new(key_dim: usize, value_dim: usize) -> Self {
        assert!(key_dim >= 1 && value_dim >= 1, "feature dims must be >= 1");
        MemoryBank {
            key_dim,
            value_dim,
            keys: Vec::new(),
            values: Vec::new(),
            provenance: Vec::new(),
            writes: Vec::new(),
            max_entries: None,
        }
    }

    /// Safety valve for unbounded growth; entries past the cap are dropped
    /// with a warning. Defaults to unlimited.
    pub fn with_max_entries(mut self, max_entries: Option<usize>) -> Self {
        self.max_entries = max_entries;
        self
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn key(&self, index: usize) -> &[f32] {
        &self.keys[index * self.key_dim..(index + 1) * self.key_dim]
    }

    pub fn value(&self, index: usize) -> &[f32] {
        &self.values[index * self.value_dim..(index + 1) * self.value_dim]
    }

    pub fn keys_flat(&self) -> &[f32] {
        &self.keys
    }

    pub fn values_flat(&self) -> &[f32] {
        &self.values
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Append one frame's features. `labels` holds one `value_dim` vector
    /// per grid cell, row-major. In motion-path mode only cells inside
    /// `roi` are written; frame 0 is always written full-frame.
    ///
    /// Returns the number of appended entries.
    pub fn update(
        &mut self,
        grid: &FeatureGrid,
        labels: &[f32],
        frame_index: usize,
        roi: &BBox,
        mode: MemoryMode,
    ) -> Result<usize> {
        let cells = grid.h * grid.w;
        if labels.len() != cells * self.value_dim {
            return Err(Error::GridLabelMismatch {
                cells: cells * self.value_dim,
                labels: labels.len(),
            });
        }
        assert_eq!(grid.key_dim, self.key_dim, "grid/bank key dim mismatch");

        let rect = if frame_index == 0 || mode == MemoryMode::FullFrame {
            GridRect::full(grid.h, grid.w)
        } else {
            roi.to_grid(grid.h, grid.w)
        };

        let mut appended = 0;
        for (row, col) in rect.iter_cells() {
            if let Some(cap) = self.max_entries {
                if self.len() >= cap {
                    log::warn!(
                        "memory bank hit max_entries={cap} at frame {frame_index}; dropping the rest of the write"
                    );
                    break;
                }
            }
            let cell = row * grid.w + col;
            self.keys.extend_from_slice(grid.key(row, col));
            self.values
                .extend_from_slice(&labels[cell * self.value_dim..(cell + 1) * self.value_dim]);
            self.provenance.push(Provenance {
                frame: frame_index as u32,
                row: row as u16,
                col: col as u16,
            });
            appended += 1;
        }
        self.writes.push((frame_index as u32, appended));
        Ok(appended)
    }

    pub fn stats(&self) -> MemoryStats {
        MemoryStats {
            entries: self.len(),
            bytes: self.len() * (self.key_dim + self.value_dim) * std::mem::size_of::<f32>(),
            per_frame: self.writes.clone(),
        }
    }

    /// Debug dump: one line per entry, `frame row col | key... | value...`.
    /// Not a stability-guaranteed format.
    pub fn dump_text(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        for (i, p) in self.provenance.iter().enumerate() {
            write!(out, "{} {} {} |", p.frame, p.row, p.col)?;
            for v in self.key(i) {
                write!(out, " {v}")?;
            }
            write!(out, " |")?;
            for v in self.value(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::FeatureGrid;
    use proptest::prelude::*;

    fn grid_with_labels(h: usize, w: usize, key_dim: usize, value_dim: usize) -> (FeatureGrid, Vec<f32>) {
        let mut grid = FeatureGrid::new(h, w, 4, key_dim);
        for (i, v) in grid.keys.iter_mut().enumerate() {
            *v = i as f32 * 0.125;
        }
        let labels: Vec<f32> = (0..h * w * value_dim).map(|i| (i % 7) as f32).collect();
        (grid, labels)
    }

    #[test]
    fn full_frame_roi_matches_full_frame_mode() {
        let (grid, labels) = grid_with_labels(6, 6, 3, 2);
        let mut path = MemoryBank::new(3, 2);
        let mut full = MemoryBank::new(3, 2);
        path.update(&grid, &labels, 4, &BBox::FULL, MemoryMode::MotionPath)
            .unwrap();
        full.update(&grid, &labels, 4, &BBox::FULL, MemoryMode::FullFrame)
            .unwrap();
        assert_eq!(path.len(), full.len());
        assert_eq!(path.keys_flat(), full.keys_flat());
        assert_eq!(path.values_flat(), full.values_flat());
    }

    #[test]
    fn motion_path_write_appends_exactly_the_roi_cells() {
        let (grid, labels) = grid_with_labels(8, 8, 3, 2);
        let roi = BBox::new(0.0, 0.0, 1.0, 0.5); // top half
        let mut bank = MemoryBank::new(3, 2);
        let appended = bank
            .update(&grid, &labels, 3, &roi, MemoryMode::MotionPath)
            .unwrap();
        assert_eq!(appended, roi.to_grid(8, 8).cells());
        assert_eq!(bank.len(), 32);
    }

    #[test]
    fn first_frame_is_always_full() {
        let (grid, labels) = grid_with_labels(4, 4, 3, 2);
        let tiny = BBox::new(0.0, 0.0, 0.1, 0.1);
        let mut bank = MemoryBank::new(3, 2);
        bank.update(&grid, &labels, 0, &tiny, MemoryMode::MotionPath)
            .unwrap();
        assert_eq!(bank.len(), 16);
    }

    #[test]
    fn should_update_follows_interval() {
        let every3 = MemoryPolicy::new(3, MemoryMode::MotionPath);
        let hits: Vec<usize> = (0..10).filter(|&f| every3.should_update(f)).collect();
        assert_eq!(hits, vec![0, 3, 6, 9]);

        let every1 = MemoryPolicy::new(1, MemoryMode::FullFrame);
        assert!((0..10).all(|f| every1.should_update(f)));

        let every5 = MemoryPolicy::new(5, MemoryMode::MotionPath);
        assert!(!every5.should_update(7));
    }

    #[test]
    fn stats_of_empty_bank() {
        let bank = MemoryBank::new(16, 4);
        let s = bank.stats();
        assert_eq!(s.entries, 0);
        assert_eq!(s.bytes, 0);
        assert!(s.per_frame.is_empty());
    }

    #[test]
    fn stats_counts_one_full_frame() {
        // 8x8 grid, Ck=16, Cv=4, 4-byte scalars: 64 entries, 64*(16+4)*4 bytes.
        let (grid, labels) = grid_with_labels(8, 8, 16, 4);
        let mut bank = MemoryBank::new(16, 4);
        bank.update(&grid, &labels, 0, &BBox::FULL, MemoryMode::FullFrame)
            .unwrap();
        let s = bank.stats();
        assert_eq!(s.entries, 64);
        assert_eq!(s.bytes, 5120);
        assert_eq!(s.per_frame, vec![(0, 64)]);
    }

    #[test]
    fn histogram_tracks_every_write() {
        let (grid, labels) = grid_with_labels(4, 4, 3, 2);
        let mut bank = MemoryBank::new(3, 2);
        bank.update(&grid, &labels, 0, &BBox::FULL, MemoryMode::FullFrame)
            .unwrap();
        bank.update(&grid, &labels, 3, &BBox::new(0.0, 0.0, 0.5, 0.5), MemoryMode::MotionPath)
            .unwrap();
        assert_eq!(bank.stats().per_frame.len(), 2);
    }

    #[test]
    fn label_size_mismatch_is_rejected() {
        let (grid, labels) = grid_with_labels(4, 4, 3, 2);
        let mut bank = MemoryBank::new(3, 2);
        let err = bank.update(&grid, &labels[..labels.len() - 1], 0, &BBox::FULL, MemoryMode::FullFrame);
        assert!(matches!(err, Err(Error::GridLabelMismatch { .. })));
    }

    #[test]
    fn max_entries_caps_growth() {
        let (grid, labels) = grid_with_labels(4, 4, 3, 2);
        let mut bank = MemoryBank::new(3, 2).with_max_entries(Some(10));
        bank.update(&grid, &labels, 0, &BBox::FULL, MemoryMode::FullFrame)
            .unwrap();
        assert_eq!(bank.len(), 10);
    }

    proptest! {
        #[test]
        fn motion_path_entries_are_a_subset_of_full_frame_entries(
            x1 in 0.0f64..0.9, y1 in 0.0f64..0.9, dw in 0.05f64..0.5, dh in 0.05f64..0.5
        ) {
            let roi = BBox::new(x1, y1, (x1 + dw).min(1.0), (y1 + dh).min(1.0));
            let (grid, labels) = grid_with_labels(8, 8, 3, 2);
            let mut path = MemoryBank::new(3, 2);
            let mut full = MemoryBank::new(3, 2);
            path.update(&grid, &labels, 2, &roi, MemoryMode::MotionPath).unwrap();
            full.update(&grid, &labels, 2, &roi, MemoryMode::FullFrame).unwrap();
            let full_set: std::collections::HashSet<_> = full.provenance().iter().copied().collect();
            for p in path.provenance() {
                prop_assert!(full_set.contains(p));
            }
            prop_assert!(path.len() <= full.len());
        }
    }
}
