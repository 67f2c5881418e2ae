//! Evaluation metrics and timing instrumentation.
//!
//! Region similarity J is plain IoU over grid cells. Contour accuracy F is
//! an F-measure over mask boundary cells, where a boundary cell counts as
//! matched if it lies within a Chebyshev-distance tolerance of the other
//! mask's boundary (a dilation-based approximation of the usual contour
//! metric, 1 cell by default at grid scale).

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::LabelMap;

/// Timing label for affinity + value retrieval.
pub const MATCH_LABEL: &str = "match";
/// Timing label for per-object assignment and merging.
pub const ASSIGN_LABEL: &str = "assign";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize) -> Self {
        BinaryMask {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    pub fn from_labels(labels: &LabelMap, id: u8) -> Self {
        BinaryMask {
            h: labels.h,
            w: labels.w,
            data: labels.data.iter().map(|&v| v == id).collect(),
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> bool {
        self.data[row * self.w + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Chebyshev dilation by `radius` cells (3x3 structuring element
    /// applied `radius` times).
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        let mut cur = self.clone();
        for _ in 0..radius {
            let mut next = cur.clone();
            for row in 0..self.h {
                for col in 0..self.w {
                    if cur.cell(row, col) {
                        for dr in -1i64..=1 {
                            for dc in -1i64..=1 {
                                let r = row as i64 + dr;
                                let c = col as i64 + dc;
                                if r >= 0 && r < self.h as i64 && c >= 0 && c < self.w as i64 {
                                    next.data[r as usize * self.w + c as usize] = true;
                                }
                            }
                        }
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Cells of the mask with at least one 4-neighbor outside it; the grid
    /// edge counts as outside.
    pub fn boundary(&self) -> BinaryMask {
        let mut out = BinaryMask::new(self.h, self.w);
        for row in 0..self.h {
            for col in 0..self.w {
                if !self.cell(row, col) {
                    continue;
                }
                let edge = row == 0 || row + 1 == self.h || col == 0 || col + 1 == self.w;
                let exposed = edge
                    || !self.cell(row - 1, col)
                    || !self.cell(row + 1, col)
                    || !self.cell(row, col - 1)
                    || !self.cell(row, col + 1);
                if exposed {
                    out.data[row * self.w + col] = true;
                }
            }
        }
        out
    }
}

fn check_shapes(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.h != b.h || a.w != b.w {
        return Err(Error::MaskShapeMismatch {
            left_h: a.h,
            left_w: a.w,
            right_h: b.h,
            right_w: b.w,
        });
    }
    Ok(())
}

/// Intersection over union. Both masks empty counts as a perfect 1 (absent
/// object correctly predicted absent); exactly one empty is 0.
pub fn region_j(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    check_shapes(pred, truth)?;
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&p, &t) in pred.data.iter().zip(&truth.data) {
        intersection += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    })
}

/// Boundary F-measure at a Chebyshev-distance tolerance in cells.
pub fn boundary_f(pred: &BinaryMask, truth: &BinaryMask, tol: usize) -> Result<f64> {
    check_shapes(pred, truth)?;
    match (pred.is_empty(), truth.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let pred_b = pred.boundary();
    let truth_b = truth.boundary();
    let pred_reach = pred_b.dilate(tol);
    let truth_reach = truth_b.dilate(tol);

    let matched = |cells: &BinaryMask, reach: &BinaryMask| {
        cells
            .data
            .iter()
            .zip(&reach.data)
            .filter(|&(&c, &r)| c && r)
            .count()
    };
    let precision = matched(&pred_b, &truth_reach) as f64 / pred_b.count() as f64;
    let recall = matched(&truth_b, &pred_reach) as f64 / truth_b.count() as f64;
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct TimingSummary {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Wall-clock accumulation per label. Scopes record on drop; the table is
/// internally locked so nested scopes with distinct labels work.
#[derive(Debug, Default)]
pub struct TimingTable {
    samples: Mutex<BTreeMap<String, Vec<f64>>>,
}

impl TimingTable {
    pub fn new() -> Self {
        TimingTable::default()
    }

    pub fn scope(&self, label: &str) -> TimingScope<'_> {
        TimingScope {
            table: self,
            label: label.to_string(),
            start: Instant::now(),
        }
    }

    pub fn record(&self, label: &str, ms: f64) {
        self.samples
            .lock()
            .unwrap()
            .entry(label.to_string())
            .or_default()
            .push(ms);
    }

    pub fn is_empty(&self) -> bool {
        self.samples.lock().unwrap().is_empty()
    }

    pub fn count(&self, label: &str) -> usize {
        self.samples
            .lock()
            .unwrap()
            .get(label)
            .map_or(0, Vec::len)
    }

    pub fn samples(&self, label: &str) -> Vec<f64> {
        self.samples
            .lock()
            .unwrap()
            .get(label)
            .cloned()
            .unwrap_or_default()
    }

    pub fn median(&self, label: &str) -> Option<f64> {
        median_of(&self.samples(label))
    }

    pub fn summary(&self) -> BTreeMap<String, TimingSummary> {
        self.samples
            .lock()
            .unwrap()
            .iter()
            .map(|(label, values)| {
                (
                    label.clone(),
                    TimingSummary {
                        count: values.len(),
                        mean_ms: values.iter().sum::<f64>() / values.len() as f64,
                        median_ms: median_of(values).unwrap_or(0.0),
                    },
                )
            })
            .collect()
    }
}

pub fn median_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

pub struct TimingScope<'a> {
    table: &'a TimingTable,
    label: String,
    start: Instant,
}

impl Drop for TimingScope<'_> {
    fn drop(&mut self) {
        let ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.table.record(&self.label, ms);
    }
}

/// Quality and timing results for one sequence. J/F are averaged over the
/// evaluated frames (the given first frame is excluded) per object, then
/// over objects.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequence: String,
    pub num_objects: usize,
    /// `per_object_j[obj][i]`: J of object `obj+1` on the i-th evaluated frame.
    pub per_object_j: Vec<Vec<f64>>,
    pub per_object_f: Vec<Vec<f64>>,
    pub object_j_mean: Vec<f64>,
    pub object_f_mean: Vec<f64>,
    pub j_mean: f64,
    pub f_mean: f64,
    /// `(j_mean + f_mean) / 2`.
    pub jf: f64,
    pub timing: BTreeMap<String, TimingSummary>,
    pub memory_entries: usize,
}

/// Score predicted label maps against ground truth. Frame 0 is the given
/// frame and is skipped; frames without truth are skipped.
pub fn evaluate_sequence(
    sequence: &str,
    predictions: &[LabelMap],
    truths: &[Option<&LabelMap>],
    num_objects: usize,
    tol: usize,
) -> Result<EvalReport> {
    assert_eq!(predictions.len(), truths.len());
    let mut per_object_j = vec![Vec::new(); num_objects];
    let mut per_object_f = vec![Vec::new(); num_objects];
    for (frame, (pred, truth)) in predictions.iter().zip(truths).enumerate() {
        if frame == 0 {
            continue;
        }
        let Some(truth) = truth else { continue };
        for obj in 0..num_objects {
            let id = (obj + 1) as u8;
            let pred_mask = BinaryMask::from_labels(pred, id);
            let truth_mask = BinaryMask::from_labels(truth, id);
            per_object_j[obj].push(region_j(&pred_mask, &truth_mask)?);
            per_object_f[obj].push(boundary_f(&pred_mask, &truth_mask, tol)?);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let object_j_mean: Vec<f64> = per_object_j.iter().map(|v| mean(v)).collect();
    let object_f_mean: Vec<f64> = per_object_f.iter().map(|v| mean(v)).collect();
    let j_mean = mean(&object_j_mean);
    let f_mean = mean(&object_f_mean);
    Ok(EvalReport {
        sequence: sequence.to_string(),
        num_objects,
        per_object_j,
        per_object_f,
        object_j_mean,
        object_f_mean,
        j_mean,
        f_mean,
        jf: (j_mean + f_mean) / 2.0,
        timing: BTreeMap::new(),
        memory_entries: 0,
    })
}

/// One CSV row per sequence: `seq, obj, J_mean, F_mean, JF, match_ms_med,
/// assign_ms_med, mem_entries`, where `obj` is the object count.
pub fn write_reports_csv(out: impl std::io::Write, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seq",
        "obj",
        "J_mean",
        "F_mean",
        "JF",
        "match_ms_med",
        "assign_ms_med",
        "mem_entries",
    ])
    .map_err(|e| Error::Dataset(e.to_string()))?;
    for r in reports {
        let med = |label: &str| {
            r.timing
                .get(label)
                .map_or_else(|| "".to_string(), |t| format!("{:.6}", t.median_ms))
        };
        w.write_record([
            r.sequence.clone(),
            r.num_objects.to_string(),
            format!("{:.6}", r.j_mean),
            format!("{:.6}", r.f_mean),
            format!("{:.6}", r.jf),
            med(MATCH_LABEL),
            med(ASSIGN_LABEL),
            r.memory_entries.to_string(),
        ])
        .map_err(|e| Error::Dataset(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_json(out: impl std::io::Write, reports: &[EvalReport]) -> Result<()> {
    serde_json::to_writer_pretty(out, reports)?;
    Ok(())
}
