//! Dataset import/export.
//!
//! Label maps travel as 8-bit indexed PNGs, one file per frame, with
//! object ids as palette indices (index 0 is background) — the same layout
//! DAVIS-style directories use, so real annotation folders can be read
//! directly. A JSON sidecar carries per-frame truth boxes for synthetic
//! exports.
//!
//! For raster video input (`JPEGImages/<seq>/`), per-cell appearance is
//! handcrafted from patch statistics: mean RGB, RGB standard deviation,
//! and mean luma, normalized to `[0, 1]`, yielding the same key layout the
//! synthetic generator produces.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::synth::{build_key_grid, AppearanceField, LabelMap, LabeledFrame, SceneSpec};

/// Appearance dim of raster-derived features (mean RGB, std RGB, luma).
pub const RASTER_APPEARANCE_DIM: usize = 7;

/// The classic VOC/DAVIS 256-entry palette.
pub fn davis_palette() -> Vec<u8> {
    let mut palette = vec![0u8; 768];
    for i in 0..256usize {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut id = i;
        for shift in 0..8 {
            r |= (((id >> 0) & 1) << (7 - shift)) as u8;
            g |= (((id >> 1) & 1) << (7 - shift)) as u8;
            b |= (((id >> 2) & 1) << (7 - shift)) as u8;
            id >>= 3;
        }
        palette[3 * i] = r;
        palette[3 * i + 1] = g;
        palette[3 * i + 2] = b;
    }
    palette
}

pub fn save_mask_png(path: &Path, labels: &LabelMap) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), labels.w as u32, labels.h as u32);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(davis_palette());
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&labels.data)?;
    Ok(())
}

pub fn load_mask_png(path: &Path) -> Result<LabelMap> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Dataset(format!(
            "{}: expected an 8-bit indexed PNG, got {:?}/{:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(LabelMap {
        h: info.height as usize,
        w: info.width as usize,
        data: buf,
    })
}

/// Per-sequence truth boxes, `truth_boxes[frame][object]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceSidecar {
    pub sequence: String,
    pub num_objects: usize,
    pub truth_boxes: Vec<Vec<Option<BBox>>>,
}

/// Write a generated sequence in DAVIS layout:
/// `root/Annotations/<name>/00000.png ...` plus a `boxes.json` sidecar.
pub fn export_sequence(root: &Path, name: &str, frames: &[LabeledFrame]) -> Result<()> {
    let dir = root.join("Annotations").join(name);
    std::fs::create_dir_all(&dir)?;
    let mut sidecar = SequenceSidecar {
        sequence: name.to_string(),
        num_objects: frames
            .first()
            .map_or(0, |f| f.truth_boxes.len()),
        truth_boxes: Vec::with_capacity(frames.len()),
    };
    for (t, frame) in frames.iter().enumerate() {
        let labels = frame
            .labels
            .as_ref()
            .ok_or_else(|| Error::Dataset(format!("frame {t} has no labels to export")))?;
        save_mask_png(&dir.join(format!("{t:05}.png")), labels)?;
        sidecar.truth_boxes.push(frame.truth_boxes.clone());
    }
    let json = File::create(dir.join("boxes.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(json), &sidecar)?;
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<SequenceSidecar> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn sorted_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// All mask PNGs of a directory, in filename order.
pub fn load_mask_dir(dir: &Path) -> Result<Vec<LabelMap>> {
    sorted_files(dir, &["png"])?
        .iter()
        .map(|p| load_mask_png(p))
        .collect()
}

/// Majority-vote downsampling of an image-resolution mask onto the feature
/// grid; ties go to the lower label.
pub fn downsample_mask(mask: &LabelMap, grid_h: usize, grid_w: usize) -> LabelMap {
    let mut out = LabelMap::new(grid_h, grid_w);
    let cell_h = (mask.h as f64 / grid_h as f64).max(1.0);
    let cell_w = (mask.w as f64 / grid_w as f64).max(1.0);
    for row in 0..grid_h {
        for col in 0..grid_w {
            let r0 = (row as f64 * cell_h) as usize;
            let r1 = (((row + 1) as f64 * cell_h) as usize).clamp(r0 + 1, mask.h);
            let c0 = (col as f64 * cell_w) as usize;
            let c1 = (((col + 1) as f64 * cell_w) as usize).clamp(c0 + 1, mask.w);
            let mut counts = [0u32; 256];
            for r in r0..r1 {
                for c in c0..c1 {
                    counts[mask.cell(r, c) as usize] += 1;
                }
            }
            let mut best = (0u32, 0usize);
            for (id, &n) in counts.iter().enumerate() {
                if n > best.0 {
                    best = (n, id);
                }
            }
            out.set(row, col, best.1 as u8);
        }
    }
    out
}

/// Patch-statistics appearance field for an RGB raster at the given
/// stride. `gain` scales the statistics so that class distances spread
/// wide enough for a discriminative affinity softmax.
pub fn raster_appearance(image: &image::RgbImage, stride: usize, gain: f64) -> AppearanceField {
    assert!(stride >= 1);
    let (img_w, img_h) = image.dimensions();
    let grid_h = (img_h as usize).div_ceil(stride);
    let grid_w = (img_w as usize).div_ceil(stride);
    let mut field = AppearanceField::new(grid_h, grid_w, RASTER_APPEARANCE_DIM);
    for row in 0..grid_h {
        for col in 0..grid_w {
            let r0 = row * stride;
            let r1 = ((row + 1) * stride).min(img_h as usize);
            let c0 = col * stride;
            let c1 = ((col + 1) * stride).min(img_w as usize);
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            let mut sum = [0.0f64; 3];
            let mut sum_sq = [0.0f64; 3];
            for r in r0..r1 {
                for c in c0..c1 {
                    let px = image.get_pixel(c as u32, r as u32);
                    for ch in 0..3 {
                        let v = px[ch] as f64 / 255.0;
                        sum[ch] += v;
                        sum_sq[ch] += v * v;
                    }
                }
            }
            let dst = field.at_mut(row, col);
            let mut luma = 0.0;
            for ch in 0..3 {
                let mean = sum[ch] / count;
                let var = (sum_sq[ch] / count - mean * mean).max(0.0);
                dst[ch] = (gain * mean) as f32;
                dst[3 + ch] = (gain * var.sqrt()) as f32;
                luma += mean;
            }
            dst[6] = (gain * luma / 3.0) as f32;
        }
    }
    field
}

/// Key-extraction knobs for raster input.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterParams {
    pub stride: usize,
    pub position_weight: f64,
    pub appearance_gain: f64,
}

impl Default for RasterParams {
    fn default() -> Self {
        RasterParams {
            stride: 4,
            position_weight: 0.25,
            appearance_gain: 4.0,
        }
    }
}

fn resolve_davis_dir(root: &Path, kind: &str, sequence: &str) -> Option<PathBuf> {
    let direct = root.join(kind).join(sequence);
    if direct.is_dir() {
        return Some(direct);
    }
    let with_res = root.join(kind).join("480p").join(sequence);
    with_res.is_dir().then_some(with_res)
}

/// Sequence names found under `Annotations/` (or `Annotations/480p/`).
pub fn list_sequences(root: &Path) -> Result<Vec<String>> {
    let base = {
        let plain = root.join("Annotations");
        let with_res = plain.join("480p");
        if with_res.is_dir() {
            with_res
        } else if plain.is_dir() {
            plain
        } else {
            return Err(Error::Dataset(format!(
                "{}: no Annotations directory",
                root.display()
            )));
        }
    };
    let mut names: Vec<String> = std::fs::read_dir(&base)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    Ok(names)
}

/// Load one DAVIS-layout sequence: raster frames from
/// `JPEGImages/<seq>/` (jpg or png) and indexed masks from
/// `Annotations/<seq>/`. The first frame must have a mask; later masks are
/// optional and used only for scoring.
pub fn load_davis_sequence(
    root: &Path,
    sequence: &str,
    params: &RasterParams,
) -> Result<Vec<LabeledFrame>> {
    let img_dir = resolve_davis_dir(root, "JPEGImages", sequence)
        .ok_or_else(|| Error::Dataset(format!("no JPEGImages directory for `{sequence}`")))?;
    let mask_dir = resolve_davis_dir(root, "Annotations", sequence)
        .ok_or_else(|| Error::Dataset(format!("no Annotations directory for `{sequence}`")))?;

    let image_paths = sorted_files(&img_dir, &["jpg", "jpeg", "png"])?;
    if image_paths.is_empty() {
        return Err(Error::Dataset(format!("`{sequence}` has no frames")));
    }
    let mask_paths = sorted_files(&mask_dir, &["png"])?;
    if mask_paths.is_empty() {
        return Err(Error::Dataset(format!("`{sequence}` has no first-frame mask")));
    }
    // Masks are matched to frames by file stem.
    let mask_by_stem: std::collections::BTreeMap<String, &PathBuf> = mask_paths
        .iter()
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(|s| (s.to_string(), p)))
        .collect();

    let mut frames = Vec::with_capacity(image_paths.len());
    let mut num_objects = 0usize;
    for (t, img_path) in image_paths.iter().enumerate() {
        let rgb = image::open(img_path)?.to_rgb8();
        let field = raster_appearance(&rgb, params.stride, params.appearance_gain);
        let keys = build_key_grid(&field, params.stride, params.position_weight);
        let stem = img_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let labels = match mask_by_stem.get(&stem) {
            Some(path) => {
                let full = load_mask_png(path)?;
                Some(downsample_mask(&full, keys.h, keys.w))
            }
            None => None,
        };
        if t == 0 {
            let first = labels
                .as_ref()
                .ok_or_else(|| Error::Dataset(format!("`{sequence}`: frame 0 has no mask")))?;
            num_objects = first.max_label() as usize;
        }
        let truth_boxes: Vec<Option<BBox>> = match &labels {
            Some(map) => (1..=num_objects).map(|id| map.tight_box(id as u8)).collect(),
            None => vec![None; num_objects],
        };
        frames.push(LabeledFrame {
            keys,
            labels,
            truth_boxes: truth_boxes.clone(),
            analytic_boxes: truth_boxes,
        });
    }
    Ok(frames)
}

/// Input file for synthetic runs: named scenes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthInputFile {
    pub scenes: Vec<NamedScene>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedScene {
    pub name: String,
    pub spec: SceneSpec,
}

pub fn load_synth_input(path: &Path) -> Result<SynthInputFile> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
