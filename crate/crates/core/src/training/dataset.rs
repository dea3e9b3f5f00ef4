//! Training data drawn from toy-codec encodes.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_sequence, EncoderConfig};
use crate::coding_meta::{build_block_type_mask, build_qp_map, BlockType, FrameMeta, FrameType};
use crate::error::{Error, Result};
use crate::frame_io::{Frame420, Plane};

pub const DATASET_BIN: &str = "dataset.bin";
pub const DATASET_MANIFEST: &str = "dataset.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodingType {
    Intra,
    Inter,
}

/// One selected luma frame with everything a patch needs.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEntry {
    pub video: String,
    pub qp: u8,
    pub poc: u32,
    pub coding: CodingType,
    pub recon: Plane,
    pub pred: Plane,
    pub orig: Plane,
    pub meta: FrameMeta,
    /// Normalized QP per luma pixel.
    pub qp_map: Vec<f32>,
    pub skip: Vec<bool>,
}

impl FrameEntry {
    pub fn new(video: &str, qp: u8, recon: Plane, pred: Plane, orig: Plane, meta: FrameMeta) -> Result<Self> {
        if !recon.same_dims(&pred) || !recon.same_dims(&orig) {
            return Err(Error::Shape(format!("poc {}: recon, pred and original differ in size", meta.poc)));
        }
        let (w, h) = (recon.width(), recon.height());
        let qp_map = build_qp_map(&meta, w, h)?.values.iter().map(|&v| v as f32).collect();
        let skip = build_block_type_mask(&meta, w, h)?
            .into_iter()
            .map(|t| t == BlockType::Skip)
            .collect();
        Ok(FrameEntry {
            video: video.to_string(),
            qp,
            poc: meta.poc,
            coding: match meta.frame_type {
                FrameType::I => CodingType::Intra,
                FrameType::B => CodingType::Inter,
            },
            recon,
            pred,
            orig,
            meta,
            qp_map,
            skip,
        })
    }

    pub fn width(&self) -> usize {
        self.recon.width()
    }

    pub fn height(&self) -> usize {
        self.recon.height()
    }
}

/// A collection of frames of one coding type (or mixed, for the
/// prediction-unaware model).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleStore {
    pub entries: Vec<FrameEntry>,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn qps(&self) -> Vec<u8> {
        let mut q: Vec<u8> = self.entries.iter().map(|e| e.qp).collect();
        q.sort_unstable();
        q.dedup();
        q
    }

    /// Splits off the entries of the named videos.
    pub fn split_videos(&self, held_out: &[String]) -> (SampleStore, SampleStore) {
        let (val, train): (Vec<_>, Vec<_>) = self.entries.iter().cloned().partition(|e| held_out.contains(&e.video));
        (SampleStore { entries: train }, SampleStore { entries: val })
    }

    /// Holds out every `k`-th entry.
    pub fn split_every(&self, k: usize) -> (SampleStore, SampleStore) {
        let mut train = SampleStore::default();
        let mut val = SampleStore::default();
        for (i, e) in self.entries.iter().enumerate() {
            if k > 0 && i % k == k - 1 {
                val.entries.push(e.clone());
            } else {
                train.entries.push(e.clone());
            }
        }
        (train, val)
    }

    pub fn merged(stores: &[&SampleStore]) -> SampleStore {
        SampleStore {
            entries: stores.iter().flat_map(|s| s.entries.iter().cloned()).collect(),
        }
    }
}

/// Frame selections for the intra and inter models.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub intra: SampleStore,
    pub inter: SampleStore,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.intra.len() + self.inter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits both stores by video; the named videos form the second part.
    pub fn split_videos(&self, held_out: &[String]) -> (Dataset, Dataset) {
        let (ti, vi) = self.intra.split_videos(held_out);
        let (tp, vp) = self.inter.split_videos(held_out);
        (Dataset { intra: ti, inter: tp }, Dataset { intra: vi, inter: vp })
    }

    /// Everything, for the prediction-unaware model.
    pub fn all(&self) -> SampleStore {
        SampleStore::merged(&[&self.intra, &self.inter])
    }

    fn push(&mut self, e: FrameEntry) {
        match e.coding {
            CodingType::Intra => self.intra.entries.push(e),
            CodingType::Inter => self.inter.entries.push(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub qps: Vec<u8>,
    /// Frames drawn at random from each (video, qp) encode.
    pub frames_per_video: usize,
    /// Additional frames drawn from an all-intra encode of each
    /// (video, qp), feeding the intra store. 0 disables.
    pub all_intra_frames: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            qps: vec![22, 27, 32, 37, 42],
            frames_per_video: 4,
            all_intra_frames: 4,
            seed: 0,
        }
    }
}

/// Encodes each video at every qp and draws the configured frame selections.
///
/// Videos shorter than the selection size contribute all of their frames.
pub fn generate_dataset(videos: &[(String, Vec<Frame420>)], enc: &EncoderConfig, cfg: &DatasetConfig) -> Result<Dataset> {
    enc.validate()?;
    if cfg.qps.is_empty() {
        return Err(Error::Config("dataset needs at least one qp".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Dataset::default();
    let all_intra = EncoderConfig {
        intra_period: 1,
        ..enc.clone()
    };
    for (name, frames) in videos {
        if frames.is_empty() {
            return Err(Error::Contract(format!("video {name} has no frames")));
        }
        if frames.len() < cfg.frames_per_video.max(cfg.all_intra_frames) {
            warn!(
                "video {name} has {} frames, fewer than requested; taking all of them",
                frames.len()
            );
        }
        for &qp in &cfg.qps {
            let mut runs = vec![(enc.clone().with_qp(qp), cfg.frames_per_video)];
            if cfg.all_intra_frames > 0 {
                runs.push((all_intra.clone().with_qp(qp), cfg.all_intra_frames));
            }
            for (run_cfg, count) in runs {
                if count == 0 {
                    continue;
                }
                let coded = encode_sequence(frames, &run_cfg)?;
                let n = frames.len();
                let mut pocs = sample(&mut rng, n, count.min(n)).into_vec();
                pocs.sort_unstable();
                for poc in pocs {
                    let meta = coded
                        .meta_for(poc as u32)
                        .ok_or_else(|| Error::Malformed(format!("encoder produced no metadata for poc {poc}")))?
                        .clone();
                    out.push(FrameEntry::new(
                        name,
                        qp,
                        coded.recon[poc].y.clone(),
                        coded.pred[poc].y.clone(),
                        frames[poc].y.clone(),
                        meta,
                    )?);
                }
            }
        }
    }
    Ok(out)
}

/// Manifest line of a saved dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video: String,
    pub qp: u8,
    pub poc: u32,
    pub coding: CodingType,
    pub width: usize,
    pub height: usize,
    /// Byte offsets of the recon, pred and original planes in `dataset.bin`.
    pub offsets: [u64; 3],
    pub meta: FrameMeta,
}

fn plane_bytes(p: &Plane, out: &mut Vec<u8>) {
    for v in p.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes `dataset.bin` (luma planes, u16 little-endian) and the
/// `dataset.jsonl` manifest into `dir`.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bin = Vec::new();
    let mut manifest = String::new();
    for e in ds.intra.entries.iter().chain(&ds.inter.entries) {
        let mut offsets = [0u64; 3];
        for (k, p) in [&e.recon, &e.pred, &e.orig].into_iter().enumerate() {
            offsets[k] = bin.len() as u64;
            plane_bytes(p, &mut bin);
        }
        let line = ManifestEntry {
            video: e.video.clone(),
            qp: e.qp,
            poc: e.poc,
            coding: e.coding,
            width: e.width(),
            height: e.height(),
            offsets,
            meta: e.meta.clone(),
        };
        manifest.push_str(&serde_json::to_string(&line).expect("serializable"));
        manifest.push('\n');
    }
    let bin_path = dir.join(DATASET_BIN);
    fs::write(&bin_path, bin).map_err(|e| Error::io(&bin_path, e))?;
    let man_path = dir.join(DATASET_MANIFEST);
    let mut f = fs::File::create(&man_path).map_err(|e| Error::io(&man_path, e))?;
    f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&man_path, e))
}

/// Loads a dataset written by [`save_dataset`]. `manifest` is the path of
/// `dataset.jsonl`; the binary is expected next to it.
pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<Dataset> {
    let manifest = manifest.as_ref();
    if !manifest.exists() {
        return Err(Error::MissingFile(manifest.to_path_buf()));
    }
    let bin_path = manifest.with_file_name(DATASET_BIN);
    if !bin_path.exists() {
        return Err(Error::MissingFile(bin_path));
    }
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let bin = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut ds = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let n = m.width * m.height;
        let plane = |off: u64| -> Result<Plane> {
            let start = off as usize;
            let end = start + 2 * n;
            let bytes = bin.get(start..end).ok_or_else(|| {
                Error::Malformed(format!("manifest line {} points past the end of {}", i + 1, DATASET_BIN))
            })?;
            let data = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            Plane::new(m.width, m.height, data)
        };
        let entry = FrameEntry::new(
            &m.video,
            m.qp,
            plane(m.offsets[0])?,
            plane(m.offsets[1])?,
            plane(m.offsets[2])?,
            m.meta,
        )?;
        if entry.coding != m.coding {
            return Err(Error::Parse {
                line: i + 1,
                message: "coding type disagrees with frame metadata".into(),
            });
        }
        ds.push(entry);
    }
    Ok(ds)
}
