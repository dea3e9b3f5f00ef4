//! Random patch extraction with dihedral augmentation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame_io::MAX_SAMPLE;
use crate::nn::Tensor;

use super::dataset::{CodingType, SampleStore};

/// Attempts at finding a patch under the skip limit before the last draw is
/// accepted anyway.
const MAX_REDRAWS: usize = 64;

/// One of the eight symmetries of the square: optional horizontal flip,
/// then `rot` quarter turns clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Augment {
    pub flip: bool,
    pub rot: u8,
}

impl Augment {
    pub const IDENTITY: Augment = Augment { flip: false, rot: 0 };

    pub fn from_index(i: usize) -> Self {
        Augment {
            flip: i >= 4,
            rot: (i % 4) as u8,
        }
    }

    pub fn index(self) -> usize {
        usize::from(self.flip) * 4 + self.rot as usize
    }

    /// Transforms a square `p`×`p` patch.
    pub fn apply<T: Copy>(self, src: &[T], p: usize) -> Vec<T> {
        debug_assert_eq!(src.len(), p * p);
        let mut out = Vec::with_capacity(p * p);
        for y in 0..p {
            for x in 0..p {
                // inverse map: output (x, y) reads source (sx, sy)
                let (mut sx, mut sy) = (x, y);
                for _ in 0..self.rot {
                    // undo one clockwise quarter turn
                    let (nx, ny) = (sy, p - 1 - sx);
                    sx = nx;
                    sy = ny;
                }
                if self.flip {
                    sx = p - 1 - sx;
                }
                out.push(src[sy * p + sx]);
            }
        }
        out
    }
}

/// Uniform draw over the eight symmetries.
pub fn draw_augment<R: Rng>(rng: &mut R) -> Augment {
    Augment::from_index(rng.random_range(0..8))
}

/// Aligned square patches, normalized to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub recon: Vec<f32>,
    pub pred: Vec<f32>,
    pub qp: Vec<f32>,
    pub orig: Vec<f32>,
    pub coding: CodingType,
    pub patch: usize,
}

impl TrainingSample {
    fn augmented(self, a: Augment) -> Self {
        let p = self.patch;
        TrainingSample {
            recon: a.apply(&self.recon, p),
            pred: a.apply(&self.pred, p),
            qp: a.apply(&self.qp, p),
            orig: a.apply(&self.orig, p),
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub patch: usize,
    pub augment: bool,
    /// Patches whose skip-pixel share exceeds this are redrawn.
    pub max_skip_fraction: Option<f64>,
}

pub fn check_store(store: &SampleStore, patch: usize) -> Result<()> {
    if store.is_empty() {
        return Err(Error::Contract("sample store is empty".into()));
    }
    if patch == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    for e in &store.entries {
        if e.width() < patch || e.height() < patch {
            return Err(Error::Contract(format!(
                "patch {patch} exceeds {}x{} frame {} poc {}",
                e.width(),
                e.height(),
                e.video,
                e.poc
            )));
        }
    }
    Ok(())
}

/// Crops the patch at (x, y) of entry `idx` without augmentation.
pub fn crop_sample(store: &SampleStore, idx: usize, x: usize, y: usize, patch: usize) -> TrainingSample {
    let e = &store.entries[idx];
    let w = e.width();
    let scale = MAX_SAMPLE as f32;
    let mut s = TrainingSample {
        recon: Vec::with_capacity(patch * patch),
        pred: Vec::with_capacity(patch * patch),
        qp: Vec::with_capacity(patch * patch),
        orig: Vec::with_capacity(patch * patch),
        coding: e.coding,
        patch,
    };
    for row in y..y + patch {
        let r = row * w + x..row * w + x + patch;
        s.recon.extend(e.recon.data()[r.clone()].iter().map(|&v| v as f32 / scale));
        s.pred.extend(e.pred.data()[r.clone()].iter().map(|&v| v as f32 / scale));
        s.orig.extend(e.orig.data()[r.clone()].iter().map(|&v| v as f32 / scale));
        s.qp.extend_from_slice(&e.qp_map[r]);
    }
    s
}

fn skip_fraction(store: &SampleStore, idx: usize, x: usize, y: usize, patch: usize) -> f64 {
    let e = &store.entries[idx];
    let w = e.width();
    let mut n = 0usize;
    for row in y..y + patch {
        n += e.skip[row * w + x..row * w + x + patch].iter().filter(|&&s| s).count();
    }
    n as f64 / (patch * patch) as f64
}

/// Draws one patch: uniform frame, uniform position, uniform augmentation.
pub fn sample_patch<R: Rng>(store: &SampleStore, cfg: &SamplerConfig, rng: &mut R) -> TrainingSample {
    let p = cfg.patch;
    let mut pick = || {
        let idx = rng.random_range(0..store.len());
        let e = &store.entries[idx];
        let x = rng.random_range(0..=e.width() - p);
        let y = rng.random_range(0..=e.height() - p);
        (idx, x, y)
    };
    let mut choice = pick();
    if let Some(limit) = cfg.max_skip_fraction {
        for _ in 1..MAX_REDRAWS {
            if skip_fraction(store, choice.0, choice.1, choice.2, p) <= limit {
                break;
            }
            choice = pick();
        }
    }
    let s = crop_sample(store, choice.0, choice.1, choice.2, p);
    if cfg.augment {
        s.augmented(draw_augment(rng))
    } else {
        s
    }
}

pub fn sample_batch<R: Rng>(store: &SampleStore, batch: usize, cfg: &SamplerConfig, rng: &mut R) -> Result<Vec<TrainingSample>> {
    check_store(store, cfg.patch)?;
    Ok((0..batch).map(|_| sample_patch(store, cfg, rng)).collect())
}

/// Network input (`[P, C, Q]` or `[C, Q]`) and target tensors for a batch.
pub fn batch_tensors(samples: &[TrainingSample], with_pred: bool) -> Result<(Tensor, Tensor)> {
    let first = samples.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
    let p = first.patch;
    let c = if with_pred { 3 } else { 2 };
    let mut input = Vec::with_capacity(samples.len() * c * p * p);
    let mut target = Vec::with_capacity(samples.len() * p * p);
    for s in samples {
        if s.patch != p {
            return Err(Error::Shape("mixed patch sizes in one batch".into()));
        }
        if with_pred {
            input.extend_from_slice(&s.pred);
        }
        input.extend_from_slice(&s.recon);
        input.extend_from_slice(&s.qp);
        target.extend_from_slice(&s.orig);
    }
    Ok((
        Tensor::from_vec([samples.len(), c, p, p], input)?,
        Tensor::from_vec([samples.len(), 1, p, p], target)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding_meta::{BlockRecord, BlockType, FrameMeta, FrameType, ModeInfo};
    use crate::frame_io::Plane;
    use crate::training::dataset::FrameEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> SampleStore {
        let (w, h) = (16, 8);
        let plane = |k: u16| Plane::new(w, h, (0..(w * h) as u16).map(|i| (i * 3 + k) % 1024).collect()).unwrap();
        let meta = FrameMeta {
            poc: 1,
            frame_type: FrameType::B,
            temporal_layer: 1,
            base_qp: 32,
            ilf_flag: false,
            blocks: vec![
                BlockRecord {
                    x: 0,
                    y: 0,
                    w: 8,
                    h: 8,
                    block_type: BlockType::Skip,
                    qp: 33,
                    mode: Some(ModeInfo::Inter { mv: [0, 0], ref_poc: 0 }),
                },
                BlockRecord {
                    x: 8,
                    y: 0,
                    w: 8,
                    h: 8,
                    block_type: BlockType::Inter,
                    qp: 34,
                    mode: Some(ModeInfo::Inter { mv: [1, 0], ref_poc: 0 }),
                },
            ],
        };
        SampleStore {
            entries: vec![FrameEntry::new("v", 32, plane(0), plane(1), plane(2), meta).unwrap()],
        }
    }

    #[test]
    fn without_augmentation_patches_are_crops() {
        let s = store();
        let cfg = SamplerConfig {
            patch: 4,
            augment: false,
            max_skip_fraction: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let t = sample_patch(&s, &cfg, &mut rng);
            // find the crop it came from
            let found = (0..=4).any(|y| (0..=12).any(|x| crop_sample(&s, 0, x, y, 4) == t));
            assert!(found);
        }
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let s = crop_sample(&store(), 0, 3, 2, 5);
        let half = Augment { flip: false, rot: 2 };
        assert_eq!(s.clone().augmented(half).augmented(half), s);
        assert_ne!(s.clone().augmented(half), s);
    }

    #[test]
    fn eight_distinct_symmetries() {
        let src: Vec<u32> = (0..9).collect();
        let mut seen: Vec<Vec<u32>> = (0..8).map(|i| Augment::from_index(i).apply(&src, 3)).collect();
        assert_eq!(seen[0], src);
        // one quarter turn clockwise moves the top-left corner to top-right
        assert_eq!(Augment { flip: false, rot: 1 }.apply(&src, 3), vec![6, 3, 0, 7, 4, 1, 8, 5, 2]);
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        for i in 0..8 {
            assert_eq!(Augment::from_index(i).index(), i);
        }
    }

    #[test]
    fn augmentation_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            counts[draw_augment(&mut rng).index()] += 1;
        }
        let expected = 10_000.0 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 7 degrees of freedom, 0.999 quantile ≈ 24.3
        assert!(chi2 < 24.3, "{counts:?}");
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.125).abs() < 0.02);
        }
    }

    #[test]
    fn skip_heavy_patches_are_redrawn() {
        let s = store();
        let cfg = SamplerConfig {
            patch: 8,
            augment: false,
            max_skip_fraction: Some(0.5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let t = sample_patch(&s, &cfg, &mut rng);
            // the all-skip block at x=0 would only be chosen with skip share 1
            assert_ne!(t, crop_sample(&s, 0, 0, 0, 8));
        }
    }

    #[test]
    fn patch_larger_than_frame() {
        let cfg = SamplerConfig {
            patch: 9,
            augment: true,
            max_skip_fraction: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_batch(&store(), 2, &cfg, &mut rng).is_err());
        assert!(sample_batch(&SampleStore::default(), 2, &SamplerConfig { patch: 4, ..cfg }, &mut rng).is_err());
    }

    #[test]
    fn tensors_have_expected_layout() {
        let s = crop_sample(&store(), 0, 0, 0, 4);
        let (x, y) = batch_tensors(&[s.clone(), s.clone()], true).unwrap();
        assert_eq!(x.shape(), [2, 3, 4, 4]);
        assert_eq!(y.shape(), [2, 1, 4, 4]);
        assert_eq!(x.get(1, 0, 0, 1), s.pred[1]);
        assert_eq!(x.get(1, 1, 0, 1), s.recon[1]);
        assert_eq!(x.get(1, 2, 0, 1), 33.0 / 63.0);
        let (x2, _) = batch_tensors(&[s.clone(), s], false).unwrap();
        assert_eq!(x2.shape(), [2, 2, 4, 4]);
    }
}
