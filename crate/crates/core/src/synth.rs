//! Deterministic synthetic test clips.
//!
//! Content is a smooth luminance field (gradients plus low-frequency
//! ripples) with a few soft-edged moving objects and optional fine texture,
//! so that a codec produces both blocking and quantization noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame_io::{Frame420, Plane, MAX_SAMPLE};

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Object speed scale in pixels per frame; 0 gives a static clip.
    pub motion: f64,
    /// Amplitude of fine texture in code values.
    pub texture: f64,
}

impl ClipSpec {
    pub fn new(width: usize, height: usize, frames: usize, seed: u64) -> Self {
        ClipSpec {
            width,
            height,
            frames,
            seed,
            motion: 1.0,
            texture: 12.0,
        }
    }

    pub fn with_motion(mut self, motion: f64) -> Self {
        self.motion = motion;
        self
    }

    pub fn with_texture(mut self, texture: f64) -> Self {
        self.texture = texture;
        self
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    rx: f64,
    ry: f64,
    level: f64,
    chroma: (f64, f64),
}

struct Field {
    base: f64,
    gx: f64,
    gy: f64,
    ripples: Vec<(f64, f64, f64, f64)>,
    chroma: (f64, f64, f64, f64),
}

/// Renders a clip described by `spec`.
pub fn generate_clip(spec: &ClipSpec) -> Vec<Frame420> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let field = Field {
        base: rng.random_range(300.0..700.0),
        gx: rng.random_range(-3.0..3.0),
        gy: rng.random_range(-3.0..3.0),
        ripples: (0..3)
            .map(|_| {
                (
                    rng.random_range(20.0..80.0),
                    rng.random_range(0.02..0.12),
                    rng.random_range(0.02..0.12),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect(),
        chroma: (
            rng.random_range(420.0..600.0),
            rng.random_range(420.0..600.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ),
    };
    let blobs: Vec<Blob> = (0..4)
        .map(|_| Blob {
            cx: rng.random_range(0.0..w),
            cy: rng.random_range(0.0..h),
            vx: rng.random_range(-1.5..1.5) * spec.motion,
            vy: rng.random_range(-1.5..1.5) * spec.motion,
            rx: rng.random_range(w / 10.0..w / 4.0),
            ry: rng.random_range(h / 10.0..h / 4.0),
            level: rng.random_range(-250.0..250.0),
            chroma: (rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0)),
        })
        .collect();
    let texture_phase: (f64, f64) = (rng.random_range(0.0..6.0), rng.random_range(0.0..6.0));

    (0..spec.frames)
        .map(|t| render(spec, &field, &blobs, texture_phase, t))
        .collect()
}

fn render(spec: &ClipSpec, field: &Field, blobs: &[Blob], phase: (f64, f64), t: usize) -> Frame420 {
    let (w, h) = (spec.width, spec.height);
    let t = t as f64;
    // soft object coverage in [0, 1]
    let cover = |x: f64, y: f64, b: &Blob| {
        let dx = (x - (b.cx + b.vx * t)) / b.rx;
        let dy = (y - (b.cy + b.vy * t)) / b.ry;
        let d = (dx * dx + dy * dy).sqrt();
        (1.0 / (1.0 + ((d - 1.0) * 6.0).exp())).clamp(0.0, 1.0)
    };
    let mut y_plane = Vec::with_capacity(w * h);
    for py in 0..h {
        for px in 0..w {
            let (x, yy) = (px as f64, py as f64);
            let mut v = field.base + field.gx * x + field.gy * yy;
            for &(amp, fx, fy, ph) in &field.ripples {
                v += amp * (fx * x + fy * yy + ph).sin();
            }
            for b in blobs {
                v += b.level * cover(x, yy, b);
            }
            // texture moves with the global flow so it stays predictable
            let tx = x - spec.motion * t * 0.5;
            v += spec.texture * ((tx * 0.9 + phase.0).sin() * (yy * 0.7 + phase.1).cos());
            y_plane.push(v.round().clamp(0.0, MAX_SAMPLE as f64) as u16);
        }
    }
    let (cw, ch) = (w / 2, h / 2);
    let mut u_plane = Vec::with_capacity(cw * ch);
    let mut v_plane = Vec::with_capacity(cw * ch);
    for py in 0..ch {
        for px in 0..cw {
            let (x, yy) = (px as f64 * 2.0 + 0.5, py as f64 * 2.0 + 0.5);
            let mut u = field.chroma.0 + field.chroma.2 * x;
            let mut v = field.chroma.1 + field.chroma.3 * yy;
            for b in blobs {
                let c = cover(x, yy, b);
                u += b.chroma.0 * c;
                v += b.chroma.1 * c;
            }
            u_plane.push(u.round().clamp(0.0, MAX_SAMPLE as f64) as u16);
            v_plane.push(v.round().clamp(0.0, MAX_SAMPLE as f64) as u16);
        }
    }
    Frame420::new(
        Plane::new(w, h, y_plane).expect("in range"),
        Plane::new(cw, ch, u_plane).expect("in range"),
        Plane::new(cw, ch, v_plane).expect("in range"),
        t as u32,
    )
    .expect("even dimensions")
}

/// `count` named clips with consecutive seeds starting at `seed`, named
/// `clip<seed>`.
pub fn synthetic_corpus(count: usize, width: usize, height: usize, frames: usize, seed: u64) -> Vec<(String, Vec<Frame420>)> {
    (0..count as u64)
        .map(|i| {
            let s = seed + i;
            (format!("clip{s}"), generate_clip(&ClipSpec::new(width, height, frames, s)))
        })
        .collect()
}

/// Static clip: one rendered frame repeated `frames` times.
pub fn static_clip(width: usize, height: usize, frames: usize, seed: u64) -> Vec<Frame420> {
    let first = generate_clip(&ClipSpec::new(width, height, 1, seed).with_motion(0.0))
        .pop()
        .expect("one frame");
    (0..frames as u32)
        .map(|poc| Frame420 { poc, ..first.clone() })
        .collect()
}

/// Adds independent uniform noise of ±`amplitude` to every luma sample of
/// each frame (chroma untouched).
pub fn add_luma_noise(frames: &mut [Frame420], amplitude: i32, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for f in frames {
        let (w, h) = (f.width(), f.height());
        for y in 0..h {
            for x in 0..w {
                let v = f.y.get(x, y) as i32 + rng.random_range(-amplitude..=amplitude);
                f.y.set(x, y, v);
            }
        }
    }
}
