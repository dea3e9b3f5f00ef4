//! Raw 10-bit 4:2:0 planar video.
//!
//! Every sample is stored as a little-endian 16-bit word whose low 10 bits
//! carry the value; the upper 6 bits must be zero. A frame is the Y plane
//! followed by the U and V planes at half resolution in each dimension.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Largest representable sample.
pub const MAX_SAMPLE: u16 = 1023;
pub const BIT_DEPTH: u32 = 10;

/// A single component raster of 10-bit samples in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "plane {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > MAX_SAMPLE) {
            return Err(Error::SampleRange { index, value });
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        assert!(value <= MAX_SAMPLE);
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    /// Sample at a possibly out-of-bounds position, clamped to the nearest edge.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u16 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Writes a sample, clamping into the valid range.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: i32) {
        self.data[y * self.width + x] = value.clamp(0, MAX_SAMPLE as i32) as u16;
    }

    pub fn same_dims(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies the `w`×`h` rectangle at (`x`, `y`) into a new plane.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Plane {
        assert!(x + w <= self.width && y + h <= self.height);
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            data.extend_from_slice(&self.data[row * self.width + x..row * self.width + x + w]);
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    /// Pastes `src` with its top-left corner at (`x`, `y`).
    pub fn paste(&mut self, src: &Plane, x: usize, y: usize) {
        assert!(x + src.width <= self.width && y + src.height <= self.height);
        for row in 0..src.height {
            let dst = (y + row) * self.width + x;
            self.data[dst..dst + src.width]
                .copy_from_slice(&src.data[row * src.width..(row + 1) * src.width]);
        }
    }
}

/// Which component of a 4:2:0 frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlaneId {
    Y,
    U,
    V,
}

impl PlaneId {
    pub const ALL: [PlaneId; 3] = [PlaneId::Y, PlaneId::U, PlaneId::V];

    pub fn is_chroma(self) -> bool {
        self != PlaneId::Y
    }
}

/// A 10-bit 4:2:0 frame. Chroma planes are exactly half the luma size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame420 {
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
    pub poc: u32,
}

impl Frame420 {
    pub fn new(y: Plane, u: Plane, v: Plane, poc: u32) -> Result<Self> {
        let (w, h) = (y.width(), y.height());
        if w == 0 || h == 0 || w % 2 != 0 || h % 2 != 0 {
            return Err(Error::Shape(format!(
                "luma dimensions must be even and positive, got {w}x{h}"
            )));
        }
        for c in [&u, &v] {
            if c.width() != w / 2 || c.height() != h / 2 {
                return Err(Error::Shape(format!(
                    "chroma plane {}x{} does not match luma {}x{}",
                    c.width(),
                    c.height(),
                    w,
                    h
                )));
            }
        }
        Ok(Frame420 { y, u, v, poc })
    }

    /// A uniformly filled frame.
    pub fn filled(width: usize, height: usize, value: u16, poc: u32) -> Self {
        assert!(width % 2 == 0 && height % 2 == 0 && width > 0 && height > 0);
        Frame420 {
            y: Plane::filled(width, height, value),
            u: Plane::filled(width / 2, height / 2, value),
            v: Plane::filled(width / 2, height / 2, value),
            poc,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.y.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y.height()
    }

    pub fn plane(&self, id: PlaneId) -> &Plane {
        match id {
            PlaneId::Y => &self.y,
            PlaneId::U => &self.u,
            PlaneId::V => &self.v,
        }
    }

    pub fn plane_mut(&mut self, id: PlaneId) -> &mut Plane {
        match id {
            PlaneId::Y => &mut self.y,
            PlaneId::U => &mut self.u,
            PlaneId::V => &mut self.v,
        }
    }

    /// Pixel content equality, ignoring the frame index.
    pub fn same_pixels(&self, other: &Frame420) -> bool {
        self.y == other.y && self.u == other.u && self.v == other.v
    }
}

/// Byte size of one frame on disk.
pub fn frame_byte_size(width: usize, height: usize) -> usize {
    2 * (width * height + 2 * (width / 2) * (height / 2))
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Contract(format!(
            "frame dimensions must be even and positive, got {width}x{height}"
        )));
    }
    Ok(())
}

fn decode_plane(bytes: &[u8], width: usize, height: usize, base_index: usize) -> Result<Plane> {
    let mut data = Vec::with_capacity(width * height);
    for (i, pair) in bytes.chunks_exact(2).enumerate() {
        let value = u16::from_le_bytes([pair[0], pair[1]]);
        if value > MAX_SAMPLE {
            return Err(Error::SampleRange {
                index: base_index + i,
                value,
            });
        }
        data.push(value);
    }
    Ok(Plane {
        width,
        height,
        data,
    })
}

/// Decodes an in-memory raw stream.
pub fn decode_raw_video(bytes: &[u8], width: usize, height: usize) -> Result<Vec<Frame420>> {
    check_dims(width, height)?;
    let frame_size = frame_byte_size(width, height);
    if bytes.len() % frame_size != 0 {
        return Err(Error::Malformed(format!(
            "stream of {} bytes is not a whole number of {}x{} frames ({} bytes each)",
            bytes.len(),
            width,
            height,
            frame_size
        )));
    }
    let luma = width * height;
    let chroma = (width / 2) * (height / 2);
    let mut frames = Vec::with_capacity(bytes.len() / frame_size);
    for (poc, chunk) in bytes.chunks_exact(frame_size).enumerate() {
        let base = poc * (luma + 2 * chroma);
        let (yb, rest) = chunk.split_at(2 * luma);
        let (ub, vb) = rest.split_at(2 * chroma);
        let y = decode_plane(yb, width, height, base)?;
        let u = decode_plane(ub, width / 2, height / 2, base + luma)?;
        let v = decode_plane(vb, width / 2, height / 2, base + luma + chroma)?;
        frames.push(Frame420 {
            y,
            u,
            v,
            poc: poc as u32,
        });
    }
    Ok(frames)
}

/// Serializes frames to the raw byte layout.
pub fn encode_raw_video(frames: &[Frame420]) -> Result<Vec<u8>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = (first.width(), first.height());
    let mut out = Vec::with_capacity(frames.len() * frame_byte_size(w, h));
    let mut index = 0usize;
    for frame in frames {
        if frame.width() != w || frame.height() != h {
            return Err(Error::Contract(format!(
                "mixed frame dimensions: {}x{} vs {}x{}",
                frame.width(),
                frame.height(),
                w,
                h
            )));
        }
        for plane in [&frame.y, &frame.u, &frame.v] {
            for &s in plane.data() {
                if s > MAX_SAMPLE {
                    return Err(Error::SampleRange { index, value: s });
                }
                out.extend_from_slice(&s.to_le_bytes());
                index += 1;
            }
        }
    }
    Ok(out)
}

pub fn read_raw_video(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Vec<Frame420>> {
    let path = path.as_ref();
    check_dims(width, height)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_video(&bytes, width, height)
}

/// Writes frames and returns the number of bytes written. Nothing is written
/// when validation fails.
pub fn write_raw_video(frames: &[Frame420], path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode_raw_video(frames)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bytes_decode_to_black() {
        let frames = decode_raw_video(&vec![0u8; frame_byte_size(4, 4)], 4, 4).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(frames[0].y.data().iter().all(|&s| s == 0));
        assert!(frames[0].v.data().iter().all(|&s| s == 0));
    }

    #[test]
    fn max_range_little_endian() {
        let bytes: Vec<u8> = std::iter::repeat([0xFFu8, 0x03]).take(24).flatten().collect();
        let frames = decode_raw_video(&bytes, 4, 4).unwrap();
        for p in PlaneId::ALL {
            assert!(frames[0].plane(p).data().iter().all(|&s| s == 1023));
        }
    }

    #[test]
    fn fractional_frame_is_malformed() {
        let n = frame_byte_size(4, 4) * 3 / 2;
        assert!(matches!(
            decode_raw_video(&vec![0u8; n], 4, 4),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn high_bits_are_rejected() {
        let mut bytes = vec![0u8; frame_byte_size(4, 4)];
        bytes[10] = 0x00;
        bytes[11] = 0x04; // 1024
        assert!(matches!(
            decode_raw_video(&bytes, 4, 4),
            Err(Error::SampleRange { index: 5, value: 1024 })
        ));
    }

    #[test]
    fn empty_sequence_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.yuv");
        assert_eq!(write_raw_video(&[], &path).unwrap(), 0);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 0);
    }

    #[test]
    fn out_of_range_sample_fails_before_write() {
        let mut frame = Frame420::filled(4, 4, 0, 0);
        frame.y.data[3] = 1024;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.yuv");
        assert!(matches!(
            write_raw_video(&[frame], &path),
            Err(Error::SampleRange { .. })
        ));
        assert!(!path.exists());
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let frames = [Frame420::filled(4, 4, 1, 0), Frame420::filled(8, 4, 1, 1)];
        assert!(matches!(encode_raw_video(&frames), Err(Error::Contract(_))));
    }

    #[test]
    fn chroma_dimension_invariant() {
        let y = Plane::filled(8, 6, 0);
        assert!(Frame420::new(y.clone(), Plane::filled(4, 3, 0), Plane::filled(4, 3, 0), 0).is_ok());
        assert!(Frame420::new(y, Plane::filled(4, 4, 0), Plane::filled(4, 3, 0), 0).is_err());
        assert!(Frame420::new(
            Plane::filled(5, 6, 0),
            Plane::filled(2, 3, 0),
            Plane::filled(2, 3, 0),
            0
        )
        .is_err());
    }

    #[test]
    fn read_rejects_odd_dimensions() {
        assert!(matches!(
            read_raw_video("/nonexistent", 3, 4),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn every_sample_value_round_trips() {
        let data: Vec<u16> = (0..=MAX_SAMPLE).collect();
        let y = Plane::new(64, 16, data.clone()).unwrap();
        let u = Plane::new(32, 8, data[..256].to_vec()).unwrap();
        let v = Plane::new(32, 8, data[768..].to_vec()).unwrap();
        let frame = Frame420::new(y, u, v, 0).unwrap();
        let bytes = encode_raw_video(std::slice::from_ref(&frame)).unwrap();
        let back = decode_raw_video(&bytes, 64, 16).unwrap();
        assert!(back[0].same_pixels(&frame));
    }

    proptest::proptest! {
        #[test]
        fn raw_video_round_trip(
            w2 in 1usize..6,
            h2 in 1usize..6,
            n in 1usize..4,
            seed in proptest::prelude::any::<u64>(),
        ) {
            let (w, h) = (2 * w2, 2 * h2);
            let mut state = seed;
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) % 1024) as u16
            };
            let mut frames = Vec::new();
            for poc in 0..n {
                let mut plane = |pw: usize, ph: usize| {
                    Plane::new(pw, ph, (0..pw * ph).map(|_| next()).collect()).unwrap()
                };
                let (y, u, v) = (plane(w, h), plane(w / 2, h / 2), plane(w / 2, h / 2));
                frames.push(Frame420::new(y, u, v, poc as u32).unwrap());
            }
            let bytes = encode_raw_video(&frames).unwrap();
            proptest::prop_assert_eq!(bytes.len(), n * frame_byte_size(w, h));
            let back = decode_raw_video(&bytes, w, h).unwrap();
            proptest::prop_assert_eq!(back.len(), n);
            for (a, b) in frames.iter().zip(&back) {
                proptest::prop_assert!(a.same_pixels(b));
            }
        }
    }
}
