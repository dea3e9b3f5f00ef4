//! Integer-pel block matching and motion compensation.

use crate::frame_io::Plane;

/// Motion vector in integer pixels; the prediction of pixel (x, y) is the
/// reference sample at (x + dx, y + dy), edge-clamped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub fn new(dx: i32, dy: i32) -> Self {
        MotionVector { dx, dy }
    }

    pub fn l1(self) -> i32 {
        self.dx.abs() + self.dy.abs()
    }

    /// Vector on the half-resolution chroma grid (floor division).
    pub fn chroma(self) -> Self {
        MotionVector {
            dx: self.dx >> 1,
            dy: self.dy >> 1,
        }
    }

    /// Bits of the two signed exp-Golomb codes.
    pub fn bits(self) -> u32 {
        se_bits(self.dx) + se_bits(self.dy)
    }
}

fn se_bits(v: i32) -> u32 {
    let code = if v > 0 { 2 * v as u32 - 1 } else { 2 * v.unsigned_abs() };
    2 * (32 - (code + 1).leading_zeros() - 1) + 1
}

/// Motion-compensated `w`×`h` block at (`x`, `y`).
pub fn motion_compensate(reference: &Plane, x: usize, y: usize, w: usize, h: usize, mv: MotionVector) -> Vec<u16> {
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            out.push(reference.get_clamped(
                x as isize + c as isize + mv.dx as isize,
                y as isize + r as isize + mv.dy as isize,
            ));
        }
    }
    out
}

fn sad_at(cur: &[u16], reference: &Plane, x: usize, y: usize, w: usize, h: usize, mv: MotionVector, bound: u64) -> u64 {
    let mut sad = 0u64;
    for r in 0..h {
        let ry = y as isize + r as isize + mv.dy as isize;
        for c in 0..w {
            let rx = x as isize + c as isize + mv.dx as isize;
            sad += (cur[r * w + c] as i32 - reference.get_clamped(rx, ry) as i32).unsigned_abs() as u64;
        }
        if sad > bound {
            return sad;
        }
    }
    sad
}

/// Exhaustive integer search over `[-range, range]²`.
///
/// Returns the vector of least SAD; ties go to the smaller |mv|₁, then to
/// raster order (dy first, then dx).
pub fn motion_search(
    cur: &[u16],
    reference: &Plane,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    range: i32,
) -> (MotionVector, u64) {
    let mut best = (MotionVector::ZERO, sad_at(cur, reference, x, y, w, h, MotionVector::ZERO, u64::MAX));
    for dy in -range..=range {
        for dx in -range..=range {
            let mv = MotionVector::new(dx, dy);
            if mv == MotionVector::ZERO {
                continue;
            }
            let sad = sad_at(cur, reference, x, y, w, h, mv, best.1);
            let better = sad < best.1
                || (sad == best.1
                    && (mv.l1() < best.0.l1()
                        || (mv.l1() == best.0.l1() && (dy, dx) < (best.0.dy, best.0.dx))));
            if better {
                best = (mv, sad);
            }
        }
    }
    best
}
