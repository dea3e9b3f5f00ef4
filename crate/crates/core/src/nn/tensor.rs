use crate::error::{Error, Result};

/// Rank-4 `(batch, channels, height, width)` array of `f32`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "tensor {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("tensor values must be finite".into()));
        }
        Ok(Tensor { shape, data })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Pixels per channel plane.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// All channels of batch element `n`.
    pub fn item(&self, n: usize) -> &[f32] {
        let len = self.shape[1] * self.plane_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.shape[1] * self.plane_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Copies the spatial window `[y0, y0+h) × [x0, x0+w)` of every channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
        let [n, c, _, _] = self.shape;
        let mut out = Tensor::zeros([n, c, h, w]);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    let src = self.index(b, ch, y0 + y, x0);
                    let dst = out.index(b, ch, y, 0);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        out
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        for t in items {
            if t.shape[1..] != first.shape[1..] {
                return Err(Error::Shape(format!("cannot stack {:?} with {:?}", t.shape, first.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        let n = data.len() / (c * h * w);
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }
}
