use std::fmt;

use crate::error::{Error, Result};

/// Dimensions of a rank-4 tensor in (batch, channel, height, width) order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    #[inline]
    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    #[inline]
    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of elements in one (h, w) plane.
    #[inline]
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }
}

/// Dense rank-4 array of `f32`, row-major in (n, c, h, w) order.
#[derive(Clone, PartialEq)]
pub struct Tensor4 {
    dims: Dims,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(dims: impl Into<Dims>) -> Self {
        let dims = dims.into();
        Self {
            data: vec![0.0; dims.len()],
            dims,
        }
    }

    pub fn full(dims: impl Into<Dims>, value: f32) -> Self {
        let dims = dims.into();
        Self {
            data: vec![value; dims.len()],
            dims,
        }
    }

    pub fn from_vec(dims: impl Into<Dims>, data: Vec<f32>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {dims} ({} elements)",
                data.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.dims.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.dims.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous (h, w) plane for sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Copy of sample `n` as a batch of one.
    pub fn sample(&self, n: usize) -> Tensor4 {
        let d = self.dims;
        let per = d.c * d.plane();
        Tensor4 {
            dims: Dims::new(1, d.c, d.h, d.w),
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Concatenates equally-shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor4]) -> Result<Tensor4> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack an empty list".into()))?;
        let d = first.dims;
        let mut data = Vec::with_capacity(d.len() * items.len());
        let mut n = 0;
        for t in items {
            if (t.dims.c, t.dims.h, t.dims.w) != (d.c, d.h, d.w) {
                return Err(Error::Shape(format!("cannot stack {} with {}", t.dims, d)));
            }
            data.extend_from_slice(&t.data);
            n += t.dims.n;
        }
        Ok(Tensor4 {
            dims: Dims::new(n, d.c, d.h, d.w),
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} contains NaN or infinite values")))
        }
    }

    pub(crate) fn ensure_dims(&self, expected: Dims, what: &str) -> Result<()> {
        if self.dims == expected {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: expected dims {expected}, got {}",
                self.dims
            )))
        }
    }

    /// Inner product accumulated in f64.
    pub fn dot(&self, other: &Tensor4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

impl fmt::Debug for Tensor4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor4{} [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}
