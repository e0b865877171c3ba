use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Binary (h, w) mask with values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask data has {} values for {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self { height, width, data }
    }

    /// Foreground where the channel mean of sample 0 is at least 0.5.
    pub fn from_tensor(t: &Tensor4) -> Self {
        let d = t.dims();
        let plane = d.plane();
        let data = (0..plane)
            .map(|p| {
                let s: f32 = (0..d.c).map(|c| t.plane(0, c)[p]).sum();
                (s / d.c as f32 >= 0.5) as u8
            })
            .collect();
        Self {
            height: d.h,
            width: d.w,
            data,
        }
    }

    /// Foreground where channel 1 holds the largest probability (ties go to
    /// foreground), for sample `n` of a class-probability tensor.
    pub fn from_probs(probs: &Tensor4, n: usize) -> Result<Self> {
        let d = probs.dims();
        if d.c < 2 || n >= d.n {
            return Err(Error::Shape(format!("cannot take a mask from probabilities of dims {d}")));
        }
        let fg = probs.plane(n, 1);
        let data = (0..d.plane())
            .map(|p| {
                (0..d.c)
                    .filter(|&c| c != 1)
                    .all(|c| fg[p] >= probs.plane(n, c)[p]) as u8
            })
            .collect();
        Ok(Self {
            height: d.h,
            width: d.w,
            data,
        })
    }

    /// (1, 1, h, w) tensor with values 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec(
            [1, 1, self.height, self.width],
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .expect("mask dims match data")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Stacks masks into a one-hot (n, 2, h, w) target: channel 0 background, channel 1 foreground.
pub fn one_hot(masks: &[&Mask]) -> Result<Tensor4> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Shape("no masks to encode".into()))?;
    let (h, w) = (first.height, first.width);
    let mut t = Tensor4::zeros([masks.len(), 2, h, w]);
    for (n, m) in masks.iter().enumerate() {
        if m.height != h || m.width != w {
            return Err(Error::Shape("masks in one batch must share dims".into()));
        }
        for (p, &v) in m.data.iter().enumerate() {
            let c = v as usize;
            t.plane_mut(n, c)[p] = 1.0;
        }
    }
    Ok(t)
}
