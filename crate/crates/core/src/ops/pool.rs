use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Dims, Tensor4};

/// Routing record of a 2×2 max pool: for each output element, the flat index of
/// the winning input element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_dims: Dims,
    pub argmax: Vec<u32>,
}

/// 2×2 max pooling with stride 2. Ties go to the first element in row-major order.
pub fn maxpool2x2(input: &Tensor4) -> Result<(Tensor4, PoolIndices)> {
    let d = input.dims();
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max pooling needs even height and width, got {}x{}",
            d.h, d.w
        )));
    }
    let od = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
    let mut out = Tensor4::zeros(od);
    let mut argmax = vec![0u32; od.len()];
    let oplane = od.plane();
    {
        let mut pairs: Vec<(&mut [f32], &mut [u32])> = out
            .data_mut()
            .chunks_mut(oplane.max(1))
            .zip(argmax.chunks_mut(oplane.max(1)))
            .collect();
        par::for_each_chunk(&mut pairs, 1, |idx, slot| {
            let (dst, arg) = &mut slot[0];
            let src = input.plane(idx / d.c, idx % d.c);
            let base = idx * d.plane();
            for oy in 0..od.h {
                for ox in 0..od.w {
                    let mut best = 2 * oy * d.w + 2 * ox;
                    for cand in [best + 1, best + d.w, best + d.w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    dst[oy * od.w + ox] = src[best];
                    arg[oy * od.w + ox] = (base + best) as u32;
                }
            }
        });
    }
    Ok((
        out,
        PoolIndices {
            input_dims: d,
            argmax,
        },
    ))
}

/// Sends each upstream gradient to the input element that won its window.
pub fn maxpool2x2_backward(indices: &PoolIndices, grad_out: &Tensor4) -> Result<Tensor4> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::Shape(format!(
            "max pool gradient has {} elements, record has {}",
            grad_out.len(),
            indices.argmax.len()
        )));
    }
    let mut g = Tensor4::zeros(indices.input_dims);
    for (&i, &v) in indices.argmax.iter().zip(grad_out.data()) {
        g.data_mut()[i as usize] += v;
    }
    Ok(g)
}

/// Nearest-neighbour ×2 upsampling: `out[y, x] = in[⌊y/2⌋, ⌊x/2⌋]`.
pub fn upsample2x_nearest(input: &Tensor4) -> Tensor4 {
    let d = input.dims();
    let od = Dims::new(d.n, d.c, d.h * 2, d.w * 2);
    let mut out = Tensor4::zeros(od);
    par::for_each_chunk(out.data_mut(), od.plane(), |idx, dst| {
        let src = input.plane(idx / d.c, idx % d.c);
        for y in 0..od.h {
            let row = &src[(y / 2) * d.w..][..d.w];
            for (x, o) in dst[y * od.w..(y + 1) * od.w].iter_mut().enumerate() {
                *o = row[x / 2];
            }
        }
    });
    out
}

/// Adjoint of replication: each input gradient is the sum of its 2×2 block.
pub fn upsample2x_backward(grad_out: &Tensor4) -> Result<Tensor4> {
    let d = grad_out.dims();
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(Error::Shape(format!("upsample gradient must have even dims, got {d}")));
    }
    let id = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
    let mut g = Tensor4::zeros(id);
    par::for_each_chunk(g.data_mut(), id.plane(), |idx, dst| {
        let src = grad_out.plane(idx / d.c, idx % d.c);
        for y in 0..id.h {
            for x in 0..id.w {
                let t = 2 * y * d.w + 2 * x;
                dst[y * id.w + x] = (src[t] + src[t + 1]) + (src[t + d.w] + src[t + d.w + 1]);
            }
        }
    });
    Ok(g)
}
