//! Straight-line f64 re-implementation of the network, written against the
//! layer formulas only. Parameters are looked up by name so single entries
//! can be perturbed for finite differences.

use std::collections::HashMap;

use ldmres::arch::ParamStore;
use ldmres::Tensor4;

#[derive(Clone, Debug)]
pub struct T {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: Vec<f64>,
}

impl T {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, d: vec![0.0; n * c * h * w] }
    }

    pub fn from_tensor(t: &Tensor4) -> Self {
        let [n, c, h, w] = t.dims().as_array();
        Self { n, c, h, w, d: t.data().iter().map(|&v| v as f64).collect() }
    }

    fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.d[((n * self.c + c) * self.h + y) * self.w + x]
    }

    fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.d[((n * self.c + c) * self.h + y) * self.w + x]
    }
}

pub type Params = HashMap<String, Vec<f64>>;

pub fn params_of(store: &ParamStore) -> Params {
    store
        .iter()
        .map(|p| (p.name.clone(), p.value.data().iter().map(|&v| v as f64).collect()))
        .collect()
}

/// Zero-padded "same" convolution; weights laid out (c_out, c_in, k, k).
pub fn conv(x: &T, w: &[f64], c_out: usize) -> T {
    let k = ((w.len() / (c_out * x.c)) as f64).sqrt() as usize;
    let r = (k / 2) as isize;
    let mut out = T::zeros(x.n, c_out, x.h, x.w);
    for n in 0..x.n {
        for o in 0..c_out {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut s = 0.0;
                    for i in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - r;
                                let sx = xx as isize + kx as isize - r;
                                if sy >= 0 && sx >= 0 && (sy as usize) < x.h && (sx as usize) < x.w {
                                    s += w[((o * x.c + i) * k + ky) * k + kx] * x.at(n, i, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    *out.at_mut(n, o, y, xx) = s;
                }
            }
        }
    }
    out
}

/// Training-mode batch norm: biased batch statistics over (n, h, w).
pub fn bn(x: &T, gamma: &[f64], beta: &[f64]) -> T {
    let mut out = x.clone();
    let m = (x.n * x.h * x.w) as f64;
    for c in 0..x.c {
        let vals: Vec<f64> = (0..x.n)
            .flat_map(|n| (0..x.h).flat_map(move |y| (0..x.w).map(move |xx| (n, y, xx))))
            .map(|(n, y, xx)| x.at(n, c, y, xx))
            .collect();
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let v = out.at_mut(n, c, y, xx);
                    *v = gamma[c] * (*v - mean) * inv + beta[c];
                }
            }
        }
    }
    out
}

pub fn relu(x: &T) -> T {
    T { d: x.d.iter().map(|&v| v.max(0.0)).collect(), ..x.clone() }
}

pub fn add(a: &T, b: &T) -> T {
    assert_eq!((a.n, a.c, a.h, a.w), (b.n, b.c, b.h, b.w));
    T { d: a.d.iter().zip(&b.d).map(|(x, y)| x + y).collect(), ..a.clone() }
}

pub fn maxpool(x: &T) -> T {
    let mut out = T::zeros(x.n, x.c, x.h / 2, x.w / 2);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h / 2 {
                for xx in 0..x.w / 2 {
                    let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|&(dy, dx)| x.at(n, c, 2 * y + dy, 2 * xx + dx))
                        .fold(f64::NEG_INFINITY, f64::max);
                    *out.at_mut(n, c, y, xx) = m;
                }
            }
        }
    }
    out
}

pub fn upsample(x: &T) -> T {
    let mut out = T::zeros(x.n, x.c, x.h * 2, x.w * 2);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h * 2 {
                for xx in 0..x.w * 2 {
                    *out.at_mut(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
                }
            }
        }
    }
    out
}

pub fn softmax(x: &T) -> T {
    let mut out = x.clone();
    for n in 0..x.n {
        for y in 0..x.h {
            for xx in 0..x.w {
                let m = (0..x.c).map(|c| x.at(n, c, y, xx)).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..x.c).map(|c| (x.at(n, c, y, xx) - m).exp()).sum();
                for c in 0..x.c {
                    *out.at_mut(n, c, y, xx) = (x.at(n, c, y, xx) - m).exp() / z;
                }
            }
        }
    }
    out
}

/// conv then train-mode BN for the layer registered as `name`.
pub fn conv_bn(p: &Params, name: &str, x: &T) -> T {
    let gamma = &p[&format!("{name}.bn.gamma")];
    let y = conv(x, &p[&format!("{name}.conv.weight")], gamma.len());
    bn(&y, gamma, &p[&format!("{name}.bn.beta")])
}

/// Dual residual block, returning (out, S1).
pub fn block(p: &Params, name: &str, x: &T, skip: Option<&T>) -> (T, T) {
    let l = |sub: &str, t: &T| conv_bn(p, &format!("{name}.{sub}"), t);
    let mut s1 = add(&l("s1_k1", x), &l("s1_k3", x));
    if let Some(s) = skip {
        s1 = add(&s1, s);
    }
    let s1 = relu(&s1);
    let s2 = relu(&add(&l("s2_k1", &s1), &s1));
    let out = add(&add(&l("shortcut", x), &l("out_k1", &s2)), &l("out_k3", &s2));
    (out, s1)
}

pub fn network(p: &Params, x: &T) -> T {
    let f1 = relu(&conv_bn(p, "stem", x));
    let mut h = f1.clone();
    let mut skips = Vec::new();
    for i in 1..=3 {
        let a = conv_bn(p, &format!("enc{i}.down.proj"), &h);
        let b = relu(&conv_bn(p, &format!("enc{i}.down.conv"), &a));
        let (out, s1) = block(p, &format!("enc{i}.block"), &maxpool(&b), None);
        skips.push(s1);
        h = out;
    }
    for i in (1..=3).rev() {
        let skip = skips.pop().unwrap();
        let (o, _) = block(p, &format!("dec{i}.block"), &h, Some(&skip));
        let a = conv_bn(p, &format!("dec{i}.up.proj"), &upsample(&o));
        h = relu(&conv_bn(p, &format!("dec{i}.up.conv"), &a));
    }
    let g = add(&conv_bn(p, "head.mid", &h), &f1);
    softmax(&relu(&conv_bn(p, "head.out", &g)))
}

/// Soft dice on channel 1 with additive smoothing 1.
pub fn dice(probs: &T, fg: &[u8]) -> f64 {
    let plane = probs.h * probs.w;
    let (mut i, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for n in 0..probs.n {
        for k in 0..plane {
            let pv = probs.d[(n * probs.c + 1) * plane + k];
            let gv = fg[n * plane + k] as f64;
            i += pv * gv;
            sp += pv;
            sg += gv;
        }
    }
    1.0 - (2.0 * i + 1.0) / (sp + sg + 1.0)
}
