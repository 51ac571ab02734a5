//! Differentiable building blocks on channel-first activations `[C, B, H, W]`.
//!
//! Convolutions gather their input windows with `index_select` and multiply
//! with the flattened kernel, so every operation here has a backward pass made
//! of candle primitives. Bilinear resizing is a pair of matrix products.

use std::collections::HashMap;
use std::sync::Mutex;

use candle_core::{DType, Device, Tensor, D};

use crate::error::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Gather {
        b: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Interp {
        from: usize,
        to: usize,
    },
    Cumsum {
        n: usize,
    },
}

/// Shape-dependent constant tensors, built once per shape.
#[derive(Debug)]
pub struct ShapeCache {
    device: Device,
    dtype: DType,
    map: Mutex<HashMap<Key, Tensor>>,
}

impl ShapeCache {
    pub fn new(device: Device, dtype: DType) -> Self {
        Self {
            device,
            dtype,
            map: Mutex::new(HashMap::new()),
        }
    }

    fn get_or(&self, key: Key, build: impl FnOnce() -> Result<Tensor>) -> Result<Tensor> {
        let mut map = self.map.lock().expect("cache lock");
        if let Some(t) = map.get(&key) {
            return Ok(t.clone());
        }
        let t = build()?;
        map.insert(key, t.clone());
        Ok(t)
    }
}

pub fn out_size(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

/// Source positions of every `k × k` window, ordered `(ky, kx, b, oy, ox)`,
/// pointing into `[C, B·H·W + 1]` where the extra column is zero padding.
fn gather_index(b: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Vec<u32> {
    let (ho, wo) = (out_size(h, k, stride, pad), out_size(w, k, stride, pad));
    let zero = (b * h * w) as u32;
    let mut idx = Vec::with_capacity(k * k * b * ho * wo);
    for ky in 0..k {
        for kx in 0..k {
            for bi in 0..b {
                for oy in 0..ho {
                    let y = (oy * stride + ky) as isize - pad as isize;
                    for ox in 0..wo {
                        let x = (ox * stride + kx) as isize - pad as isize;
                        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                            idx.push(zero);
                        } else {
                            idx.push((bi * h * w + y as usize * w + x as usize) as u32);
                        }
                    }
                }
            }
        }
    }
    idx
}

/// Dense or depthwise 2-D convolution on `[C, B, H, W]`.
///
/// `weight` is `[C_out, C_in, k, k]`, or `[C, 1, k, k]` when `depthwise`.
pub fn conv2d(
    cache: &ShapeCache,
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
    depthwise: bool,
) -> Result<Tensor> {
    let (c, b, h, w) = x.dims4()?;
    let (c_out, c_w, k, k2) = weight.dims4()?;
    if k != k2 || (depthwise && (c_w != 1 || c_out != c)) || (!depthwise && c_w != c) {
        return Err(ModelError::Shape(format!(
            "conv weight {:?} does not fit input with {c} channels",
            weight.dims()
        )));
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(ModelError::Shape(format!("{h}x{w} input smaller than {k}x{k} kernel")));
    }
    let (ho, wo) = (out_size(h, k, stride, pad), out_size(w, k, stride, pad));
    let n_out = b * ho * wo;
    let flat = x.reshape((c, b * h * w))?;
    let y = if k == 1 && stride == 1 && pad == 0 && !depthwise {
        weight.reshape((c_out, c))?.matmul(&flat)?
    } else {
        let idx = cache.get_or(
            Key::Gather {
                b,
                h,
                w,
                k,
                stride,
                pad,
            },
            || {
                Ok(Tensor::from_vec(
                    gather_index(b, h, w, k, stride, pad),
                    k * k * n_out,
                    &cache.device,
                )?)
            },
        )?;
        let padded = Tensor::cat(&[&flat, &Tensor::zeros((c, 1), x.dtype(), x.device())?], 1)?;
        let cols = padded.index_select(&idx, 1)?;
        if depthwise {
            cols.reshape((c, k * k, n_out))?
                .broadcast_mul(&weight.reshape((c, k * k, 1))?)?
                .sum(1)?
        } else {
            weight
                .reshape((c_out, c * k * k))?
                .matmul(&cols.reshape((c * k * k, n_out))?)?
        }
    };
    let y = match bias {
        Some(bias) => y.broadcast_add(&bias.reshape((c_out, 1))?)?,
        None => y,
    };
    Ok(y.reshape((c_out, b, ho, wo))?)
}

/// `[from, to]` matrix of half-pixel-centred linear interpolation weights.
pub fn interp_matrix(from: usize, to: usize) -> Vec<f64> {
    let mut m = vec![0.0; from * to];
    let scale = from as f64 / to as f64;
    for j in 0..to {
        let src = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(from - 1);
        let f = src - i0 as f64;
        m[i0 * to + j] += 1.0 - f;
        m[i1 * to + j] += f;
    }
    m
}

fn interp_tensor(cache: &ShapeCache, from: usize, to: usize) -> Result<Tensor> {
    cache.get_or(Key::Interp { from, to }, || {
        Ok(Tensor::from_vec(interp_matrix(from, to), (from, to), &cache.device)?.to_dtype(cache.dtype)?)
    })
}

/// Bilinear resize of `[C, B, H, W]` to `[C, B, out_h, out_w]`.
pub fn resize_bilinear(cache: &ShapeCache, x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, b, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let aw = interp_tensor(cache, w, out_w)?;
    let ah = interp_tensor(cache, h, out_h)?;
    let y = x.reshape((c * b * h, w))?.matmul(&aw)?; // [CBH, W']
    let y = y.reshape((c * b, h, out_w))?.transpose(1, 2)?.contiguous()?; // [CB, W', H]
    let y = y.reshape((c * b * out_w, h))?.matmul(&ah)?; // [CBW', H']
    let y = y.reshape((c * b, out_w, out_h))?.transpose(1, 2)?.contiguous()?;
    Ok(y.reshape((c, b, out_h, out_w))?)
}

/// Group normalization of `[C, B, H, W]` with per-channel affine parameters.
pub fn group_norm(x: &Tensor, groups: usize, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let (c, b, h, w) = x.dims4()?;
    let g = x.reshape((groups, c / groups, b, h * w))?;
    let mean = g.mean_keepdim(3)?.mean_keepdim(1)?;
    let centred = g.broadcast_sub(&mean)?;
    let var = centred.sqr()?.mean_keepdim(3)?.mean_keepdim(1)?;
    let normed = centred.broadcast_div(&(var + eps)?.sqrt()?)?.reshape((c, b, h, w))?;
    Ok(normed
        .broadcast_mul(&gamma.reshape((c, 1, 1, 1))?)?
        .broadcast_add(&beta.reshape((c, 1, 1, 1))?)?)
}

/// Groups used for a layer of `c` channels.
pub fn norm_groups(c: usize) -> usize {
    let mut g = 8.min(c);
    while c % g != 0 {
        g -= 1;
    }
    g
}

/// Layer normalization over the last dimension.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centred = x.broadcast_sub(&mean)?;
    let var = centred.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centred
        .broadcast_div(&(var + eps)?.sqrt()?)?
        .broadcast_mul(gamma)?
        .broadcast_add(beta)?)
}

/// `x · Wᵀ + b` over the last dimension of a 2-D or 3-D tensor.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (out, inp) = weight.dims2()?;
    let dims = x.dims().to_vec();
    let rows: usize = dims[..dims.len() - 1].iter().product();
    let y = x.reshape((rows, inp))?.matmul(&weight.t()?)?;
    let y = match bias {
        Some(b) => y.broadcast_add(b)?,
        None => y,
    };
    let mut out_dims = dims;
    *out_dims.last_mut().expect("non-empty") = out;
    Ok(y.reshape(out_dims)?)
}

pub fn softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let m = x.max_keepdim(dim)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(dim)?)?)
}

/// `ln(1 + eˣ)` written as `relu(x) + ln(1 + e^{-|x|})`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = x.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&x.affine(slope, 0.0)?)?)
}

pub fn relu6(x: &Tensor) -> Result<Tensor> {
    Ok(x.relu()?.minimum(6.0)?)
}

/// Inclusive prefix-sum matrix `U[i, j] = [i ≤ j]`, so that `w · U` is the cumulative sum.
pub fn cumsum_matrix(cache: &ShapeCache, n: usize) -> Result<Tensor> {
    cache.get_or(Key::Cumsum { n }, || {
        let data: Vec<f64> = (0..n * n).map(|k| if k / n <= k % n { 1.0 } else { 0.0 }).collect();
        Ok(Tensor::from_vec(data, (n, n), &cache.device)?.to_dtype(cache.dtype)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache() -> ShapeCache {
        ShapeCache::new(Device::Cpu, DType::F64)
    }

    /// Direct six-loop convolution on `[C, B, H, W]` buffers.
    fn naive_conv(
        x: &[f64],
        (c, b, h, w): (usize, usize, usize, usize),
        wt: &[f64],
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        depthwise: bool,
    ) -> Vec<f64> {
        let (ho, wo) = (out_size(h, k, stride, pad), out_size(w, k, stride, pad));
        let mut y = vec![0.0; c_out * b * ho * wo];
        for o in 0..c_out {
            let inputs: Vec<usize> = if depthwise { vec![o] } else { (0..c).collect() };
            for bi in 0..b {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for (ii, &ci) in inputs.iter().enumerate() {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let yy = (oy * stride + ky) as isize - pad as isize;
                                    let xx = (ox * stride + kx) as isize - pad as isize;
                                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                        continue;
                                    }
                                    let xv = x[((ci * b + bi) * h + yy as usize) * w + xx as usize];
                                    let wi = if depthwise { ii } else { ci };
                                    let cw = if depthwise { 1 } else { c };
                                    acc += xv * wt[((o * cw + wi) * k + ky) * k + kx];
                                }
                            }
                        }
                        y[((o * b + bi) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn ramp(n: usize, a: f64) -> Vec<f64> {
        (0..n)
            .map(|i| ((i as f64 * a).sin() * 1.3).round() / 2.0 + 0.1 * i as f64 % 0.7)
            .collect()
    }

    #[test]
    fn conv_matches_direct_loops() {
        let cache = cache();
        for &(c, c_out, h, w, k, stride, pad, dw) in &[
            (3, 4, 5, 7, 3, 2, 1, false),
            (2, 3, 6, 6, 3, 1, 1, false),
            (4, 4, 7, 5, 3, 2, 1, true),
            (3, 5, 4, 4, 1, 1, 0, false),
            (2, 2, 8, 8, 4, 4, 0, false),
        ] {
            let b = 2;
            let xv = ramp(c * b * h * w, 0.37);
            let wv = ramp(c_out * if dw { 1 } else { c } * k * k, 0.91);
            let x = Tensor::from_vec(xv.clone(), (c, b, h, w), &Device::Cpu).unwrap();
            let wt = Tensor::from_vec(wv.clone(), (c_out, if dw { 1 } else { c }, k, k), &Device::Cpu).unwrap();
            let y = conv2d(&cache, &x, &wt, None, stride, pad, dw).unwrap();
            let got = y.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let want = naive_conv(&xv, (c, b, h, w), &wv, c_out, k, stride, pad, dw);
            assert_eq!(
                y.dims()[2..],
                [out_size(h, k, stride, pad), out_size(w, k, stride, pad)]
            );
            for (g, e) in got.iter().zip(&want) {
                assert!((g - e).abs() < 1e-12, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn conv_gradient_reaches_odd_sized_inputs() {
        let cache = cache();
        let x =
            candle_core::Var::from_tensor(&Tensor::from_vec(ramp(2 * 3 * 5, 0.3), (1, 2, 3, 5), &Device::Cpu).unwrap())
                .unwrap();
        let wt = Tensor::ones((2, 1, 3, 3), DType::F64, &Device::Cpu).unwrap();
        let y = conv2d(&cache, x.as_tensor(), &wt, None, 2, 1, false).unwrap();
        let g = y.sum_all().unwrap().backward().unwrap();
        assert_eq!(g.get(x.as_tensor()).unwrap().dims(), &[1, 2, 3, 5]);
    }

    #[test]
    fn interpolation_weights_are_convex() {
        for &(a, b) in &[(2, 3), (3, 8), (15, 30), (8, 4)] {
            let m = interp_matrix(a, b);
            for j in 0..b {
                let col: Vec<f64> = (0..a).map(|i| m[i * b + j]).collect();
                assert!(col.iter().all(|&v| v >= 0.0));
                assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let cache = cache();
        let x = Tensor::from_vec(vec![1.0f64, 3.0], (1, 1, 1, 2), &Device::Cpu).unwrap();
        let y = resize_bilinear(&cache, &x, 1, 4)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert_eq!(y, vec![1.0, 1.5, 2.5, 3.0]);
    }

    #[test]
    fn norms_and_activations() {
        let cache = cache();
        let x = Tensor::from_vec(ramp(4 * 2 * 9, 0.7), (4, 2, 3, 3), &Device::Cpu).unwrap();
        let ones = Tensor::ones(4, DType::F64, &Device::Cpu).unwrap();
        let zeros = Tensor::zeros(4, DType::F64, &Device::Cpu).unwrap();
        let y = group_norm(&x, 2, &ones, &zeros, 1e-5).unwrap();
        let m = y.narrow(0, 0, 2).unwrap().narrow(1, 0, 1).unwrap().mean_all().unwrap();
        assert!(m.to_scalar::<f64>().unwrap().abs() < 1e-12);
        assert_eq!(norm_groups(12), 6);
        assert_eq!(norm_groups(8), 8);
        assert_eq!(norm_groups(3), 3);

        let s = softplus(&Tensor::new(&[-40.0f64, 0.0, 40.0], &Device::Cpu).unwrap())
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert!((0.0..1e-15).contains(&s[0]));
        assert!((s[1] - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(s[2], 40.0);

        let p = softmax(&Tensor::new(&[[1.0f64, 2.0], [3.0, 5.0]], &Device::Cpu).unwrap(), 0).unwrap();
        let sums = p.sum(0).unwrap().to_vec1::<f64>().unwrap();
        assert!(sums.iter().all(|v| (v - 1.0).abs() < 1e-15));

        let u = cumsum_matrix(&cache, 3).unwrap();
        let c = Tensor::new(&[[1.0f64, 2.0, 3.0]], &Device::Cpu)
            .unwrap()
            .matmul(&u)
            .unwrap();
        assert_eq!(c.to_vec2::<f64>().unwrap(), vec![vec![1.0, 3.0, 6.0]]);
    }
}
