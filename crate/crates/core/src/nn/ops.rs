//! Differentiable operations on [`Var`].

use std::sync::Arc;

use rustfft::num_complex::Complex;

use super::graph::Var;
use super::tensor::Tensor;
use crate::dsp::stft::StftKernel;
use crate::real::Real;

fn same_shape<T: Real>(a: &Var<'_, T>, b: &Var<'_, T>, op: &str) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch");
}

fn col_sums<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let n = g.cols();
    let mut out = vec![T::zero(); n];
    for row in g.data().chunks(n) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
    Tensor::new(vec![n], out).expect("column sums")
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu_scalar<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

impl<'g, T: Real> Var<'g, T> {
    fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'g, T> {
        let value = self.value().map(f);
        self.graph().op(value, &[self], move |inputs, out, g| {
            let x = inputs[0];
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&xv, &yv), &gv)| gv * df(xv, yv))
                .collect();
            vec![Some(Tensor::new(x.shape().to_vec(), data).expect("unary grad"))]
        })
    }

    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        same_shape(&self, &other, "add");
        let value = self.value().zip_map(&other.value(), |a, b| a + b);
        self.graph()
            .op(value, &[self, other], |_, _, g| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        same_shape(&self, &other, "sub");
        let value = self.value().zip_map(&other.value(), |a, b| a - b);
        self.graph()
            .op(value, &[self, other], |_, _, g| vec![Some(g.clone()), Some(g.map(|v| -v))])
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        same_shape(&self, &other, "mul");
        let value = self.value().zip_map(&other.value(), |a, b| a * b);
        self.graph().op(value, &[self, other], |inputs, _, g| {
            vec![
                Some(g.zip_map(inputs[1], |gv, b| gv * b)),
                Some(g.zip_map(inputs[0], |gv, a| gv * a)),
            ]
        })
    }

    pub fn div(self, other: Var<'g, T>) -> Var<'g, T> {
        same_shape(&self, &other, "div");
        let value = self.value().zip_map(&other.value(), |a, b| a / b);
        self.graph().op(value, &[self, other], |inputs, out, g| {
            let gb = Tensor::new(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(out.data())
                    .zip(inputs[1].data())
                    .map(|((&gv, &y), &b)| -gv * y / b)
                    .collect(),
            )
            .expect("div grad");
            vec![Some(g.zip_map(inputs[1], |gv, b| gv / b)), Some(gb)]
        })
    }

    /// Adds a length-`n` vector to every row of an `[.., n]` tensor.
    pub fn add_row(self, bias: Var<'g, T>) -> Var<'g, T> {
        let x = self.value();
        let b = bias.value();
        assert_eq!(x.cols(), b.len(), "add_row: width mismatch");
        let n = b.len();
        let mut value = (*x).clone();
        for row in value.data_mut().chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v = *v + bv;
            }
        }
        self.graph()
            .op(value, &[self, bias], |_, _, g| vec![Some(g.clone()), Some(col_sums(g))])
    }

    /// Adds `c[i]` to every entry of row `i` of an `[m, n]` tensor.
    pub fn add_col(self, col: Var<'g, T>) -> Var<'g, T> {
        let x = self.value();
        let c = col.value();
        let n = x.cols();
        assert_eq!(x.rows(), c.len(), "add_col: height mismatch");
        let mut value = (*x).clone();
        for (row, &cv) in value.data_mut().chunks_mut(n).zip(c.data()) {
            row.iter_mut().for_each(|v| *v = *v + cv);
        }
        self.graph().op(value, &[self, col], move |inputs, _, g| {
            let gc: Vec<T> = g.data().chunks(n).map(|r| r.iter().copied().sum()).collect();
            vec![Some(g.clone()), Some(Tensor::new(inputs[1].shape().to_vec(), gc).expect("add_col grad"))]
        })
    }

    /// Multiplies every row of an `[.., n]` tensor by a length-`n` vector.
    pub fn mul_row(self, scale: Var<'g, T>) -> Var<'g, T> {
        let x = self.value();
        let s = scale.value();
        assert_eq!(x.cols(), s.len(), "mul_row: width mismatch");
        let n = s.len();
        let mut value = (*x).clone();
        for row in value.data_mut().chunks_mut(n) {
            for (v, &sv) in row.iter_mut().zip(s.data()) {
                *v = *v * sv;
            }
        }
        self.graph().op(value, &[self, scale], move |inputs, _, g| {
            let (x, s) = (inputs[0], inputs[1]);
            let mut gx = g.clone();
            for row in gx.data_mut().chunks_mut(n) {
                for (v, &sv) in row.iter_mut().zip(s.data()) {
                    *v = *v * sv;
                }
            }
            let gs = col_sums(&g.zip_map(x, |a, b| a * b));
            vec![Some(gx), Some(gs)]
        })
    }

    pub fn scale(self, c: T) -> Var<'g, T> {
        self.unary(|x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: T) -> Var<'g, T> {
        self.unary(|x| x + c, |_, _| T::one())
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn exp(self) -> Var<'g, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn expm1(self) -> Var<'g, T> {
        self.unary(|x| x.exp_m1(), |_, y| y + T::one())
    }

    pub fn ln(self) -> Var<'g, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn log10(self) -> Var<'g, T> {
        let k = T::of(std::f64::consts::LN_10);
        self.unary(|x| x.log10(), move |x, _| T::one() / (x * k))
    }

    pub fn tanh(self) -> Var<'g, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sin(self) -> Var<'g, T> {
        self.unary(|x| x.sin(), |x, _| x.cos())
    }

    pub fn cos(self) -> Var<'g, T> {
        self.unary(|x| x.cos(), |x, _| -x.sin())
    }

    pub fn square(self) -> Var<'g, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn abs(self) -> Var<'g, T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn relu(self) -> Var<'g, T> {
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn gelu(self) -> Var<'g, T> {
        self.unary(gelu_scalar, |x, _| gelu_grad(x))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(self, lo: T, hi: T) -> Var<'g, T> {
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    pub fn sum(self) -> Var<'g, T> {
        let x = self.value();
        let value = Tensor::scalar(x.sum());
        let shape = x.shape().to_vec();
        self.graph().op(value, &[self], move |_, _, g| {
            vec![Some(Tensor::full(&shape, g.item()))]
        })
    }

    pub fn mean(self) -> Var<'g, T> {
        let n = T::of(self.value().len() as f64);
        self.sum().scale(T::one() / n)
    }

    /// Sums over the last axis: `[m, n] → [m]`.
    pub fn sum_rows(self) -> Var<'g, T> {
        let x = self.value();
        let n = x.cols();
        let m = x.rows();
        let value = Tensor::new(vec![m], x.data().chunks(n).map(|r| r.iter().copied().sum()).collect())
            .expect("row sums");
        self.graph().op(value, &[self], move |inputs, _, g| {
            let mut gx = Tensor::zeros(inputs[0].shape());
            for (row, &gv) in gx.data_mut().chunks_mut(n).zip(g.data()) {
                row.iter_mut().for_each(|v| *v = gv);
            }
            vec![Some(gx)]
        })
    }

    pub fn matmul(self, other: Var<'g, T>) -> Var<'g, T> {
        let value = self.value().matmul(&other.value()).expect("matmul shapes");
        self.graph().op(value, &[self, other], |inputs, _, g| {
            let (a, b) = (inputs[0], inputs[1]);
            let ga = g.matmul_ex(false, b, true).expect("matmul grad a");
            let gb = a.matmul_ex(true, g, false).expect("matmul grad b");
            vec![
                Some(ga.reshaped(a.shape()).expect("shape")),
                Some(gb.reshaped(b.shape()).expect("shape")),
            ]
        })
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(self, other: Var<'g, T>) -> Var<'g, T> {
        let value = self.value().matmul_ex(false, &other.value(), true).expect("matmul_nt shapes");
        self.graph().op(value, &[self, other], |inputs, _, g| {
            let (a, b) = (inputs[0], inputs[1]);
            let ga = g.matmul(b).expect("matmul_nt grad a");
            let gb = g.matmul_ex(true, a, false).expect("matmul_nt grad b");
            vec![
                Some(ga.reshaped(a.shape()).expect("shape")),
                Some(gb.reshaped(b.shape()).expect("shape")),
            ]
        })
    }

    pub fn transpose(self) -> Var<'g, T> {
        let value = self.value().transpose();
        self.graph().op(value, &[self], |_, _, g| vec![Some(g.transpose())])
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g, T> {
        let x = self.value();
        let original = x.shape().to_vec();
        let value = (*x).clone().reshaped(shape).expect("reshape");
        self.graph().op(value, &[self], move |_, _, g| {
            vec![Some(g.clone().reshaped(&original).expect("reshape grad"))]
        })
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(self, start: usize, end: usize) -> Var<'g, T> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        assert!(start <= end && end <= n, "slice_cols out of range");
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for row in x.data().chunks(n) {
            data.extend_from_slice(&row[start..end]);
        }
        let value = Tensor::new(vec![m, w], data).expect("slice_cols");
        self.graph().op(value, &[self], move |_, _, g| {
            let mut gx = vec![T::zero(); m * n];
            for (dst, src) in gx.chunks_mut(n).zip(g.data().chunks(w.max(1))) {
                if w > 0 {
                    dst[start..end].copy_from_slice(src);
                }
            }
            vec![Some(Tensor::new(vec![m, n], gx).expect("slice_cols grad"))]
        })
    }

    /// Rows `[start, end)` of a 2-D tensor.
    pub fn slice_rows(self, start: usize, end: usize) -> Var<'g, T> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        assert!(start <= end && end <= m, "slice_rows out of range");
        let value = Tensor::new(vec![end - start, n], x.data()[start * n..end * n].to_vec()).expect("slice_rows");
        self.graph().op(value, &[self], move |_, _, g| {
            let mut gx = vec![T::zero(); m * n];
            gx[start * n..end * n].copy_from_slice(g.data());
            vec![Some(Tensor::new(vec![m, n], gx).expect("slice_rows grad"))]
        })
    }

    /// Gathers rows of an embedding table.
    pub fn gather_rows(self, ids: &[usize]) -> Var<'g, T> {
        let table = self.value();
        let n = table.cols();
        let rows = table.rows();
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            assert!(i < rows, "gather_rows: index {i} out of range {rows}");
            data.extend_from_slice(table.row(i));
        }
        let value = Tensor::new(vec![ids.len(), n], data).expect("gather");
        let ids = ids.to_vec();
        self.graph().op(value, &[self], move |inputs, _, g| {
            let mut gt = Tensor::zeros(inputs[0].shape());
            for (k, &i) in ids.iter().enumerate() {
                let src = &g.data()[k * n..(k + 1) * n];
                let dst = &mut gt.data_mut()[i * n..(i + 1) * n];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + s;
                }
            }
            vec![Some(gt)]
        })
    }

    /// Normalises each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(self, eps: T) -> Var<'g, T> {
        let x = self.value();
        let n = x.cols();
        let nf = T::of(n as f64);
        let mut value = (*x).clone();
        let mut rstd = Vec::with_capacity(x.rows());
        for row in value.data_mut().chunks_mut(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let r = T::one() / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * r;
            }
            rstd.push(r);
        }
        self.graph().op(value, &[self], move |_, out, g| {
            let mut gx = g.clone();
            for ((grow, yrow), &r) in gx.data_mut().chunks_mut(n).zip(out.data().chunks(n)).zip(&rstd) {
                let mean_g = grow.iter().copied().sum::<T>() / nf;
                let mean_gy = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum::<T>() / nf;
                for (gv, &y) in grow.iter_mut().zip(yrow) {
                    *gv = r * (*gv - mean_g - y * mean_gy);
                }
            }
            vec![Some(gx)]
        })
    }

    /// Row-wise softmax of attention scores `[q, k]` where query row `i` sits at
    /// absolute position `offset + i` and may only see keys `j ≤ offset + i`.
    pub fn causal_softmax(self, offset: usize) -> Var<'g, T> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        let mut value = Tensor::zeros(x.shape());
        for i in 0..m {
            let visible = (offset + i + 1).min(n);
            let row = &x.data()[i * n..i * n + visible];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let out = &mut value.data_mut()[i * n..i * n + visible];
            let mut sum = T::zero();
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - max).exp();
                sum = sum + *o;
            }
            out.iter_mut().for_each(|o| *o = *o / sum);
        }
        self.graph().op(value, &[self], move |_, y, g| {
            let mut gx = Tensor::zeros(y.shape());
            for i in 0..m {
                let yr = &y.data()[i * n..(i + 1) * n];
                let gr = &g.data()[i * n..(i + 1) * n];
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for (j, d) in gx.data_mut()[i * n..(i + 1) * n].iter_mut().enumerate() {
                    *d = yr[j] * (gr[j] - dot);
                }
            }
            vec![Some(gx)]
        })
    }

    /// Row-wise softmax with no mask.
    pub fn softmax_rows(self) -> Var<'g, T> {
        let n = self.value().cols();
        let offset = n;
        self.causal_softmax(offset)
    }

    /// `log Σ exp` over the last axis: `[m, n] → [m]`.
    pub fn logsumexp_rows(self) -> Var<'g, T> {
        let x = self.value();
        let n = x.cols();
        let lse: Vec<T> = x
            .data()
            .chunks(n)
            .map(|r| {
                let max = r.iter().copied().fold(T::neg_infinity(), T::max);
                if max == T::neg_infinity() {
                    return max;
                }
                max + r.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
            })
            .collect();
        let value = Tensor::new(vec![lse.len()], lse).expect("lse");
        self.graph().op(value, &[self], move |inputs, out, g| {
            let x = inputs[0];
            let mut gx = Tensor::zeros(x.shape());
            for ((dst, src), (&l, &gv)) in gx
                .data_mut()
                .chunks_mut(n)
                .zip(x.data().chunks(n))
                .zip(out.data().iter().zip(g.data()))
            {
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = gv * (v - l).exp();
                }
            }
            vec![Some(gx)]
        })
    }

    /// Rotary position embedding applied per head to `[T, heads·head_dim]`;
    /// row `i` is at absolute position `offset + i`.
    pub fn rope(self, heads: usize, offset: usize, base: f64) -> Var<'g, T> {
        let x = self.value();
        let (m, width) = (x.rows(), x.cols());
        assert_eq!(width % heads, 0, "rope: width not divisible by heads");
        let hd = width / heads;
        assert_eq!(hd % 2, 0, "rope: head dim must be even");
        let half = hd / 2;
        let table: Vec<(T, T)> = (0..m)
            .flat_map(|i| {
                let pos = (offset + i) as f64;
                (0..half).map(move |j| {
                    let theta = pos * base.powf(-2.0 * j as f64 / hd as f64);
                    (T::of(theta.cos()), T::of(theta.sin()))
                })
            })
            .collect();
        let rotate = move |src: &[T], dst: &mut [T], inverse: bool| {
            for i in 0..m {
                for h in 0..heads {
                    let base_idx = i * width + h * hd;
                    for j in 0..half {
                        let (c, s) = table[i * half + j];
                        let s = if inverse { -s } else { s };
                        let a = src[base_idx + j];
                        let b = src[base_idx + j + half];
                        dst[base_idx + j] = a * c - b * s;
                        dst[base_idx + j + half] = a * s + b * c;
                    }
                }
            }
        };
        let mut value = Tensor::zeros(x.shape());
        rotate(x.data(), value.data_mut(), false);
        self.graph().op(value, &[self], move |_, _, g| {
            let mut gx = Tensor::zeros(g.shape());
            rotate(g.data(), gx.data_mut(), true);
            vec![Some(gx)]
        })
    }

    /// Depthwise causal convolution of `[T, C]` with kernel `[K, C]`:
    /// `y[t, c] = Σ_k w[k, c] · x[t − K + 1 + k, c]`, zero before the start.
    pub fn depthwise_causal_conv(self, weight: Var<'g, T>) -> Var<'g, T> {
        let x = self.value();
        let w = weight.value();
        let (t_len, c) = (x.rows(), x.cols());
        let k = w.rows();
        assert_eq!(w.cols(), c, "depthwise conv: channel mismatch");
        let mut value = Tensor::zeros(&[t_len, c]);
        {
            let out = value.data_mut();
            for t in 0..t_len {
                for kk in 0..k {
                    let s = t as isize - k as isize + 1 + kk as isize;
                    if s < 0 {
                        continue;
                    }
                    let xs = &x.data()[s as usize * c..(s as usize + 1) * c];
                    let wk = &w.data()[kk * c..(kk + 1) * c];
                    let o = &mut out[t * c..(t + 1) * c];
                    for ((ov, &xv), &wv) in o.iter_mut().zip(xs).zip(wk) {
                        *ov = *ov + xv * wv;
                    }
                }
            }
        }
        self.graph().op(value, &[self, weight], move |inputs, _, g| {
            let (x, w) = (inputs[0], inputs[1]);
            let mut gx = Tensor::zeros(x.shape());
            let mut gw = Tensor::zeros(w.shape());
            for t in 0..t_len {
                let gt = &g.data()[t * c..(t + 1) * c];
                for kk in 0..k {
                    let s = t as isize - k as isize + 1 + kk as isize;
                    if s < 0 {
                        continue;
                    }
                    let s = s as usize;
                    for ch in 0..c {
                        gx.data_mut()[s * c + ch] = gx.data()[s * c + ch] + w.data()[kk * c + ch] * gt[ch];
                        gw.data_mut()[kk * c + ch] = gw.data()[kk * c + ch] + x.data()[s * c + ch] * gt[ch];
                    }
                }
            }
            vec![Some(gx), Some(gw)]
        })
    }

    /// STFT of a 1-D signal: `[len] → [frames, 2·bins]` (real parts, then imaginary parts).
    pub fn stft(self, kernel: Arc<StftKernel>) -> Var<'g, T> {
        let x = self.value();
        let len = x.len();
        let bins = kernel.config().bins();
        let xs: Vec<f64> = x.data().iter().map(|v| v.f64()).collect();
        let spec = kernel.analyze(&xs);
        let frames = spec.len() / bins;
        let mut data = Vec::with_capacity(frames * 2 * bins);
        for f in spec.chunks(bins) {
            data.extend(f.iter().map(|c| T::of(c.re)));
            data.extend(f.iter().map(|c| T::of(c.im)));
        }
        let value = Tensor::new(vec![frames, 2 * bins], data).expect("stft");
        let shape = x.shape().to_vec();
        self.graph().op(value, &[self], move |_, _, g| {
            let packed: Vec<Complex<f64>> = g
                .data()
                .chunks(2 * bins)
                .flat_map(|r| (0..bins).map(move |k| Complex::new(r[k].f64(), r[bins + k].f64())))
                .collect();
            let gx = kernel.analyze_adjoint(&packed, len);
            vec![Some(Tensor::new(shape.clone(), gx.into_iter().map(T::of).collect()).expect("stft grad"))]
        })
    }

    /// Windowed overlap-add synthesis of `[frames, 2·bins]` spectra onto signal
    /// positions `[origin, origin + len)`, scaled by `gain`.
    pub fn istft(self, kernel: Arc<StftKernel>, origin: isize, len: usize, gain: f64) -> Var<'g, T> {
        let s = self.value();
        let bins = kernel.config().bins();
        assert_eq!(s.cols(), 2 * bins, "istft: expected {} columns", 2 * bins);
        let frames = s.rows();
        let spec: Vec<Complex<f64>> = s
            .data()
            .chunks(2 * bins)
            .flat_map(|r| (0..bins).map(move |k| Complex::new(r[k].f64(), r[bins + k].f64())))
            .collect();
        let time = kernel.frames_to_time(&spec);
        let out = kernel.overlap_add(&time, origin, len);
        let value = Tensor::new(vec![len], out.into_iter().map(|v| T::of(v * gain)).collect()).expect("istft");
        self.graph().op(value, &[self], move |_, _, g| {
            let gy: Vec<f64> = g.data().iter().map(|v| v.f64() * gain).collect();
            let gt = kernel.overlap_add_adjoint(&gy, origin, frames);
            let gs = kernel.frames_to_time_adjoint(&gt);
            let mut data = Vec::with_capacity(frames * 2 * bins);
            for f in gs.chunks(bins) {
                data.extend(f.iter().map(|c| T::of(c.re)));
                data.extend(f.iter().map(|c| T::of(c.im)));
            }
            vec![Some(Tensor::new(vec![frames, 2 * bins], data).expect("istft grad"))]
        })
    }
}

/// Concatenates 2-D variables along columns.
pub fn concat_cols<'g, T: Real>(parts: &[Var<'g, T>]) -> Var<'g, T> {
    assert!(!parts.is_empty(), "concat_cols: no inputs");
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let m = values[0].rows();
    assert!(values.iter().all(|v| v.rows() == m), "concat_cols: row mismatch");
    let widths: Vec<usize> = values.iter().map(|v| v.cols()).collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(m * total);
    for i in 0..m {
        for v in &values {
            data.extend_from_slice(v.row(i));
        }
    }
    let value = Tensor::new(vec![m, total], data).expect("concat_cols");
    let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
    parts[0].graph().op(value, parts, move |_, _, g| {
        let mut outs: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(m * w)).collect();
        for row in g.data().chunks(total) {
            let mut at = 0;
            for (o, &w) in outs.iter_mut().zip(&widths) {
                o.extend_from_slice(&row[at..at + w]);
                at += w;
            }
        }
        outs.into_iter()
            .zip(&shapes)
            .map(|(d, s)| Some(Tensor::new(s.clone(), d).expect("concat_cols grad")))
            .collect()
    })
}

/// Concatenates 2-D variables along rows.
pub fn concat_rows<'g, T: Real>(parts: &[Var<'g, T>]) -> Var<'g, T> {
    assert!(!parts.is_empty(), "concat_rows: no inputs");
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let n = values[0].cols();
    assert!(values.iter().all(|v| v.cols() == n), "concat_rows: column mismatch");
    let rows: Vec<usize> = values.iter().map(|v| v.rows()).collect();
    let total: usize = rows.iter().sum();
    let data: Vec<T> = values.iter().flat_map(|v| v.data().iter().copied()).collect();
    let value = Tensor::new(vec![total, n], data).expect("concat_rows");
    let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
    parts[0].graph().op(value, parts, move |_, _, g| {
        let mut at = 0;
        rows.iter()
            .zip(&shapes)
            .map(|(&r, s)| {
                let d = g.data()[at * n..(at + r) * n].to_vec();
                at += r;
                Some(Tensor::new(s.clone(), d).expect("concat_rows grad"))
            })
            .collect()
    })
}
