//! Dense LeakyReLU networks over flat parameter slices.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Floating-point element type of the networks (f32 for training, f64 for
/// gradient checks).
pub trait Real:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;

    /// `C ← alpha·A·B + beta·C` for strided `m×k` A, `k×n` B and `m×n` C.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], rsa: isize, csa: isize, b: &[Self], rsb: isize, csb: isize, beta: Self, c: &mut [Self], rsc: isize, csc: isize);
}

macro_rules! real_impl {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], rsa: isize, csa: isize, b: &[Self], rsb: isize, csb: isize, beta: Self, c: &mut [Self], rsc: isize, csc: isize) {
                let last = |r: isize, cs: isize, rows: usize, cols: usize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows as isize - 1) * r + (cols as isize - 1) * cs + 1
                    }
                };
                assert!(last(rsa, csa, m, k) as usize <= a.len());
                assert!(last(rsb, csb, k, n) as usize <= b.len());
                assert!(last(rsc, csc, m, n) as usize <= c.len());
                // SAFETY: the asserts above keep every strided access in bounds.
                unsafe { $gemm(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc) }
            }
        }
    };
}

real_impl!(f32, matrixmultiply::sgemm);
real_impl!(f64, matrixmultiply::dgemm);

#[inline]
pub fn leaky_relu<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        x
    } else {
        x * T::from_f64(LEAKY_SLOPE)
    }
}

/// Layout of a fully connected network inside a flat parameter slice.
/// Each layer stores a row-major `in×out` weight block followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    /// `inputs[l]` is the input of layer `l` (B×sizes[l]); the last entry is the output.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<T>>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
    batch: usize,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.inputs.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut len = 0;
        for w in sizes.windows(2) {
            offsets.push(len);
            len += w[0] * w[1] + w[1];
        }
        Self { sizes: sizes.to_vec(), offsets, len }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn param_len(&self) -> usize {
        self.len
    }

    /// Weight and bias ranges of layer `l` within the network's slice.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w0 = self.offsets[l];
        (w0..w0 + i * o, w0 + i * o..w0 + i * o + o)
    }

    /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and
    /// `head_gain` (last layer); zero biases.
    pub fn init<T: Real, R: Rng + ?Sized>(&self, params: &mut [T], hidden_gain: f64, head_gain: f64, rng: &mut R) {
        assert_eq!(params.len(), self.len);
        for l in 0..self.n_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == self.n_layers() { head_gain } else { hidden_gain };
            let q = orthogonal(i, o, rng);
            let (wr, br) = self.layer_ranges(l);
            for (dst, v) in params[wr].iter_mut().zip(q.iter()) {
                *dst = T::from_f64(gain * v);
            }
            params[br].iter_mut().for_each(|b| *b = T::ZERO);
        }
    }

    /// Forward pass over `batch` rows of `x`; the output stays in `cache`.
    pub fn forward<T: Real>(&self, params: &[T], x: &[T], batch: usize, cache: &mut MlpCache<T>) {
        assert_eq!(x.len(), batch * self.input_dim(), "input length");
        let nl = self.n_layers();
        cache.inputs.resize_with(nl + 1, Vec::new);
        cache.pre.resize_with(nl, Vec::new);
        cache.batch = batch;
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(x);
        for l in 0..nl {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (wr, br) = self.layer_ranges(l);
            let (bias, w) = (&params[br], &params[wr]);
            let mut z = std::mem::take(&mut cache.pre[l]);
            z.clear();
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            T::gemm(batch, i, o, T::ONE, &cache.inputs[l], i as isize, 1, w, o as isize, 1, T::ONE, &mut z, o as isize, 1);
            let next = &mut cache.inputs[l + 1];
            next.clear();
            if l + 1 < nl {
                next.extend(z.iter().map(|&v| leaky_relu(v)));
            } else {
                next.extend_from_slice(&z);
            }
            cache.pre[l] = z;
        }
    }

    /// Accumulates parameter gradients given the gradient of a scalar loss
    /// with respect to the output of the last [`Mlp::forward`] call.
    pub fn backward<T: Real>(&self, params: &[T], cache: &mut MlpCache<T>, grad_out: &[T], grad: &mut [T]) {
        let batch = cache.batch;
        let nl = self.n_layers();
        assert_eq!(grad_out.len(), batch * self.output_dim(), "output gradient length");
        let mut dz = std::mem::take(&mut cache.grad_a);
        let mut da = std::mem::take(&mut cache.grad_b);
        dz.clear();
        dz.extend_from_slice(grad_out);
        for l in (0..nl).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (wr, br) = self.layer_ranges(l);
            T::gemm(i, batch, o, T::ONE, &cache.inputs[l], 1, i as isize, &dz, o as isize, 1, T::ONE, &mut grad[wr.clone()], o as isize, 1);
            let gb = &mut grad[br];
            for row in dz.chunks_exact(o) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += *v;
                }
            }
            if l > 0 {
                da.clear();
                da.resize(batch * i, T::ZERO);
                T::gemm(batch, o, i, T::ONE, &dz, o as isize, 1, &params[wr], 1, o as isize, T::ZERO, &mut da, i as isize, 1);
                let slope = T::from_f64(LEAKY_SLOPE);
                for (d, z) in da.iter_mut().zip(&cache.pre[l - 1]) {
                    if *z < T::ZERO {
                        *d *= slope;
                    }
                }
                std::mem::swap(&mut dz, &mut da);
            }
        }
        cache.grad_a = dz;
        cache.grad_b = da;
    }
}

/// Row-major `rows×cols` matrix with orthonormal rows or columns
/// (whichever is fewer) from the QR factorization of a Gaussian matrix.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.columns(0, small).into_owned();
    // Fix column signs so the distribution is uniform.
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r_ in 0..rows {
        for c in 0..cols {
            out[r_ * cols + c] = if rows >= cols { q[(r_, c)] } else { q[(c, r_)] };
        }
    }
    out
}
