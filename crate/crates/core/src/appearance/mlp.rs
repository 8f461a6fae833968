use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::Rng;

use crate::scalar::Real;

/// Fully connected network with ReLU between layers and all parameters in
/// one flat vector (per layer: column-major `out x in` weight, then bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Real> {
    pub sizes: Vec<usize>,
    /// Apply ReLU after the last layer too.
    pub relu_output: bool,
    pub params: Vec<T>,
}

/// Layer inputs and activated outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    acts: Vec<DMatrix<T>>,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &DMatrix<T> {
        self.acts.last().expect("at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    /// Uniform `±1/sqrt(fan_in)` initialization; the final layer is zeroed
    /// when `zero_last` is set.
    pub fn new(sizes: &[usize], relu_output: bool, zero_last: bool, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let zero = zero_last && l + 1 == layers;
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(if zero { T::zero() } else { T::lit(rng.random_range(-bound..bound)) });
            }
        }
        Self { sizes: sizes.to_vec(), relu_output, params }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    fn weight(&self, l: usize) -> DMatrixView<'_, T> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        DMatrixView::from_slice(&self.params[off..off + i * o], o, i)
    }

    fn bias(&self, l: usize) -> DVectorView<'_, T> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l) + i * o;
        DVectorView::from_slice(&self.params[off..off + o], o)
    }

    fn activated(&self, l: usize) -> bool {
        l + 2 < self.sizes.len() || self.relu_output
    }

    /// Forward pass over a batch with one sample per row.
    pub fn forward(&self, input: DMatrix<T>) -> MlpCache<T> {
        assert_eq!(input.ncols(), self.input_dim(), "MLP input width");
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input);
        for l in 0..self.sizes.len() - 1 {
            let x = acts.last().unwrap();
            let mut z = x * self.weight(l).transpose();
            let b = self.bias(l);
            for mut row in z.row_iter_mut() {
                for (v, &bb) in row.iter_mut().zip(b.iter()) {
                    *v += bb;
                }
            }
            if self.activated(l) {
                z.apply(|v| *v = v.max(T::zero()));
            }
            acts.push(z);
        }
        MlpCache { acts }
    }

    /// Accumulates parameter gradients into `d_params` and returns the
    /// gradient with respect to the input batch.
    pub fn backward(&self, cache: &MlpCache<T>, d_out: &DMatrix<T>, d_params: &mut [T]) -> DMatrix<T> {
        assert_eq!(d_params.len(), self.params.len(), "gradient buffer size");
        let mut d = d_out.clone();
        for l in (0..self.sizes.len() - 1).rev() {
            if self.activated(l) {
                d.zip_apply(&cache.acts[l + 1], |g, a| {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                });
            }
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let dw = d.transpose() * &cache.acts[l];
            for (dst, &src) in d_params[off..off + i * o].iter_mut().zip(dw.as_slice()) {
                *dst += src;
            }
            for (k, dst) in d_params[off + i * o..off + i * o + o].iter_mut().enumerate() {
                *dst += d.column(k).sum();
            }
            d = &d * self.weight(l);
        }
        d
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            relu_output: self.relu_output,
            params: self.params.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
