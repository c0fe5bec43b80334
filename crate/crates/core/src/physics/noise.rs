use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PhysicalSystem;
use crate::autodiff::ops::concat_params;
use crate::digital::NoiseModel;
use crate::error::{check_len, Result};

pub type MixingFn = Arc<dyn Fn(ArrayView1<f64>) -> Array2<f64> + Send + Sync>;

/// Where the mixing matrix `A` for a given input comes from.
#[derive(Clone)]
pub enum NoiseSource {
    /// Same `A` for every input.
    Fixed(Array2<f64>),
    /// A fitted predictor of `A(x, θ)`.
    Model(Arc<NoiseModel>),
    /// Any closure of `concat(x, θ)`.
    Function(MixingFn),
}

impl NoiseSource {
    fn mixing(&self, q: ArrayView1<f64>) -> Result<Array2<f64>> {
        match self {
            NoiseSource::Fixed(a) => Ok(a.clone()),
            NoiseSource::Model(m) => m.predict_mixing(q),
            NoiseSource::Function(f) => Ok(f(q)),
        }
    }
}

/// `y = inner(x, θ) + A z` with `z ~ N(0, I)` from a seeded stream.
pub struct NoiseWrapper {
    inner: Arc<dyn PhysicalSystem>,
    source: NoiseSource,
    seed: u64,
    rng: Mutex<ChaCha8Rng>,
    name: String,
}

impl std::fmt::Debug for NoiseWrapper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseWrapper")
            .field("inner", &self.inner.name())
            .field("seed", &self.seed)
            .finish()
    }
}

impl NoiseWrapper {
    pub fn new(inner: Arc<dyn PhysicalSystem>, source: NoiseSource, seed: u64) -> Self {
        let name = format!("noisy-{}", inner.name());
        NoiseWrapper {
            inner,
            source,
            seed,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            name,
        }
    }

    /// Restart the noise stream from the construction seed.
    pub fn reset(&self) {
        *self.rng.lock().expect("noise rng poisoned") = ChaCha8Rng::seed_from_u64(self.seed);
    }

    pub fn inner(&self) -> &Arc<dyn PhysicalSystem> {
        &self.inner
    }

    pub fn noisy_forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        let mut y = self.inner.forward(x, theta)?;
        let q = concat_params(x, theta);
        let mut rng = self.rng.lock().expect("noise rng poisoned");
        for (mut row, q_row) in y.rows_mut().into_iter().zip(q.rows()) {
            let a = self.source.mixing(q_row)?;
            check_len("mixing matrix rows", row.len(), a.nrows())?;
            let z: Array1<f64> = (0..a.ncols()).map(|_| StandardNormal.sample(&mut *rng)).collect();
            row += &a.dot(&z);
        }
        Ok(y)
    }
}

impl PhysicalSystem for NoiseWrapper {
    fn name(&self) -> &str {
        &self.name
    }
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        self.noisy_forward(x, theta)
    }
    /// Gradient of the noise-free mean.
    fn vjp(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        self.inner.vjp(x, theta, g_y)
    }
}
