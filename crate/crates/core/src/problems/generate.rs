//! Seeded generators for synthetic designs, targets, and streaming problems.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spectrum::symmetric_eigen_desc;
use super::{GenerativeModel, ProblemError, RandomFeaturesConfig, StreamingProblem};

/// Draw `A = Z sqrt(Sigma)` with `Z` an `n x d` matrix of iid standard
/// normals, reproducible from `seed`.
pub fn gaussian_design(
    n: usize,
    d: usize,
    covariance: &Array2<f64>,
    seed: u64,
) -> Result<Array2<f64>, ProblemError> {
    if n == 0 || d == 0 {
        return Err(ProblemError::Empty);
    }
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(ProblemError::DimensionMismatch {
            context: "covariance vs feature count",
            expected: d,
            got: covariance.nrows(),
        });
    }
    let sqrt = psd_sqrt(covariance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
    Ok(z.dot(&sqrt))
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues slightly
/// negative from roundoff are clamped; anything worse is a covariance error.
pub fn psd_sqrt(m: &Array2<f64>) -> Result<Array2<f64>, ProblemError> {
    let (eigenvalues, basis) = symmetric_eigen_desc(m)?;
    let scale = eigenvalues[0].abs().max(1.0);
    let mut scaled = basis.clone();
    for (mut col, &l) in scaled.columns_mut().into_iter().zip(eigenvalues.iter()) {
        if l < -1e-10 * scale {
            return Err(ProblemError::NotPsd { value: l });
        }
        let s = l.max(0.0).sqrt();
        col.mapv_inplace(|v| v * s);
    }
    Ok(scaled.dot(&basis.t()))
}

/// Generative target `b = A beta + xi` with `xi` iid `N(0, noise_scale)`.
pub fn generative_target(
    data: &Array2<f64>,
    model: &GenerativeModel,
    seed: u64,
) -> Result<Array1<f64>, ProblemError> {
    if model.signal.len() != data.ncols() {
        return Err(ProblemError::DimensionMismatch {
            context: "signal length vs feature count",
            expected: data.ncols(),
            got: model.signal.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = model.noise_scale.sqrt();
    let mut b = data.dot(&model.signal);
    if sd > 0.0 {
        for v in b.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
    }
    Ok(b)
}

/// Apply the random-features map `sigma(X W / sqrt(n0))` entrywise.
pub fn random_features_map(
    raw: &Array2<f64>,
    config: &RandomFeaturesConfig,
) -> Result<Array2<f64>, ProblemError> {
    if raw.ncols() != config.raw_dim() {
        return Err(ProblemError::DimensionMismatch {
            context: "raw data columns vs weight rows",
            expected: config.raw_dim(),
            got: raw.ncols(),
        });
    }
    let scale = (config.raw_dim() as f64).sqrt().recip();
    let mut mapped = raw.dot(&config.weights);
    mapped.mapv_inplace(|z| config.activation.apply(z * scale));
    Ok(mapped)
}

/// Rescale `A` so that `tr((cA)^t (cA)) = n` exactly.
pub fn trace_normalize(data: &Array2<f64>) -> Result<Array2<f64>, ProblemError> {
    let frob2: f64 = data.iter().map(|v| v * v).sum();
    if frob2 <= 0.0 {
        return Err(ProblemError::ZeroMatrix);
    }
    let c = (data.nrows() as f64 / frob2).sqrt();
    Ok(data * c)
}

/// Build a streaming (one-pass) problem from a population covariance,
/// signal, and label-noise variance.
pub fn make_streaming(
    covariance: Array2<f64>,
    signal: Array1<f64>,
    noise_variance: f64,
) -> Result<StreamingProblem, ProblemError> {
    if covariance.nrows() != signal.len() || covariance.ncols() != signal.len() {
        return Err(ProblemError::DimensionMismatch {
            context: "covariance vs signal",
            expected: signal.len(),
            got: covariance.nrows(),
        });
    }
    if noise_variance < 0.0 {
        return Err(ProblemError::NotPsd {
            value: noise_variance,
        });
    }
    // fail fast on non-PSD covariance
    psd_sqrt(&covariance)?;
    Ok(StreamingProblem::from_parts(
        covariance,
        signal,
        noise_variance,
    ))
}

/// Sampler of fresh `(a, b)` pairs from a streaming problem.
pub struct StreamingSampler {
    sqrt_cov: Array2<f64>,
    signal: Array1<f64>,
    noise_sd: f64,
    rng: ChaCha8Rng,
}

impl StreamingSampler {
    pub fn new(streaming: &StreamingProblem, seed: u64) -> Result<Self, ProblemError> {
        Ok(Self {
            sqrt_cov: psd_sqrt(streaming.covariance())?,
            signal: streaming.signal().clone(),
            noise_sd: streaming.noise_variance().sqrt(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn draw(&mut self) -> (Array1<f64>, f64) {
        let d = self.signal.len();
        let z = Array1::from_shape_fn(d, |_| StandardNormal.sample(&mut self.rng));
        let a = self.sqrt_cov.dot(&z);
        let noise: f64 = StandardNormal.sample(&mut self.rng);
        let b = a.dot(&self.signal) + self.noise_sd * noise;
        (a, b)
    }
}
