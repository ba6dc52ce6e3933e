//! The `(M, A)` covariance pair of the diffusion noise
//! `gamma(t) sqrt(L(X) M + A) dB`, stored in a spectrum's eigenbasis.
//!
//! `M` and `A` here are the covariances appearing under the square root of
//! the stochastic equation. The Volterra kernels they induce carry a factor
//! 1/2 from the Ito correction, so the multi-pass choice `M = (2/n) H`
//! reproduces the kernel `(gamma^2 / n) tr(H P e^{-2(H + delta I) dGamma})`
//! exactly; the streaming choice `M = 2 Sigma_f` likewise gives
//! `gamma^2 tr(Sigma_f P e^{-2 gamma Sigma_f dt})`.

use ndarray::{Array1, Array2};

use crate::problems::{BoundRisk, Spectrum, StreamingSpectrum};

use super::SdeError;

/// A symmetric PSD matrix expressed in the reference eigenbasis.
#[derive(Debug, Clone)]
pub enum BasisMatrix {
    Zero,
    Diagonal(Array1<f64>),
    Dense(Array2<f64>),
}

impl BasisMatrix {
    pub fn diagonal_entry(&self, i: usize) -> f64 {
        match self {
            BasisMatrix::Zero => 0.0,
            BasisMatrix::Diagonal(d) => d[i],
            BasisMatrix::Dense(m) => m[[i, i]],
        }
    }

    /// Diagonal of the product `self * rotated_risk` in the shared basis,
    /// i.e. the per-eigendirection weights `u_i^t (M T) u_i`. When either
    /// factor is diagonal the product diagonal splits entrywise.
    pub fn product_diagonal(&self, risk: &BoundRisk) -> Array1<f64> {
        match self {
            BasisMatrix::Zero => Array1::zeros(risk.weights().len()),
            BasisMatrix::Diagonal(m) => m * risk.weights(),
            BasisMatrix::Dense(m) => match risk.rotated_hessian() {
                None => Array1::from_iter((0..m.nrows()).map(|i| m[[i, i]] * risk.weights()[i])),
                Some(t) => Array1::from_iter((0..m.nrows()).map(|i| m.row(i).dot(&t.column(i)))),
            },
        }
    }

    pub fn operator_norm(&self) -> f64 {
        match self {
            BasisMatrix::Zero => 0.0,
            BasisMatrix::Diagonal(d) => d.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
            BasisMatrix::Dense(m) => {
                // symmetric: power iteration is enough for a recorded diagnostic
                let n = m.nrows();
                let mut v = Array1::from_elem(n, (n as f64).sqrt().recip());
                let mut norm = 0.0;
                for _ in 0..50 {
                    let w = m.dot(&v);
                    norm = w.dot(&w).sqrt();
                    if norm == 0.0 {
                        return 0.0;
                    }
                    v = w / norm;
                }
                norm
            }
        }
    }

    pub fn trace(&self, dim: usize) -> f64 {
        match self {
            BasisMatrix::Zero => 0.0,
            BasisMatrix::Diagonal(d) => d.sum(),
            BasisMatrix::Dense(m) => (0..dim).map(|i| m[[i, i]]).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    MultiPass,
    Streaming,
    Custom,
}

impl NoiseKind {
    pub fn label(self) -> &'static str {
        match self {
            NoiseKind::MultiPass => "multi-pass",
            NoiseKind::Streaming => "streaming",
            NoiseKind::Custom => "custom",
        }
    }
}

/// Constant noise covariances `(M, A)` of a diffusion, in the eigenbasis of
/// the driving Hessian.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    kind: NoiseKind,
    multiplicative: BasisMatrix,
    additive: BasisMatrix,
    dim: usize,
    /// `|M|_op + |A|_op`; the diffusion approximation expects this to be
    /// small (of order d^{-eps}), recorded and surfaced but not enforced.
    operator_norm_sum: f64,
}

impl NoiseModel {
    /// Multi-pass homogenized SGD: `M = (2/n) A^t A`, `A = 0`.
    pub fn multi_pass(spectrum: &Spectrum) -> Self {
        let n = spectrum.sample_count() as f64;
        let diag = spectrum.eigenvalues().mapv(|l| 2.0 * l.max(0.0) / n);
        let norm = diag.iter().fold(0.0f64, |m, &v| m.max(v));
        Self {
            kind: NoiseKind::MultiPass,
            multiplicative: BasisMatrix::Diagonal(diag),
            additive: BasisMatrix::Zero,
            dim: spectrum.dim(),
            operator_norm_sum: norm,
        }
    }

    /// Streaming homogenized SGD: `M = 2 Sigma_f`, `A = 0`, expressed in the
    /// covariance eigenbasis.
    pub fn streaming(spectrum: &StreamingSpectrum) -> Self {
        let diag = spectrum.eigenvalues().mapv(|l| 2.0 * l.max(0.0));
        let norm = diag.iter().fold(0.0f64, |m, &v| m.max(v));
        Self {
            kind: NoiseKind::Streaming,
            multiplicative: BasisMatrix::Diagonal(diag),
            additive: BasisMatrix::Zero,
            dim: spectrum.dim(),
            operator_norm_sum: norm,
        }
    }

    /// Noise-free model: the diffusion degenerates to gradient flow.
    pub fn deterministic(dim: usize) -> Self {
        Self {
            kind: NoiseKind::Custom,
            multiplicative: BasisMatrix::Zero,
            additive: BasisMatrix::Zero,
            dim,
            operator_norm_sum: 0.0,
        }
    }

    /// Custom covariance pair given in original coordinates; both must be
    /// symmetric PSD. They are rotated into the spectrum's eigenbasis.
    pub fn custom(
        spectrum: &Spectrum,
        multiplicative: &Array2<f64>,
        additive: &Array2<f64>,
    ) -> Result<Self, SdeError> {
        let d = spectrum.dim();
        for m in [multiplicative, additive] {
            if m.nrows() != d || m.ncols() != d {
                return Err(SdeError::DimensionMismatch {
                    model: m.nrows(),
                    system: d,
                });
            }
        }
        let mult = rotate_psd(spectrum.basis(), multiplicative)?;
        let add = rotate_psd(spectrum.basis(), additive)?;
        let norm = mult.operator_norm() + add.operator_norm();
        Ok(Self {
            kind: NoiseKind::Custom,
            multiplicative: mult,
            additive: add,
            dim: d,
            operator_norm_sum: norm,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn multiplicative(&self) -> &BasisMatrix {
        &self.multiplicative
    }

    pub fn additive(&self) -> &BasisMatrix {
        &self.additive
    }

    pub fn operator_norm_sum(&self) -> f64 {
        self.operator_norm_sum
    }

    /// Whether the recorded operator norms satisfy the small-noise regime
    /// `|M|_op + |A|_op < d^{-1/2}` the diffusion limit assumes.
    pub fn small_noise(&self) -> bool {
        self.operator_norm_sum < (self.dim as f64).powf(-0.5)
    }

    pub fn trace_sum(&self) -> f64 {
        self.multiplicative.trace(self.dim) + self.additive.trace(self.dim)
    }

    /// Volterra kernel weights against the empirical Hessian (`P = H`):
    /// `w_i = 1/2 lambda_i (U^t M U)_{ii}`, so that
    /// `K(t,s;H) = gamma^2(s) sum_i w_i e^{-2(lambda_i + delta) dGamma}`.
    pub fn kernel_weights_empirical(&self, eigenvalues: &Array1<f64>) -> Array1<f64> {
        Array1::from_iter(
            eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &l)| 0.5 * l * self.multiplicative.diagonal_entry(i)),
        )
    }

    /// Additive kernel weights against the empirical Hessian.
    pub fn additive_weights_empirical(&self, eigenvalues: &Array1<f64>) -> Array1<f64> {
        Array1::from_iter(
            eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &l)| 0.5 * l * self.additive.diagonal_entry(i)),
        )
    }

    /// Kernel weights against a bound risk (`P = hessian of R`):
    /// `w_i = 1/2 u_i^t (M P) u_i`.
    pub fn kernel_weights_risk(&self, risk: &BoundRisk) -> Array1<f64> {
        self.multiplicative.product_diagonal(risk).mapv(|v| 0.5 * v)
    }

    pub fn additive_weights_risk(&self, risk: &BoundRisk) -> Array1<f64> {
        self.additive.product_diagonal(risk).mapv(|v| 0.5 * v)
    }
}

/// Rotate a symmetric PSD matrix into the basis, verifying PSD-ness and
/// collapsing to the cheap representations when possible.
fn rotate_psd(basis: &Array2<f64>, m: &Array2<f64>) -> Result<BasisMatrix, SdeError> {
    let d = basis.nrows();
    let mut scale = 0.0f64;
    for v in m.iter() {
        scale = scale.max(v.abs());
    }
    if scale == 0.0 {
        return Ok(BasisMatrix::Zero);
    }
    let (eigs, _) = crate::problems::symmetric_eigen_desc(m).map_err(SdeError::Problem)?;
    if let Some(&l) = eigs.iter().find(|&&l| l < -1e-10 * eigs[0].abs().max(1.0)) {
        return Err(SdeError::NotPsd { value: l });
    }
    let rotated = basis.t().dot(&m.dot(basis));
    let mut off = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off = off.max(rotated[[i, j]].abs());
            }
        }
    }
    if off <= 1e-14 * scale {
        Ok(BasisMatrix::Diagonal(Array1::from_iter(
            (0..d).map(|i| rotated[[i, i]].max(0.0)),
        )))
    } else {
        Ok(BasisMatrix::Dense(rotated))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{decompose, ProblemInstance};
    use ndarray::Array2;

    #[test]
    fn multi_pass_identity_design_weights() {
        // A^t A = I with n = d: M = (2/n) I
        let d = 4;
        let problem = ProblemInstance::new(
            Array2::eye(d),
            Array1::ones(d),
            0.0,
            Array1::zeros(d),
        )
        .unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        let noise = NoiseModel::multi_pass(&spectrum);
        for i in 0..d {
            assert!((noise.multiplicative().diagonal_entry(i) - 2.0 / d as f64).abs() < 1e-14);
        }
        // kernel weights against H=I: 1/2 * 1 * 2/n = 1/n
        let w = noise.kernel_weights_empirical(spectrum.eigenvalues());
        for &wi in &w {
            assert!((wi - 1.0 / d as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn custom_zero_noise_is_deterministic_flow_model() {
        let problem = ProblemInstance::new(
            Array2::eye(3),
            Array1::ones(3),
            0.0,
            Array1::zeros(3),
        )
        .unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        let noise =
            NoiseModel::custom(&spectrum, &Array2::zeros((3, 3)), &Array2::zeros((3, 3))).unwrap();
        assert!(matches!(noise.multiplicative(), BasisMatrix::Zero));
        assert!(matches!(noise.additive(), BasisMatrix::Zero));
        assert_eq!(noise.operator_norm_sum(), 0.0);
    }

    #[test]
    fn non_psd_custom_rejected() {
        let problem = ProblemInstance::new(
            Array2::eye(2),
            Array1::ones(2),
            0.0,
            Array1::zeros(2),
        )
        .unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        let mut bad = Array2::eye(2);
        bad[[1, 1]] = -1.0;
        assert!(matches!(
            NoiseModel::custom(&spectrum, &bad, &Array2::zeros((2, 2))),
            Err(SdeError::NotPsd { .. })
        ));
    }
}
