//! Eigendecomposition of the empirical Hessian and spectral projections.

use ndarray::{Array1, Array2};

use super::{check_finite, GenerativeModel, ProblemError, ProblemInstance, QuadraticRisk,
    RANK_CUTOFF, StreamingProblem};

/// Spectral data of a problem instance: eigenpairs of `A^t A` plus the
/// projections of `x0`, `A^t b`, and (optionally) the signal onto the
/// eigenbasis. Every kernel and forcing formula downstream is a sum over
/// the `(lambda_i, projection_i)` pairs stored here.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues of `A^t A`, nonincreasing, all `>= 0` up to roundoff.
    eigenvalues: Array1<f64>,
    /// Orthogonal eigenbasis; column `i` pairs with `eigenvalues[i]`.
    basis: Array2<f64>,
    /// `U^t x0`.
    init_coeffs: Array1<f64>,
    /// `U^t A^t b`; the left-singular projection of `b` is `c_i / sqrt(lambda_i)`.
    grad_coeffs: Array1<f64>,
    /// `U^t beta` when a generative signal was supplied.
    signal_coeffs: Option<Array1<f64>>,
    /// `|b - proj_{col A} b|^2`.
    orthogonal_residual: f64,
    /// `|b|^2`.
    target_norm2: f64,
    sample_count: usize,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn init_coeffs(&self) -> &Array1<f64> {
        &self.init_coeffs
    }

    pub fn grad_coeffs(&self) -> &Array1<f64> {
        &self.grad_coeffs
    }

    pub fn signal_coeffs(&self) -> Option<&Array1<f64>> {
        self.signal_coeffs.as_ref()
    }

    pub fn orthogonal_residual(&self) -> f64 {
        self.orthogonal_residual
    }

    pub fn target_norm2(&self) -> f64 {
        self.target_norm2
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Singular values of `A` (square roots of the eigenvalues).
    pub fn singular_values(&self) -> Array1<f64> {
        self.eigenvalues.mapv(|l| l.max(0.0).sqrt())
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Threshold below which an eigenvalue counts as zero.
    pub fn zero_cutoff(&self) -> f64 {
        RANK_CUTOFF * self.lambda_max().max(f64::MIN_POSITIVE)
    }

    /// Smallest eigenvalue above the rank cutoff.
    pub fn lambda_min_nonzero(&self) -> f64 {
        let cut = self.zero_cutoff();
        self.eigenvalues
            .iter()
            .rev()
            .find(|&&l| l > cut)
            .copied()
            .unwrap_or(0.0)
    }

    /// Number of eigenvalues above the rank cutoff.
    pub fn rank(&self) -> usize {
        let cut = self.zero_cutoff();
        self.eigenvalues.iter().filter(|&&l| l > cut).count()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// Bind a quadratic risk to this spectrum, caching its rotated hessian
    /// and the spectral weights `p_i = u_i^t T u_i`.
    pub fn bind(&self, risk: &QuadraticRisk) -> Result<BoundRisk, ProblemError> {
        let d = self.dim();
        if risk.dim() != d {
            return Err(ProblemError::DimensionMismatch {
                context: "risk dimension vs spectrum",
                expected: d,
                got: risk.dim(),
            });
        }
        let rotated = self.basis.t().dot(&risk.hessian().dot(&self.basis));
        let weights = Array1::from_iter((0..d).map(|i| rotated[[i, i]]));
        if risk.is_convex() {
            let scale = weights.iter().fold(0.0f64, |m, w| m.max(w.abs())).max(1.0);
            if let Some(&w) = weights.iter().find(|&&w| w < -1e-12 * scale) {
                return Err(ProblemError::NotConvex { value: w });
            }
        }
        // Detect diagonal rotated hessians so flow evaluation can run in O(d).
        let mut off = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let v = rotated[[i, j]].abs();
                scale = scale.max(v);
                if i != j {
                    off = off.max(v);
                }
            }
        }
        let diagonal = off <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        Ok(BoundRisk {
            name: risk.name().to_string(),
            weights,
            rotated: if diagonal { None } else { Some(rotated) },
            linear: self.basis.t().dot(risk.linear()),
            constant: risk.constant(),
            convex: risk.is_convex(),
            noise_floor: risk.noise_floor(),
        })
    }
}

/// A quadratic risk expressed in a spectrum's eigenbasis.
#[derive(Debug, Clone)]
pub struct BoundRisk {
    name: String,
    /// `p_i = (U^t T U)_{ii}`.
    weights: Array1<f64>,
    /// Full `U^t T U`, `None` when it is numerically diagonal.
    rotated: Option<Array2<f64>>,
    /// `U^t u`.
    linear: Array1<f64>,
    constant: f64,
    convex: bool,
    noise_floor: Option<f64>,
}

impl BoundRisk {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn rotated_hessian(&self) -> Option<&Array2<f64>> {
        self.rotated.as_ref()
    }

    pub fn linear_coeffs(&self) -> &Array1<f64> {
        &self.linear
    }

    /// `Some(eta^2)` for signal-centered risks.
    pub fn noise_floor(&self) -> Option<f64> {
        self.noise_floor
    }

    /// Evaluate the risk at a point given in eigenbasis coordinates.
    pub fn value_in_basis(&self, coords: &Array1<f64>) -> f64 {
        let quad = match &self.rotated {
            Some(t) => coords.dot(&t.dot(coords)),
            None => self
                .weights
                .iter()
                .zip(coords.iter())
                .map(|(p, x)| p * x * x)
                .sum(),
        };
        0.5 * quad + self.linear.dot(coords) + self.constant
    }
}

/// Full eigendecomposition of `A^t A` with projections of `b`, `x0`, and the
/// generative signal (when supplied).
///
/// Validates orthogonality of the basis to 1e-10 and the reconstruction
/// `|A^t A - U diag(lambda) U^t| <= 1e-8 |A^t A|`.
pub fn decompose(
    problem: &ProblemInstance,
    model: Option<&GenerativeModel>,
) -> Result<Spectrum, ProblemError> {
    check_finite(problem.data())?;
    let gram = problem.data().t().dot(problem.data());
    let (eigenvalues, basis) = symmetric_eigen_desc(&gram)?;

    let d = problem.feature_count();
    let grad = problem.data().t().dot(problem.target());
    let grad_coeffs = basis.t().dot(&grad);
    let init_coeffs = basis.t().dot(problem.init());
    let signal_coeffs = model.map(|m| basis.t().dot(&m.signal));

    let cut = RANK_CUTOFF * eigenvalues[0].max(f64::MIN_POSITIVE);
    let target_norm2 = problem.target().dot(problem.target());
    let mut projected = 0.0;
    for i in 0..d {
        if eigenvalues[i] > cut {
            projected += grad_coeffs[i] * grad_coeffs[i] / eigenvalues[i];
        }
    }
    let orthogonal_residual = (target_norm2 - projected).max(0.0);

    Ok(Spectrum {
        eigenvalues,
        basis,
        init_coeffs,
        grad_coeffs,
        signal_coeffs,
        orthogonal_residual,
        target_norm2,
        sample_count: problem.sample_count(),
    })
}

/// Spectral data of a streaming problem: eigenpairs of `Sigma_f` plus the
/// signal expressed in that basis.
#[derive(Debug, Clone)]
pub struct StreamingSpectrum {
    eigenvalues: Array1<f64>,
    basis: Array2<f64>,
    signal_coeffs: Array1<f64>,
    noise_variance: f64,
}

impl StreamingSpectrum {
    pub fn of(streaming: &StreamingProblem) -> Result<Self, ProblemError> {
        let (eigenvalues, basis) = symmetric_eigen_desc(streaming.covariance())?;
        if let Some(&l) = eigenvalues.iter().find(|&&l| l < -1e-10 * eigenvalues[0].abs().max(1.0)) {
            return Err(ProblemError::NotPsd { value: l });
        }
        let signal_coeffs = basis.t().dot(streaming.signal());
        Ok(Self {
            eigenvalues,
            basis,
            signal_coeffs,
            noise_variance: streaming.noise_variance(),
        })
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn signal_coeffs(&self) -> &Array1<f64> {
        &self.signal_coeffs
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// Rotate a risk into the streaming eigenbasis.
    pub fn bind(&self, risk: &QuadraticRisk) -> Result<BoundRisk, ProblemError> {
        let d = self.dim();
        if risk.dim() != d {
            return Err(ProblemError::DimensionMismatch {
                context: "risk dimension vs streaming spectrum",
                expected: d,
                got: risk.dim(),
            });
        }
        let rotated = self.basis.t().dot(&risk.hessian().dot(&self.basis));
        let weights = Array1::from_iter((0..d).map(|i| rotated[[i, i]]));
        let mut off = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let v = rotated[[i, j]].abs();
                scale = scale.max(v);
                if i != j {
                    off = off.max(v);
                }
            }
        }
        let diagonal = off <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        Ok(BoundRisk {
            name: risk.name().to_string(),
            weights,
            rotated: if diagonal { None } else { Some(rotated) },
            linear: self.basis.t().dot(risk.linear()),
            constant: risk.constant(),
            convex: risk.is_convex(),
            noise_floor: risk.noise_floor(),
        })
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue, with
/// orthogonality and reconstruction checks.
pub fn symmetric_eigen_desc(
    m: &Array2<f64>,
) -> Result<(Array1<f64>, Array2<f64>), ProblemError> {
    let d = m.nrows();
    check_finite(m)?;
    let nm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[[i, j]]);
    let eig = nm.clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let mut eigenvalues = Array1::zeros(d);
    let mut basis = Array2::zeros((d, d));
    for (dst, &src) in order.iter().enumerate() {
        // clamp tiny negative roundoff on PSD input
        eigenvalues[dst] = eig.eigenvalues[src];
        for r in 0..d {
            basis[[r, dst]] = eig.eigenvectors[(r, src)];
        }
    }

    // orthogonality: |U^t U - I|_max <= 1e-10
    let gram_u = basis.t().dot(&basis);
    let mut ortho_err = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho_err = ortho_err.max((gram_u[[i, j]] - target).abs());
        }
    }
    debug_assert!(ortho_err <= 1e-10, "eigenbasis orthogonality {ortho_err:.3e}");

    // reconstruction: |M - U diag U^t|_F <= 1e-8 |M|_F
    let mut recon = basis.clone();
    for (mut col, &l) in recon.columns_mut().into_iter().zip(eigenvalues.iter()) {
        col.mapv_inplace(|v| v * l);
    }
    let recon = recon.dot(&basis.t());
    let mut err2 = 0.0;
    let mut norm2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            err2 += (recon[[i, j]] - m[[i, j]]).powi(2);
            norm2 += m[[i, j]].powi(2);
        }
    }
    debug_assert!(
        err2.sqrt() <= 1e-8 * norm2.sqrt().max(f64::MIN_POSITIVE),
        "eigendecomposition residual {:.3e} vs norm {:.3e}",
        err2.sqrt(),
        norm2.sqrt()
    );

    Ok((eigenvalues, basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn random_problem(n: usize, d: usize, seed: u64) -> ProblemInstance {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let target = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let init = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0));
        ProblemInstance::new(data, target, 0.1, init).unwrap()
    }

    #[test]
    fn identity_design_has_unit_eigenvalues() {
        let problem =
            ProblemInstance::new(Array2::eye(4), Array1::ones(4), 0.0, Array1::zeros(4)).unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        for &l in spectrum.eigenvalues() {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diag_design_eigenvalues() {
        let a = array![[3.0, 0.0], [0.0, 0.0]];
        let problem = ProblemInstance::new(a, array![1.0, 0.0], 0.0, Array1::zeros(2)).unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        assert!((spectrum.eigenvalues()[0] - 9.0).abs() < 1e-12);
        assert!(spectrum.eigenvalues()[1].abs() < 1e-12);
        assert_eq!(spectrum.rank(), 1);
        assert!((spectrum.lambda_min_nonzero() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_residual_small_on_random_instance() {
        let problem = random_problem(20, 15, 7);
        let spectrum = decompose(&problem, None).unwrap();
        let gram = problem.data().t().dot(problem.data());
        let mut recon = spectrum.basis().clone();
        for (mut col, &l) in recon
            .columns_mut()
            .into_iter()
            .zip(spectrum.eigenvalues().iter())
        {
            col.mapv_inplace(|v| v * l);
        }
        let recon = recon.dot(&spectrum.basis().t());
        let err = (&recon - &gram).mapv(|v| v * v).sum().sqrt();
        let norm = gram.mapv(|v| v * v).sum().sqrt();
        assert!(err <= 1e-8 * norm, "residual {err} vs norm {norm}");
    }

    #[test]
    fn eigenvalues_sorted_and_nonnegative() {
        let problem = random_problem(12, 9, 3);
        let spectrum = decompose(&problem, None).unwrap();
        let e = spectrum.eigenvalues();
        for i in 1..e.len() {
            assert!(e[i - 1] >= e[i] - 1e-12);
        }
        for &l in e {
            assert!(l >= -1e-10);
        }
    }

    #[test]
    fn orthogonal_residual_vanishes_when_target_in_column_space() {
        // n > d, full column rank: b = A z is always in col(A)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
        let z = array![0.3, -1.0, 0.7];
        let b = a.dot(&z);
        let problem = ProblemInstance::new(a, b, 0.0, Array1::zeros(3)).unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        assert!(spectrum.orthogonal_residual() < 1e-12);
    }

    #[test]
    fn bound_risk_weights_sum_to_trace() {
        let problem = random_problem(10, 6, 5);
        let spectrum = decompose(&problem, None).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let m = Array2::from_shape_fn((6, 6), |_| rng.gen_range(-1.0..1.0));
        let sym = (&m + &m.t()) * 0.5;
        let trace: f64 = (0..6).map(|i| sym[[i, i]]).sum();
        let risk = QuadraticRisk::new("q", sym, Array1::zeros(6), 0.0, false).unwrap();
        let bound = spectrum.bind(&risk).unwrap();
        assert!((bound.weights().sum() - trace).abs() <= 1e-10 * trace.abs().max(1.0));
    }

    #[test]
    fn bound_risk_value_matches_original_coordinates() {
        let problem = random_problem(10, 6, 5);
        let spectrum = decompose(&problem, None).unwrap();
        let beta = Array1::from_shape_fn(6, |i| 0.2 * i as f64 - 0.5);
        let risk = QuadraticRisk::norm_distance("dist", &beta);
        let bound = spectrum.bind(&risk).unwrap();
        let x = Array1::from_shape_fn(6, |i| (i as f64 * 0.77).sin());
        let coords = spectrum.basis().t().dot(&x);
        assert!((bound.value_in_basis(&coords) - risk.value(&x)).abs() < 1e-12);
    }

    #[test]
    fn convexity_violation_detected() {
        let problem = random_problem(6, 4, 9);
        let spectrum = decompose(&problem, None).unwrap();
        let mut t = Array2::eye(4);
        t[[2, 2]] = -1.0;
        let risk = QuadraticRisk::new("bad", t, Array1::zeros(4), 0.0, true).unwrap();
        assert!(matches!(
            spectrum.bind(&risk),
            Err(ProblemError::NotConvex { .. })
        ));
    }
}
