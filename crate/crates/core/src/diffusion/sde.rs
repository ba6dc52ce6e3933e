//! Euler–Maruyama integration of the diffusion in spectral coordinates.
//!
//! Working in the eigenbasis makes the drift diagonal and the common noise
//! models diagonal too, so one step costs O(d). The square roots of the
//! constant covariances are taken once, spectrally; the state-dependent
//! factor enters only through the scalar `sqrt(max(L, 0))`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::optimizers::LearningSchedule;
use crate::problems::{BoundRisk, Spectrum, StreamingSpectrum};
use crate::util::{mean_stderr, run_seed};

use super::{BasisMatrix, NoiseModel, SdeError};

/// Square root of a constant covariance, precomputed in the eigenbasis.
enum SqrtNoise {
    Zero,
    Diagonal(Array1<f64>),
    Dense(Array2<f64>),
}

impl SqrtNoise {
    fn of(matrix: &BasisMatrix) -> Result<Self, SdeError> {
        match matrix {
            BasisMatrix::Zero => Ok(SqrtNoise::Zero),
            BasisMatrix::Diagonal(d) => {
                if let Some(&v) = d.iter().find(|&&v| v < 0.0) {
                    return Err(SdeError::NotPsd { value: v });
                }
                Ok(SqrtNoise::Diagonal(d.mapv(f64::sqrt)))
            }
            BasisMatrix::Dense(m) => {
                let sqrt = crate::problems::psd_sqrt(m).map_err(SdeError::Problem)?;
                Ok(SqrtNoise::Dense(sqrt))
            }
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, SqrtNoise::Zero)
    }

    /// Accumulate `scale * sqrt(C) z` into `out`, drawing `z ~ N(0, I)`.
    fn add_noise(&self, out: &mut Array1<f64>, scale: f64, rng: &mut ChaCha8Rng) {
        match self {
            SqrtNoise::Zero => {}
            SqrtNoise::Diagonal(s) => {
                for (o, &si) in out.iter_mut().zip(s) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o += scale * si * z;
                }
            }
            SqrtNoise::Dense(m) => {
                let z = Array1::from_shape_fn(m.nrows(), |_| StandardNormal.sample(rng));
                let w = m.dot(&z);
                out.scaled_add(scale, &w);
            }
        }
    }
}

/// A linear-drift system in spectral coordinates: drift
/// `-gamma(t) (rho_i x_i - c_i)` and loss `sum_i (q_i x_i^2 / 2 + l_i x_i) + const`.
pub struct SdeSystem {
    drift_rates: Array1<f64>,
    drift_consts: Array1<f64>,
    loss_quad: Array1<f64>,
    loss_lin: Array1<f64>,
    loss_const: f64,
    init: Array1<f64>,
}

impl SdeSystem {
    /// Multi-pass system: drift from the ridge objective, loss = ridgeless
    /// empirical risk, initialized at the instance's `x0`.
    pub fn multi_pass(spectrum: &Spectrum, ridge: f64) -> Self {
        let lambdas = spectrum.eigenvalues().clone();
        Self {
            drift_rates: lambdas.mapv(|l| l + ridge),
            drift_consts: spectrum.grad_coeffs().clone(),
            loss_quad: lambdas,
            loss_lin: spectrum.grad_coeffs().mapv(|c| -c),
            loss_const: 0.5 * spectrum.target_norm2(),
            init: spectrum.init_coeffs().clone(),
        }
    }

    /// Streaming system: drift from `grad S`, loss = streaming loss
    /// (including the eta^2/2 floor).
    pub fn streaming(spectrum: &StreamingSpectrum, init: &Array1<f64>) -> Self {
        let lambdas = spectrum.eigenvalues().clone();
        let consts = &lambdas * spectrum.signal_coeffs();
        let signal_quad: f64 = lambdas
            .iter()
            .zip(spectrum.signal_coeffs())
            .map(|(&l, &b)| l * b * b)
            .sum();
        Self {
            drift_rates: lambdas.clone(),
            drift_consts: consts.clone(),
            loss_quad: lambdas,
            loss_lin: consts.mapv(|c| -c),
            loss_const: 0.5 * signal_quad + 0.5 * spectrum.noise_variance(),
            init: spectrum.basis().t().dot(init),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift_rates.len()
    }

    /// The loss driving the multiplicative noise, in coordinates.
    pub fn loss(&self, x: &Array1<f64>) -> f64 {
        let mut acc = self.loss_const;
        for ((&q, &l), &xi) in self.loss_quad.iter().zip(&self.loss_lin).zip(x) {
            acc += 0.5 * q * xi * xi + l * xi;
        }
        acc
    }
}

/// One simulated diffusion path: recorded times, the loss, and every
/// registered risk at a fixed recording stride.
#[derive(Debug, Clone)]
pub struct SdePath {
    pub dt: f64,
    pub times: Vec<f64>,
    pub loss: Vec<f64>,
    pub risks: Vec<(String, Vec<f64>)>,
    pub seed: u64,
    pub diverged: bool,
    pub first_bad_time: Option<f64>,
}

impl SdePath {
    pub fn risk(&self, name: &str) -> Option<&[f64]> {
        self.risks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Euler–Maruyama on `dX = -gamma(t) grad f(X) dt + gamma(t) sqrt(L(X) M + A) dB`.
///
/// `record_stride` counts steps between records (time 0 and the final time
/// are always recorded). The loss is clamped at zero inside the square root;
/// a non-finite state stops the path and flags divergence with the first bad
/// time.
pub fn simulate_sld(
    system: &SdeSystem,
    schedule: &LearningSchedule,
    noise: &NoiseModel,
    dt: f64,
    horizon: f64,
    seed: u64,
    risks: &[&BoundRisk],
    record_stride: usize,
) -> Result<SdePath, SdeError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SdeError::BadStep(dt));
    }
    if horizon < 0.0 {
        return Err(SdeError::BadHorizon(horizon));
    }
    if noise.dim() != system.dim() {
        return Err(SdeError::DimensionMismatch {
            model: noise.dim(),
            system: system.dim(),
        });
    }
    let sqrt_mult = SqrtNoise::of(noise.multiplicative())?;
    let sqrt_add = SqrtNoise::of(noise.additive())?;
    let stride = record_stride.max(1);
    let steps = (horizon / dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = system.init.clone();
    let mut path = SdePath {
        dt,
        times: Vec::new(),
        loss: Vec::new(),
        risks: risks.iter().map(|r| (r.name().to_string(), Vec::new())).collect(),
        seed,
        diverged: false,
        first_bad_time: None,
    };

    let record = |path: &mut SdePath, t: f64, x: &Array1<f64>, loss: f64| {
        path.times.push(t);
        path.loss.push(loss);
        for ((_, values), risk) in path.risks.iter_mut().zip(risks) {
            values.push(risk.value_in_basis(x));
        }
    };

    let mut loss = system.loss(&x);
    record(&mut path, 0.0, &x, loss);
    let sqrt_dt = dt.sqrt();
    for k in 0..steps {
        let t = k as f64 * dt;
        let gamma = schedule.rate(t);
        let noise_scale = gamma * sqrt_dt;
        let mult_scale = noise_scale * loss.max(0.0).sqrt();

        let mut increment = Array1::zeros(system.dim());
        if !sqrt_mult.is_zero() && mult_scale != 0.0 {
            sqrt_mult.add_noise(&mut increment, mult_scale, &mut rng);
        }
        if !sqrt_add.is_zero() {
            sqrt_add.add_noise(&mut increment, noise_scale, &mut rng);
        }
        ndarray::azip!((xi in &mut x, &rho in &system.drift_rates, &c in &system.drift_consts, &inc in &increment) {
            *xi += -gamma * (rho * *xi - c) * dt + inc;
        });

        loss = system.loss(&x);
        if !loss.is_finite() {
            path.diverged = true;
            path.first_bad_time = Some((k + 1) as f64 * dt);
            break;
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            record(&mut path, (k + 1) as f64 * dt, &x, loss);
        }
    }
    Ok(path)
}

/// Streaming homogenized SGD `dY = -gamma grad S dt + gamma sqrt(2 S(Y) Sigma_f) dB`.
pub fn simulate_streaming_hsgd(
    spectrum: &StreamingSpectrum,
    gamma: f64,
    init: &Array1<f64>,
    dt: f64,
    horizon: f64,
    seed: u64,
    risks: &[&BoundRisk],
    record_stride: usize,
) -> Result<SdePath, SdeError> {
    let system = SdeSystem::streaming(spectrum, init);
    let noise = NoiseModel::streaming(spectrum);
    let schedule = LearningSchedule::Constant(gamma);
    simulate_sld(&system, &schedule, &noise, dt, horizon, seed, risks, record_stride)
}

/// Ensemble statistics over independent paths at shared recorded times.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub loss_mean: Vec<f64>,
    pub loss_stderr: Vec<f64>,
    pub risks: Vec<(String, Vec<f64>, Vec<f64>)>,
    pub divergences: usize,
}

/// Simulate `count` independent paths (seeds derived from `master_seed` by
/// the counter scheme) in parallel and reduce to means and standard errors.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_paths(
    system: &SdeSystem,
    schedule: &LearningSchedule,
    noise: &NoiseModel,
    dt: f64,
    horizon: f64,
    master_seed: u64,
    count: usize,
    risks: &[&BoundRisk],
    record_stride: usize,
) -> Result<EnsembleStats, SdeError> {
    let paths: Vec<SdePath> = (0..count)
        .into_par_iter()
        .map(|i| {
            simulate_sld(
                system,
                schedule,
                noise,
                dt,
                horizon,
                run_seed(master_seed, i as u64),
                risks,
                record_stride,
            )
        })
        .collect::<Result<_, _>>()?;

    let complete: Vec<&SdePath> = paths.iter().filter(|p| !p.diverged).collect();
    let divergences = paths.len() - complete.len();
    let reference = complete.first().ok_or(SdeError::BadHorizon(horizon))?;
    let times = reference.times.clone();
    let points = times.len();

    let collect_stat = |extract: &dyn Fn(&SdePath) -> &[f64]| {
        let mut means = Vec::with_capacity(points);
        let mut errs = Vec::with_capacity(points);
        for j in 0..points {
            let values: Vec<f64> = complete.iter().map(|p| extract(p)[j]).collect();
            let (m, s) = mean_stderr(&values);
            means.push(m);
            errs.push(s);
        }
        (means, errs)
    };

    let (loss_mean, loss_stderr) = collect_stat(&|p: &SdePath| &p.loss);
    let risks_out = risks
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            let (m, s) = collect_stat(&move |p: &SdePath| p.risks[idx].1.as_slice());
            (r.name().to_string(), m, s)
        })
        .collect();

    Ok(EnsembleStats {
        times,
        loss_mean,
        loss_stderr,
        risks: risks_out,
        divergences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::GradientFlow;
    use crate::problems::{decompose, make_streaming, ProblemInstance};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};

    fn random_problem(n: usize, d: usize, ridge: f64, seed: u64) -> ProblemInstance {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0) / (d as f64).sqrt());
        let target = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let init = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0));
        ProblemInstance::new(data, target, ridge, init).unwrap()
    }

    #[test]
    fn zero_noise_reduces_to_gradient_flow_at_first_order() {
        let problem = random_problem(12, 8, 0.1, 21);
        let spectrum = decompose(&problem, None).unwrap();
        let system = SdeSystem::multi_pass(&spectrum, problem.ridge());
        let noise = NoiseModel::deterministic(8);
        let schedule = LearningSchedule::constant(0.7).unwrap();
        let flow = GradientFlow::new(&spectrum, problem.ridge());

        let grad_norm = problem.gradient(problem.init()).dot(&problem.gradient(problem.init())).sqrt();
        let sup_dev = |dt: f64| -> f64 {
            let path = simulate_sld(&system, &schedule, &noise, dt, 5.0, 1, &[], 1).unwrap();
            path.times
                .iter()
                .zip(&path.loss)
                .map(|(&t, &l)| (l - flow.empirical_risk_at(schedule.integrated(t))).abs())
                .fold(0.0, f64::max)
        };

        let dev = sup_dev(1e-3);
        assert!(
            dev <= 10.0 * 1e-3 * grad_norm.max(1.0),
            "flow deviation {dev:.3e} too large"
        );

        // first order in dt: halving the step roughly halves the error
        let ratio = sup_dev(2e-3) / dev;
        assert!(
            (1.7..=2.3).contains(&ratio),
            "error ratio {ratio} not consistent with O(dt)"
        );
    }

    #[test]
    fn interpolation_start_is_a_fixed_point() {
        // choose b = A z so L(z) = 0, delta = 0, start at z
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = Array2::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0));
        let z = array![0.4, -0.2, 0.9, 0.1];
        let b = a.dot(&z);
        let problem = ProblemInstance::new(a, b, 0.0, z).unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        let system = SdeSystem::multi_pass(&spectrum, 0.0);
        let noise = NoiseModel::multi_pass(&spectrum);
        let schedule = LearningSchedule::constant(0.5).unwrap();
        let path = simulate_sld(&system, &schedule, &noise, 1e-2, 2.0, 3, &[], 10).unwrap();
        for &l in &path.loss {
            assert!(l.abs() < 1e-18, "loss {l} should stay at interpolation");
        }
    }

    #[test]
    fn streaming_at_population_minimum_is_constant() {
        let d = 5;
        let beta = Array1::from_shape_fn(d, |i| 0.5 - 0.1 * i as f64);
        let streaming = make_streaming(Array2::eye(d) / d as f64, beta.clone(), 0.0).unwrap();
        let spectrum = crate::problems::StreamingSpectrum::of(&streaming).unwrap();
        let path = simulate_streaming_hsgd(&spectrum, 0.6, &beta, 1e-2, 3.0, 9, &[], 10).unwrap();
        for &l in &path.loss {
            assert!(l.abs() < 1e-18);
        }
    }

    #[test]
    fn dense_noise_square_root_reproduces_covariance() {
        // |G G^t - (L M + A)| <= 1e-10 with G = [sqrt(L) sqrt(M) | sqrt(A)]
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let d = 6;
        let raw_m = Array2::from_shape_fn((d, d), |_| rng.gen_range(-0.4..0.4));
        let m = raw_m.t().dot(&raw_m);
        let raw_a = Array2::from_shape_fn((d, d), |_| rng.gen_range(-0.3..0.3));
        let a = raw_a.t().dot(&raw_a);

        let sm = crate::problems::psd_sqrt(&m).unwrap();
        let sa = crate::problems::psd_sqrt(&a).unwrap();
        for &loss in &[0.0, 0.37, 2.4] {
            let combined = &m * loss + &a;
            let g_m = &sm * loss.sqrt();
            let recon = g_m.dot(&g_m.t()) + sa.dot(&sa.t());
            let err = (&recon - &combined)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10, "covariance reconstruction error {err:.3e}");
        }
    }

    #[test]
    fn divergence_is_flagged_with_first_bad_time() {
        let problem = random_problem(6, 4, 0.0, 2);
        let spectrum = decompose(&problem, None).unwrap();
        let system = SdeSystem::multi_pass(&spectrum, 0.0);
        let noise = NoiseModel::deterministic(4);
        // enormous rate + large dt: deterministic explosion
        let schedule = LearningSchedule::constant(1e6).unwrap();
        let path = simulate_sld(&system, &schedule, &noise, 1.0, 400.0, 1, &[], 1).unwrap();
        assert!(path.diverged);
        assert!(path.first_bad_time.is_some());
    }

    #[test]
    fn ensemble_is_deterministic_per_master_seed() {
        let problem = random_problem(10, 6, 0.05, 8);
        let spectrum = decompose(&problem, None).unwrap();
        let system = SdeSystem::multi_pass(&spectrum, problem.ridge());
        let noise = NoiseModel::multi_pass(&spectrum);
        let schedule = LearningSchedule::constant(0.4).unwrap();
        let a = ensemble_paths(&system, &schedule, &noise, 1e-2, 1.0, 7, 8, &[], 10).unwrap();
        let b = ensemble_paths(&system, &schedule, &noise, 1e-2, 1.0, 7, 8, &[], 10).unwrap();
        assert_eq!(a.loss_mean, b.loss_mean);
        assert_eq!(a.loss_stderr, b.loss_stderr);
    }
}
