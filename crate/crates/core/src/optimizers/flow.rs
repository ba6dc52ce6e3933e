//! Closed-form gradient-flow statistics in the eigenbasis.
//!
//! The flow `dX = -grad f(X) dt` on the ridge objective has the explicit
//! solution `X(tau) = e^{-(H + delta I) tau} x0 + (H + delta I)^{-1}
//! (I - e^{-(H + delta I) tau}) A^t b`, evaluated here coordinate-wise in the
//! eigenbasis of `H = A^t A`. These values supply the forcing terms of every
//! Volterra equation and the gradient-flow baselines of the comparisons.

use ndarray::Array1;

use crate::problems::{BoundRisk, GenerativeModel, Spectrum, StreamingSpectrum};
use crate::util::exp_integral;

use super::{LearningSchedule, OptimError};

/// Which average the gradient-flow formulas take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// Use the actual projections of `x0` and `A^t b` stored in the spectrum.
    Quenched,
    /// Average over the generative randomness of `beta`, `xi`, `x0` via
    /// the three trace formulas weighted by `(R, R~, R^)`.
    Annealed,
}

/// Deterministic gradient flow for one problem instance (quenched).
#[derive(Debug, Clone, Copy)]
pub struct GradientFlow<'a> {
    spectrum: &'a Spectrum,
    ridge: f64,
}

impl<'a> GradientFlow<'a> {
    pub fn new(spectrum: &'a Spectrum, ridge: f64) -> Self {
        Self { spectrum, ridge }
    }

    /// Eigenbasis coordinates of the flow at internal time `tau = Gamma(t)`.
    pub fn coords_at(&self, tau: f64) -> Array1<f64> {
        let s = self.spectrum;
        Array1::from_iter(s.eigenvalues().iter().zip(s.init_coeffs()).zip(s.grad_coeffs()).map(
            |((&lambda, &x0), &c)| {
                let rho = lambda + self.ridge;
                (-rho * tau).exp() * x0 + c * exp_integral(rho, tau)
            },
        ))
    }

    /// Flow limit as `tau -> infinity`; on a ridgeless null direction the
    /// coordinate stays at its initial value (pseudo-inverse convention).
    pub fn coords_limit(&self) -> Array1<f64> {
        let s = self.spectrum;
        let cut = s.zero_cutoff();
        Array1::from_iter(s.eigenvalues().iter().zip(s.init_coeffs()).zip(s.grad_coeffs()).map(
            |((&lambda, &x0), &c)| {
                if lambda <= cut && self.ridge == 0.0 {
                    x0
                } else {
                    c / (lambda + self.ridge)
                }
            },
        ))
    }

    /// Empirical risk `L` at eigenbasis coordinates:
    /// `L = 1/2 sum_i lambda_i x_i^2 - sum_i c_i x_i + 1/2 |b|^2`.
    pub fn empirical_risk_of(&self, coords: &Array1<f64>) -> f64 {
        let s = self.spectrum;
        let mut acc = 0.5 * s.target_norm2();
        for ((&lambda, &c), &x) in s.eigenvalues().iter().zip(s.grad_coeffs()).zip(coords) {
            acc += 0.5 * lambda * x * x - c * x;
        }
        acc.max(0.0)
    }

    pub fn empirical_risk_at(&self, tau: f64) -> f64 {
        self.empirical_risk_of(&self.coords_at(tau))
    }

    pub fn empirical_risk_limit(&self) -> f64 {
        self.empirical_risk_of(&self.coords_limit())
    }

    pub fn risk_at(&self, risk: &BoundRisk, tau: f64) -> f64 {
        risk.value_in_basis(&self.coords_at(tau))
    }

    pub fn risk_limit(&self, risk: &BoundRisk) -> f64 {
        risk.value_in_basis(&self.coords_limit())
    }
}

/// Gradient-flow statistics averaged over the generative model (annealed):
/// `beta, xi, x0` are replaced by their second moments `R = |beta|^2`,
/// `R~ = d * noise_scale`, `R^ = E |x0|^2`.
#[derive(Debug, Clone, Copy)]
pub struct AnnealedFlow<'a> {
    spectrum: &'a Spectrum,
    ridge: f64,
    signal_norm2: f64,
    noise_norm2: f64,
    init_norm2: f64,
}

impl<'a> AnnealedFlow<'a> {
    pub fn new(spectrum: &'a Spectrum, ridge: f64, model: &GenerativeModel) -> Self {
        Self {
            spectrum,
            ridge,
            signal_norm2: model.signal_norm2(),
            noise_norm2: model.noise_norm2(),
            init_norm2: model.init_norm2(),
        }
    }

    pub fn with_moments(
        spectrum: &'a Spectrum,
        ridge: f64,
        signal_norm2: f64,
        noise_norm2: f64,
        init_norm2: f64,
    ) -> Self {
        Self {
            spectrum,
            ridge,
            signal_norm2,
            noise_norm2,
            init_norm2,
        }
    }

    fn factors(&self, lambda: f64, tau: Option<f64>) -> (f64, f64) {
        // (E_i, C_i): decay factor and integrated decay at this eigenvalue
        let rho = lambda + self.ridge;
        match tau {
            Some(tau) => ((-rho * tau).exp(), exp_integral(rho, tau)),
            None => {
                if rho <= self.spectrum.zero_cutoff() {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0 / rho)
                }
            }
        }
    }

    fn empirical(&self, tau: Option<f64>) -> f64 {
        let s = self.spectrum;
        let d = s.dim() as f64;
        let cut = s.zero_cutoff();
        let mut signal = 0.0;
        let mut noise = 0.0;
        let mut init = 0.0;
        let mut rank = 0usize;
        for &lambda in s.eigenvalues() {
            let (e, c) = self.factors(lambda, tau);
            let g = lambda * c;
            signal += lambda * (g - 1.0).powi(2);
            init += lambda * e * e;
            if lambda > cut {
                noise += (g - 1.0).powi(2);
                rank += 1;
            }
        }
        noise += (s.sample_count() - rank) as f64;
        (self.signal_norm2 * signal + self.noise_norm2 * noise + self.init_norm2 * init) / (2.0 * d)
    }

    /// Population-risk forcing for a quadratic with spectral weights
    /// `s_i = u_i^t Sigma u_i` plus a constant noise floor `eta^2 / 2`.
    fn population(&self, weights: &Array1<f64>, noise_floor: f64, tau: Option<f64>) -> f64 {
        let s = self.spectrum;
        let d = s.dim() as f64;
        let mut signal = 0.0;
        let mut noise = 0.0;
        let mut init = 0.0;
        for (&lambda, &w) in s.eigenvalues().iter().zip(weights) {
            let (e, c) = self.factors(lambda, tau);
            let g = lambda * c;
            signal += w * (g - 1.0).powi(2);
            noise += w * lambda * c * c;
            init += w * e * e;
        }
        (self.signal_norm2 * signal + self.noise_norm2 * noise + self.init_norm2 * init)
            / (2.0 * d)
            + noise_floor
    }

    pub fn empirical_risk_at(&self, tau: f64) -> f64 {
        self.empirical(Some(tau))
    }

    pub fn empirical_risk_limit(&self) -> f64 {
        self.empirical(None)
    }

    /// Annealed norm risk `E 1/2 |X(tau) - beta|^2`.
    pub fn norm_risk_at(&self, tau: f64) -> f64 {
        self.population(&Array1::ones(self.spectrum.dim()), 0.0, Some(tau))
    }

    pub fn norm_risk_limit(&self) -> f64 {
        self.population(&Array1::ones(self.spectrum.dim()), 0.0, None)
    }

    /// Annealed population risk for covariance weights `s_i` and noise `eta^2`.
    pub fn covariance_risk_at(&self, weights: &Array1<f64>, noise_variance: f64, tau: f64) -> f64 {
        self.population(weights, 0.5 * noise_variance, Some(tau))
    }

    pub fn covariance_risk_limit(&self, weights: &Array1<f64>, noise_variance: f64) -> f64 {
        self.population(weights, 0.5 * noise_variance, None)
    }
}

/// Gradient flow of the streaming loss `dX = -grad S(X) dt`, solved as
/// `X(tau) = beta + e^{-Sigma_f tau} (x0 - beta)` in the covariance eigenbasis.
#[derive(Debug, Clone)]
pub struct StreamingFlow<'a> {
    spectrum: &'a StreamingSpectrum,
    /// `V^t (x0 - beta)`.
    offset: Array1<f64>,
}

impl<'a> StreamingFlow<'a> {
    pub fn new(spectrum: &'a StreamingSpectrum, init: &Array1<f64>) -> Self {
        let init_coeffs = spectrum.basis().t().dot(init);
        let offset = &init_coeffs - spectrum.signal_coeffs();
        Self { spectrum, offset }
    }

    pub fn coords_at(&self, tau: f64) -> Array1<f64> {
        Array1::from_iter(
            self.spectrum
                .eigenvalues()
                .iter()
                .zip(&self.offset)
                .zip(self.spectrum.signal_coeffs())
                .map(|((&lambda, &nu), &beta)| beta + (-lambda * tau).exp() * nu),
        )
    }

    /// Streaming loss along the flow:
    /// `S(X(tau)) = 1/2 sum_i lambda_i nu_i^2 e^{-2 lambda_i tau} + eta^2 / 2`.
    pub fn loss_at(&self, tau: f64) -> f64 {
        let mut acc = 0.5 * self.spectrum.noise_variance();
        for (&lambda, &nu) in self.spectrum.eigenvalues().iter().zip(&self.offset) {
            acc += 0.5 * lambda * nu * nu * (-2.0 * lambda * tau).exp();
        }
        acc
    }

    /// `S` at the flow limit: the noise floor `eta^2 / 2` (null directions of
    /// the covariance carry no loss).
    pub fn loss_limit(&self) -> f64 {
        0.5 * self.spectrum.noise_variance()
    }

    pub fn risk_at(&self, risk: &BoundRisk, tau: f64) -> f64 {
        risk.value_in_basis(&self.coords_at(tau))
    }

    pub fn risk_limit(&self, risk: &BoundRisk) -> f64 {
        let cut = 1e-12
            * self
                .spectrum
                .eigenvalues()
                .first()
                .copied()
                .unwrap_or(0.0)
                .max(f64::MIN_POSITIVE);
        let coords = Array1::from_iter(
            self.spectrum
                .eigenvalues()
                .iter()
                .zip(&self.offset)
                .zip(self.spectrum.signal_coeffs())
                .map(|((&lambda, &nu), &beta)| if lambda <= cut { beta + nu } else { beta }),
        );
        risk.value_in_basis(&coords)
    }
}

/// Per-time gradient-flow forcing values with their `tau -> infinity` limits.
#[derive(Debug, Clone)]
pub struct FlowRisks {
    pub times: Vec<f64>,
    /// Empirical risk `L(X^gf_{Gamma(t)})` per time.
    pub empirical: Vec<f64>,
    pub empirical_limit: f64,
    /// One column per registered risk, in registration order.
    pub risks: Vec<(String, Vec<f64>, f64)>,
}

/// Evaluate `L` and each registered risk along gradient flow at
/// `tau = Gamma(t)` for every requested time.
///
/// Annealed mode averages the generative randomness and therefore needs the
/// model moments; risks are evaluated via their spectral weights plus a
/// noise floor read from the risk's constant term.
pub fn gradient_flow_risks(
    spectrum: &Spectrum,
    schedule: &LearningSchedule,
    model: Option<&GenerativeModel>,
    ridge: f64,
    times: &[f64],
    risks: &[&BoundRisk],
    mode: FlowMode,
) -> Result<FlowRisks, OptimError> {
    let taus: Vec<f64> = times.iter().map(|&t| schedule.integrated(t)).collect();
    match mode {
        FlowMode::Quenched => {
            let flow = GradientFlow::new(spectrum, ridge);
            let coords: Vec<Array1<f64>> = taus.iter().map(|&tau| flow.coords_at(tau)).collect();
            let empirical = coords.iter().map(|c| flow.empirical_risk_of(c)).collect();
            let risks_out = risks
                .iter()
                .map(|r| {
                    (
                        r.name().to_string(),
                        coords.iter().map(|c| r.value_in_basis(c)).collect(),
                        flow.risk_limit(r),
                    )
                })
                .collect();
            Ok(FlowRisks {
                times: times.to_vec(),
                empirical,
                empirical_limit: flow.empirical_risk_limit(),
                risks: risks_out,
            })
        }
        FlowMode::Annealed => {
            let model = model.ok_or(OptimError::MissingModel)?;
            let flow = AnnealedFlow::new(spectrum, ridge, model);
            let empirical = taus.iter().map(|&tau| flow.empirical_risk_at(tau)).collect();
            let risks_out = risks
                .iter()
                .map(|r| {
                    // the annealed trace formulas apply to signal-centered
                    // risks 1/2 (x-beta)^t T (x-beta) + eta^2/2 only
                    let floor = r.noise_floor().ok_or(OptimError::MissingModel)?;
                    Ok((
                        r.name().to_string(),
                        taus.iter()
                            .map(|&tau| flow.covariance_risk_at(r.weights(), floor, tau))
                            .collect(),
                        flow.covariance_risk_limit(r.weights(), floor),
                    ))
                })
                .collect::<Result<Vec<_>, OptimError>>()?;
            Ok(FlowRisks {
                times: times.to_vec(),
                empirical,
                empirical_limit: flow.empirical_risk_limit(),
                risks: risks_out,
            })
        }
    }
}
