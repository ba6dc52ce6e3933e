//! Momentum (Polyak heavy-ball) gradient descent and its polynomial
//! representation `x_k = P_k(H + delta I) x0 + Q_k(H + delta I) A^t b`.

use ndarray::Array1;

use crate::problems::{ProblemInstance, QuadraticRisk};

use super::{OptimError, TimeUnit, Trajectory};

/// Run full-batch momentum GD:
/// `x_{k+1} = x_k + m (x_k - x_{k-1}) - gamma grad f(x_k)`,
/// initialized with `x_1 = x_0 - gamma/(1+m) grad f(x_0)`.
///
/// Every iterate is recorded (time unit: iterations); `keep_iterates`
/// additionally stores the iterate vectors on the trajectory.
pub fn run_momentum_gd(
    problem: &ProblemInstance,
    gamma: f64,
    momentum: f64,
    iters: usize,
    risks: &[&QuadraticRisk],
    keep_iterates: bool,
) -> Result<Trajectory, OptimError> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(OptimError::NegativeRate(gamma));
    }
    if momentum < 0.0 || !momentum.is_finite() {
        return Err(OptimError::NegativeMomentum(momentum));
    }
    let names: Vec<&str> = risks.iter().map(|r| r.name()).collect();
    let mut trajectory = Trajectory::new(TimeUnit::Iterations, &names, 0);

    let mut record = |trajectory: &mut Trajectory, k: usize, x: &Array1<f64>| {
        let loss = problem.empirical_risk(x);
        let objective = loss + 0.5 * problem.ridge() * x.dot(x);
        trajectory.push(
            k as f64,
            loss,
            objective,
            risks.iter().map(|r| (r.name().to_string(), r.value(x))),
        );
        if keep_iterates {
            trajectory.push_snapshot(x.clone());
        }
    };

    let mut prev = problem.init().clone();
    record(&mut trajectory, 0, &prev);
    if iters == 0 {
        return Ok(trajectory);
    }

    let mut cur = &prev - &(problem.gradient(&prev) * (gamma / (1.0 + momentum)));
    record(&mut trajectory, 1, &cur);

    for k in 1..iters {
        let grad = problem.gradient(&cur);
        let next = &cur + &((&cur - &prev) * momentum) - &(grad * gamma);
        prev = std::mem::replace(&mut cur, next);
        if cur.iter().any(|v| !v.is_finite()) {
            trajectory.mark_diverged();
            break;
        }
        record(&mut trajectory, k + 1, &cur);
    }
    Ok(trajectory)
}

/// Degree-`k` polynomial pair `(P_k, Q_k)` for momentum GD with parameters
/// `(gamma, m)`, where `P_k(lambda) = 1 - lambda Q_k(lambda)` and `P_k(0) = 1`.
#[derive(Debug, Clone, Copy)]
pub struct MomentumPolynomial {
    pub degree: usize,
    pub gamma: f64,
    pub momentum: f64,
}

impl MomentumPolynomial {
    pub fn new(degree: usize, gamma: f64, momentum: f64) -> Self {
        Self {
            degree,
            gamma,
            momentum,
        }
    }

    /// Spectral argument `sigma(lambda) = (1 + m - gamma lambda) / (2 sqrt(m))`.
    pub fn sigma(&self, lambda: f64) -> f64 {
        (1.0 + self.momentum - self.gamma * lambda) / (2.0 * self.momentum.sqrt())
    }

    /// Evaluate `(P_k, Q_k)` by the three-term recurrences
    /// `P_{k+1} = (1 + m - gamma lambda) P_k - m P_{k-1}` and
    /// `Q_{k+1} = (1 + m - gamma lambda) Q_k - m Q_{k-1} + gamma`.
    ///
    /// Running the recurrence for `Q` directly keeps it finite at
    /// `lambda = 0`, where `(1 - P_k)/lambda` is 0/0.
    pub fn eval_recurrence(&self, lambda: f64) -> (f64, f64) {
        let m = self.momentum;
        let a = 1.0 + m - self.gamma * lambda;
        let (mut p_prev, mut q_prev) = (1.0, 0.0);
        if self.degree == 0 {
            return (p_prev, q_prev);
        }
        let (mut p, mut q) = (1.0 - self.gamma * lambda / (1.0 + m), self.gamma / (1.0 + m));
        for _ in 1..self.degree {
            let p_next = a * p - m * p_prev;
            let q_next = a * q - m * q_prev + self.gamma;
            p_prev = std::mem::replace(&mut p, p_next);
            q_prev = std::mem::replace(&mut q, q_next);
        }
        (p, q)
    }

    /// Chebyshev closed form
    /// `P_k = m^{k/2} ( 2m/(1+m) T_k(sigma) + (1 - 2m/(1+m)) U_k(sigma) )`,
    /// valid for `m > 0`; returns `None` at `m = 0`, where the recurrence
    /// (plain gradient descent, `P_k = (1 - gamma lambda)^k`) applies.
    pub fn eval_chebyshev(&self, lambda: f64) -> Option<f64> {
        let m = self.momentum;
        if m <= 0.0 {
            return None;
        }
        let sigma = self.sigma(lambda);
        let (t_k, u_k) = chebyshev_pair(self.degree, sigma);
        let w = 2.0 * m / (1.0 + m);
        Some(m.powf(self.degree as f64 / 2.0) * (w * t_k + (1.0 - w) * u_k))
    }
}

/// `(T_k(x), U_k(x))`: Chebyshev polynomials of the first and second kind,
/// by their shared three-term recurrence.
fn chebyshev_pair(k: usize, x: f64) -> (f64, f64) {
    let (mut t_prev, mut u_prev) = (1.0, 1.0);
    if k == 0 {
        return (t_prev, u_prev);
    }
    let (mut t, mut u) = (x, 2.0 * x);
    for _ in 1..k {
        let t_next = 2.0 * x * t - t_prev;
        let u_next = 2.0 * x * u - u_prev;
        t_prev = std::mem::replace(&mut t, t_next);
        u_prev = std::mem::replace(&mut u, u_next);
    }
    (t, u)
}

/// `(P_k(lambda), Q_k(lambda))` for momentum GD, evaluated by recurrence.
pub fn eval_mgd_polynomials(k: usize, lambda: f64, gamma: f64, momentum: f64) -> (f64, f64) {
    MomentumPolynomial::new(k, gamma, momentum).eval_recurrence(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::decompose;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};

    #[test]
    fn p0_is_one_everywhere_and_pk0_is_one() {
        for &lambda in &[0.0, 0.5, 2.0, 7.3] {
            let (p, q) = eval_mgd_polynomials(0, lambda, 0.3, 0.5);
            assert_eq!((p, q), (1.0, 0.0));
        }
        for k in 0..40 {
            let (p, _) = eval_mgd_polynomials(k, 0.0, 0.3, 0.5);
            assert!((p - 1.0).abs() < 1e-12, "P_{k}(0) = {p}");
        }
    }

    #[test]
    fn q_identity_and_continuity_at_zero() {
        // lambda Q_k = 1 - P_k away from zero, and Q_k is continuous at 0.
        for k in [1, 5, 17] {
            for &lambda in &[0.3, 1.1, 3.9] {
                let (p, q) = eval_mgd_polynomials(k, lambda, 0.2, 0.4);
                assert!((lambda * q - (1.0 - p)).abs() < 1e-12);
            }
            let (_, q0) = eval_mgd_polynomials(k, 0.0, 0.2, 0.4);
            let (_, qe) = eval_mgd_polynomials(k, 1e-9, 0.2, 0.4);
            assert!((q0 - qe).abs() < 1e-6, "Q_{k} jump at 0: {q0} vs {qe}");
        }
    }

    #[test]
    fn chebyshev_closed_form_matches_recurrence_on_grid() {
        let (gamma, m) = (0.1, 0.5);
        let mut worst = 0.0f64;
        for k in 0..=50 {
            let poly = MomentumPolynomial::new(k, gamma, m);
            for j in 0..=80 {
                let lambda = 4.0 * j as f64 / 80.0;
                let (p_rec, _) = poly.eval_recurrence(lambda);
                let p_cheb = poly.eval_chebyshev(lambda).unwrap();
                worst = worst.max((p_rec - p_cheb).abs());
            }
        }
        assert!(worst <= 1e-8, "max |closed form - recurrence| = {worst:.3e}");
    }

    #[test]
    fn momentum_zero_is_plain_gradient_descent() {
        let problem = ProblemInstance::new(
            array![[1.0, 0.3], [0.2, 0.8], [0.5, -0.1]],
            array![0.7, -0.4, 0.2],
            0.1,
            array![0.4, -0.9],
        )
        .unwrap();
        let gamma = 0.25;
        let t = run_momentum_gd(&problem, gamma, 0.0, 15, &[], true).unwrap();

        let mut x = problem.init().clone();
        for k in 0..=15 {
            let diff = (&t.snapshots()[k] - &x).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "iterate {k} differs from GD by {diff}");
            x = &x - &(problem.gradient(&x) * gamma);
        }
    }

    #[test]
    fn iterates_match_polynomial_representation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let a = Array2::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0));
        let x0 = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));
        let (gamma, m, delta) = (0.15, 0.4, 0.2);
        let problem = ProblemInstance::new(a, b, delta, x0).unwrap();
        let spectrum = decompose(&problem, None).unwrap();
        let t = run_momentum_gd(&problem, gamma, m, 30, &[], true).unwrap();

        for k in 0..=30 {
            let poly = MomentumPolynomial::new(k, gamma, m);
            let mut coords = Array1::zeros(4);
            for i in 0..4 {
                let shifted = spectrum.eigenvalues()[i] + delta;
                let (p, q) = poly.eval_recurrence(shifted);
                coords[i] = p * spectrum.init_coeffs()[i] + q * spectrum.grad_coeffs()[i];
            }
            let predicted = spectrum.basis().dot(&coords);
            let scale = predicted.iter().map(|v| v.abs()).fold(1e-30, f64::max);
            let diff = (&t.snapshots()[k] - &predicted)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            assert!(
                diff <= 1e-10 * scale.max(1.0),
                "iterate {k}: polynomial representation off by {diff:.3e}"
            );
        }
    }
}
