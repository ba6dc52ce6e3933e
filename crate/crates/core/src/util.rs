//! Small numeric helpers shared across modules.

/// Stable evaluation of `(1 - exp(-rho * tau)) / rho`.
///
/// This is the integral of `exp(-rho s)` over `[0, tau]`; the limit as
/// `rho -> 0` is `tau`, which the naive expression loses to cancellation.
pub fn exp_integral(rho: f64, tau: f64) -> f64 {
    let x = rho * tau;
    if x.abs() < 1e-12 {
        // two-term series keeps relative error below 1e-24
        tau * (1.0 - 0.5 * x)
    } else {
        -f64::exp_m1(-x) / rho
    }
}

/// SplitMix64 step, used to derive independent per-run seeds from a master
/// seed and a run counter. The scheme is `seed_i = splitmix64(master + i)`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed for member `index` of an ensemble keyed by `master`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index))
}

/// Mean and standard error of a slice.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Levenshtein edit distance, used for "did you mean" hints in config errors.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_integral_matches_naive_away_from_zero() {
        for &(rho, tau) in &[(2.0, 0.3), (0.5, 4.0), (10.0, 0.01)] {
            let naive = (1.0 - (-rho * tau as f64).exp()) / rho;
            assert!((exp_integral(rho, tau) - naive).abs() < 1e-14);
        }
    }

    #[test]
    fn exp_integral_zero_rate_is_tau() {
        assert_eq!(exp_integral(0.0, 3.5), 3.5);
    }

    #[test]
    fn seed_expansion_is_deterministic_and_spread() {
        let a = run_seed(42, 0);
        let b = run_seed(42, 1);
        assert_eq!(a, run_seed(42, 0));
        assert_ne!(a, b);
    }

    #[test]
    fn edit_distance_basic() {
        assert_eq!(edit_distance("gama", "gamma"), 1);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
    }
}
