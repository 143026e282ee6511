use crate::scalar::Scalar;

/// Logistic function, evaluated on the branch that never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax with max-subtraction.
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln sum exp(z)`, stable for large magnitudes.
pub fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0_f64), 0.5);
        assert!((sigmoid(40.0_f64) - 1.0).abs() < 1e-15);
        assert!((sigmoid(3.0_f64.ln()) - 0.75).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0_f64), 0.0);
        assert_eq!(sigmoid(1000.0_f64), 1.0);
    }

    #[test]
    fn sigmoid_single_precision() {
        assert!((sigmoid(3.0_f32.ln()) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn softmax_reference_points() {
        assert_eq!(softmax(&[0.0_f64; 4]), vec![0.25; 4]);
        let p = softmax(&[1.7, 1.7 + 3.0_f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let z = [0.3_f64, -1.2, 2.0];
        let direct = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&z) - direct).abs() < 1e-14);
        assert!((log_sum_exp(&[1000.0_f64, 1000.0]) - (1000.0 + 2.0_f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sigmoid_is_symmetric(x in -30.0_f64..30.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 2.0 * f64::EPSILON);
        }

        #[test]
        fn sigmoid_is_monotone(x in -50.0_f64..50.0, dx in 1e-3_f64..5.0) {
            prop_assert!(sigmoid(x + dx) >= sigmoid(x));
        }

        #[test]
        fn softmax_normalized_and_shift_invariant(
            z in proptest::collection::vec(-50.0_f64..50.0, 1..12),
            shift in -100.0_f64..100.0,
        ) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let q = softmax(&z.iter().map(|v| v + 10.0).collect::<Vec<_>>());
            for (a, b) in p.iter().zip(q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
