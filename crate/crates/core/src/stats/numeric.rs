use num_traits::Float;

use crate::{Error, Result};

/// log Σ exp(vᵢ), shifted by the maximum so large magnitudes do not overflow.
/// Returns −∞ when every entry is −∞.
pub fn log_sum_exp<F: Float>(values: &[F]) -> Result<F> {
    if values.is_empty() {
        return Err(Error::Domain("log_sum_exp of an empty vector".into()));
    }
    let max = values.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return Ok(max);
    }
    if max == F::infinity() {
        return Ok(max);
    }
    let sum = values
        .iter()
        .fold(F::zero(), |acc, &v| acc + (v - max).exp());
    Ok(max + sum.ln())
}

/// Streaming log-sum-exp accumulator (one pass, rescales on a new maximum).
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    count: usize,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            count: 0,
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Root of a continuous monotone function on a bracket: returns `r` with
/// `f(r) = target` up to floating-point resolution (Brent's method).
pub fn solve_monotone<F, Fun>(mut f: Fun, target: F, bracket: (F, F)) -> Result<F>
where
    F: Float,
    Fun: FnMut(F) -> F,
{
    let (mut a, mut b) = bracket;
    let mut fa = f(a) - target;
    let mut fb = f(b) - target;
    if fa.is_nan() || fb.is_nan() || fa * fb > F::zero() {
        return Err(Error::Bracket {
            lo: a.to_f64().unwrap_or(f64::NAN),
            hi: b.to_f64().unwrap_or(f64::NAN),
        });
    }
    if fa == F::zero() {
        return Ok(a);
    }
    if fb == F::zero() {
        return Ok(b);
    }
    let two = F::one() + F::one();
    let half = F::one() / two;
    let three = two + F::one();
    let eps = F::epsilon();

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..1000 {
        if (fb > F::zero()) == (fc > F::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * eps * b.abs() + F::min_positive_value();
        let m = half * (c - b);
        if m.abs() <= tol || fb == F::zero() {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = F::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qa * (qa - r) - (b - a) * (r - F::one()));
                q = (qa - F::one()) * (r - F::one()) * (s - F::one());
            }
            if p > F::zero() {
                q = -q;
            } else {
                p = -p;
            }
            if two * p < (three * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        if d.abs() > tol {
            b = b + d;
        } else {
            b = b + if m > F::zero() { tol } else { -tol };
        }
        fb = f(b) - target;
        if fb.is_nan() {
            return Err(Error::Numerical(
                "objective returned NaN inside bracket".into(),
            ));
        }
    }
    Ok(b)
}

/// Batch-means standard error of the sample mean of `xs`.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let b = batches.min(n).max(2);
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &xs[i * size..(i + 1) * size];
            chunk.iter().sum::<f64>() / size as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lse_examples() {
        assert_abs_diff_eq!(
            log_sum_exp(&[0.0, 0.0]).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            log_sum_exp(&[1000.0, 1000.0]).unwrap(),
            1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(log_sum_exp::<f64>(&[]), Err(Error::Domain(_))));
        assert_abs_diff_eq!(
            log_sum_exp(&[0.0f32, 0.0]).unwrap(),
            2f32.ln(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn streaming_matches_batch() {
        let v = [3.0, -1.0, 700.0, 12.5, f64::NEG_INFINITY, 699.0];
        let mut acc = LogSumExp::new();
        v.iter().for_each(|&x| acc.push(x));
        assert_abs_diff_eq!(acc.value(), log_sum_exp(&v).unwrap(), epsilon = 1e-12);
        assert_eq!(acc.count(), 6);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn lse_shift_invariance(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -500.0f64..500.0) {
            let base = log_sum_exp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let got = log_sum_exp(&shifted).unwrap();
            prop_assert!((got - (base + c)).abs() <= 1e-12 * (base + c).abs().max(1.0));
        }
    }

    #[test]
    fn solve_monotone_examples() {
        let r = solve_monotone(|x: f64| x * x, 4.0, (0.0, 10.0)).unwrap();
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-12);
        let r = solve_monotone(|x: f64| x.exp(), 1.0, (-1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        let r = solve_monotone(|x: f32| x * x * x, 8.0, (0.0, 5.0)).unwrap();
        assert!((r - 2.0).abs() < 1e-5);
    }

    #[test]
    fn solve_monotone_residual_is_tiny() {
        let f = |x: f64| x.ln() + x;
        let r = solve_monotone(f, 3.0, (0.1, 10.0)).unwrap();
        assert!((f(r) - 3.0).abs() <= 1e-10);
    }

    #[test]
    fn solve_monotone_without_sign_change() {
        let err = solve_monotone(|x: f64| x * x, -1.0, (0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn batch_means_of_constant_is_zero() {
        assert_eq!(batch_means_se(&[2.0; 100], 20), 0.0);
        let xs: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        // even batch length, so every batch mean is exactly one half
        assert!(batch_means_se(&xs, 10) < 1e-12);
    }
}
