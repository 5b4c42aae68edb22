//! Small numerical helpers: summation, empirical quantiles, kernel density
//! estimates and a symmetric eigenvalue routine.

use alloc::vec::Vec;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if libm::fabs(sum) >= libm::fabs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Order-independent sum: terms are sorted before compensated summation, so
/// any permutation of the input produces the same bits.
pub fn canonical_sum(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    compensated_sum(values)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = libm::sqrt(ss / (n - 1) as f64);
    (mean, sd / libm::sqrt(n as f64))
}

/// Standard error of a mean by non-overlapping batch means. Used where
/// consecutive observations are correlated.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2);
    let size = values.len() / batches;
    if size == 0 {
        return mean_and_se(values).1;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    mean_and_se(&means).1
}

/// Index (0-based) of the order statistic that is the smallest value `x`
/// with empirical CDF `F(x) >= q` among `len` values.
pub fn quantile_rank(q: f64, len: usize) -> usize {
    debug_assert!(len > 0);
    let target = q * len as f64;
    // absorb rounding in q * len, e.g. 0.8 * 10 = 8.000000000000002
    let k = libm::ceil(target - 1e-9 * (1.0 + target)) as isize;
    (k.max(1) as usize).min(len) - 1
}

/// Smallest `x` with empirical CDF `F(x) >= q`. Reorders `values`.
pub fn empirical_quantile(values: &mut [f64], q: f64) -> f64 {
    let k = quantile_rank(q, values.len());
    let (_, v, _) = values.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *v
}

pub fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Interquartile range. Reorders `values`.
pub fn iqr(values: &mut [f64]) -> f64 {
    let q3 = empirical_quantile(values, 0.75);
    let q1 = empirical_quantile(values, 0.25);
    q3 - q1
}

/// Gaussian kernel density estimate with Silverman's rule-of-thumb bandwidth.
#[derive(Debug, Clone)]
pub struct Kde {
    points: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    /// Returns `None` for fewer than two points or a degenerate sample.
    pub fn new(mut points: Vec<f64>) -> Option<Self> {
        let n = points.len();
        if n < 2 {
            return None;
        }
        let (mean, _) = mean_and_se(&points);
        let var = points.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = libm::sqrt(var);
        let spread = iqr(&mut points) / 1.34;
        let scale = if spread > 0.0 { sd.min(spread) } else { sd };
        if !(scale > 0.0) {
            return None;
        }
        let bandwidth = 0.9 * scale * libm::pow(n as f64, -0.2);
        points.sort_unstable_by(|a, b| a.total_cmp(b));
        Some(Kde { points, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        // kernel mass beyond 8 bandwidths is below 1e-14
        let lo = self.points.partition_point(|&p| p < x - 8.0 * h);
        let hi = self.points.partition_point(|&p| p <= x + 8.0 * h);
        let norm = 1.0 / (libm::sqrt(2.0 * core::f64::consts::PI) * h * self.points.len() as f64);
        let s = compensated_sum(self.points[lo..hi].iter().map(|&p| {
            let z = (x - p) / h;
            libm::exp(-0.5 * z * z)
        }));
        s * norm
    }

    /// Central difference of the density with step `bandwidth / 2`.
    pub fn density_derivative(&self, x: f64) -> f64 {
        let d = 0.5 * self.bandwidth;
        (self.density(x + d) - self.density(x - d)) / (2.0 * d)
    }
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = a.iter().flatten().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_unstable_by(|x, y| x.total_cmp(y));
    eig
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quantile_rank_handles_rounding() {
        // 0.8 * 10 rounds to 8.000000000000002
        assert_eq!(quantile_rank(0.8, 10), 7);
        assert_eq!(quantile_rank(1.0, 10), 9);
        assert_eq!(quantile_rank(0.0, 10), 0);
        assert_eq!(quantile_rank(0.05, 10), 0);
        assert_eq!(quantile_rank(0.11, 10), 1);
    }

    #[test]
    fn empirical_quantile_is_left_continuous_inverse() {
        let mut v = vec![5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(empirical_quantile(&mut v, 0.4), 2.0);
        assert_eq!(empirical_quantile(&mut v, 0.41), 3.0);
        assert_eq!(empirical_quantile(&mut v, 1.0), 5.0);
    }

    #[test]
    fn canonical_sum_is_order_free() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64) * if i % 3 == 0 { -1e3 } else { 1.0 }).collect();
        let mut r = v.clone();
        r.reverse();
        assert_eq!(canonical_sum(v).to_bits(), canonical_sum(r).to_bits());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 2.0]];
        let e = symmetric_eigenvalues(&m);
        let s2 = libm::sqrt(2.0);
        for (got, want) in e.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let pts: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.618_033_988_75) % 1.0).collect();
        let kde = Kde::new(pts).unwrap();
        let step = 0.001;
        let mass: f64 = (-500..1500).map(|i| kde.density(i as f64 * step) * step).sum();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        // interior of a uniform sample: density near 1, slope near 0
        assert!((kde.density(0.5) - 1.0).abs() < 0.05);
        assert!(kde.density_derivative(0.5).abs() < 0.5);
    }
}
