//! Rank statistics, generic over the float type.

use num_traits::Float;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks<F: Float>(values: &[F]) -> Vec<F> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN in rank input"));
    let mut ranks = vec![F::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = F::from(start + 1 + end).expect("small integers fit") / F::from(2).expect("2 fits");
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Tie groups can average to a whole rank (1..=5 gives 3), so compare values.
fn has_ties<F: Float>(values: &[F]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in rank input"));
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<F: Float>(x: &[F], y: &[F]) -> Option<F> {
    assert_eq!(x.len(), y.len(), "paired samples");
    let n = F::from(x.len())?;
    if x.len() < 2 {
        return None;
    }
    let mean_x = x.iter().fold(F::zero(), |a, &b| a + b) / n;
    let mean_y = y.iter().fold(F::zero(), |a, &b| a + b) / n;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).max(-F::one()).min(F::one()))
}

/// Spearman's rank correlation. Without ties this is the exact
/// `1 - 6 Σd² / (n(n² - 1))`; with ties it is Pearson over average ranks.
pub fn spearman<F: Float>(x: &[F], y: &[F]) -> Option<F> {
    assert_eq!(x.len(), y.len(), "paired samples");
    if x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    if has_ties(x) || has_ties(y) {
        return pearson(&rx, &ry);
    }
    let n = F::from(x.len())?;
    let d2 = rx.iter().zip(&ry).fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    let six = F::from(6)?;
    Some(F::one() - six * d2 / (n * (n * n - F::one())))
}

/// Two-sided p-value for a rank correlation via the t approximation with
/// `n - 2` degrees of freedom.
pub fn t_approx_p_value<F: Float>(rho: F, n: usize) -> F {
    if n < 3 {
        return F::one();
    }
    let r = rho.to_f64().expect("finite rho");
    if r.abs() >= 1.0 {
        return F::zero();
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    F::from(p.clamp(0.0, 1.0)).expect("probability fits")
}

pub const MAX_PERMUTATION_N: usize = 10;

/// Exact two-sided permutation p-value of Spearman's rho: the share of all
/// orderings of `y` whose |rho| reaches the observed |rho|.
pub fn permutation_p_value<F: Float>(x: &[F], y: &[F]) -> Option<F> {
    let n = x.len();
    if !(2..=MAX_PERMUTATION_N).contains(&n) || y.len() != n {
        return None;
    }
    let observed = spearman(x, y).unwrap_or(F::zero()).abs();
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let tol = F::from(1e-9).expect("tolerance fits");
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut check = |perm: &[F]| {
        total += 1;
        let rho = pearson(&rx, perm).unwrap_or(F::zero()).abs();
        if rho >= observed - tol {
            hits += 1;
        }
    };
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    check(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            check(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    F::from(hits as f64 / total as f64)
}

/// Median of an ascending-sorted slice; mean of the middle pair for even lengths.
pub fn median_sorted<F: Float>(sorted: &[F]) -> Option<F> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / F::from(2)?
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(average_ranks(&[1.0f32, 1.0, 1.0]), vec![2.0f32, 2.0, 2.0]);
    }

    #[test]
    fn spearman_extremes_are_exact() {
        let idx: Vec<f64> = (1..=10).map(f64::from).collect();
        let down: Vec<f64> = idx.iter().rev().copied().collect();
        assert_eq!(spearman(&idx, &down), Some(-1.0));
        assert_eq!(spearman(&idx, &idx), Some(1.0));
        assert_eq!(spearman(&idx, &[0.5; 10]), None);
        let idx32: Vec<f32> = (1..=10).map(|i| i as f32).collect();
        assert_eq!(spearman(&idx32, &idx32), Some(1.0f32));
    }

    #[test]
    fn whole_number_tie_ranks_still_use_pearson() {
        let order: Vec<f64> = (1..=10).map(f64::from).collect();
        let split = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // scipy.stats.spearmanr gives -0.8703882797784892
        let rho = spearman(&order, &split).unwrap();
        assert!((rho - -0.8703882797784892).abs() < 1e-12);
    }

    #[test]
    fn p_value_bounds() {
        assert_eq!(t_approx_p_value(-1.0, 10), 0.0);
        assert!((t_approx_p_value(0.0, 10) - 1.0f64).abs() < 1e-12);
    }

    #[test]
    fn permutation_p_for_perfect_order() {
        let idx: Vec<f64> = (1..=6).map(f64::from).collect();
        // Only the identity and the reversal reach |rho| = 1 among 720 orderings.
        let p = permutation_p_value(&idx, &idx).unwrap();
        assert!((p - 2.0 / 720.0).abs() < 1e-12);
        assert!(permutation_p_value(&[0.0; 11], &[0.0; 11]).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_sorted(&[1.0, 2.0, 9.0]), Some(2.0));
        assert_eq!(median_sorted(&[1.0, 2.0, 3.0, 9.0]), Some(2.5));
        assert_eq!(median_sorted::<f64>(&[]), None);
    }
}
