//! Small numeric helpers shared across modules.

use alloc::vec::Vec;

/// Offset inside logarithms.
pub const LOG_EPS: f64 = 1e-12;

/// Shannon entropy (nats) of a probability vector, `-Σ p ln(p + ε)`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&pk| pk * libm::log(pk + LOG_EPS)).sum::<f64>()
}

/// Entropy of the empirical distribution given by integer counts.
pub fn count_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    entropy(&p)
}

/// Linear-interpolation empirical quantile of an ascending-sorted slice.
///
/// Uses position `h = (n - 1) q` and interpolates between the neighbouring
/// order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    let frac = h - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Round half away from zero.
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), Some(1.0));
        assert_eq!(quantile_sorted(&xs, 1.0), Some(4.0));
        assert_eq!(quantile_sorted(&xs, 0.5), Some(2.5));
        assert!((quantile_sorted(&xs, 0.25).unwrap() - 1.75).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[], 0.5), None);
    }

    #[test]
    fn argmax_lowest_index_on_tie() {
        assert_eq!(argmax(&[0.0, 2.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn entropy_of_uniform() {
        let p = [0.25; 4];
        assert!((entropy(&p) - libm::log(4.0)).abs() < 1e-10);
        assert!((count_entropy(&[3, 3, 3, 3]) - libm::log(4.0)).abs() < 1e-10);
        assert_eq!(count_entropy(&[0, 0]), 0.0);
    }
}
