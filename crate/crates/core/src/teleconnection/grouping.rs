//! Average-linkage clustering of lag profiles under correlation distance.

use alloc::{vec, vec::Vec};
use core::fmt;

use super::anomaly::AnomalyTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupLabel {
    /// 0-based group, numbered by lowest member cluster.
    Group(usize),
    /// Constant profile.
    Flat,
    /// Profile has missing lags.
    Incomplete,
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Group(g) => write!(f, "G{}", g + 1),
            GroupLabel::Flat => f.write_str("flat"),
            GroupLabel::Incomplete => f.write_str("incomplete"),
        }
    }
}

/// `ΔP_k(τ)` per cluster in lag order; `None` when any lag is missing.
/// Uses every slice of the table, which should hold one period and no month filter.
pub fn lag_profiles(table: &AnomalyTable) -> Vec<Option<Vec<f64>>> {
    let mut slices: Vec<_> = table.slices.iter().collect();
    slices.sort_by_key(|s| s.lag);
    let k = slices.first().map_or(0, |s| s.enso.counts.len());
    (0..k)
        .map(|c| slices.iter().map(|s| s.delta.as_ref().map(|d| d[c])).collect())
        .collect()
}

fn correlation_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    1.0 - sab / libm::sqrt(saa * sbb)
}

fn is_constant(p: &[f64]) -> bool {
    p.windows(2).all(|w| w[0] == w[1])
}

/// Groups clusters with similar lag profiles into `n_groups` groups.
///
/// Constant profiles go to [`GroupLabel::Flat`], incomplete ones to
/// [`GroupLabel::Incomplete`]. Merges always take the closest pair under
/// average linkage, ties going to the pair with the lowest member indices.
pub fn group_by_lag_profile(profiles: &[Option<Vec<f64>>], n_groups: usize) -> Result<Vec<GroupLabel>> {
    let mut labels = vec![GroupLabel::Incomplete; profiles.len()];
    let mut active: Vec<usize> = Vec::new();
    for (k, p) in profiles.iter().enumerate() {
        match p {
            Some(p) if is_constant(p) => labels[k] = GroupLabel::Flat,
            Some(_) => active.push(k),
            None => {}
        }
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for &k in &active {
        let p = profiles[k].as_ref().expect("active profiles are complete");
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    if n_groups == 0 || n_groups > distinct.len() {
        return Err(Error::TooManyGroups {
            requested: n_groups,
            available: distinct.len(),
        });
    }

    let n = active.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = correlation_distance(
                profiles[active[i]].as_ref().expect("complete"),
                profiles[active[j]].as_ref().expect("complete"),
            );
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    // Groups hold indices into `active`, kept sorted by lowest member.
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while groups.len() > n_groups {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let mut sum = 0.0;
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        sum += dist[i][j];
                    }
                }
                let d = sum / (groups[a].len() * groups[b].len()) as f64;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two groups");
        let merged = groups.remove(b);
        groups[a].extend(merged);
        groups[a].sort_unstable();
    }
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            labels[active[i]] = GroupLabel::Group(g);
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Option<Vec<f64>> {
        Some(v.to_vec())
    }

    #[test]
    fn identical_profiles_share_a_group() {
        let profiles = [p(&[0.1, 0.3, -0.2]), p(&[-0.1, 0.2, 0.4]), p(&[0.1, 0.3, -0.2])];
        let g = group_by_lag_profile(&profiles, 2).unwrap();
        assert_eq!(g[0], g[2]);
        assert_ne!(g[0], g[1]);
    }

    #[test]
    fn opposite_profiles_split() {
        let x = [0.1, -0.3, 0.25, 0.05];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((correlation_distance(&x, &neg) - 2.0).abs() < 1e-12);
        let g = group_by_lag_profile(&[p(&x), p(&neg)], 2).unwrap();
        assert_ne!(g[0], g[1]);
    }

    #[test]
    fn k_groups_are_singletons_and_flats_separate() {
        let profiles = [p(&[1.0, 2.0, 0.0]), p(&[0.0, 1.0, 3.0]), p(&[2.0, 0.0, 1.0])];
        let g = group_by_lag_profile(&profiles, 3).unwrap();
        assert_eq!(g, vec![GroupLabel::Group(0), GroupLabel::Group(1), GroupLabel::Group(2)]);
        let with_flat = [p(&[1.0, 2.0, 0.0]), p(&[0.5, 0.5, 0.5]), None];
        let g = group_by_lag_profile(&with_flat, 1).unwrap();
        assert_eq!(g, vec![GroupLabel::Group(0), GroupLabel::Flat, GroupLabel::Incomplete]);
    }

    #[test]
    fn too_many_groups() {
        let profiles = [p(&[1.0, 2.0]), p(&[1.0, 2.0])];
        assert_eq!(
            group_by_lag_profile(&profiles, 2),
            Err(Error::TooManyGroups { requested: 2, available: 1 })
        );
    }

    #[test]
    fn average_linkage_merges_closest_first() {
        // Two tight pairs plus an outlier; cutting at two groups keeps the pairs apart.
        let a = [0.0, 1.0, 2.0, 3.0];
        let a2 = [0.0, 1.1, 2.0, 3.1];
        let b = [3.0, 2.0, 1.0, 0.0];
        let b2 = [3.0, 2.1, 1.0, 0.2];
        let g = group_by_lag_profile(&[p(&a), p(&b), p(&a2), p(&b2)], 2).unwrap();
        assert_eq!(g, vec![GroupLabel::Group(0), GroupLabel::Group(1), GroupLabel::Group(0), GroupLabel::Group(1)]);
    }
}
