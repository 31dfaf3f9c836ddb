//! Rank statistics: Spearman's rho, Kendall's tau-b and NDCG@k.

use std::cmp::Ordering;

use crate::data::top_count;
use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "vectors of unequal length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::Size {
            what: "rank statistic",
            required: 3,
            available: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation("rank statistics need finite entries".into()));
    }
    Ok(())
}

// -0.0 and 0.0 must compare equal under the total order used for sorting.
fn key(v: f64) -> f64 {
    v + 0.0
}

fn cmp(a: f64, b: f64) -> Ordering {
    key(a).total_cmp(&key(b))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| cmp(x[i], x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && cmp(x[order[start]], x[order[end]]) == Ordering::Equal {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let mean = (a.len() + 1) as f64 / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("a vector has zero rank variance"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn tied_pairs(run: u64) -> u64 {
    run * (run - 1) / 2
}

/// Kendall's tau-b in `O(n log n)`: sort by `(a, b)`, then count the inversions a
/// merge sort on `b` has to undo.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp(a[i], a[j]).then(cmp(b[i], b[j])));

    let n0 = tied_pairs(n as u64);
    let (mut ties_a, mut ties_ab) = (0u64, 0u64);
    let (mut run_a, mut run_ab) = (1u64, 1u64);
    for w in order.windows(2) {
        let (p, q) = (w[0], w[1]);
        if cmp(a[p], a[q]) == Ordering::Equal {
            run_a += 1;
            if cmp(b[p], b[q]) == Ordering::Equal {
                run_ab += 1;
            } else {
                ties_ab += tied_pairs(run_ab);
                run_ab = 1;
            }
        } else {
            ties_a += tied_pairs(run_a);
            ties_ab += tied_pairs(run_ab);
            run_a = 1;
            run_ab = 1;
        }
    }
    ties_a += tied_pairs(run_a);
    ties_ab += tied_pairs(run_ab);

    let mut ys: Vec<f64> = order.iter().map(|&i| key(b[i])).collect();
    let swaps = merge_sort_inversions(&mut ys);

    let mut ties_b = 0u64;
    let mut run_b = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_b += 1;
        } else {
            ties_b += tied_pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += tied_pairs(run_b);

    let concordant_minus_discordant = n0 as i64 - ties_a as i64 - ties_b as i64 + ties_ab as i64 - 2 * swaps as i64;
    tau_b(concordant_minus_discordant, n0, ties_a, ties_b)
}

/// Shared final step so fast and pairwise counts divide identically.
pub fn tau_b(concordant_minus_discordant: i64, n0: u64, ties_a: u64, ties_b: u64) -> Result<f64> {
    if ties_a == n0 || ties_b == n0 {
        return Err(Error::UndefinedCorrelation("a vector is entirely tied"));
    }
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok((concordant_minus_discordant as f64 / denom).clamp(-1.0, 1.0))
}

/// Bottom-up merge sort; returns the number of strict inversions removed.
fn merge_sort_inversions(v: &mut Vec<f64>) -> u64 {
    let n = v.len();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[i] <= v[j] {
                    buf[k] = v[i];
                    i += 1;
                } else {
                    buf[k] = v[j];
                    j += 1;
                    swaps += (mid - i) as u64;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (hi - j)].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        std::mem::swap(v, &mut buf);
        width *= 2;
    }
    swaps
}

/// NDCG over the top `ceil(fraction * N)` positions.
///
/// Assets are ranked by descending `scores` (ties by ascending index); their
/// gain is the future Sharpe min-max scaled to `[0, 1]` (all ones when every
/// future value is equal), discounted by `log2(position + 1)`.
pub fn ndcg_at(scores: &[f64], future: &[f64], fraction: f64) -> Result<f64> {
    check_pair(scores, future)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("NDCG fraction {fraction} outside (0, 1]")));
    }
    let n = scores.len();
    let k = top_count(fraction, n).max(1);
    let relevance = min_max(future);

    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&i, &j| cmp(scores[j], scores[i]).then(i.cmp(&j)));
    let mut ideal = relevance.clone();
    ideal.sort_by(|x, y| y.total_cmp(x));

    let discounted = |gains: &mut dyn Iterator<Item = f64>| -> f64 {
        gains
            .take(k)
            .enumerate()
            .map(|(p, g)| g / ((p + 2) as f64).log2())
            .sum()
    };
    let dcg = discounted(&mut by_score.iter().map(|&i| relevance[i]));
    let idcg = discounted(&mut ideal.iter().copied());
    Ok((dcg / idcg).min(1.0))
}

fn min_max(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        x.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; x.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(average_ranks(&[0.0, -0.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn spearman_examples() {
        let a = [0.3, -1.0, 2.5, 0.7, 9.0];
        assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &rev).unwrap() + 1.0).abs() < 1e-15);
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((s - 0.8).abs() < 1e-15);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kendall_examples() {
        let a = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(kendall(&a, &a).unwrap(), 1.0);
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(kendall(&a, &rev).unwrap(), -1.0);
        assert!(matches!(
            kendall(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn kendall_with_ties_matches_hand_count() {
        // C = 3 (0-3, 1-3, 2-3), D = 1 (1-2), tied in a: 0-1, tied in b: 0-2
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 1.0, 3.0];
        let expected = 2.0 / (5.0f64 * 5.0).sqrt();
        assert!((kendall(&a, &b).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn ndcg_examples() {
        let future = [0.1, 0.5, -0.2, 0.3, 0.0, 0.9, -0.4, 0.2];
        assert!((ndcg_at(&future, &future, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ndcg_at(&[3.0, 1.0, 2.0], &[0.4, 0.4, 0.4], 1.0).unwrap(), 1.0);
        let worst: Vec<f64> = future.iter().map(|v| -v).collect();
        assert!(ndcg_at(&worst, &future, 0.25).unwrap() < 0.2);
        assert!(ndcg_at(&future, &future, 0.0).is_err());
    }

    #[test]
    fn ndcg_breaks_score_ties_by_index() {
        // assets 0 and 1 tie on score; asset 0 comes first
        let future = [0.0, 1.0, 0.5];
        let v = ndcg_at(&[1.0, 1.0, 0.0], &future, 1.0 / 3.0).unwrap();
        assert_eq!(v, 0.0);
    }
}
