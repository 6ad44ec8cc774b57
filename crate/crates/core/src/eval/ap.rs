use crate::error::{FsnError, Result};

/// Stable ranking by confidence, highest first; ties keep input order.
pub fn rank(ranked: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut sorted = ranked.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    sorted
}

/// Non-interpolated average precision: the mean, over the `num_positives`
/// ground-truth items, of precision at the rank where each was retrieved.
/// Unretrieved positives contribute zero.
pub fn average_precision(ranked: &[(f64, bool)], num_positives: usize) -> Result<f64> {
    let tps = ranked.iter().filter(|r| r.1).count();
    if tps > num_positives {
        return Err(FsnError::invalid(format!(
            "{tps} true positives but only {num_positives} positives"
        )));
    }
    if num_positives == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, (_, tp)) in rank(ranked).iter().enumerate() {
        if *tp {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / num_positives as f64)
}

/// Precision and recall after each rank.
pub fn precision_recall(ranked: &[(f64, bool)], num_positives: usize) -> Vec<(f64, f64)> {
    let mut hits = 0usize;
    rank(ranked)
        .iter()
        .enumerate()
        .map(|(i, (_, tp))| {
            hits += *tp as usize;
            let recall = if num_positives == 0 {
                0.0
            } else {
                hits as f64 / num_positives as f64
            };
            (hits as f64 / (i + 1) as f64, recall)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Area under the step precision-recall curve: sum of precision times
    /// the recall gained at each rank.
    fn pr_summation(ranked: &[(f64, bool)], npos: usize) -> f64 {
        let mut prev_recall = 0.0;
        let mut area = 0.0;
        for (p, r) in precision_recall(ranked, npos) {
            area += p * (r - prev_recall);
            prev_recall = r;
        }
        area
    }

    #[test]
    fn perfect_ranking() {
        let r = [(0.9, true), (0.8, true), (0.1, false)];
        assert_eq!(average_precision(&r, 2).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_second() {
        assert_eq!(average_precision(&[(0.9, false), (0.5, true)], 1).unwrap(), 0.5);
    }

    #[test]
    fn ties_keep_input_order() {
        assert_eq!(average_precision(&[(0.5, false), (0.5, true)], 1).unwrap(), 0.5);
        assert_eq!(average_precision(&[(0.5, true), (0.5, false)], 1).unwrap(), 1.0);
    }

    #[test]
    fn no_positives_and_overcount() {
        assert_eq!(average_precision(&[(0.3, false)], 0).unwrap(), 0.0);
        assert!(average_precision(&[(0.3, true), (0.2, true)], 1).is_err());
    }

    #[test]
    fn missed_positives_lower_ap() {
        // Two positives, one retrieved at rank 1.
        assert_eq!(average_precision(&[(0.9, true)], 2).unwrap(), 0.5);
    }

    fn ranked_strategy() -> impl Strategy<Value = (Vec<(f64, bool)>, usize)> {
        proptest::collection::vec((0u8..20, any::<bool>()), 0..40).prop_flat_map(|items| {
            let tps = items.iter().filter(|i| i.1).count();
            let ranked: Vec<(f64, bool)> = items.iter().map(|(c, t)| (*c as f64 / 20.0, *t)).collect();
            (Just(ranked), tps..tps + 5)
        })
    }

    proptest! {
        #[test]
        fn matches_pr_summation((ranked, npos) in ranked_strategy()) {
            let ap = average_precision(&ranked, npos).unwrap();
            prop_assert!((ap - pr_summation(&ranked, npos)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ap));
        }

        #[test]
        fn invariant_under_monotone_transform((ranked, npos) in ranked_strategy()) {
            let moved: Vec<(f64, bool)> = ranked.iter().map(|(c, t)| ((3.0 * c).exp() - 7.0, *t)).collect();
            prop_assert_eq!(average_precision(&ranked, npos).unwrap(), average_precision(&moved, npos).unwrap());
        }

        #[test]
        fn dropping_a_false_positive_never_hurts((ranked, npos) in ranked_strategy(), pick in any::<proptest::sample::Index>()) {
            let fps: Vec<usize> = (0..ranked.len()).filter(|&i| !ranked[i].1).collect();
            prop_assume!(!fps.is_empty());
            let mut fewer = ranked.clone();
            fewer.remove(fps[pick.index(fps.len())]);
            prop_assert!(average_precision(&fewer, npos).unwrap() >= average_precision(&ranked, npos).unwrap());
        }
    }
}
