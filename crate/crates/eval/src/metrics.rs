//! Scalar summaries over per-trial altitude errors.

use crate::error::{EvalError, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(EvalError::InvalidArgument(format!(
            "need equal non-empty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `sqrt(mean((est - truth)^2))`.
pub fn altitude_rmse(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    check_pair(estimates, truths)?;
    let ss: f64 = estimates.iter().zip(truths).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok((ss / estimates.len() as f64).sqrt())
}

/// Root mean square of signed errors.
pub fn rms(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(EvalError::InvalidArgument("no errors to summarize".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Fraction of trials with `|error| < threshold`; `None` marks a miss.
pub fn detection_probability(errors: &[Option<f64>], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(EvalError::InvalidArgument("no trials".into()));
    }
    let hits = errors.iter().filter(|e| e.is_some_and(|e| e.abs() < threshold)).count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Median of the finite values, `NaN` if there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `NaN` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        let t = [100.0, 200.0];
        assert_eq!(altitude_rmse(&t, &t).unwrap(), 0.0);
        let e = [103.0, 204.0];
        assert!((altitude_rmse(&e, &t).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((altitude_rmse(&e, &t).unwrap() - 3.536).abs() < 1e-3);
        assert!(altitude_rmse(&e, &t[..1]).is_err());
        assert!(altitude_rmse(&[], &[]).is_err());
    }

    #[test]
    fn detection_examples() {
        let e = [Some(1.0), Some(6.0), Some(-3.0)];
        assert!((detection_probability(&e, 5.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(detection_probability(&[None, None], 5.0).unwrap(), 0.0);
        assert!(detection_probability(&[], 5.0).is_err());
    }

    #[test]
    fn median_and_spearman() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, f64::NAN, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // tie handling: average ranks
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    proptest! {
        #[test]
        fn rmse_matches_two_pass(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)) {
            let (e, t): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let diffs: Vec<f64> = e.iter().zip(&t).map(|(a, b)| a - b).collect();
            let mut mean_sq = 0.0;
            for d in &diffs {
                mean_sq += d * d / diffs.len() as f64;
            }
            let got = altitude_rmse(&e, &t).unwrap();
            prop_assert!((got - mean_sq.sqrt()).abs() <= 1e-12 * (1.0 + got));
        }

        #[test]
        fn detection_monotone_in_threshold(
            v in proptest::collection::vec(proptest::option::of(-50f64..50.0), 1..40),
            a in 0f64..30.0,
            b in 0f64..30.0,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let pl = detection_probability(&v, lo).unwrap();
            let ph = detection_probability(&v, hi).unwrap();
            prop_assert!(pl <= ph);
            prop_assert!((0.0..=1.0).contains(&ph));
        }
    }
}
