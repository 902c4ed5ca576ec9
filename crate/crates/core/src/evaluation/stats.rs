//! One-way chi-square and t-tests over integer scores.
//!
//! Sums are taken in integers so results do not depend on record order.

use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, t_sf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Goodness of fit of two bin counts against an even split (df = 1).
pub fn chi_square_gof(observed: [u64; 2]) -> Result<TestResult> {
    let total = observed[0] + observed[1];
    if total == 0 {
        return Err(Error::invalid(
            "chi-square test needs at least one observation",
        ));
    }
    // Σ(O − E)²/E with E = n/2 reduces to (O₁ − O₂)²/n.
    let diff = observed[0].abs_diff(observed[1]) as f64;
    let statistic = diff * diff / total as f64;
    Ok(TestResult {
        statistic,
        df: 1.0,
        p_value: chi_square_sf(statistic, 1.0)?,
    })
}

fn two_sided(statistic: f64, df: f64) -> Result<f64> {
    Ok((2.0 * t_sf(statistic.abs(), df)?).min(1.0))
}

/// Paired t-test on `a[i] − b[i]`, two-sided.
pub fn paired_t_test(a: &[u8], b: &[u8]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least two pairs"));
    }
    let (mut s, mut ss) = (0i64, 0i64);
    for (&x, &y) in a.iter().zip(b) {
        let d = x as i64 - y as i64;
        s += d;
        ss += d * d;
    }
    let nf = n as f64;
    let df = nf - 1.0;
    // n·Σd² − (Σd)² is exact in integers.
    let spread = (n as i64 * ss - s * s) as f64;
    if spread == 0.0 {
        return zero_variance(s != 0, df);
    }
    let variance = spread / (nf * df);
    let statistic = (s as f64 / nf) / (variance / nf).sqrt();
    Ok(TestResult {
        statistic,
        df,
        p_value: two_sided(statistic, df)?,
    })
}

fn zero_variance(means_differ: bool, df: f64) -> Result<TestResult> {
    if means_differ {
        Err(Error::DegenerateSignal(
            "differences have zero variance and a nonzero mean".into(),
        ))
    } else {
        Ok(TestResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
        })
    }
}

/// Unpaired Welch t-test of `mean(a) − mean(b)`, two-sided.
pub fn welch_t_test(a: &[u8], b: &[u8]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(
            "Welch t-test needs at least two values per sample",
        ));
    }
    let moments = |v: &[u8]| {
        let n = v.len() as i64;
        let s: i64 = v.iter().map(|&x| x as i64).sum();
        let ss: i64 = v.iter().map(|&x| (x as i64).pow(2)).sum();
        let nf = n as f64;
        (
            nf,
            s,
            s as f64 / nf,
            (n * ss - s * s) as f64 / (nf * (nf - 1.0)),
        )
    };
    let (na, sa, ma, va) = moments(a);
    let (nb, sb, mb, vb) = moments(b);
    if va == 0.0 && vb == 0.0 {
        // Compare means exactly: sa/na vs sb/nb.
        let differ = sa as i128 * nb as i128 != sb as i128 * na as i128;
        return zero_variance(differ, na + nb - 2.0);
    }
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    let statistic = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Ok(TestResult {
        statistic,
        df,
        p_value: two_sided(statistic, df)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_is_null() {
        let r = chi_square_gof([50, 50]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn improved_count_statistic() {
        let r = chi_square_gof([84, 16]).unwrap();
        let by_hand = (84.0f64 - 50.0).powi(2) / 50.0 + (16.0f64 - 50.0).powi(2) / 50.0;
        assert!((r.statistic - by_hand).abs() < 1e-12);
        assert!((r.statistic - 46.24).abs() < 1e-9);
        assert!(r.p_value < 0.001);
        assert_eq!(chi_square_gof([16, 84]).unwrap(), r);
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(matches!(
            chi_square_gof([0, 0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn paired_edge_cases() {
        let same = [3, 4, 5, 6];
        let r = paired_t_test(&same, &same).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(matches!(
            paired_t_test(&[2, 3, 4, 5], &[1, 2, 3, 4]),
            Err(Error::DegenerateSignal(_))
        ));
        assert!(paired_t_test(&[1], &[2]).is_err());
        assert!(paired_t_test(&[1, 2], &[2]).is_err());
    }

    #[test]
    fn paired_small_example() {
        // d = [1, 2, 3]: mean 2, sd 1, t = 2·√3.
        let r = paired_t_test(&[2, 4, 6], &[1, 2, 3]).unwrap();
        assert!((r.statistic - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2.0);
        let flipped = paired_t_test(&[1, 2, 3], &[2, 4, 6]).unwrap();
        assert_eq!(flipped.statistic, -r.statistic);
        assert_eq!(flipped.p_value, r.p_value);
    }

    #[test]
    fn welch_edge_cases() {
        let r = welch_t_test(&[4, 4, 4], &[4, 4]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(welch_t_test(&[4, 4, 4], &[3, 3]).is_err());
        // Equal variances and sizes: df = 2n − 2.
        let r = welch_t_test(&[1, 2, 3], &[2, 3, 4]).unwrap();
        assert!((r.df - 4.0).abs() < 1e-12);
        assert!((r.statistic + 1.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
