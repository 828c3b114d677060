//! Small statistical helpers shared by the harnesses: chi-square
//! goodness-of-fit, two-sample category comparison, z statistics, and
//! log-log slope fits.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper tail probability of a chi-squared statistic.
pub fn chi_square_p_value(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// Goodness-of-fit p-value of observed counts against expected probabilities.
/// Cells with expected count below 5 are pooled into a single cell.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    chi_square_p_value(stat, cells.saturating_sub(1))
}

/// Two-sample chi-square test that two lists of category counts come from
/// the same distribution. Categories with a pooled expected count below 5 in
/// either sample are merged.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let total_a: u64 = a.iter().sum();
    let total_b: u64 = b.iter().sum();
    if total_a == 0 || total_b == 0 {
        return 1.0;
    }
    let grand = (total_a + total_b) as f64;
    // Merge sparse categories first.
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for (&oa, &ob) in a.iter().zip(b) {
        let share = (oa + ob) as f64 / grand;
        let ea = share * total_a as f64;
        let eb = share * total_b as f64;
        if ea < 5.0 || eb < 5.0 {
            pool.0 += oa as f64;
            pool.1 += ob as f64;
        } else {
            merged.push((oa as f64, ob as f64));
        }
    }
    if pool.0 + pool.1 > 0.0 {
        merged.push(pool);
    }
    if merged.len() < 2 {
        return 1.0;
    }
    let mut stat = 0.0;
    for &(oa, ob) in &merged {
        let share = (oa + ob) / grand;
        let ea = share * total_a as f64;
        let eb = share * total_b as f64;
        if ea > 0.0 {
            stat += (oa - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            stat += (ob - eb).powi(2) / eb;
        }
    }
    chi_square_p_value(stat, merged.len() - 1)
}

/// z statistic of the difference `a - b` given standard errors of each.
pub fn z_statistic(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let spread = (se_a * se_a + se_b * se_b).sqrt();
    if spread == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / spread
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}
