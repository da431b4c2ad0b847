//! Baseline aggregators: mean, coordinate-wise median, Zeno and centered
//! clipping.

use super::{check_gamma, check_inputs};
use crate::error::{Error, Result};
use crate::linalg::{self, ParamVector};
use crate::trial::TrialSet;

pub fn baseline_mean(grads: &[ParamVector]) -> Result<ParamVector> {
    linalg::mean(grads)
}

/// Per-coordinate median; an even count takes the midpoint of the middle two.
pub fn baseline_coordinate_median(grads: &[ParamVector]) -> Result<ParamVector> {
    let first = grads.first().ok_or(Error::EmptyInput("gradients"))?;
    let d = first.len();
    linalg::check_all_dims(d, grads)?;
    let n = grads.len();
    let mut col = vec![0.0; n];
    Ok((0..d)
        .map(|j| {
            for (c, g) in col.iter_mut().zip(grads) {
                *c = g[j];
            }
            col.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect())
}

/// Zeno score `f_hat(x) - f_hat(x - gamma g) - rho ||g||^2` for each gradient.
pub fn zeno_scores(ts: &TrialSet, x: &[f64], grads: &[ParamVector], gamma: f64, rho: f64) -> Result<Vec<f64>> {
    let base = ts.loss(x)?;
    grads
        .iter()
        .map(|g| {
            let y: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gamma * gi).collect();
            Ok(base - ts.loss(&y)? - rho * linalg::norm_sq(g))
        })
        .collect()
}

/// Indices kept by Zeno: all but the `trim` lowest-scoring gradients, in
/// worker order. Ties are ranked by worker order.
pub fn zeno_select(
    ts: &TrialSet,
    x: &[f64],
    grads: &[ParamVector],
    gamma: f64,
    rho: f64,
    trim: usize,
) -> Result<Vec<usize>> {
    check_gamma(gamma)?;
    check_inputs(x, grads, None)?;
    if trim >= grads.len() {
        return Err(Error::invalid(
            "trim",
            format!("b = {trim} must be below the number of gradients ({})", grads.len()),
        ));
    }
    let scores = zeno_scores(ts, x, grads, gamma, rho)?;
    let mut order: Vec<usize> = (0..grads.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]).then(a.cmp(b)));
    let mut keep = order[trim..].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Drops the `trim` lowest-scoring gradients and averages the rest.
pub fn zeno_aggregate(
    ts: &TrialSet,
    x: &[f64],
    grads: &[ParamVector],
    gamma: f64,
    rho: f64,
    trim: usize,
) -> Result<ParamVector> {
    let keep = zeno_select(ts, x, grads, gamma, rho, trim)?;
    let kept: Vec<ParamVector> = keep.into_iter().map(|i| grads[i].clone()).collect();
    linalg::mean(&kept)
}

/// `l` iterations of `v <- v + (1/n) sum_i (g_i - v) min(1, tau / ||g_i - v||)`.
pub fn centered_clip(grads: &[ParamVector], center: &[f64], tau: f64, iters: usize) -> Result<ParamVector> {
    if !(tau > 0.0) {
        return Err(Error::invalid("clip_radius", "must be positive"));
    }
    if iters == 0 {
        return Err(Error::invalid("clip_iters", "must be at least 1"));
    }
    check_inputs(center, grads, None)?;
    let n = grads.len() as f64;
    let mut v = center.to_vec();
    for _ in 0..iters {
        let mut delta = vec![0.0; v.len()];
        for g in grads {
            let diff = linalg::sub(g, &v);
            let dn = linalg::norm(&diff);
            let c = if dn > tau { tau / dn } else { 1.0 };
            linalg::axpy(c / n, &diff, &mut delta);
        }
        linalg::axpy(1.0, &delta, &mut v);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Problem, ProblemFamily};

    #[test]
    fn mean_of_opposites_is_zero() {
        let g = vec![1.5, -2.0];
        assert_eq!(baseline_mean(&[g.clone(), linalg::scale(-1.0, &g)]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn median_cases() {
        let grads = vec![vec![1.0, 9.0], vec![2.0, 1.0], vec![9.0, 2.0]];
        assert_eq!(baseline_coordinate_median(&grads).unwrap(), vec![2.0, 2.0]);
        let even = vec![vec![1.0], vec![4.0], vec![2.0], vec![10.0]];
        assert_eq!(baseline_coordinate_median(&even).unwrap(), vec![3.0]);
        let same = vec![vec![0.3, -0.7]; 4];
        assert_eq!(baseline_coordinate_median(&same).unwrap(), vec![0.3, -0.7]);
        assert!(baseline_coordinate_median(&[]).is_err());
    }

    fn trial() -> TrialSet {
        let fam = ProblemFamily::quadratic(3, 4.0, 1.0, 0.0);
        let p = Problem::build(&fam, 2, 1).unwrap();
        TrialSet::draw(p.server_shard(), 5, 0).unwrap()
    }

    #[test]
    fn zeno_drops_flipped() {
        let ts = trial();
        let x = [2.0, -1.0, 0.5];
        let g = ts.gradient(&x).unwrap();
        let h = linalg::scale(0.9, &g);
        let f = linalg::scale(-1.0, &g);
        let grads = vec![g.clone(), f.clone(), h.clone(), f.clone(), f];
        let out = zeno_aggregate(&ts, &x, &grads, 0.1, 0.0, 3).unwrap();
        assert_eq!(out, linalg::mean(&[g, h]).unwrap());
    }

    #[test]
    fn zeno_trim_bounds() {
        let ts = trial();
        let x = [0.0; 3];
        let grads = vec![vec![1.0; 3], vec![2.0; 3]];
        assert!(zeno_aggregate(&ts, &x, &grads, 0.1, 0.0, 2).is_err());
        let same = vec![vec![0.1, 0.2, 0.3]; 4];
        assert_eq!(zeno_aggregate(&ts, &x, &same, 0.1, 0.0, 0).unwrap(), linalg::mean(&same).unwrap());
    }

    #[test]
    fn clip_inside_radius_is_mean() {
        let grads = vec![vec![0.1, 0.0], vec![0.0, 0.2], vec![-0.1, 0.1]];
        let v = centered_clip(&grads, &[0.0, 0.0], 1.0, 1).unwrap();
        let m = baseline_mean(&grads).unwrap();
        for (a, b) in v.iter().zip(&m) {
            assert!((a - b).abs() < 1e-15);
        }
        let huge = centered_clip(&grads, &[0.0, 0.0], f64::MAX, 1).unwrap();
        assert_eq!(huge, v);
    }

    #[test]
    fn clip_caps_outlier() {
        let tau = 0.5;
        let grads = vec![vec![0.0, 0.0], vec![10.0 * tau, 0.0]];
        let v = centered_clip(&grads, &[0.0, 0.0], tau, 1).unwrap();
        assert!((linalg::norm(&v) - tau / 2.0).abs() < 1e-15);
    }
}
