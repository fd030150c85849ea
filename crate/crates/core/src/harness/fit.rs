use serde::Serialize;

use crate::error::{Error, Result};

/// Ordinary least squares line through `(log10 x, log10 y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub points: usize,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::Fit(format!(
            "coordinates must be positive and finite, got ({x}, {y})"
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all x coordinates are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual_rms: (sse / k).sqrt(),
        points: logs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inverse_law() {
        let pts: Vec<_> = [1.0, 10.0, 100.0, 1000.0].iter().map(|&x| (x, 4.0 / x)).collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.intercept - 4f64.log10()).abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
        assert_eq!(f.points, 4);
    }

    #[test]
    fn constant_has_zero_slope() {
        let pts: Vec<_> = [2.0, 3.0, 50.0].iter().map(|&x| (x, 7.0)).collect();
        assert_eq!(fit_loglog_slope(&pts).unwrap().slope, 0.0);
    }

    #[test]
    fn inverse_square_root() {
        let pts: Vec<_> = [16.0, 256.0, 4096.0, 65536.0]
            .iter()
            .map(|&x: &f64| (x, x.powf(-0.5)))
            .collect();
        assert!((fit_loglog_slope(&pts).unwrap().slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_loglog_slope(&[(1.0, 1.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, -1.0), (2.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(3.0, 1.0), (3.0, 2.0)]).is_err());
    }

    proptest! {
        #[test]
        fn exact_on_power_laws(a in -3.0f64..3.0, c in 0.01f64..100.0, n in 2usize..12) {
            let pts: Vec<_> = (0..n).map(|i| {
                let x = 10f64.powi(i as i32);
                (x, c * x.powf(a))
            }).collect();
            let f = fit_loglog_slope(&pts).unwrap();
            prop_assert!((f.slope - a).abs() < 1e-12);
            prop_assert!((f.intercept - c.log10()).abs() < 1e-11);
        }
    }
}
