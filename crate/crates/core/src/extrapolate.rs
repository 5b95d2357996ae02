//! Limit extrapolation and convergence-order fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares fit of `y ≈ Σ cₖ x^{eₖ}`; returns `c` in the order of
/// `exponents`. With as many points as terms the fit interpolates.
pub fn fit_basis(xs: &[f64], ys: &[f64], exponents: &[i32]) -> Result<Vec<f64>> {
    if xs.len() != ys.len() || xs.len() < exponents.len() || exponents.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "fit needs at least {} points, got {} abscissae and {} values",
            exponents.len(),
            xs.len(),
            ys.len()
        )));
    }
    let a = DMatrix::from_fn(xs.len(), exponents.len(), |i, j| xs[i].powi(exponents[j]));
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let c = svd.solve(&b, 1e-14).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(c.iter().copied().collect())
}

/// `h → 0` limit of values with an expansion in even powers of `h`, using
/// as many terms as points.
pub fn richardson_even(hs: &[f64], values: &[f64]) -> Result<f64> {
    let exps: Vec<i32> = (0..hs.len() as i32).map(|k| 2 * k).collect();
    Ok(fit_basis(hs, values, &exps)?[0])
}

/// `h → 0` limit assuming an expansion in integer powers `h^p, h^{p+1}, …`
/// after the constant.
pub fn richardson(hs: &[f64], values: &[f64], leading_power: i32) -> Result<f64> {
    let mut exps = vec![0];
    exps.extend((0..hs.len() as i32 - 1).map(|k| leading_power + k));
    Ok(fit_basis(hs, values, &exps)?[0])
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Pairwise observed orders `log(eᵢ/eᵢ₊₁)/log(hᵢ/hᵢ₊₁)`.
pub fn pairwise_orders(hs: &[f64], errors: &[f64]) -> Vec<f64> {
    hs.windows(2).zip(errors.windows(2)).map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect()
}

/// Whether a sequence of errors decreases monotonically.
pub fn is_monotone_decreasing(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_recovers_polynomial_limit() {
        let f = |h: f64| 2.0 + 3.0 * h * h - 5.0 * h.powi(4);
        let hs = [0.4, 0.2, 0.1];
        let ys: Vec<f64> = hs.iter().map(|&h| f(h)).collect();
        assert!((richardson_even(&hs, &ys).unwrap() - 2.0).abs() < 1e-12);
        let g = |h: f64| 1.0 + h + h * h;
        let ys: Vec<f64> = hs.iter().map(|&h| g(h)).collect();
        assert!((richardson(&hs, &ys, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laurent_finite_part() {
        let f = |s: f64| 0.7 / (s * s) + 0.25 - 0.1 * s * s;
        let ss = [0.2, 0.15, 0.1];
        let ys: Vec<f64> = ss.iter().map(|&s| f(s)).collect();
        let c = fit_basis(&ss, &ys, &[-2, 0, 2]).unwrap();
        assert!((c[1] - 0.25).abs() < 1e-10);
        assert!((c[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 0.5, 0.25, 0.125];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.7)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.7).abs() < 1e-12);
        assert!(pairwise_orders(&xs, &ys).iter().all(|o| (o - 1.7).abs() < 1e-12));
    }
}
