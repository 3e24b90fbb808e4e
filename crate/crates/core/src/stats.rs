use crate::{Error, Result};

/// Running mean; identical samples give that sample back exactly.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut m = 0.0;
    for (k, x) in xs.iter().enumerate() {
        m += (x - m) / (k + 1) as f64;
    }
    m
}

/// Standard error of the mean; zero for a single sample.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Degenerate(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale_x = xs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let scale_y = ys.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(f64::MIN_POSITIVE);
    if sxx <= 1e-24 * scale_x * scale_x * xs.len() as f64 || sxx == 0.0 {
        return Err(Error::Degenerate("zero variance in first input".into()));
    }
    if syy <= 1e-24 * scale_y * scale_y * ys.len() as f64 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in second input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(std_error(&[3.0; 5]), 0.0);
        assert_eq!(std_error(&[1.0]), 0.0);
    }

    #[test]
    fn pearson_affine() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[1.0; 4]).is_err());
    }
}
