use super::FeatureError;

/// Least-squares line through `points`.
///
/// Returns the slope and the sum of absolute residuals. Two points always fit
/// exactly, so their error is pinned to zero rather than left to rounding.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64), FeatureError> {
    if points.len() < 2 {
        return Err(FeatureError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(FeatureError::VerticalFit);
    }
    let slope = sxy / sxx;
    if points.len() == 2 {
        return Ok((slope, 0.0));
    }
    let intercept = mean_y - slope * mean_x;
    let error = points
        .iter()
        .map(|&(x, y)| (y - (intercept + slope * x)).abs())
        .sum();
    Ok((slope, error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lines_have_zero_error() {
        let (slope, error) = linear_fit(&[(0.0, 0.0), (5.0, 5.0)]).unwrap();
        assert_eq!((slope, error), (1.0, 0.0));
        let (slope, error) = linear_fit(&[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!(error < 1e-12);
    }

    #[test]
    fn vee_has_flat_fit_and_four_thirds_error() {
        // Fitted line is y = 1/3; residuals are -1/3, 2/3, -1/3.
        let (slope, error) = linear_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert!(slope.abs() < 1e-12);
        assert!((error - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_points_rejected() {
        assert_eq!(
            linear_fit(&[(1.0, 0.0), (1.0, 3.0)]),
            Err(FeatureError::VerticalFit)
        );
        assert_eq!(
            linear_fit(&[(1.0, 0.0)]),
            Err(FeatureError::TooFewPoints(1))
        );
    }
}
