//! Mean opinion score with a 95% confidence interval under the normal
//! approximation: `mean +/- 1.96 s / sqrt(n)` with sample standard
//! deviation `s`. A single rating has a zero-width interval.

use super::EvalError;

pub fn mos_ci(ratings: &[f64]) -> Result<(f64, f64), EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::EmptyRatings);
    }
    for &r in ratings {
        if !(1.0..=5.0).contains(&r) {
            return Err(EvalError::RatingOutOfRange(r));
        }
    }
    let n = ratings.len() as f64;
    let mean = ratings.iter().sum::<f64>() / n;
    if ratings.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = ratings.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half_width = 1.96 * var.sqrt() / n.sqrt();
    Ok((mean, half_width))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ratings_have_zero_width() {
        let (mean, hw) = mos_ci(&[4.0; 12]).unwrap();
        assert_eq!(mean, 4.0);
        assert_eq!(hw, 0.0);
    }

    #[test]
    fn three_four_five_hand_computed() {
        // s = 1, n = 3: 4.00 +/- 1.96/sqrt(3)
        let (mean, hw) = mos_ci(&[3.0, 4.0, 5.0]).unwrap();
        assert!((mean - 4.0).abs() < 1e-12);
        assert!((hw - 1.96 / 3f64.sqrt()).abs() < 1e-12);
        assert!((hw - 1.13).abs() < 0.005);
    }

    #[test]
    fn single_rating_zero_width() {
        let (mean, hw) = mos_ci(&[2.0]).unwrap();
        assert_eq!((mean, hw), (2.0, 0.0));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(mos_ci(&[]), Err(EvalError::EmptyRatings)));
        assert!(matches!(mos_ci(&[0.5]), Err(EvalError::RatingOutOfRange(_))));
        assert!(matches!(mos_ci(&[5.5, 4.0]), Err(EvalError::RatingOutOfRange(_))));
    }
}
