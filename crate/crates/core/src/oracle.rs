use crate::error::{Error, Result};
use crate::geometry::BallSet;
use crate::loss::LossFunction;
use crate::scalar::Scalar;

/// Default grid spacings for the two supported dimensions.
pub const DEFAULT_RESOLUTION_1D: f64 = 1e-4;
pub const DEFAULT_RESOLUTION_2D: f64 = 1e-2;

/// Output of the exhaustive scan: the best grid point, the worst-case loss
/// there, and the spacing that bounds how far the true optimum can be.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<S: Scalar> {
    pub theta_star: Vec<S>,
    pub alpha_star: S,
    pub grid_resolution: S,
}

fn worst_loss<S: Scalar>(losses: &[&dyn LossFunction<S>], theta: &[S]) -> S {
    losses
        .iter()
        .map(|l| l.value(theta))
        .fold(S::neg_infinity(), |m, v| m.max(v))
}

/// Brute-force minmax solver by exhaustive grid scan, for verifying the
/// iterative method on desk-scale problems. Only 1-D and 2-D sets are
/// supported on purpose: the oracle is a measuring stick, not a solver.
/// For losses with slope bounded by L on the set, the returned value is
/// within L*resolution of the true optimum. Ties take the first
/// (lexicographically smallest) grid point.
pub fn grid_oracle<S: Scalar>(
    losses: &[&dyn LossFunction<S>],
    set: &BallSet<S>,
    resolution: S,
) -> Result<OracleSolution<S>> {
    if losses.is_empty() {
        return Err(Error::InvalidParameter(
            "oracle needs at least one loss".into(),
        ));
    }
    if resolution <= S::zero() || !resolution.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be finite and positive, got {resolution}"
        )));
    }
    for l in losses {
        if l.dim() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                actual: l.dim(),
            });
        }
    }
    if set.dim() > 2 {
        return Err(Error::UnsupportedDimension(set.dim()));
    }

    let r = set.radius();
    let steps = (S::cast(2.0) * r / resolution)
        .ceil()
        .to_usize()
        .ok_or_else(|| Error::InvalidParameter("grid too fine for this radius".into()))?;
    let coord = |i: usize| (-r + S::from_count(i) * resolution).min(r);

    let mut best_theta: Option<Vec<S>> = None;
    let mut best_value = S::infinity();
    match set.dim() {
        1 => {
            for i in 0..=steps {
                let theta = [coord(i)];
                let value = worst_loss(losses, &theta);
                if value < best_value {
                    best_value = value;
                    best_theta = Some(theta.to_vec());
                }
            }
        }
        2 => {
            for i in 0..=steps {
                let x = coord(i);
                for j in 0..=steps {
                    let y = coord(j);
                    if !set.contains(&[x, y]) {
                        continue;
                    }
                    let theta = [x, y];
                    let value = worst_loss(losses, &theta);
                    if value < best_value {
                        best_value = value;
                        best_theta = Some(theta.to_vec());
                    }
                }
            }
        }
        _ => unreachable!("dimension checked above"),
    }

    Ok(OracleSolution {
        theta_star: best_theta.expect("grid has at least one point"),
        alpha_star: best_value,
        grid_resolution: resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::QuadraticLoss;

    #[test]
    fn symmetric_quadratics_equalize_at_the_origin() {
        let g1 = QuadraticLoss::new(vec![1.0_f64]);
        let g2 = QuadraticLoss::new(vec![-1.0_f64]);
        let set = BallSet::new(10.0_f64, 1).unwrap();
        let sol = grid_oracle(&[&g1, &g2], &set, 1e-4).unwrap();
        assert!(
            sol.theta_star[0].abs() < 1e-6,
            "theta {}",
            sol.theta_star[0]
        );
        assert!(
            (sol.alpha_star - 1.0).abs() < 1e-6,
            "alpha {}",
            sol.alpha_star
        );
    }

    #[test]
    fn shifted_quadratics_equalize_between_centers() {
        let g1 = QuadraticLoss::new(vec![0.0_f64]);
        let g2 = QuadraticLoss::new(vec![2.0_f64]);
        let set = BallSet::new(10.0_f64, 1).unwrap();
        let sol = grid_oracle(&[&g1, &g2], &set, 1e-4).unwrap();
        assert!((sol.theta_star[0] - 1.0).abs() < 1e-4);
        assert!((sol.alpha_star - 1.0).abs() < 1e-4);
    }

    #[test]
    fn single_loss_degenerates_to_plain_minimization() {
        let g = QuadraticLoss::new(vec![0.0_f64]);
        let set = BallSet::new(10.0_f64, 1).unwrap();
        let sol = grid_oracle(&[&g], &set, 1e-4).unwrap();
        assert!(sol.theta_star[0].abs() < 1e-6);
        assert!(sol.alpha_star.abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_scan_finds_an_interior_center() {
        let g = QuadraticLoss::new(vec![0.3_f64, -0.4]);
        let set = BallSet::new(1.0_f64, 2).unwrap();
        let sol = grid_oracle(&[&g], &set, 1e-2).unwrap();
        assert!((sol.theta_star[0] - 0.3).abs() < 1.5e-2);
        assert!((sol.theta_star[1] + 0.4).abs() < 1.5e-2);
        assert!(sol.alpha_star < 2e-4);
    }

    #[test]
    fn feasibility_is_respected_when_the_minimum_is_outside() {
        // Center far outside the ball: the best feasible point is the
        // boundary point closest to it.
        let g = QuadraticLoss::new(vec![5.0_f64, 0.0]);
        let set = BallSet::new(1.0_f64, 2).unwrap();
        let sol = grid_oracle(&[&g], &set, 1e-2).unwrap();
        assert!((sol.theta_star[0] - 1.0).abs() < 2e-2);
        assert!(sol.theta_star[1].abs() < 2e-2);
    }

    #[test]
    fn high_dimensions_are_rejected() {
        let g = QuadraticLoss::new(vec![0.0_f64; 3]);
        let set = BallSet::new(1.0_f64, 3).unwrap();
        assert!(matches!(
            grid_oracle(&[&g as &dyn LossFunction<f64>], &set, 1e-2),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn bad_resolution_is_rejected() {
        let g = QuadraticLoss::new(vec![0.0_f64]);
        let set = BallSet::new(1.0_f64, 1).unwrap();
        assert!(grid_oracle(&[&g as &dyn LossFunction<f64>], &set, 0.0).is_err());
        assert!(grid_oracle(&[&g as &dyn LossFunction<f64>], &set, -0.1).is_err());
    }
}
