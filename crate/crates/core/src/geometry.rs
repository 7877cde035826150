use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed Euclidean ball { x : ||x|| <= radius } in `dim` dimensions,
/// the feasible set the server projects the model onto.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSet<S: Scalar> {
    radius: S,
    dim: usize,
}

impl<S: Scalar> BallSet<S> {
    pub fn new(radius: S, dim: usize) -> Result<Self> {
        if radius <= S::zero() || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be finite and positive, got {radius}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "ball dimension must be at least 1".into(),
            ));
        }
        Ok(BallSet { radius, dim })
    }

    pub fn radius(&self) -> S {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.len() == self.dim && norm(x) <= self.radius
    }

    /// Nearest point of the ball: identity inside, radial rescale outside.
    ///
    /// A single rescale can land one ulp outside the ball, so the rescale
    /// repeats until the computed norm agrees the point is inside or the
    /// point stops moving. Both exits make projecting twice bitwise equal
    /// to projecting once, and the loop terminates because the norm
    /// strictly decreases until a fixed point. Interior points come back
    /// unchanged; non-finite input exits after at most one rescale instead
    /// of looping forever.
    pub fn project(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let mut p = x.to_vec();
        loop {
            let n = norm(&p);
            if n <= self.radius || n.is_nan() {
                return Ok(p);
            }
            let factor = self.radius / n;
            let next: Vec<S> = p.iter().map(|&v| v * factor).collect();
            if next == p {
                return Ok(p);
            }
            p = next;
        }
    }
}

/// Euclidean norm, plain left-to-right accumulation.
pub fn norm<S: Scalar>(x: &[S]) -> S {
    let mut acc = S::zero();
    for &v in x {
        acc = acc + v * v;
    }
    acc.sqrt()
}

/// Inner product of two equal-length slices. Panics on length mismatch,
/// which is a programming error rather than a runtime condition.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "dot of mismatched lengths");
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// Euclidean distance between two points of the same dimension.
pub fn distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "distance of mismatched lengths");
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc = acc + d * d;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_point_unchanged() {
        let set = BallSet::new(2.0_f64, 3).unwrap();
        let x = vec![0.5, -0.5, 1.0];
        assert_eq!(set.project(&x).unwrap(), x);
    }

    #[test]
    fn exterior_point_lands_on_boundary() {
        let set = BallSet::new(1.0_f64, 2).unwrap();
        let p = set.project(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15);
        assert!((p[1] - 0.8).abs() < 1e-15);
        assert!((norm(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let set = BallSet::new(1.0_f64, 2).unwrap();
        assert!(matches!(
            set.project(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }

    #[test]
    fn bad_radius_is_rejected() {
        assert!(BallSet::new(0.0_f64, 2).is_err());
        assert!(BallSet::new(-1.0_f64, 2).is_err());
        assert!(BallSet::new(f64::NAN, 2).is_err());
        assert!(BallSet::new(f64::INFINITY, 2).is_err());
    }
}
