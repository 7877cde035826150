use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point scalar the whole library is generic over.
///
/// Everything numeric (model state, losses, channel gains, data) is written
/// against this trait so the same code runs in f32 or f64. The two sampling
/// hooks exist because `rand` distributions are implemented per concrete
/// type; routing them through the trait keeps generic code free of
/// `where StandardNormal: Distribution<S>` clauses.
pub trait Scalar:
    Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Converts an f64 constant (config values, literals) into Self.
    /// Panics only if the conversion is impossible, which cannot happen
    /// for the shipped f32/f64 implementations.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable in scalar type")
    }

    /// Converts a count into Self. Exact for every count this library
    /// can realistically see (dataset sizes, agent counts, iterations).
    fn from_count(n: usize) -> Self {
        Self::cast(n as f64)
    }

    /// One draw from the half-open unit interval [0, 1).
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from the standard normal distribution.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f32 {
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
