use rand::Rng;

use crate::engine::LocalUpdate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeds::{derive_rng, StreamPurpose};

/// Distribution of the positive channel gains, i.i.d. across agents and
/// iterations. Uniform with a positive floor is the default; the truncated
/// Rayleigh variant models magnitude fading while keeping every draw
/// bounded away from zero.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec<S: Scalar> {
    Uniform { lo: S, hi: S },
    TruncatedRayleigh { scale: S, floor: S },
}

impl<S: Scalar> ChannelSpec<S> {
    /// Parameter sanity. `lo == hi` is allowed: the degenerate point mass
    /// is the natural way to express a unit (identity) channel in tests
    /// and reductions.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelSpec::Uniform { lo, hi } => {
                if lo <= S::zero() || !lo.is_finite() || !hi.is_finite() || hi < lo {
                    return Err(Error::InvalidParameter(format!(
                        "uniform channel needs 0 < lo <= hi, got lo={lo}, hi={hi}"
                    )));
                }
            }
            ChannelSpec::TruncatedRayleigh { scale, floor } => {
                if scale <= S::zero() || !scale.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "rayleigh channel scale must be finite and positive, got {scale}"
                    )));
                }
                if floor <= S::zero() || !floor.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "rayleigh channel floor must be finite and positive, got {floor}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One gain draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        match *self {
            ChannelSpec::Uniform { lo, hi } => lo + (hi - lo) * S::sample_unit(rng),
            ChannelSpec::TruncatedRayleigh { scale, floor } => {
                // Inverse CDF of a Rayleigh magnitude conditioned on
                // exceeding `floor`: x = sqrt(floor^2 - 2 scale^2 ln u)
                // with u uniform on (0, 1]. sample_unit covers [0, 1), so
                // flip it; u = 1 maps exactly to the floor.
                let u = S::one() - S::sample_unit(rng);
                (floor * floor - S::cast(2.0) * scale * scale * u.ln()).sqrt()
            }
        }
    }

    /// Gains for all agents at iteration k. Deterministic in
    /// (master_seed, k): replaying an iteration reproduces the realization
    /// bit for bit, and the stream is disjoint from every other consumer
    /// of the master seed.
    pub fn draw(&self, num_agents: usize, k: usize, master_seed: u64) -> ChannelRealization<S> {
        assert!(num_agents >= 1, "channel draw needs at least one agent");
        let mut rng = derive_rng(master_seed, StreamPurpose::Channel, 0, k);
        let gains = (0..num_agents).map(|_| self.sample(&mut rng)).collect();
        ChannelRealization {
            gains,
            iteration: k,
        }
    }

    /// Expected normalized gain of any single agent. Both supported laws
    /// are i.i.d. across agents, so the agents are exchangeable and the
    /// expectation is exactly 1/N without any estimation.
    pub fn expected_normalized_gain(&self, num_agents: usize) -> S {
        assert!(num_agents >= 1, "need at least one agent");
        S::one() / S::from_count(num_agents)
    }

    /// Monte-Carlo cross-check of `expected_normalized_gain`: empirical
    /// per-agent means of the normalized gains with their standard errors.
    /// Kept as a verification tool; the analytic path is what runs use.
    pub fn estimate_normalized_gains(
        &self,
        num_agents: usize,
        draws: usize,
        master_seed: u64,
    ) -> GainEstimate<S> {
        assert!(
            num_agents >= 1 && draws >= 2,
            "need agents and at least two draws"
        );
        let mut rng = derive_rng(master_seed, StreamPurpose::ExpectedGain, 0, 0);
        let mut mean = vec![S::zero(); num_agents];
        let mut m2 = vec![S::zero(); num_agents];
        for rep in 0..draws {
            let gains: Vec<S> = (0..num_agents).map(|_| self.sample(&mut rng)).collect();
            let mut total = S::zero();
            for &g in &gains {
                total = total + g;
            }
            let count = S::from_count(rep + 1);
            for i in 0..num_agents {
                let h = gains[i] / total;
                let delta = h - mean[i];
                mean[i] = mean[i] + delta / count;
                m2[i] = m2[i] + delta * (h - mean[i]);
            }
        }
        let n = S::from_count(draws);
        let std_error = m2
            .iter()
            .map(|&m| (m / (n - S::one()) / n).sqrt())
            .collect();
        GainEstimate {
            mean,
            std_error,
            draws,
        }
    }
}

/// Empirical estimate of the expected normalized gains, with one standard
/// error per agent.
#[derive(Debug, Clone)]
pub struct GainEstimate<S: Scalar> {
    pub mean: Vec<S>,
    pub std_error: Vec<S>,
    pub draws: usize,
}

/// The positive gains of one iteration. A single realization covers all
/// three transmission rounds of that iteration; the rounds are close
/// enough in time that the channel does not change between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<S: Scalar> {
    gains: Vec<S>,
    iteration: usize,
}

impl<S: Scalar> ChannelRealization<S> {
    pub fn new(gains: Vec<S>, iteration: usize) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::InvalidParameter(
                "realization needs at least one gain".into(),
            ));
        }
        for &g in &gains {
            if g <= S::zero() || !g.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "channel gains must be finite and positive, got {g}"
                )));
            }
        }
        Ok(ChannelRealization { gains, iteration })
    }

    pub fn num_agents(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &[S] {
        &self.gains
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Gains divided by their sum: positive, summing to one.
    pub fn normalized(&self) -> NormalizedCoefficients<S> {
        let mut total = S::zero();
        for &g in &self.gains {
            total = total + g;
        }
        NormalizedCoefficients {
            values: self.gains.iter().map(|&g| g / total).collect(),
        }
    }
}

/// Per-agent aggregation weights after the normalization division:
/// positive and summing to one, so aggregation is a convex combination.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCoefficients<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> NormalizedCoefficients<S> {
    pub fn as_slice(&self) -> &[S] {
        &self.values
    }
}

/// One analog superposition round: the receiver observes the gain-weighted
/// sum of all simultaneous transmissions and nothing else.
pub fn superpose<S: Scalar>(
    signals: &[&[S]],
    realization: &ChannelRealization<S>,
) -> Result<Vec<S>> {
    if signals.len() != realization.num_agents() {
        return Err(Error::DimensionMismatch {
            expected: realization.num_agents(),
            actual: signals.len(),
        });
    }
    let dim = signals[0].len();
    let mut received = vec![S::zero(); dim];
    for (signal, &gain) in signals.iter().zip(realization.gains()) {
        if signal.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: signal.len(),
            });
        }
        for (r, &s) in received.iter_mut().zip(*signal) {
            *r = *r + gain * s;
        }
    }
    Ok(received)
}

/// What the receiver ends up holding after the three rounds of one
/// iteration: the gain-weighted sums of the model updates, the epigraph
/// updates, and the all-ones normalization signals. This struct is the
/// entire server-side view of the uplink; per-agent values and gains have
/// no path through it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignals<S: Scalar> {
    theta_sum: Vec<S>,
    alpha_sum: S,
    rho_sum: S,
}

impl<S: Scalar> ReceivedSignals<S> {
    /// Divides the first two sums by the normalization sum, turning the
    /// unknown-gain-weighted totals into a convex combination of the local
    /// updates. Projection is the caller's job.
    pub fn aggregate(&self) -> Result<(Vec<S>, S)> {
        if self.rho_sum <= S::zero() || self.rho_sum.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "normalization sum must be positive, got {} (broken channel invariant)",
                self.rho_sum
            )));
        }
        let theta = self.theta_sum.iter().map(|&x| x / self.rho_sum).collect();
        Ok((theta, self.alpha_sum / self.rho_sum))
    }
}

/// The three simultaneous-transmission rounds of one iteration, performed
/// over a single channel realization.
pub fn transmit<S: Scalar>(
    updates: &[LocalUpdate<S>],
    realization: &ChannelRealization<S>,
) -> Result<ReceivedSignals<S>> {
    if updates.len() != realization.num_agents() {
        return Err(Error::DimensionMismatch {
            expected: realization.num_agents(),
            actual: updates.len(),
        });
    }
    for u in updates {
        if u.rho != S::one() {
            return Err(Error::InvalidParameter(format!(
                "every transmitted normalization signal must be 1, got {}",
                u.rho
            )));
        }
    }
    let thetas: Vec<&[S]> = updates.iter().map(|u| u.theta.as_slice()).collect();
    let theta_sum = superpose(&thetas, realization)?;
    let mut alpha_sum = S::zero();
    let mut rho_sum = S::zero();
    for (u, &gain) in updates.iter().zip(realization.gains()) {
        alpha_sum = alpha_sum + gain * u.alpha;
        rho_sum = rho_sum + gain * u.rho;
    }
    Ok(ReceivedSignals {
        theta_sum,
        alpha_sum,
        rho_sum,
    })
}

/// Full over-the-air aggregation of one iteration: three superposition
/// rounds, then the normalization division.
pub fn ota_aggregate<S: Scalar>(
    updates: &[LocalUpdate<S>],
    realization: &ChannelRealization<S>,
) -> Result<(Vec<S>, S)> {
    transmit(updates, realization)?.aggregate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn update(theta: Vec<f64>, alpha: f64) -> LocalUpdate<f64> {
        LocalUpdate {
            theta,
            alpha,
            rho: 1.0,
        }
    }

    #[test]
    fn degenerate_uniform_is_a_unit_channel() {
        let spec = ChannelSpec::Uniform {
            lo: 1.0_f64,
            hi: 1.0,
        };
        let real = spec.draw(3, 0, 42);
        assert_eq!(real.gains(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn draws_are_deterministic_per_seed_and_iteration() {
        let spec = ChannelSpec::Uniform {
            lo: 0.5_f64,
            hi: 2.0,
        };
        let a = spec.draw(8, 17, 99);
        let b = spec.draw(8, 17, 99);
        assert_eq!(a, b);
        let c = spec.draw(8, 18, 99);
        assert_ne!(a.gains(), c.gains());
        let d = spec.draw(8, 17, 100);
        assert_ne!(a.gains(), d.gains());
    }

    #[test]
    fn uniform_empirical_mean_matches_the_law() {
        let spec = ChannelSpec::Uniform {
            lo: 0.5_f64,
            hi: 2.0,
        };
        let mut rng = crate::seeds::derive_rng(7, StreamPurpose::Channel, 0, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let g = spec.sample(&mut rng);
            assert!((0.5..2.0).contains(&g));
            sum += g;
        }
        assert!((sum / n as f64 - 1.25).abs() < 0.01);
    }

    #[test]
    fn rayleigh_draws_respect_floor_and_median() {
        let (scale, floor) = (0.8_f64, 0.1_f64);
        let spec = ChannelSpec::TruncatedRayleigh { scale, floor };
        let mut rng = crate::seeds::derive_rng(7, StreamPurpose::Channel, 0, 0);
        let n = 100_000;
        // Median of the truncated law: x^2 = floor^2 + 2 scale^2 ln 2.
        let median = (floor * floor + 2.0 * scale * scale * 2.0_f64.ln()).sqrt();
        let mut below = 0usize;
        for _ in 0..n {
            let g = spec.sample(&mut rng);
            assert!(g >= floor);
            if g < median {
                below += 1;
            }
        }
        let frac = below as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "median fraction {frac}");
    }

    #[test]
    fn gain_autocorrelation_across_iterations_is_negligible() {
        let spec = ChannelSpec::Uniform {
            lo: 0.5_f64,
            hi: 2.0,
        };
        let n = 100_000;
        let series: Vec<f64> = (0..n).map(|k| spec.draw(1, k, 5).gains()[0]).collect();
        let mean = series.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let d = series[i] - mean;
            den += d * d;
            if i + 1 < n {
                num += d * (series[i + 1] - mean);
            }
        }
        let lag1 = num / den;
        assert!(lag1.abs() < 0.02, "lag-1 autocorrelation {lag1}");
    }

    #[test]
    fn normalized_coefficients_sum_to_one() {
        let spec = ChannelSpec::TruncatedRayleigh {
            scale: 1.0_f64,
            floor: 0.1,
        };
        for k in 0..1000 {
            let real = spec.draw(12, k, 3);
            let h = real.normalized();
            let sum: f64 = h.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(h.as_slice().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn superpose_hand_values() {
        let real = ChannelRealization::new(vec![1.0_f64, 2.0], 0).unwrap();
        let out = superpose(&[&[3.0], &[4.0]], &real).unwrap();
        assert_eq!(out, vec![11.0]);

        let unit = ChannelRealization::new(vec![1.0_f64, 1.0, 1.0], 0).unwrap();
        let out = superpose(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]], &unit).unwrap();
        assert_eq!(out, vec![9.0, 12.0]);

        let zeros = superpose(&[&[0.0], &[0.0]], &real).unwrap();
        assert_eq!(zeros, vec![0.0]);
    }

    #[test]
    fn superpose_rejects_mismatches() {
        let real = ChannelRealization::new(vec![1.0_f64, 2.0], 0).unwrap();
        assert!(superpose(&[&[1.0]], &real).is_err());
        assert!(superpose(&[&[1.0][..], &[1.0, 2.0][..]], &real).is_err());
    }

    #[test]
    fn aggregation_hand_values() {
        let real = ChannelRealization::new(vec![1.0_f64, 3.0], 0).unwrap();
        let updates = [update(vec![0.0], 0.0), update(vec![4.0], 8.0)];
        let (theta, alpha) = ota_aggregate(&updates, &real).unwrap();
        assert!((theta[0] - 3.0).abs() < 1e-15);
        assert!((alpha - 6.0).abs() < 1e-15);
    }

    #[test]
    fn consensus_passes_through_unchanged() {
        let spec = ChannelSpec::Uniform {
            lo: 0.5_f64,
            hi: 2.0,
        };
        for k in 0..100 {
            let real = spec.draw(5, k, 11);
            let updates: Vec<_> = (0..5).map(|_| update(vec![0.7, -1.3], 2.5)).collect();
            let (theta, alpha) = ota_aggregate(&updates, &real).unwrap();
            assert!((theta[0] - 0.7).abs() < 1e-12);
            assert!((theta[1] + 1.3).abs() < 1e-12);
            assert!((alpha - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_is_invariant_to_global_gain_scale() {
        let spec = ChannelSpec::Uniform {
            lo: 0.5_f64,
            hi: 2.0,
        };
        for k in 0..100 {
            let real = spec.draw(4, k, 13);
            let updates: Vec<_> = (0..4)
                .map(|i| update(vec![i as f64, -0.5 * i as f64], 1.0 + i as f64))
                .collect();
            let (base_theta, base_alpha) = ota_aggregate(&updates, &real).unwrap();
            for c in [1e-3_f64, 1e3] {
                let scaled =
                    ChannelRealization::new(real.gains().iter().map(|&g| c * g).collect(), k)
                        .unwrap();
                let (theta, alpha) = ota_aggregate(&updates, &scaled).unwrap();
                for (a, b) in theta.iter().zip(&base_theta) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!((alpha - base_alpha).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transmit_enforces_unit_normalization_signal() {
        let real = ChannelRealization::new(vec![1.0_f64, 1.0], 0).unwrap();
        let bad = [
            update(vec![1.0], 0.0),
            LocalUpdate {
                theta: vec![2.0],
                alpha: 0.0,
                rho: 0.5,
            },
        ];
        assert!(transmit(&bad, &real).is_err());
    }

    #[test]
    fn expected_gain_is_one_over_n_and_matches_monte_carlo() {
        let spec = ChannelSpec::Uniform {
            lo: 0.5_f64,
            hi: 2.0,
        };
        assert!((spec.expected_normalized_gain(12) - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(spec.expected_normalized_gain(1), 1.0);

        let est = spec.estimate_normalized_gains(4, 100_000, 21);
        for (m, se) in est.mean.iter().zip(&est.std_error) {
            assert!((m - 0.25).abs() < 0.005, "mean {m}");
            assert!((m - 0.25).abs() < 4.0 * se, "mean {m} vs stderr {se}");
        }
    }

    #[test]
    fn realization_rejects_nonpositive_gains() {
        assert!(ChannelRealization::new(vec![1.0_f64, 0.0], 0).is_err());
        assert!(ChannelRealization::new(vec![1.0_f64, -2.0], 0).is_err());
        assert!(ChannelRealization::new(Vec::<f64>::new(), 0).is_err());
    }
}
