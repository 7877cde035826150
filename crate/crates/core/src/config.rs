use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Diminishing step-size schedule eta(k) = c0 / (k+1)^exponent.
///
/// The exponent is restricted to (0.5, 1] at construction so that the two
/// series conditions needed for convergence (step sums diverge, squared
/// step sums converge) hold by construction instead of by runtime check.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule<S: Scalar> {
    c0: S,
    exponent: S,
}

impl<S: Scalar> StepSchedule<S> {
    pub fn new(c0: S, exponent: S) -> Result<Self> {
        if c0 <= S::zero() || !c0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step c0 must be finite and positive, got {c0}"
            )));
        }
        let half = S::cast(0.5);
        if !(exponent > half && exponent <= S::one()) {
            return Err(Error::InvalidParameter(format!(
                "step exponent must lie in (0.5, 1], got {exponent}"
            )));
        }
        Ok(StepSchedule { c0, exponent })
    }

    /// The default schedule used by the shipped experiments: 0.1/(k+1)^0.6.
    pub fn standard() -> Self {
        StepSchedule::new(S::cast(0.1), S::cast(0.6)).expect("standard schedule is valid")
    }

    pub fn c0(&self) -> S {
        self.c0
    }

    pub fn exponent(&self) -> S {
        self.exponent
    }

    /// eta(k), strictly positive and decreasing in k.
    pub fn step_size(&self, k: usize) -> S {
        self.c0 / S::from_count(k + 1).powf(self.exponent)
    }
}

/// Per-agent penalty weights p_i. Every weight must exceed 1: that is the
/// condition under which minimizing the penalized objective is equivalent
/// to the constrained minmax problem, so weaker weights are rejected
/// outright rather than silently producing a different optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights<S: Scalar> {
    weights: Vec<S>,
}

impl<S: Scalar> PenaltyWeights<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter(
                "penalty weights must be nonempty".into(),
            ));
        }
        for (i, &w) in weights.iter().enumerate() {
            if w <= S::one() || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "penalty weight for agent {} must be finite and > 1, got {w}",
                    i + 1
                )));
            }
        }
        Ok(PenaltyWeights { weights })
    }

    /// Same weight for every agent; the shipped default is 2.
    pub fn uniform(num_agents: usize, weight: S) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::InvalidParameter("need at least one agent".into()));
        }
        PenaltyWeights::new(vec![weight; num_agents])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.weights
    }

    pub fn get(&self, index: usize) -> S {
        self.weights[index]
    }
}

/// Smallest admissible penalty weight for an agent whose normalized channel
/// gain has expectation `expected_gain`: max(1, 1/(N * E[h_i])). Callers
/// must pick weights strictly above the returned value; for symmetric
/// channels E[h_i] = 1/N and the threshold collapses to 1.
pub fn min_weight_threshold<S: Scalar>(num_agents: usize, expected_gain: S) -> Result<S> {
    if num_agents == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    if expected_gain <= S::zero() || expected_gain > S::one() || expected_gain.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "expected normalized gain must lie in (0, 1], got {expected_gain}"
        )));
    }
    let inv = S::one() / (S::from_count(num_agents) * expected_gain);
    Ok(inv.max(S::one()))
}

/// Everything a single optimization run needs, minus the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<S: Scalar> {
    pub num_agents: usize,
    pub model_dim: usize,
    pub ball_radius: S,
    pub schedule: StepSchedule<S>,
    pub weights: PenaltyWeights<S>,
    pub channel: ChannelSpec<S>,
    pub iterations: usize,
    pub seed: u64,
    /// Starting model; defaults to the zero vector when absent.
    pub initial_theta: Option<Vec<S>>,
    /// Starting epigraph level; defaults to the worst initial loss when absent.
    pub initial_alpha: Option<S>,
}

impl<S: Scalar> RunConfig<S> {
    /// The configuration used by the shipped comparison experiment, minus
    /// iteration count and seed tweaks: radius-10 ball, standard schedule,
    /// weight 2 for everyone, uniform(0.5, 2) channel.
    pub fn standard(num_agents: usize, model_dim: usize) -> Self {
        RunConfig {
            num_agents,
            model_dim,
            ball_radius: S::cast(10.0),
            schedule: StepSchedule::standard(),
            weights: PenaltyWeights::uniform(num_agents, S::cast(2.0))
                .expect("standard weights are valid"),
            channel: ChannelSpec::Uniform {
                lo: S::cast(0.5),
                hi: S::cast(2.0),
            },
            iterations: 10_000,
            seed: 1,
            initial_theta: None,
            initial_alpha: None,
        }
    }

    /// Cross-field validation. Runs before every engine run; an `iterations`
    /// of zero is accepted here (the engine then records just the initial
    /// state), while the config-file loader separately requires at least 1.
    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::InvalidParameter(
                "num_agents must be at least 1".into(),
            ));
        }
        if self.model_dim == 0 {
            return Err(Error::InvalidParameter(
                "model_dim must be at least 1".into(),
            ));
        }
        if self.ball_radius <= S::zero() || !self.ball_radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball_radius must be finite and positive, got {}",
                self.ball_radius
            )));
        }
        if self.weights.len() != self.num_agents {
            return Err(Error::DimensionMismatch {
                expected: self.num_agents,
                actual: self.weights.len(),
            });
        }
        self.channel.validate()?;
        if let Some(theta0) = &self.initial_theta {
            if theta0.len() != self.model_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.model_dim,
                    actual: theta0.len(),
                });
            }
            if theta0.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "initial_theta must be finite".into(),
                ));
            }
        }
        if let Some(alpha0) = self.initial_alpha {
            if !alpha0.is_finite() {
                return Err(Error::InvalidParameter(
                    "initial_alpha must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}
