use crate::channel::{ota_aggregate, ChannelSpec};
use crate::config::{min_weight_threshold, RunConfig};
use crate::error::{Error, Result};
use crate::fedavg::SlotLedger;
use crate::geometry::{distance, norm, BallSet};
use crate::loss::{epigraph_subgrad, epigraph_value, minmax_objective, LossFunction};
use crate::metrics::accuracy;
use crate::scalar::Scalar;
use crate::trace::{RunTrace, TraceRow};
use crate::AgentDataset;

/// The server's state: the model iterate and the running estimate of the
/// worst-case loss level. The model is feasible (inside the constraint
/// ball) after every server step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<S: Scalar> {
    pub theta: Vec<S>,
    pub alpha: S,
}

/// What one agent transmits in one iteration: its locally stepped model
/// and epigraph values, plus the constant-1 normalization signal whose
/// superposition lets the server cancel the unknown channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate<S: Scalar> {
    pub theta: Vec<S>,
    pub alpha: S,
    pub rho: S,
}

impl<S: Scalar> LocalUpdate<S> {
    pub fn new(theta: Vec<S>, alpha: S) -> Self {
        LocalUpdate {
            theta,
            alpha,
            rho: S::one(),
        }
    }
}

/// One participant: an id (1-based, fixed ordering), its penalty weight,
/// and its private loss. The loss is behind a trait object so toy
/// verification problems and the logistic task share the engine.
pub struct Agent<S: Scalar> {
    id: usize,
    weight: S,
    loss: Box<dyn LossFunction<S>>,
}

impl<S: Scalar> Agent<S> {
    pub fn new(id: usize, weight: S, loss: Box<dyn LossFunction<S>>) -> Result<Self> {
        if id == 0 {
            return Err(Error::InvalidParameter("agent ids are 1-based".into()));
        }
        if weight <= S::one() || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "agent {id} penalty weight must be finite and > 1, got {weight}"
            )));
        }
        Ok(Agent { id, weight, loss })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn weight(&self) -> S {
        self.weight
    }

    pub fn loss(&self) -> &dyn LossFunction<S> {
        self.loss.as_ref()
    }
}

/// Server pre-step: the epigraph level nudged down by eta/N. The result is
/// broadcast together with the current model; each agent then measures its
/// own loss against this level.
pub fn server_pre_step<S: Scalar>(state: &ModelState<S>, eta: S, num_agents: usize) -> S {
    state.alpha - eta / S::from_count(num_agents)
}

/// One agent's local step. Evaluates the loss at the broadcast model,
/// takes a weighted subgradient step on (theta, alpha) jointly, and wraps
/// the result for transmission. Deliberately unprojected: feasibility is
/// restored once, at the server, after aggregation.
pub fn local_update<S: Scalar>(
    agent: &Agent<S>,
    theta: &[S],
    v: S,
    eta: S,
) -> Result<LocalUpdate<S>> {
    let (g, grad) = agent.loss().value_and_gradient(theta);
    check_finite_eval(g, &grad, 0, agent.id())?;
    Ok(step_from_eval(theta, v, eta, agent.weight(), g, &grad).0)
}

/// The shared update formula: given the precomputed loss evaluation,
/// produce the transmitted update and the norm of the active subgradient
/// (zero when the penalty is inactive).
fn step_from_eval<S: Scalar>(
    theta: &[S],
    v: S,
    eta: S,
    weight: S,
    g: S,
    grad: &[S],
) -> (LocalUpdate<S>, S) {
    let sub = epigraph_subgrad(g, grad, v);
    let scale = eta * weight;
    let stepped: Vec<S> = theta
        .iter()
        .zip(&sub.d_theta)
        .map(|(&t, &d)| t - scale * d)
        .collect();
    let alpha = v - scale * sub.d_alpha;
    let sub_norm = if sub.d_alpha == S::zero() {
        S::zero()
    } else {
        (norm(&sub.d_theta).powi(2) + S::one()).sqrt()
    };
    (LocalUpdate::new(stepped, alpha), sub_norm)
}

/// Server post-step: project the aggregated model onto the feasible set;
/// the aggregated epigraph value passes through unprojected.
pub fn server_post_step<S: Scalar>(
    theta_agg: Vec<S>,
    alpha_agg: S,
    set: &BallSet<S>,
) -> Result<ModelState<S>> {
    if theta_agg.iter().any(|x| !x.is_finite()) || !alpha_agg.is_finite() {
        // Agent 0 marks a server-side aggregate (real ids are 1-based).
        return Err(Error::NonFinite {
            iteration: 0,
            agent: 0,
        });
    }
    let theta = set.project(&theta_agg)?;
    Ok(ModelState {
        theta,
        alpha: alpha_agg,
    })
}

/// Recording options for a run: the stride between recorded iterations,
/// an optional held-out test set for accuracy, and an optional reference
/// optimum that enables the optimality-gap and distance diagnostics.
#[derive(Debug, Clone)]
pub struct TraceSettings<'a, S: Scalar> {
    pub record_every: usize,
    pub test_data: Option<&'a AgentDataset<S>>,
    pub reference_optimum: Option<ModelState<S>>,
}

impl<'a, S: Scalar> TraceSettings<'a, S> {
    pub fn every(record_every: usize) -> Self {
        TraceSettings {
            record_every,
            test_data: None,
            reference_optimum: None,
        }
    }
}

fn check_finite_eval<S: Scalar>(g: S, grad: &[S], iteration: usize, agent: usize) -> Result<()> {
    if !g.is_finite() || grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { iteration, agent });
    }
    Ok(())
}

pub(crate) fn evaluate_agents<S: Scalar>(
    agents: &[Agent<S>],
    theta: &[S],
    iteration: usize,
) -> Result<Vec<(S, Vec<S>)>> {
    agents
        .iter()
        .map(|a| {
            let (g, grad) = a.loss().value_and_gradient(theta);
            check_finite_eval(g, &grad, iteration, a.id())?;
            Ok((g, grad))
        })
        .collect()
}

struct Recorder<'a, S: Scalar> {
    settings: &'a TraceSettings<'a, S>,
    num_agents: usize,
    weights: Vec<S>,
    gap_weights: Vec<S>,
    ledger: SlotLedger,
    rows: Vec<TraceRow<S>>,
}

impl<'a, S: Scalar> Recorder<'a, S> {
    fn record(&mut self, k: usize, eta: S, state: &ModelState<S>, values: &[S]) {
        let minmax = minmax_objective(values).expect("agent list is nonempty");
        let overshoot: Vec<S> = values
            .iter()
            .map(|&g| epigraph_value(g, state.alpha))
            .collect();
        let mut penalty = state.alpha;
        for (&gbar, &p) in overshoot.iter().zip(&self.weights) {
            penalty = penalty + p * gbar;
        }
        let gap = self.settings.reference_optimum.as_ref().map(|opt| {
            let mut g = state.alpha - opt.alpha;
            for (&gbar, &w) in overshoot.iter().zip(&self.gap_weights) {
                g = g + w * gbar;
            }
            g
        });
        let test_accuracy = self
            .settings
            .test_data
            .map(|t| accuracy(&state.theta, t).expect("test set validated nonempty"));
        let dist_theta = self
            .settings
            .reference_optimum
            .as_ref()
            .map(|opt| distance(&state.theta, &opt.theta));
        let dist_alpha = self
            .settings
            .reference_optimum
            .as_ref()
            .map(|opt| (state.alpha - opt.alpha).abs());
        self.rows.push(TraceRow {
            k,
            eta,
            alpha: Some(state.alpha),
            v: Some(server_pre_step(state, eta, self.num_agents)),
            minmax_obj: minmax,
            penalty_obj: Some(penalty),
            gap,
            theta_norm: norm(&state.theta),
            test_accuracy,
            slots_used: self.ledger.cumulative_slots(),
            theta: state.theta.clone(),
            dist_theta,
            dist_alpha,
        });
    }
}

pub(crate) fn validate_run_inputs<S: Scalar>(
    config: &RunConfig<S>,
    agents: &[Agent<S>],
    settings: &TraceSettings<S>,
) -> Result<()> {
    config.validate()?;
    if agents.len() != config.num_agents {
        return Err(Error::DimensionMismatch {
            expected: config.num_agents,
            actual: agents.len(),
        });
    }
    for (i, agent) in agents.iter().enumerate() {
        if agent.id() != i + 1 {
            return Err(Error::InvalidParameter(format!(
                "agent ids must be 1..=N in order; position {} holds id {}",
                i + 1,
                agent.id()
            )));
        }
        if agent.loss().dim() != config.model_dim {
            return Err(Error::DimensionMismatch {
                expected: config.model_dim,
                actual: agent.loss().dim(),
            });
        }
        if agent.weight() != config.weights.get(i) {
            return Err(Error::InvalidParameter(format!(
                "agent {} weight {} disagrees with configured weight {}",
                agent.id(),
                agent.weight(),
                config.weights.get(i)
            )));
        }
    }
    if settings.record_every == 0 {
        return Err(Error::InvalidParameter(
            "record_every must be at least 1".into(),
        ));
    }
    if let Some(test) = settings.test_data {
        if test.is_empty() {
            return Err(Error::EmptyDataset("test set must be nonempty".into()));
        }
        if test.dim() != config.model_dim {
            return Err(Error::DimensionMismatch {
                expected: config.model_dim,
                actual: test.dim(),
            });
        }
    }
    if let Some(opt) = &settings.reference_optimum {
        if opt.theta.len() != config.model_dim {
            return Err(Error::DimensionMismatch {
                expected: config.model_dim,
                actual: opt.theta.len(),
            });
        }
    }
    Ok(())
}

/// Warn (never abort) when a penalty weight is not strictly above the
/// smallest value for which the penalized problem is guaranteed to match
/// the minmax problem under this channel. Running below the threshold is
/// legitimate experimentation; it just voids the guarantee.
fn warn_below_threshold<S: Scalar>(config: &RunConfig<S>, agents: &[Agent<S>]) {
    let expected = config.channel.expected_normalized_gain(config.num_agents);
    match min_weight_threshold(config.num_agents, expected) {
        Ok(threshold) => {
            for agent in agents {
                if agent.weight() <= threshold {
                    log::warn!(
                        "agent {} penalty weight {} is at or below the guarantee threshold {}",
                        agent.id(),
                        agent.weight(),
                        threshold
                    );
                }
            }
        }
        Err(e) => log::warn!("could not evaluate weight threshold: {e}"),
    }
}

/// Runs the fair training loop for `config.iterations` iterations.
///
/// Per iteration: the server lowers the epigraph level and broadcasts;
/// every agent takes its local subgradient step; all agents transmit
/// simultaneously over one channel realization (three superposition
/// rounds); the server divides out the unknown gains and projects.
///
/// The returned trace holds one row per recorded iteration (stride
/// `settings.record_every`, always including iteration 0 and the final
/// state). Deterministic: identical configs produce identical traces.
pub fn run<S: Scalar>(
    config: &RunConfig<S>,
    agents: &[Agent<S>],
    settings: &TraceSettings<S>,
) -> Result<RunTrace<S>> {
    validate_run_inputs(config, agents, settings)?;
    warn_below_threshold(config, agents);

    let ball = BallSet::new(config.ball_radius, config.model_dim)?;
    let theta0 = match &config.initial_theta {
        Some(t) => ball.project(t)?,
        None => vec![S::zero(); config.model_dim],
    };
    let mut evals = evaluate_agents(agents, &theta0, 0)?;
    let alpha0 = match config.initial_alpha {
        Some(a) => a,
        None => {
            let values: Vec<S> = evals.iter().map(|(g, _)| *g).collect();
            minmax_objective(&values)?
        }
    };
    let mut state = ModelState {
        theta: theta0,
        alpha: alpha0,
    };

    let expected_gain = config.channel.expected_normalized_gain(config.num_agents);
    let n_scaled = S::from_count(config.num_agents) * expected_gain;
    let mut recorder = Recorder {
        settings,
        num_agents: config.num_agents,
        weights: config.weights.as_slice().to_vec(),
        gap_weights: config
            .weights
            .as_slice()
            .iter()
            .map(|&p| n_scaled * p)
            .collect(),
        ledger: SlotLedger::for_method(crate::Method::FedFair, config.num_agents),
        rows: Vec::new(),
    };

    let mut max_subgrad_norm = S::zero();
    let mut updates: Vec<LocalUpdate<S>> = Vec::with_capacity(config.num_agents);
    for k in 0..config.iterations {
        let eta = config.schedule.step_size(k);
        if k % settings.record_every == 0 {
            let values: Vec<S> = evals.iter().map(|(g, _)| *g).collect();
            recorder.record(k, eta, &state, &values);
        }

        let v = server_pre_step(&state, eta, config.num_agents);
        updates.clear();
        for (agent, (g, grad)) in agents.iter().zip(&evals) {
            let (update, sub_norm) = step_from_eval(&state.theta, v, eta, agent.weight(), *g, grad);
            max_subgrad_norm = max_subgrad_norm.max(sub_norm);
            updates.push(update);
        }

        let realization = config.channel.draw(config.num_agents, k, config.seed);
        let (theta_agg, alpha_agg) = ota_aggregate(&updates, &realization)?;
        state = server_post_step(theta_agg, alpha_agg, &ball).map_err(|e| match e {
            Error::NonFinite { agent, .. } => Error::NonFinite {
                iteration: k,
                agent,
            },
            other => other,
        })?;
        recorder.ledger.advance(1);
        evals = evaluate_agents(agents, &state.theta, k + 1)?;
    }

    let final_values: Vec<S> = evals.iter().map(|(g, _)| *g).collect();
    let final_eta = config.schedule.step_size(config.iterations);
    recorder.record(config.iterations, final_eta, &state, &final_values);

    Ok(RunTrace {
        rows: recorder.rows,
        final_state: state,
        max_subgrad_norm,
    })
}

/// Convenience for tests and small tools: the channel specification that
/// makes the aggregation exact (every gain is exactly 1).
pub fn unit_channel<S: Scalar>() -> ChannelSpec<S> {
    ChannelSpec::Uniform {
        lo: S::one(),
        hi: S::one(),
    }
}
