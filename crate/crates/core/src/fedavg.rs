use crate::config::RunConfig;
use crate::engine::{evaluate_agents, validate_run_inputs, Agent, ModelState, TraceSettings};
use crate::error::{Error, Result};
use crate::geometry::{distance, norm, BallSet};
use crate::loss::minmax_objective;
use crate::metrics::accuracy;
use crate::scalar::Scalar;
use crate::trace::{RunTrace, TraceRow};
use crate::Method;

/// Orthogonal (time-slotted) uplink cost of running `rounds` communication
/// rounds: every agent needs its own slot per round under averaging, while
/// the superposition scheme always needs exactly three slots per round, no
/// matter how many agents transmit.
pub fn slot_cost(method: Method, num_agents: usize, rounds: usize) -> u64 {
    match method {
        Method::FedAvg => (num_agents as u64) * (rounds as u64),
        Method::FedFair => 3 * rounds as u64,
    }
}

/// Running tally of communication slots for one method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotLedger {
    slots_per_round: u64,
    cumulative_slots: u64,
}

impl SlotLedger {
    pub fn new(slots_per_round: u64) -> Self {
        assert!(slots_per_round >= 1, "a round costs at least one slot");
        SlotLedger {
            slots_per_round,
            cumulative_slots: 0,
        }
    }

    pub fn for_method(method: Method, num_agents: usize) -> Self {
        SlotLedger::new(slot_cost(method, num_agents, 1))
    }

    pub fn advance(&mut self, rounds: u64) {
        self.cumulative_slots += self.slots_per_round * rounds;
    }

    pub fn slots_per_round(&self) -> u64 {
        self.slots_per_round
    }

    pub fn cumulative_slots(&self) -> u64 {
        self.cumulative_slots
    }
}

/// One synchronous averaging round: every agent takes a single local
/// gradient step from the broadcast model, the server averages the results
/// (each agent counts equally) and projects. Equivalent to one projected
/// gradient step on the mean loss.
pub fn fedavg_round<S: Scalar>(
    theta: &[S],
    agents: &[Agent<S>],
    eta: S,
    set: &BallSet<S>,
) -> Result<Vec<S>> {
    let mut sum = vec![S::zero(); theta.len()];
    for agent in agents {
        let grad = agent.loss().gradient(theta);
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                iteration: 0,
                agent: agent.id(),
            });
        }
        for ((s, &t), &g) in sum.iter_mut().zip(theta).zip(&grad) {
            *s = *s + (t - eta * g);
        }
    }
    let inv = S::one() / S::from_count(agents.len());
    for s in &mut sum {
        *s = *s * inv;
    }
    set.project(&sum)
}

/// Runs the averaging baseline for `config.iterations` rounds under the
/// same schedule, projection and recording contract as the fair engine.
/// Epigraph-specific columns (alpha, v, penalty, gap) stay empty: the
/// baseline has no epigraph state. The returned `final_state.alpha` holds
/// the final worst-agent loss so the field still means "worst-case level".
pub fn run_fedavg<S: Scalar>(
    config: &RunConfig<S>,
    agents: &[Agent<S>],
    settings: &TraceSettings<S>,
) -> Result<RunTrace<S>> {
    validate_run_inputs(config, agents, settings)?;
    let ball = BallSet::new(config.ball_radius, config.model_dim)?;
    let mut theta = match &config.initial_theta {
        Some(t) => ball.project(t)?,
        None => vec![S::zero(); config.model_dim],
    };

    let mut ledger = SlotLedger::for_method(Method::FedAvg, config.num_agents);
    let mut rows = Vec::new();
    let mut max_subgrad_norm = S::zero();
    let mut evals = evaluate_agents(agents, &theta, 0)?;

    let record =
        |k: usize, eta: S, theta: &[S], values: &[S], slots: u64, rows: &mut Vec<TraceRow<S>>| {
            let minmax = minmax_objective(values).expect("agent list is nonempty");
            rows.push(TraceRow {
                k,
                eta,
                alpha: None,
                v: None,
                minmax_obj: minmax,
                penalty_obj: None,
                gap: None,
                theta_norm: norm(theta),
                test_accuracy: settings
                    .test_data
                    .map(|t| accuracy(theta, t).expect("test set validated nonempty")),
                slots_used: slots,
                theta: theta.to_vec(),
                dist_theta: settings
                    .reference_optimum
                    .as_ref()
                    .map(|opt| distance(theta, &opt.theta)),
                dist_alpha: None,
            });
        };

    for k in 0..config.iterations {
        let eta = config.schedule.step_size(k);
        if k % settings.record_every == 0 {
            let values: Vec<S> = evals.iter().map(|(g, _)| *g).collect();
            record(
                k,
                eta,
                &theta,
                &values,
                ledger.cumulative_slots(),
                &mut rows,
            );
        }
        for (_, grad) in &evals {
            max_subgrad_norm = max_subgrad_norm.max(norm(grad));
        }
        theta = fedavg_round(&theta, agents, eta, &ball).map_err(|e| match e {
            Error::NonFinite { agent, .. } => Error::NonFinite {
                iteration: k,
                agent,
            },
            other => other,
        })?;
        ledger.advance(1);
        evals = evaluate_agents(agents, &theta, k + 1)?;
    }

    let final_values: Vec<S> = evals.iter().map(|(g, _)| *g).collect();
    let final_eta = config.schedule.step_size(config.iterations);
    record(
        config.iterations,
        final_eta,
        &theta,
        &final_values,
        ledger.cumulative_slots(),
        &mut rows,
    );

    let final_minmax = minmax_objective(&final_values)?;
    Ok(RunTrace {
        rows,
        final_state: ModelState {
            theta,
            alpha: final_minmax,
        },
        max_subgrad_norm,
    })
}
