use std::path::Path;

use crate::engine::Agent;
use crate::error::{Error, Result};
use crate::geometry::dot;
use crate::loss::AgentDataset;
use crate::scalar::Scalar;

/// Predicted label under the 0.5-threshold rule. A sigmoid score of at
/// least one half is exactly a nonnegative linear score, so the sigmoid is
/// never evaluated; the tie at the decision boundary goes to class 1.
pub fn predict<S: Scalar>(theta: &[S], features: &[S]) -> bool {
    dot(theta, features) >= S::zero()
}

/// Counts of test outcomes, with class 0 as the "negative" class. Rows of
/// the 2x2 layout are actual classes (0 then 1), columns are predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_pos: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_neg + self.false_pos + self.false_neg + self.true_pos
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_neg + self.true_pos) as f64 / self.total() as f64
    }

    /// Fraction of actual class-0 points that were recognized as class 0.
    /// This is the quantity that collapses when a model sacrifices the
    /// minority side of the data.
    pub fn class0_recall(&self) -> f64 {
        self.true_neg as f64 / (self.true_neg + self.false_pos) as f64
    }

    /// Fraction of actual class-1 points recognized as class 1.
    pub fn class1_recall(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_neg) as f64
    }

    /// Writes the bare 2x2 grid: first row `tn,fp`, second row `fn,tp`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let body = format!(
            "{},{}\n{},{}\n",
            self.true_neg, self.false_pos, self.false_neg, self.true_pos
        );
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Fraction of test points whose predicted label matches the actual one.
pub fn accuracy<S: Scalar>(theta: &[S], test: &AgentDataset<S>) -> Result<S> {
    if test.is_empty() {
        return Err(Error::EmptyDataset(
            "accuracy over an empty test set".into(),
        ));
    }
    let correct = test.iter().filter(|(u, z)| predict(theta, u) == *z).count();
    Ok(S::from_count(correct) / S::from_count(test.len()))
}

/// Full outcome counts of `theta` on `test` under the same prediction rule
/// as `accuracy`.
pub fn confusion<S: Scalar>(theta: &[S], test: &AgentDataset<S>) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for (u, z) in test.iter() {
        match (z, predict(theta, u)) {
            (false, false) => m.true_neg += 1,
            (false, true) => m.false_pos += 1,
            (true, false) => m.false_neg += 1,
            (true, true) => m.true_pos += 1,
        }
    }
    m
}

/// The largest per-agent loss at `theta` and the agent attaining it; ties
/// resolve to the smallest agent id so the answer is deterministic.
pub fn worst_agent_loss<S: Scalar>(theta: &[S], agents: &[Agent<S>]) -> Result<(S, usize)> {
    let Some(first) = agents.first() else {
        return Err(Error::InvalidParameter(
            "worst-agent loss over no agents".into(),
        ));
    };
    let mut worst = first.loss().value(theta);
    let mut worst_id = first.id();
    for agent in &agents[1..] {
        let value = agent.loss().value(theta);
        if value > worst {
            worst = value;
            worst_id = agent.id();
        }
    }
    Ok((worst, worst_id))
}
