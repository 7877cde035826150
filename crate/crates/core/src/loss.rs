use crate::config::PenaltyWeights;
use crate::error::{Error, Result};
use crate::geometry::dot;
use crate::scalar::Scalar;

/// One agent's labeled points: feature rows of a shared dimension plus
/// binary labels. Stored flat (row-major) to keep the hot training loops
/// on one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDataset<S: Scalar> {
    features: Vec<S>,
    labels: Vec<bool>,
    dim: usize,
}

impl<S: Scalar> AgentDataset<S> {
    pub fn new(points: Vec<(Vec<S>, bool)>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::EmptyDataset(
                "a dataset needs at least one point".into(),
            ));
        };
        let dim = first.0.len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "feature dimension must be at least 1".into(),
            ));
        }
        let mut features = Vec::with_capacity(points.len() * dim);
        let mut labels = Vec::with_capacity(points.len());
        for (u, z) in points {
            if u.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: u.len(),
                });
            }
            features.extend_from_slice(&u);
            labels.push(z);
        }
        Ok(AgentDataset {
            features,
            labels,
            dim,
        })
    }

    pub(crate) fn from_flat(features: Vec<S>, labels: Vec<bool>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "feature dimension must be at least 1".into(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset(
                "a dataset needs at least one point".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        Ok(AgentDataset {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self, index: usize) -> &[S] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    pub fn label(&self, index: usize) -> bool {
        self.labels[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[S], bool)> {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    /// Empirical mean of the feature vectors.
    pub fn feature_mean(&self) -> Vec<S> {
        let mut mean = vec![S::zero(); self.dim];
        for (u, _) in self.iter() {
            for (m, &x) in mean.iter_mut().zip(u) {
                *m = *m + x;
            }
        }
        let inv = S::one() / S::from_count(self.len());
        for m in &mut mean {
            *m = *m * inv;
        }
        mean
    }

    /// Fraction of points labeled 1.
    pub fn label_frequency(&self) -> S {
        let ones = self.labels.iter().filter(|&&z| z).count();
        S::from_count(ones) / S::from_count(self.len())
    }
}

/// Numerically stable log(1 + e^t). The two branches keep the exponent
/// argument nonpositive, so nothing overflows for any finite t.
fn softplus<S: Scalar>(t: S) -> S {
    if t > S::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// log S(x) for the sigmoid S, computed without ever forming S(x).
/// The naive log(1/(1+e^-x)) loses all precision past |x| of about 35;
/// this form is exact to rounding over the whole double range.
pub fn log_sigmoid<S: Scalar>(x: S) -> S {
    -softplus(-x)
}

/// The sigmoid itself, branch-stabilized so large negative inputs do not
/// overflow the exponential.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Average logistic (cross-entropy) loss of `theta` on `data`:
/// -(1/|D|) sum of [z log S(s) + (1-z) log(1 - S(s))] with s = theta . u.
pub fn logistic_loss<S: Scalar>(theta: &[S], data: &AgentDataset<S>) -> S {
    assert_eq!(theta.len(), data.dim(), "model/feature dimension mismatch");
    let mut acc = S::zero();
    for (u, z) in data.iter() {
        let s = dot(theta, u);
        // log(1 - S(s)) = log S(-s), so both label cases are a log-sigmoid
        acc = acc - if z { log_sigmoid(s) } else { log_sigmoid(-s) };
    }
    acc / S::from_count(data.len())
}

/// Gradient of `logistic_loss` at theta: (1/|D|) sum of (S(s) - z) u.
pub fn logistic_grad<S: Scalar>(theta: &[S], data: &AgentDataset<S>) -> Vec<S> {
    assert_eq!(theta.len(), data.dim(), "model/feature dimension mismatch");
    let mut grad = vec![S::zero(); data.dim()];
    for (u, z) in data.iter() {
        let s = dot(theta, u);
        let coeff = sigmoid(s) - if z { S::one() } else { S::zero() };
        for (g, &x) in grad.iter_mut().zip(u) {
            *g = *g + coeff * x;
        }
    }
    let inv = S::one() / S::from_count(data.len());
    for g in &mut grad {
        *g = *g * inv;
    }
    grad
}

/// Value plus gradient behind one interface so the toy problems used for
/// verification and the logistic task run through the same engine.
pub trait LossFunction<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[S]) -> S;
    fn gradient(&self, theta: &[S]) -> Vec<S>;

    /// Both at once; override when a fused pass is cheaper.
    fn value_and_gradient(&self, theta: &[S]) -> (S, Vec<S>) {
        (self.value(theta), self.gradient(theta))
    }
}

/// Logistic loss over one agent's dataset.
#[derive(Debug, Clone)]
pub struct LogisticLoss<S: Scalar> {
    data: AgentDataset<S>,
}

impl<S: Scalar> LogisticLoss<S> {
    pub fn new(data: AgentDataset<S>) -> Self {
        LogisticLoss { data }
    }

    pub fn data(&self) -> &AgentDataset<S> {
        &self.data
    }
}

impl<S: Scalar> LossFunction<S> for LogisticLoss<S> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, theta: &[S]) -> S {
        logistic_loss(theta, &self.data)
    }

    fn gradient(&self, theta: &[S]) -> Vec<S> {
        logistic_grad(theta, &self.data)
    }

    fn value_and_gradient(&self, theta: &[S]) -> (S, Vec<S>) {
        // One pass over the data instead of two; the per-point score is
        // shared between the loss term and the gradient coefficient.
        assert_eq!(
            theta.len(),
            self.data.dim(),
            "model/feature dimension mismatch"
        );
        let mut acc = S::zero();
        let mut grad = vec![S::zero(); self.data.dim()];
        for (u, z) in self.data.iter() {
            let s = dot(theta, u);
            acc = acc - if z { log_sigmoid(s) } else { log_sigmoid(-s) };
            let coeff = sigmoid(s) - if z { S::one() } else { S::zero() };
            for (g, &x) in grad.iter_mut().zip(u) {
                *g = *g + coeff * x;
            }
        }
        let inv = S::one() / S::from_count(self.data.len());
        for g in &mut grad {
            *g = *g * inv;
        }
        (acc * inv, grad)
    }
}

/// Squared distance to a fixed center: the toy convex loss used to verify
/// the optimizer against the brute-force oracle.
#[derive(Debug, Clone)]
pub struct QuadraticLoss<S: Scalar> {
    center: Vec<S>,
}

impl<S: Scalar> QuadraticLoss<S> {
    pub fn new(center: Vec<S>) -> Self {
        assert!(!center.is_empty(), "quadratic center must be nonempty");
        QuadraticLoss { center }
    }
}

impl<S: Scalar> LossFunction<S> for QuadraticLoss<S> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, theta: &[S]) -> S {
        assert_eq!(theta.len(), self.center.len());
        let mut acc = S::zero();
        for (&t, &c) in theta.iter().zip(&self.center) {
            let d = t - c;
            acc = acc + d * d;
        }
        acc
    }

    fn gradient(&self, theta: &[S]) -> Vec<S> {
        assert_eq!(theta.len(), self.center.len());
        let two = S::cast(2.0);
        theta
            .iter()
            .zip(&self.center)
            .map(|(&t, &c)| two * (t - c))
            .collect()
    }
}

/// max(g - alpha, 0): by how much agent loss g overshoots the epigraph
/// level alpha.
pub fn epigraph_value<S: Scalar>(g_val: S, alpha: S) -> S {
    (g_val - alpha).max(S::zero())
}

/// A subgradient of (theta, alpha) -> max(g(theta) - alpha, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct EpigraphSubgradient<S: Scalar> {
    pub d_theta: Vec<S>,
    pub d_alpha: S,
}

/// Subgradient of the epigraph penalty at (theta, alpha), given the agent
/// loss value and its gradient there. The constraint counts as active at
/// exact equality g = alpha (the "greater or equal" convention), so the
/// boundary returns (grad, -1) rather than zero.
pub fn epigraph_subgrad<S: Scalar>(g_val: S, g_grad: &[S], alpha: S) -> EpigraphSubgradient<S> {
    if g_val >= alpha {
        EpigraphSubgradient {
            d_theta: g_grad.to_vec(),
            d_alpha: -S::one(),
        }
    } else {
        EpigraphSubgradient {
            d_theta: vec![S::zero(); g_grad.len()],
            d_alpha: S::zero(),
        }
    }
}

/// Worst per-agent loss: the quantity the whole method is minimizing.
pub fn minmax_objective<S: Scalar>(losses_per_agent: &[S]) -> Result<S> {
    let Some(&first) = losses_per_agent.first() else {
        return Err(Error::InvalidParameter(
            "worst-case objective over an empty loss list".into(),
        ));
    };
    Ok(losses_per_agent
        .iter()
        .skip(1)
        .fold(first, |m, &g| m.max(g)))
}

/// Penalized objective alpha + sum of p_i * max(g_i - alpha, 0), evaluated
/// from precomputed overshoot values.
pub fn penalty_objective<S: Scalar>(
    alpha: S,
    epigraph_values: &[S],
    weights: &PenaltyWeights<S>,
) -> Result<S> {
    if epigraph_values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            actual: epigraph_values.len(),
        });
    }
    let mut acc = alpha;
    for (&gbar, &p) in epigraph_values.iter().zip(weights.as_slice()) {
        acc = acc + p * gbar;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset_1d(points: &[(f64, bool)]) -> AgentDataset<f64> {
        AgentDataset::new(points.iter().map(|&(u, z)| (vec![u], z)).collect()).unwrap()
    }

    #[test]
    fn dataset_rejects_ragged_and_empty_input() {
        assert!(AgentDataset::<f64>::new(vec![]).is_err());
        assert!(AgentDataset::new(vec![(vec![1.0, 2.0], true), (vec![1.0], false)]).is_err());
    }

    #[test]
    fn loss_at_zero_is_log_two_for_any_dataset() {
        let data = dataset_1d(&[(3.0, true), (-7.0, false), (0.25, true)]);
        let v = logistic_loss(&[0.0], &data);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_on_symmetric_confident_pair() {
        // theta=(1,0), points ((2,0),1) and ((-2,0),0): both terms are
        // -log S(2), independently evaluated as 0.1269280110429725.
        let data =
            AgentDataset::new(vec![(vec![2.0, 0.0], true), (vec![-2.0, 0.0], false)]).unwrap();
        let v: f64 = logistic_loss(&[1.0, 0.0], &data);
        assert!((v - 0.1269280110429725).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_drives_loss_to_zero() {
        let data = AgentDataset::new(vec![(vec![1.0], true)]).unwrap();
        let v = logistic_loss(&[80.0], &data);
        assert!((0.0..1e-30).contains(&v));
    }

    #[test]
    fn log_sigmoid_is_finite_deep_in_the_tail() {
        let v: f64 = log_sigmoid(-745.0);
        assert!(v.is_finite());
        assert!((v + 745.0).abs() < 1e-9);
        // The naive formulation underflows to log(0) here.
        let naive = (1.0 / (1.0 + (745.0_f64).exp())).ln();
        assert!(naive.is_infinite());
    }

    #[test]
    fn gradient_hand_values() {
        let single = AgentDataset::new(vec![(vec![1.0, 0.0], true)]).unwrap();
        let g: Vec<f64> = logistic_grad(&[0.0, 0.0], &single);
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert_eq!(g[1], 0.0);

        let pair =
            AgentDataset::new(vec![(vec![1.0, 0.0], true), (vec![-1.0, 0.0], false)]).unwrap();
        let g: Vec<f64> = logistic_grad(&[0.0, 0.0], &pair);
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn fused_pass_matches_separate_calls() {
        let data = AgentDataset::new(vec![
            (vec![0.3, -1.2], true),
            (vec![-0.8, 0.4], false),
            (vec![2.0, 1.0], true),
        ])
        .unwrap();
        let loss = LogisticLoss::new(data.clone());
        let theta = [0.7_f64, -0.3];
        let (v, g) = loss.value_and_gradient(&theta);
        assert!((v - logistic_loss(&theta, &data)).abs() < 1e-15);
        let g2 = logistic_grad(&theta, &data);
        for (a, b) in g.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn epigraph_value_cases() {
        assert_eq!(epigraph_value(2.0_f64, 3.0), 0.0);
        assert_eq!(epigraph_value(3.0_f64, 2.0), 1.0);
        assert_eq!(epigraph_value(2.0_f64, 2.0), 0.0);
    }

    #[test]
    fn epigraph_subgradient_activation() {
        let inactive = epigraph_subgrad(1.0_f64, &[2.0, 2.0], 5.0);
        assert_eq!(inactive.d_theta, vec![0.0, 0.0]);
        assert_eq!(inactive.d_alpha, 0.0);

        let active = epigraph_subgrad(5.0_f64, &[2.0, 2.0], 1.0);
        assert_eq!(active.d_theta, vec![2.0, 2.0]);
        assert_eq!(active.d_alpha, -1.0);

        // Active at exact equality: the boundary belongs to the active side.
        let boundary = epigraph_subgrad(3.0_f64, &[1.0, 0.0], 3.0);
        assert_eq!(boundary.d_theta, vec![1.0, 0.0]);
        assert_eq!(boundary.d_alpha, -1.0);
    }

    #[test]
    fn objectives_hand_values() {
        assert_eq!(minmax_objective(&[1.0_f64, 2.0, 3.0]).unwrap(), 3.0);
        assert_eq!(minmax_objective(&[4.0_f64]).unwrap(), 4.0);
        assert!(minmax_objective::<f64>(&[]).is_err());

        let w = PenaltyWeights::new(vec![2.0_f64, 2.0]).unwrap();
        assert_eq!(penalty_objective(0.0, &[1.0, 1.0], &w).unwrap(), 4.0);
        assert_eq!(penalty_objective(0.5, &[1.5, 0.0], &w).unwrap(), 3.5);
        assert!(penalty_objective(0.0, &[1.0], &w).is_err());
    }

    #[test]
    fn quadratic_loss_value_and_gradient() {
        let q = QuadraticLoss::new(vec![1.0_f64]);
        assert_eq!(q.value(&[3.0]), 4.0);
        assert_eq!(q.gradient(&[3.0]), vec![4.0]);
        assert_eq!(q.value(&[1.0]), 0.0);
    }

    #[test]
    fn gradient_descent_separates_a_separable_set() {
        // Noise-free 1-D data, labels by sign: plain gradient descent must
        // reach perfect training accuracy.
        let data = dataset_1d(&[(-2.0, false), (-1.0, false), (1.0, true), (2.0, true)]);
        let loss = LogisticLoss::new(data.clone());
        let mut theta = vec![0.0];
        for _ in 0..500 {
            let g = loss.gradient(&theta);
            theta[0] -= 0.5 * g[0];
        }
        let correct = data
            .iter()
            .filter(|(u, z)| (dot(&theta, u) >= 0.0) == *z)
            .count();
        assert_eq!(correct, data.len());
        assert!(loss.value(&theta) < 0.3);
    }
}
