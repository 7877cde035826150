use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{distance, norm};
use crate::loss::AgentDataset;
use crate::scalar::Scalar;
use crate::seeds::{derive_rng, StreamPurpose};

/// Recipe for the synthetic heterogeneous classification data: two class
/// clouds shared by everyone, plus three per-agent knobs: dataset size,
/// noise scale, and a fixed feature shift of norm `agent_shift_scale`.
///
/// The shift direction is controlled by `shift_drifts`: entry i in [-1, 1]
/// is the component of agent i's shift along the class-separation axis
/// (positive values point toward the class-1 mean), with the remaining
/// component drawn orthogonally from the agent's seed stream. Aligning
/// most agents' drifts toward the class-0 side makes plain loss averaging
/// trade away class-0 recall on the unshifted test distribution, which is
/// exactly the failure mode worst-case training is meant to prevent.
#[derive(Debug, Clone, PartialEq)]
pub struct DataGenSpec<S: Scalar> {
    pub num_agents: usize,
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub class_mean_0: Vec<S>,
    pub class_mean_1: Vec<S>,
    pub agent_shift_scale: S,
    pub shift_drifts: Vec<S>,
    pub noise_scales: Vec<S>,
    pub test_size: usize,
}

impl<S: Scalar> DataGenSpec<S> {
    /// The default heterogeneous population used by the shipped experiment.
    ///
    /// Class means differ on the first dim-1 coordinates and share a
    /// constant 1.0 in the last coordinate, which acts as an intercept
    /// carrier: a linear score over these features can express shifted
    /// decision boundaries, so systematic per-agent shifts translate into
    /// visible class bias instead of canceling out. Dataset sizes grow
    /// linearly across agents; noise scales are evenly spaced with every
    /// second agent using a uniform instead of a Gaussian law; three in
    /// four agents drift toward the class-0 region, the rest the other way.
    pub fn heterogeneous(num_agents: usize, dim: usize) -> Self {
        assert!(num_agents >= 1 && dim >= 1, "need agents and a dimension");
        let half = S::cast(0.5);
        let (mut mean0, mut mean1) = (vec![-half; dim], vec![half; dim]);
        if dim >= 2 {
            mean0[dim - 1] = S::one();
            mean1[dim - 1] = S::one();
        }
        let noise_lo = 0.2;
        let noise_hi = 1.0;
        let noise_scales = (0..num_agents)
            .map(|i| {
                if num_agents == 1 {
                    S::cast(noise_lo)
                } else {
                    S::cast(noise_lo + (noise_hi - noise_lo) * i as f64 / (num_agents - 1) as f64)
                }
            })
            .collect();
        DataGenSpec {
            num_agents,
            dim,
            sizes: (0..num_agents).map(|i| 50 + 25 * i).collect(),
            class_mean_0: mean0,
            class_mean_1: mean1,
            agent_shift_scale: S::cast(1.8),
            shift_drifts: (1..=num_agents)
                .map(|i| {
                    if i % 4 == 0 {
                        S::cast(0.35)
                    } else {
                        S::cast(-0.9)
                    }
                })
                .collect(),
            noise_scales,
            test_size: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::InvalidParameter("need at least one agent".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter(
                "feature dimension must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("sizes", self.sizes.len()),
            ("shift_drifts", self.shift_drifts.len()),
            ("noise_scales", self.noise_scales.len()),
        ] {
            if v != self.num_agents {
                return Err(Error::InvalidParameter(format!(
                    "{name} must have one entry per agent ({} expected, {v} given)",
                    self.num_agents
                )));
            }
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "every agent needs at least one point".into(),
            ));
        }
        if self.class_mean_0.len() != self.dim || self.class_mean_1.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: self.class_mean_0.len().max(self.class_mean_1.len()),
            });
        }
        if self.agent_shift_scale < S::zero() || !self.agent_shift_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "agent_shift_scale must be finite and nonnegative, got {}",
                self.agent_shift_scale
            )));
        }
        for &d in &self.shift_drifts {
            if !(d >= -S::one() && d <= S::one()) {
                return Err(Error::InvalidParameter(format!(
                    "shift drifts must lie in [-1, 1], got {d}"
                )));
            }
        }
        // Zero noise is allowed: it gives the noise-free separable control.
        for &s in &self.noise_scales {
            if s < S::zero() || !s.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "noise scales must be finite and nonnegative, got {s}"
                )));
            }
        }
        if self.test_size == 0 {
            return Err(Error::InvalidParameter(
                "test_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn median_noise(&self) -> S {
        let mut scales = self.noise_scales.clone();
        scales.sort_by(|a, b| a.partial_cmp(b).expect("noise scales are finite"));
        let n = scales.len();
        if n % 2 == 1 {
            scales[n / 2]
        } else {
            (scales[n / 2 - 1] + scales[n / 2]) / S::cast(2.0)
        }
    }
}

/// Unit vector in the direction of the class separation, or None when the
/// means coincide.
fn separation_axis<S: Scalar>(spec: &DataGenSpec<S>) -> Option<Vec<S>> {
    let gap: Vec<S> = spec
        .class_mean_1
        .iter()
        .zip(&spec.class_mean_0)
        .map(|(&a, &b)| a - b)
        .collect();
    let n = norm(&gap);
    if n > S::zero() {
        Some(gap.iter().map(|&g| g / n).collect())
    } else {
        None
    }
}

/// Agent i's fixed feature shift: norm `agent_shift_scale`, with the
/// configured component along the separation axis and a seeded random
/// orthogonal remainder.
fn agent_shift<S: Scalar>(spec: &DataGenSpec<S>, agent: usize, master_seed: u64) -> Vec<S> {
    if spec.agent_shift_scale == S::zero() {
        return vec![S::zero(); spec.dim];
    }
    let mut rng = derive_rng(master_seed, StreamPurpose::DatagenShift, agent, 0);
    let axis = separation_axis(spec);
    let drift = spec.shift_drifts[agent - 1];

    let mut direction = vec![S::zero(); spec.dim];
    if let Some(axis) = &axis {
        for (d, &a) in direction.iter_mut().zip(axis) {
            *d = drift * a;
        }
        let perp_weight = (S::one() - drift * drift).sqrt();
        if perp_weight > S::zero() {
            if let Some(perp) = random_orthogonal_unit(&mut rng, axis, spec.dim) {
                for (d, &p) in direction.iter_mut().zip(&perp) {
                    *d = *d + perp_weight * p;
                }
            } else {
                // No orthogonal room (dim 1): keep the axial component and
                // rescale it to preserve the shift norm.
                for (d, &a) in direction.iter_mut().zip(axis) {
                    *d = a * drift.signum();
                }
            }
        }
    } else {
        // Coinciding class means: no separation axis, any unit vector does.
        direction = random_unit(&mut rng, spec.dim);
    }
    direction
        .iter()
        .map(|&d| spec.agent_shift_scale * d)
        .collect()
}

fn random_unit<S: Scalar, R: Rng>(rng: &mut R, dim: usize) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..dim).map(|_| S::sample_standard_normal(rng)).collect();
        let n = norm(&v);
        if n > S::cast(1e-6) {
            return v.iter().map(|&x| x / n).collect();
        }
    }
}

fn random_orthogonal_unit<S: Scalar, R: Rng>(
    rng: &mut R,
    axis: &[S],
    dim: usize,
) -> Option<Vec<S>> {
    if dim < 2 {
        return None;
    }
    for _ in 0..16 {
        let v = random_unit::<S, R>(rng, dim);
        let proj = crate::geometry::dot(&v, axis);
        let residual: Vec<S> = v.iter().zip(axis).map(|(&x, &a)| x - proj * a).collect();
        let n = norm(&residual);
        if n > S::cast(1e-6) {
            return Some(residual.iter().map(|&x| x / n).collect());
        }
    }
    None
}

fn sample_points<S: Scalar>(
    spec: &DataGenSpec<S>,
    rng: &mut ChaCha8Rng,
    count: usize,
    shift: &[S],
    noise_scale: S,
    gaussian_noise: bool,
) -> AgentDataset<S> {
    let half = S::cast(0.5);
    // A symmetric uniform with half-width sqrt(3)*s has standard
    // deviation exactly s, matching the Gaussian alternative.
    let uniform_halfwidth = noise_scale * S::cast(3.0).sqrt();
    let mut features = Vec::with_capacity(count * spec.dim);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label = S::sample_unit(rng) < half;
        let mean = if label {
            &spec.class_mean_1
        } else {
            &spec.class_mean_0
        };
        for j in 0..spec.dim {
            let eps = if gaussian_noise {
                noise_scale * S::sample_standard_normal(rng)
            } else {
                uniform_halfwidth * (S::cast(2.0) * S::sample_unit(rng) - S::one())
            };
            features.push(mean[j] + shift[j] + eps);
        }
        labels.push(label);
    }
    AgentDataset::from_flat(features, labels, spec.dim).expect("count >= 1 by validation")
}

/// Generates every agent's training set plus the shared held-out test set.
///
/// Labels are fair coin flips. Agent i's features are mean(label) +
/// shift_i + noise, with Gaussian noise for even-numbered agents and
/// uniform noise (same standard deviation) for odd-numbered ones, so the
/// population mixes noise families as well as scales. The test set is
/// unshifted, at the median noise scale, Gaussian. Fully deterministic in
/// `master_seed`; every agent draws from its own stream.
pub fn generate<S: Scalar>(
    spec: &DataGenSpec<S>,
    master_seed: u64,
) -> Result<(Vec<AgentDataset<S>>, AgentDataset<S>)> {
    spec.validate()?;
    let mut agents = Vec::with_capacity(spec.num_agents);
    for i in 1..=spec.num_agents {
        let shift = agent_shift(spec, i, master_seed);
        let mut rng = derive_rng(master_seed, StreamPurpose::DatagenAgent, i, 0);
        agents.push(sample_points(
            spec,
            &mut rng,
            spec.sizes[i - 1],
            &shift,
            spec.noise_scales[i - 1],
            i % 2 == 0,
        ));
    }
    let mut test_rng = derive_rng(master_seed, StreamPurpose::DatagenTest, 0, 0);
    let no_shift = vec![S::zero(); spec.dim];
    let test = sample_points(
        spec,
        &mut test_rng,
        spec.test_size,
        &no_shift,
        spec.median_noise(),
        true,
    );
    Ok((agents, test))
}

/// Mean pairwise distance between the agents' empirical feature means:
/// zero exactly when all empirical means coincide, and an easy scalar
/// witness that generated data is actually heterogeneous.
pub fn heterogeneity_index<S: Scalar>(datasets: &[AgentDataset<S>]) -> Result<S> {
    if datasets.len() < 2 {
        return Err(Error::InvalidParameter(
            "heterogeneity index needs at least two agents".into(),
        ));
    }
    let dim = datasets[0].dim();
    for d in datasets {
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: d.dim(),
            });
        }
    }
    let means: Vec<Vec<S>> = datasets.iter().map(|d| d.feature_mean()).collect();
    let mut total = S::zero();
    let mut pairs = 0usize;
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            total = total + distance(&means[i], &means[j]);
            pairs += 1;
        }
    }
    Ok(total / S::from_count(pairs))
}

/// Writes one dataset as CSV with header `u_1,...,u_m,z` so external tools
/// can replicate a run's inputs. Feature values round-trip exactly.
pub fn write_dataset_csv<S: Scalar>(data: &AgentDataset<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = (1..=data.dim())
        .map(|j| format!("u_{j}"))
        .collect::<Vec<_>>();
    header.push("z".into());
    writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for (u, z) in data.iter() {
        let mut row = u.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        row.push(if z { "1".into() } else { "0".into() });
        writeln!(out, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset written by `write_dataset_csv`.
pub fn read_dataset_csv<S: Scalar>(path: &Path) -> Result<AgentDataset<S>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "empty dataset file".into(),
        });
    };
    let header = header.map_err(|e| Error::io(path, e))?;
    let cols: Vec<&str> = header.split(',').collect();
    let dim = cols.len().saturating_sub(1);
    let expected: Vec<String> = (1..=dim).map(|j| format!("u_{j}")).collect();
    if dim == 0 || cols[dim] != "z" || cols[..dim] != expected[..] {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("unexpected dataset header `{header}`"),
        });
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                message: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        let mut u = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            u.push(f.parse::<f64>().map(S::cast).map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                message: format!("bad feature value `{f}`"),
            })?);
        }
        let z = match fields[dim] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno,
                    message: format!("bad label `{other}` (labels are 0 or 1)"),
                })
            }
        };
        points.push((u, z));
    }
    AgentDataset::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dot;
    use crate::loss::LogisticLoss;
    use crate::loss::LossFunction;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = DataGenSpec::<f64>::heterogeneous(4, 3);
        let (a1, t1) = generate(&spec, 42).unwrap();
        let (a2, t2) = generate(&spec, 42).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(t1, t2);
        let (a3, _) = generate(&spec, 43).unwrap();
        assert_ne!(a1, a3);
    }

    #[test]
    fn generated_shapes_match_the_request() {
        let spec = DataGenSpec::<f64>::heterogeneous(12, 4);
        let (agents, test) = generate(&spec, 7).unwrap();
        assert_eq!(agents.len(), 12);
        for (i, d) in agents.iter().enumerate() {
            assert_eq!(d.dim(), 4);
            assert_eq!(d.len(), 50 + 25 * i);
        }
        assert_eq!(test.len(), 2000);
        assert_eq!(test.dim(), 4);
    }

    #[test]
    fn labels_are_balanced_at_scale() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(3, 2);
        spec.sizes = vec![2000, 1500, 1000];
        let (agents, test) = generate(&spec, 11).unwrap();
        for d in agents.iter().chain(std::iter::once(&test)) {
            let f = d.label_frequency();
            assert!((0.45..=0.55).contains(&f), "label frequency {f}");
        }
    }

    #[test]
    fn shift_norm_matches_the_scale() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(4, 4);
        spec.agent_shift_scale = 0.75;
        for i in 1..=4 {
            let shift = agent_shift(&spec, i, 9);
            assert!((norm(&shift) - 0.75).abs() < 1e-12, "agent {i}");
        }
        spec.agent_shift_scale = 0.0;
        assert_eq!(agent_shift(&spec, 1, 9), vec![0.0; 4]);
    }

    #[test]
    fn drift_controls_the_axial_component() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(4, 4);
        spec.agent_shift_scale = 1.0;
        spec.shift_drifts = vec![-0.9, 0.35, 1.0, 0.0];
        let axis = separation_axis(&spec).unwrap();
        for (i, &want) in spec.shift_drifts.iter().enumerate() {
            let shift = agent_shift(&spec, i + 1, 21);
            let along = dot(&shift, &axis);
            assert!(
                (along - want).abs() < 1e-12,
                "agent {} axial {along}",
                i + 1
            );
        }
    }

    #[test]
    fn odd_agents_use_bounded_noise_and_even_agents_do_not() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(2, 2);
        spec.sizes = vec![10_000, 10_000];
        spec.agent_shift_scale = 0.0;
        spec.noise_scales = vec![0.5, 0.5];
        let (agents, _) = generate(&spec, 5).unwrap();
        let bound = 0.5 * 3.0_f64.sqrt() + 1e-12;

        // Agent 1 (odd): uniform noise, every deviation inside the bound.
        let d1 = &agents[0];
        let mut max_dev: f64 = 0.0;
        for (u, z) in d1.iter() {
            let mean = if z {
                &spec.class_mean_1
            } else {
                &spec.class_mean_0
            };
            for (x, m) in u.iter().zip(mean) {
                max_dev = max_dev.max((x - m).abs());
            }
        }
        assert!(
            max_dev <= bound,
            "uniform deviation {max_dev} exceeds {bound}"
        );

        // Agent 2 (even): Gaussian noise, the same bound is exceeded
        // with overwhelming probability at this sample size.
        let d2 = &agents[1];
        let mut exceeded = false;
        for (u, z) in d2.iter() {
            let mean = if z {
                &spec.class_mean_1
            } else {
                &spec.class_mean_0
            };
            if u.iter().zip(mean).any(|(x, m)| (x - m).abs() > bound) {
                exceeded = true;
                break;
            }
        }
        assert!(exceeded, "gaussian noise never left the uniform support");
    }

    #[test]
    fn heterogeneity_index_hand_values() {
        let a = AgentDataset::new(vec![(vec![0.0, 0.0], true)]).unwrap();
        let b = AgentDataset::new(vec![(vec![1.0, 0.0], false)]).unwrap();
        assert_eq!(heterogeneity_index(&[a.clone(), b]).unwrap(), 1.0);
        assert_eq!(heterogeneity_index(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert!(heterogeneity_index(&[a]).is_err());
    }

    #[test]
    fn homogeneous_control_has_vanishing_heterogeneity() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(2, 2);
        spec.agent_shift_scale = 0.0;
        spec.noise_scales = vec![0.5, 0.5];
        spec.sizes = vec![10_000, 10_000];
        // The two agents still use different noise families, but both are
        // zero mean, so with the shift off and equal scales the empirical
        // feature means differ only by sampling variation.
        let (agents, _) = generate(&spec, 3).unwrap();
        let index = heterogeneity_index(&agents[..]).unwrap();
        assert!(
            index < 0.05,
            "heterogeneity {index} too large for homogeneous data"
        );
    }

    #[test]
    fn noise_free_control_is_linearly_separable() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(2, 3);
        spec.agent_shift_scale = 0.0;
        spec.noise_scales = vec![0.0, 0.0];
        spec.sizes = vec![60, 60];
        let (agents, _) = generate(&spec, 17).unwrap();
        let pooled = AgentDataset::new(
            agents
                .iter()
                .flat_map(|d| d.iter().map(|(u, z)| (u.to_vec(), z)))
                .collect(),
        )
        .unwrap();
        let loss = LogisticLoss::new(pooled.clone());
        let mut theta = vec![0.0; 3];
        for _ in 0..300 {
            let g = loss.gradient(&theta);
            for (t, gi) in theta.iter_mut().zip(&g) {
                *t -= 1.0 * gi;
            }
        }
        let correct = pooled
            .iter()
            .filter(|(u, z)| (dot(&theta, u) >= 0.0) == *z)
            .count();
        assert_eq!(correct, pooled.len(), "separable control not separated");
        assert!(loss.value(&theta) < 0.2);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let spec = DataGenSpec::<f64>::heterogeneous(1, 3);
        let (agents, _) = generate(&spec, 23).unwrap();
        let dir = std::env::temp_dir().join("fedfair-datagen-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("agent_1.csv");
        write_dataset_csv(&agents[0], &path).unwrap();
        let back: AgentDataset<f64> = read_dataset_csv(&path).unwrap();
        assert_eq!(back, agents[0]);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn reader_rejects_malformed_datasets() {
        let dir = std::env::temp_dir().join("fedfair-datagen-test");
        std::fs::create_dir_all(&dir).unwrap();

        let bad_header = dir.join("bad_header.csv");
        std::fs::write(&bad_header, "a,b,z\n1,2,1\n").unwrap();
        assert!(read_dataset_csv::<f64>(&bad_header).is_err());

        let bad_label = dir.join("bad_label.csv");
        std::fs::write(&bad_label, "u_1,z\n1.5,2\n").unwrap();
        let err = read_dataset_csv::<f64>(&bad_label).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        std::fs::remove_file(&bad_header).ok();
        std::fs::remove_file(&bad_label).ok();
    }

    #[test]
    fn validation_rejects_inconsistent_settings() {
        let mut spec = DataGenSpec::<f64>::heterogeneous(3, 2);
        assert!(spec.validate().is_ok());
        spec.sizes = vec![10, 10];
        assert!(spec.validate().is_err());
        let mut spec = DataGenSpec::<f64>::heterogeneous(3, 2);
        spec.shift_drifts = vec![0.0, 2.0, 0.0];
        assert!(spec.validate().is_err());
        let mut spec = DataGenSpec::<f64>::heterogeneous(3, 2);
        spec.noise_scales = vec![0.5, -0.1, 0.5];
        assert!(spec.validate().is_err());
        let mut spec = DataGenSpec::<f64>::heterogeneous(3, 2);
        spec.test_size = 0;
        assert!(spec.validate().is_err());
    }
}
