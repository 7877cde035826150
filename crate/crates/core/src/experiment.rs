use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::ChannelSpec;
use crate::config::{PenaltyWeights, RunConfig, StepSchedule};
use crate::datagen::{generate, heterogeneity_index, DataGenSpec};
use crate::engine::{run, Agent, TraceSettings};
use crate::error::{Error, Result};
use crate::fedavg::run_fedavg;
use crate::loss::{AgentDataset, LogisticLoss};
use crate::metrics::{accuracy, confusion, worst_agent_loss, ConfusionMatrix};
use crate::scalar::Scalar;
use crate::Method;

/// Which method(s) an experiment invocation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    FedFair,
    FedAvg,
    Both,
}

impl MethodChoice {
    pub fn runs_fedfair(self) -> bool {
        matches!(self, MethodChoice::FedFair | MethodChoice::Both)
    }

    pub fn runs_fedavg(self) -> bool {
        matches!(self, MethodChoice::FedAvg | MethodChoice::Both)
    }
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedfair" => Ok(MethodChoice::FedFair),
            "fedavg" => Ok(MethodChoice::FedAvg),
            "both" => Ok(MethodChoice::Both),
            other => Err(Error::InvalidParameter(format!(
                "unknown method `{other}` (expected fedfair, fedavg, or both)"
            ))),
        }
    }
}

impl fmt::Display for MethodChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodChoice::FedFair => "fedfair",
            MethodChoice::FedAvg => "fedavg",
            MethodChoice::Both => "both",
        })
    }
}

/// A full experiment description: the optimization run, the data recipe,
/// and the trace recording stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig<S: Scalar> {
    pub run: RunConfig<S>,
    pub data: DataGenSpec<S>,
    pub record_every: usize,
}

impl<S: Scalar> ExperimentConfig<S> {
    /// The shipped comparison setup: 12 agents, 4 features, radius-10
    /// ball, weight 2, uniform(0.5, 2) channel, 10^4 iterations, seed 1,
    /// heterogeneous data, one trace row every 100 iterations.
    pub fn standard() -> Self {
        ExperimentConfig {
            run: RunConfig::standard(12, 4),
            data: DataGenSpec::heterogeneous(12, 4),
            record_every: 100,
        }
    }
}

/// CLI-level overrides applied on top of a loaded config file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub record_every: Option<usize>,
}

impl Overrides {
    pub fn apply<S: Scalar>(&self, config: &mut ExperimentConfig<S>) {
        if let Some(seed) = self.seed {
            config.run.seed = seed;
        }
        if let Some(every) = self.record_every {
            config.record_every = every;
        }
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Splits config text into key/value entries. Everything after `#` on a
/// line is a comment; blank lines are skipped; duplicate keys are errors
/// so a typo cannot silently lose a setting.
fn tokenize(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config {
                line,
                message: "key and value must both be nonempty".into(),
            });
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.push(Entry { key, value, line });
    }
    Ok(entries)
}

struct KeyBag {
    entries: Vec<Entry>,
}

impl KeyBag {
    fn take(&mut self, key: &str) -> Option<Entry> {
        let pos = self.entries.iter().position(|e| e.key == key)?;
        Some(self.entries.remove(pos))
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => {
                let v = e.value.parse::<T>().map_err(|_| Error::Config {
                    line: e.line,
                    message: format!("could not parse `{}` as a value for {key}", e.value),
                })?;
                Ok(Some((v, e.line)))
            }
        }
    }

    fn take_scalar<S: Scalar>(&mut self, key: &str) -> Result<Option<(S, usize)>> {
        Ok(self
            .take_parsed::<f64>(key)?
            .map(|(v, line)| (S::cast(v), line)))
    }

    /// After all known keys are consumed, anything left is unknown.
    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some(e) => Err(Error::UnknownKey {
                key: e.key,
                line: e.line,
            }),
        }
    }
}

/// Parses experiment config text. Every key is optional; omitted keys keep
/// the standard-experiment defaults for the configured agent count and
/// dimension. Recognized keys:
///
/// - run: `num_agents`, `model_dim`, `ball_radius`, `step_c0`,
///   `step_exponent`, `penalty_weight`, `iterations`, `seed`,
///   `initial_alpha`
/// - channel: `channel_dist` (`uniform` or `rayleigh`), `channel_lo`,
///   `channel_hi` (uniform) or `channel_scale`, `channel_floor` (rayleigh)
/// - recording: `record_every`
/// - data: `agent_shift_scale`, `noise_lo`, `noise_hi`, `test_size`,
///   `base_size`, `size_step`
pub fn parse_experiment_config<S: Scalar>(text: &str) -> Result<ExperimentConfig<S>> {
    let mut bag = KeyBag {
        entries: tokenize(text)?,
    };

    let num_agents = match bag.take_parsed::<usize>("num_agents")? {
        Some((n, line)) => {
            if n == 0 {
                return Err(Error::Config {
                    line,
                    message: "num_agents must be at least 1".into(),
                });
            }
            n
        }
        None => 12,
    };
    let model_dim = match bag.take_parsed::<usize>("model_dim")? {
        Some((m, line)) => {
            if m == 0 {
                return Err(Error::Config {
                    line,
                    message: "model_dim must be at least 1".into(),
                });
            }
            m
        }
        None => 4,
    };

    let mut run = RunConfig::<S>::standard(num_agents, model_dim);
    let mut data = DataGenSpec::<S>::heterogeneous(num_agents, model_dim);
    let mut record_every = 100usize;

    if let Some((r, _)) = bag.take_scalar::<S>("ball_radius")? {
        run.ball_radius = r;
    }

    let c0 = bag.take_scalar::<S>("step_c0")?;
    let exponent = bag.take_scalar::<S>("step_exponent")?;
    if c0.is_some() || exponent.is_some() {
        let line = c0.map(|(_, l)| l).or(exponent.map(|(_, l)| l)).unwrap();
        let c0 = c0.map(|(v, _)| v).unwrap_or_else(|| run.schedule.c0());
        let exp = exponent
            .map(|(v, _)| v)
            .unwrap_or_else(|| run.schedule.exponent());
        run.schedule = StepSchedule::new(c0, exp).map_err(|e| Error::Config {
            line,
            message: e.to_string(),
        })?;
    }

    if let Some((w, line)) = bag.take_scalar::<S>("penalty_weight")? {
        run.weights = PenaltyWeights::uniform(num_agents, w).map_err(|e| Error::Config {
            line,
            message: e.to_string(),
        })?;
    }

    let dist = bag.take("channel_dist");
    let lo = bag.take_scalar::<S>("channel_lo")?;
    let hi = bag.take_scalar::<S>("channel_hi")?;
    let scale = bag.take_scalar::<S>("channel_scale")?;
    let floor = bag.take_scalar::<S>("channel_floor")?;
    let dist_name = match &dist {
        Some(e) => match e.value.as_str() {
            "uniform" | "rayleigh" => e.value.clone(),
            other => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("channel_dist must be `uniform` or `rayleigh`, got `{other}`"),
                })
            }
        },
        None => "uniform".to_string(),
    };
    if dist_name == "uniform" {
        if let Some((_, line)) = scale.or(floor) {
            return Err(Error::Config {
                line,
                message: "channel_scale/channel_floor apply only when channel_dist = rayleigh"
                    .into(),
            });
        }
        run.channel = ChannelSpec::Uniform {
            lo: lo.map(|(v, _)| v).unwrap_or_else(|| S::cast(0.5)),
            hi: hi.map(|(v, _)| v).unwrap_or_else(|| S::cast(2.0)),
        };
    } else {
        if let Some((_, line)) = lo.or(hi) {
            return Err(Error::Config {
                line,
                message: "channel_lo/channel_hi apply only when channel_dist = uniform".into(),
            });
        }
        let dist_line = dist.as_ref().map(|e| e.line).unwrap_or(1);
        let (Some((scale, _)), Some((floor, _))) = (scale, floor) else {
            return Err(Error::Config {
                line: dist_line,
                message: "channel_dist = rayleigh requires channel_scale and channel_floor".into(),
            });
        };
        run.channel = ChannelSpec::TruncatedRayleigh { scale, floor };
    }

    if let Some((t, line)) = bag.take_parsed::<usize>("iterations")? {
        if t == 0 {
            return Err(Error::Config {
                line,
                message: "iterations must be at least 1".into(),
            });
        }
        run.iterations = t;
    }
    if let Some((s, _)) = bag.take_parsed::<u64>("seed")? {
        run.seed = s;
    }
    if let Some((a, _)) = bag.take_scalar::<S>("initial_alpha")? {
        run.initial_alpha = Some(a);
    }

    if let Some((e, line)) = bag.take_parsed::<usize>("record_every")? {
        if e == 0 {
            return Err(Error::Config {
                line,
                message: "record_every must be at least 1".into(),
            });
        }
        record_every = e;
    }

    if let Some((s, _)) = bag.take_scalar::<S>("agent_shift_scale")? {
        data.agent_shift_scale = s;
    }
    let noise_lo = bag.take_scalar::<S>("noise_lo")?;
    let noise_hi = bag.take_scalar::<S>("noise_hi")?;
    if noise_lo.is_some() || noise_hi.is_some() {
        let line = noise_lo
            .map(|(_, l)| l)
            .or(noise_hi.map(|(_, l)| l))
            .unwrap();
        let lo = noise_lo.map(|(v, _)| v).unwrap_or_else(|| S::cast(0.2));
        let hi = noise_hi.map(|(v, _)| v).unwrap_or_else(|| S::cast(1.0));
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::Config {
                line,
                message: format!("noise_lo ({lo}) must not exceed noise_hi ({hi})"),
            });
        }
        data.noise_scales = (0..num_agents)
            .map(|i| {
                if num_agents == 1 {
                    lo
                } else {
                    lo + (hi - lo) * S::from_count(i) / S::from_count(num_agents - 1)
                }
            })
            .collect();
    }
    if let Some((t, _)) = bag.take_parsed::<usize>("test_size")? {
        data.test_size = t;
    }
    let base = bag.take_parsed::<usize>("base_size")?;
    let step = bag.take_parsed::<usize>("size_step")?;
    if base.is_some() || step.is_some() {
        let b = base.map(|(v, _)| v).unwrap_or(50);
        let s = step.map(|(v, _)| v).unwrap_or(25);
        data.sizes = (0..num_agents).map(|i| b + s * i).collect();
    }

    bag.finish()?;
    run.validate()?;
    data.validate()?;
    Ok(ExperimentConfig {
        run,
        data,
        record_every,
    })
}

/// Loads and parses a config file, attaching the path to parse errors.
pub fn load_experiment_config<S: Scalar>(path: &Path) -> Result<ExperimentConfig<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment_config(&text).map_err(|e| match e {
        Error::Config { line, message } => Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        },
        Error::UnknownKey { key, line } => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("unknown configuration key `{key}`"),
        },
        other => other,
    })
}

/// Builds one logistic-loss agent per dataset, taking penalty weights from
/// the run configuration.
pub fn build_agents<S: Scalar>(
    config: &RunConfig<S>,
    datasets: Vec<AgentDataset<S>>,
) -> Result<Vec<Agent<S>>> {
    if datasets.len() != config.num_agents {
        return Err(Error::DimensionMismatch {
            expected: config.num_agents,
            actual: datasets.len(),
        });
    }
    datasets
        .into_iter()
        .enumerate()
        .map(|(i, d)| Agent::new(i + 1, config.weights.get(i), Box::new(LogisticLoss::new(d))))
        .collect()
}

/// Results for one method within an experiment.
#[derive(Debug, Clone)]
pub struct MethodReport<S: Scalar> {
    pub method: Method,
    pub final_accuracy: S,
    pub worst_agent_loss: S,
    pub worst_agent_id: usize,
    pub confusion: ConfusionMatrix,
    pub slots_used: u64,
    pub trace_path: PathBuf,
    pub confusion_path: PathBuf,
}

/// Everything an experiment run produced, mirrored in `summary.txt`.
#[derive(Debug, Clone)]
pub struct ExperimentSummary<S: Scalar> {
    pub heterogeneity: Option<S>,
    pub reports: Vec<MethodReport<S>>,
    pub slot_ratio: Option<f64>,
    pub summary_path: PathBuf,
}

fn method_label(method: Method) -> &'static str {
    match method {
        Method::FedFair => "fedfair",
        Method::FedAvg => "fedavg",
    }
}

fn write_summary<S: Scalar>(
    config: &ExperimentConfig<S>,
    summary: &ExperimentSummary<S>,
    path: &Path,
) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("num_agents = {}\n", config.run.num_agents));
    text.push_str(&format!("model_dim = {}\n", config.run.model_dim));
    text.push_str(&format!("iterations = {}\n", config.run.iterations));
    text.push_str(&format!("seed = {}\n", config.run.seed));
    text.push_str(&format!("record_every = {}\n", config.record_every));
    if let Some(h) = summary.heterogeneity {
        text.push_str(&format!("heterogeneity_index = {h}\n"));
    }
    for r in &summary.reports {
        let m = method_label(r.method);
        text.push_str(&format!("{m}_final_accuracy = {}\n", r.final_accuracy));
        text.push_str(&format!("{m}_worst_agent_loss = {}\n", r.worst_agent_loss));
        text.push_str(&format!("{m}_worst_agent_id = {}\n", r.worst_agent_id));
        text.push_str(&format!(
            "{m}_class0_recall = {}\n",
            r.confusion.class0_recall()
        ));
        text.push_str(&format!(
            "{m}_class1_recall = {}\n",
            r.confusion.class1_recall()
        ));
        text.push_str(&format!("{m}_slots_used = {}\n", r.slots_used));
    }
    if let Some(ratio) = summary.slot_ratio {
        text.push_str(&format!("slot_ratio_fedavg_to_fedfair = {ratio}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the configured method(s) on freshly generated data and writes all
/// artifacts into `out_dir`: `trace_<method>.csv`, `confusion_<method>.csv`
/// and `summary.txt`. Deterministic: a seed fixes the data, the channel,
/// and therefore every output byte.
pub fn run_experiment<S: Scalar>(
    config: &ExperimentConfig<S>,
    method: MethodChoice,
    out_dir: &Path,
) -> Result<ExperimentSummary<S>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (datasets, test) = generate(&config.data, config.run.seed)?;
    let heterogeneity = if datasets.len() >= 2 {
        Some(heterogeneity_index(&datasets)?)
    } else {
        None
    };
    let agents = build_agents(&config.run, datasets)?;
    let settings = TraceSettings {
        record_every: config.record_every,
        test_data: Some(&test),
        reference_optimum: None,
    };

    let mut reports = Vec::new();
    let mut ran = Vec::new();
    if method.runs_fedfair() {
        ran.push((Method::FedFair, run(&config.run, &agents, &settings)?));
    }
    if method.runs_fedavg() {
        ran.push((Method::FedAvg, run_fedavg(&config.run, &agents, &settings)?));
    }

    for (m, trace) in &ran {
        let label = method_label(*m);
        let trace_path = out_dir.join(format!("trace_{label}.csv"));
        trace.write_csv(&trace_path)?;
        let theta = &trace.final_state.theta;
        let matrix = confusion(theta, &test);
        let confusion_path = out_dir.join(format!("confusion_{label}.csv"));
        matrix.write_csv(&confusion_path)?;
        let (worst, worst_id) = worst_agent_loss(theta, &agents)?;
        reports.push(MethodReport {
            method: *m,
            final_accuracy: accuracy(theta, &test)?,
            worst_agent_loss: worst,
            worst_agent_id: worst_id,
            confusion: matrix,
            slots_used: trace.rows.last().expect("trace always has rows").slots_used,
            trace_path,
            confusion_path,
        });
    }

    let slot_ratio = match (&reports[..], method) {
        ([fair, avg], MethodChoice::Both) => Some(avg.slots_used as f64 / fair.slots_used as f64),
        _ => None,
    };
    let summary_path = out_dir.join("summary.txt");
    let summary = ExperimentSummary {
        heterogeneity,
        reports,
        slot_ratio,
        summary_path: summary_path.clone(),
    };
    write_summary(config, &summary, &summary_path)?;
    Ok(summary)
}
