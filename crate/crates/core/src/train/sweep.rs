use std::collections::HashMap;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{evaluate, fit, Metrics, RunSettings, TrainError, TrainOutcome};
use crate::corpus::{truncate_events, Dataset, Deadline, Split};
use crate::graph::assemble_hetero_graph;
use crate::model::Ablation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Checkpoints are elapsed-time deadlines in the dataset's time unit.
    Time,
    /// Checkpoints are per-tweet interaction counts.
    Count,
}

impl std::str::FromStr for SweepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time" => Ok(SweepMode::Time),
            "count" => Ok(SweepMode::Count),
            other => Err(format!("unknown sweep mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub mode: SweepMode,
    /// Strictly increasing; `f64::INFINITY` keeps every event.
    pub checkpoints: Vec<f64>,
    /// Train once on the full data and only re-evaluate on each truncated
    /// graph instead of retraining per checkpoint.
    pub reuse_model: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyDetectionCurve {
    pub mode: SweepMode,
    pub reuse_model: bool,
    pub checkpoints: Vec<f64>,
    /// Test accuracy per checkpoint.
    pub accuracy: Vec<f64>,
    /// Propagation events surviving each truncation.
    pub events_kept: Vec<usize>,
    pub metrics: Vec<Metrics>,
}

/// Checkpoints at 0, 0.5, 1, 2, 4, 8, 12 and 24 hours, expressed in
/// `time_unit` (seconds, minutes, hours or days).
pub fn default_time_checkpoints(time_unit: &str) -> Result<Vec<f64>, TrainError> {
    let per_hour = match time_unit {
        "seconds" | "s" => 3600.0,
        "minutes" | "min" | "m" => 60.0,
        "hours" | "h" => 1.0,
        "days" | "d" => 1.0 / 24.0,
        other => {
            return Err(TrainError::Config(format!(
                "no default checkpoints for time unit `{other}`; pass checkpoints explicitly"
            )))
        }
    };
    Ok([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0, 24.0].iter().map(|h| h * per_hour).collect())
}

pub fn default_count_checkpoints() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 20.0, 40.0, 80.0]
}

fn deadline(mode: SweepMode, c: f64) -> Result<Deadline, TrainError> {
    match mode {
        SweepMode::Time => Ok(Deadline::ElapsedTime(c)),
        SweepMode::Count if c == f64::INFINITY => Ok(Deadline::RetweetCount(usize::MAX)),
        SweepMode::Count if c >= 0.0 && c.fract() == 0.0 => Ok(Deadline::RetweetCount(c as usize)),
        SweepMode::Count => Err(TrainError::Config(format!("count checkpoint {c} is not a non-negative integer"))),
    }
}

/// Test accuracy of the model at each propagation checkpoint. The text
/// view never changes; only the tweet–user view is rebuilt from the
/// truncated events. Checkpoints run on separate threads.
pub fn early_detection_sweep(
    d: &Dataset,
    split: &Split,
    settings: &RunSettings,
    opts: &SweepOptions,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<EarlyDetectionCurve, TrainError> {
    if opts.checkpoints.is_empty() {
        return Err(TrainError::Config("no checkpoints given".into()));
    }
    if opts.checkpoints.iter().any(|c| c.is_nan()) || opts.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TrainError::Config("checkpoints must be strictly increasing".into()));
    }
    let deadlines = opts
        .checkpoints
        .iter()
        .map(|&c| deadline(opts.mode, c))
        .collect::<Result<Vec<_>, _>>()?;

    let base = if opts.reuse_model {
        Some(fit(d, split, settings, pretrained)?.0.model)
    } else {
        None
    };
    let results: Vec<Result<(usize, Metrics), TrainError>> = thread::scope(|s| {
        let handles: Vec<_> = deadlines
            .iter()
            .map(|&dl| {
                let base = base.as_ref();
                s.spawn(move || {
                    let truncated = truncate_events(d, dl);
                    let kept = truncated.events().len();
                    let metrics = match base {
                        Some(model) => {
                            let mut m = model.clone();
                            m.replace_tu_view(&assemble_hetero_graph(&truncated, &settings.graph)?)?;
                            evaluate(&m, &truncated, &split.test_ids)?
                        }
                        None => fit(&truncated, split, settings, pretrained)?.1,
                    };
                    Ok((kept, metrics))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });

    let mut curve = EarlyDetectionCurve {
        mode: opts.mode,
        reuse_model: opts.reuse_model,
        checkpoints: opts.checkpoints.clone(),
        accuracy: Vec::new(),
        events_kept: Vec::new(),
        metrics: Vec::new(),
    };
    for r in results {
        let (kept, m) = r?;
        curve.accuracy.push(m.accuracy);
        curve.events_kept.push(kept);
        curve.metrics.push(m);
    }
    Ok(curve)
}

/// Trains and evaluates with the given ablation mode.
pub fn ablation_run(
    d: &Dataset,
    split: &Split,
    settings: &RunSettings,
    mode: Ablation,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<(TrainOutcome, Metrics), TrainError> {
    let mut s = settings.clone();
    s.model.ablation = mode;
    fit(d, split, &s, pretrained)
}
