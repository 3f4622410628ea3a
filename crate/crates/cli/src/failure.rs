//! Exit codes and the one-line JSON error report.

use std::fmt;

use hgat::autodiff::TensorError;
use hgat::corpus::CorpusError;
use hgat::graph::GraphError;
use hgat::model::ModelError;
use hgat::train::TrainError;

/// Invalid or missing configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A numeric check that ran to completion but failed.
#[derive(Debug)]
pub struct NumericError(pub String);

impl fmt::Display for NumericError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    Internal,
    Config,
    Data,
    Numeric,
}

impl Failure {
    pub fn code(self) -> i32 {
        match self {
            Failure::Internal => 1,
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Numeric => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Failure::Internal => "internal",
            Failure::Config => "config",
            Failure::Data => "data",
            Failure::Numeric => "numeric",
        }
    }
}

fn tensor(e: &TensorError) -> Failure {
    match e {
        TensorError::Checkpoint(_) => Failure::Data,
        _ => Failure::Numeric,
    }
}

fn graph(e: &GraphError) -> Failure {
    match e {
        GraphError::InvalidConfig(_) => Failure::Config,
        _ => Failure::Data,
    }
}

fn corpus(e: &CorpusError) -> Failure {
    match e {
        CorpusError::InvalidSynthetic(_) => Failure::Config,
        _ => Failure::Data,
    }
}

fn model(e: &ModelError) -> Failure {
    match e {
        ModelError::Tensor(t) => tensor(t),
        ModelError::Graph(g) => graph(g),
        ModelError::Config(_) => Failure::Config,
        ModelError::Pretrained(_) | ModelError::Incompatible(_) => Failure::Data,
    }
}

fn train(e: &TrainError) -> Failure {
    match e {
        TrainError::Corpus(c) => corpus(c),
        TrainError::Graph(g) => graph(g),
        TrainError::Model(m) => model(m),
        TrainError::Config(_) => Failure::Config,
        TrainError::Unlabeled(_) | TrainError::EmptyIds => Failure::Data,
        TrainError::Diverged { .. } => Failure::Numeric,
    }
}

pub fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return Failure::Config;
        }
        if cause.is::<NumericError>() {
            return Failure::Numeric;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return train(e);
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model(e);
        }
        if let Some(e) = cause.downcast_ref::<GraphError>() {
            return graph(e);
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return corpus(e);
        }
        if let Some(e) = cause.downcast_ref::<TensorError>() {
            return tensor(e);
        }
        if cause.is::<std::io::Error>() {
            return Failure::Data;
        }
    }
    Failure::Internal
}

/// `{"error": kind, "exit_code": n, "message": ...}` on one line.
pub fn report(kind: Failure, message: &str) -> String {
    serde_json::json!({
        "error": kind.as_str(),
        "exit_code": kind.code(),
        "message": message,
    })
    .to_string()
}
