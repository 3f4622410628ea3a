use serde::{Deserialize, Serialize};

/// Nonlinearity applied to aggregated neighbor messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    LeakyRelu,
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Both views fused by subgraph-level attention.
    Full,
    /// Tweet–word view only.
    TwOnly,
    /// Tweet–user view only.
    TuOnly,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::TwOnly => "tw_only",
            Ablation::TuOnly => "tu_only",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Ablation::Full),
            "tw_only" | "tw" => Ok(Ablation::TwOnly),
            "tu_only" | "tu" => Ok(Ablation::TuOnly),
            other => Err(format!("unknown ablation mode `{other}`")),
        }
    }
}

/// How edge weights enter attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeightMode {
    /// An edge only decides membership of the neighbor list.
    Mask,
    /// Additionally add `ln(weight)` to the pre-softmax scores.
    LogWeight,
}

/// Which nodes the subgraph importance averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceScope {
    AllNodes,
    TweetsOnly,
}

/// Whether the per-tweet offsets of the tweet–user projection train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// Offsets stay at zero and are left out of the forward pass.
    Frozen,
    /// Offsets are free parameters, one row per tweet.
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `-mean(ln p[true class])`.
    CrossEntropy,
    /// `-mean(p[true class])`, the objective as literally printed in the
    /// original formulation; kept for comparison only.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word embedding width N.
    pub word_dim: usize,
    /// User feature width F when the dataset carries no user features.
    pub user_dim: usize,
    /// Projected width D of the tweet–user view.
    pub proj_dim: usize,
    /// Output width per attention head.
    pub head_dim: usize,
    /// Number of heads K.
    pub heads: usize,
    /// Hidden width of the subgraph-level attention.
    pub sub_att_dim: usize,
    pub leaky_slope: f64,
    pub aggregation: Activation,
    pub ablation: Ablation,
    pub edge_weight_mode: EdgeWeightMode,
    pub importance_scope: ImportanceScope,
    pub tweet_offsets: OffsetMode,
    pub loss_form: LossForm,
    /// Half-width of the uniform word-embedding initialization.
    pub embedding_init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 16,
            user_dim: 16,
            proj_dim: 16,
            head_dim: 8,
            heads: 4,
            sub_att_dim: 16,
            leaky_slope: 0.2,
            aggregation: Activation::Elu,
            ablation: Ablation::Full,
            edge_weight_mode: EdgeWeightMode::Mask,
            importance_scope: ImportanceScope::AllNodes,
            tweet_offsets: OffsetMode::Frozen,
            loss_form: LossForm::CrossEntropy,
            embedding_init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    /// Full-scale dimensions: 300-wide embeddings and attention output,
    /// eight heads.
    pub fn full_scale() -> Self {
        Self {
            word_dim: 300,
            proj_dim: 300,
            head_dim: 300 / 8,
            heads: 8,
            sub_att_dim: 128,
            ..Self::default()
        }
    }

    /// Concatenated head width shared by both views.
    pub fn hidden_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("user_dim", self.user_dim),
            ("proj_dim", self.proj_dim),
            ("head_dim", self.head_dim),
            ("heads", self.heads),
            ("sub_att_dim", self.sub_att_dim),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.leaky_slope >= 0.0) {
            return Err("leaky_slope must be non-negative".into());
        }
        Ok(())
    }
}
