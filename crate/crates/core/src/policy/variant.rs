use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Network architecture used for the actor and critics.
///
/// `Full` is the graph network with relative-position messages; the rest
/// are the ablation baselines. `TrackingOnly` disables the learned policy
/// entirely and runs the tracking controller alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Full,
    NoRelpos,
    BaseMlp,
    DeeperMlp,
    WiderMlp,
    TrackingOnly,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Full,
        ModelVariant::NoRelpos,
        ModelVariant::BaseMlp,
        ModelVariant::DeeperMlp,
        ModelVariant::WiderMlp,
        ModelVariant::TrackingOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::NoRelpos => "no_relpos",
            ModelVariant::BaseMlp => "base_mlp",
            ModelVariant::DeeperMlp => "deeper_mlp",
            ModelVariant::WiderMlp => "wider_mlp",
            ModelVariant::TrackingOnly => "tracking_only",
        }
    }

    /// Hidden layer widths of the trunk that replaces (or implements) the
    /// graph layers.
    pub(crate) fn trunk_widths(&self) -> Vec<usize> {
        match self {
            ModelVariant::Full | ModelVariant::NoRelpos | ModelVariant::BaseMlp => vec![64, 64],
            ModelVariant::DeeperMlp => vec![64, 64, 64, 64],
            ModelVariant::WiderMlp => vec![128, 128],
            ModelVariant::TrackingOnly => vec![],
        }
    }

    pub fn uses_graph(&self) -> bool {
        matches!(self, ModelVariant::Full | ModelVariant::NoRelpos)
    }

    pub fn is_learned(&self) -> bool {
        *self != ModelVariant::TrackingOnly
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .iter()
            .find(|v| v.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = ModelVariant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown model variant '{s}', expected one of {}", names.join(", "))
            })
    }
}
