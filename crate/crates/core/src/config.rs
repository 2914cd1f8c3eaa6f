//! Hyperparameters, dataset presets and propagation settings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-layer user embeddings are combined into the final user vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    /// `e0 + e1 + … + el`
    Sum,
    /// `e0 ‖ e1 ‖ … ‖ el`
    Concat,
    /// `e1 ‖ … ‖ el`
    Neighbor,
}

impl Aggregator {
    pub const ALL: [Aggregator; 3] = [Aggregator::Sum, Aggregator::Concat, Aggregator::Neighbor];

    /// Dimension D of the final user representation.
    pub fn output_dim(&self, dim: usize, layers: usize) -> usize {
        match self {
            Aggregator::Sum => dim,
            Aggregator::Concat => (layers + 1) * dim,
            Aggregator::Neighbor => layers * dim,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregator::Sum => "sum",
            Aggregator::Concat => "concat",
            Aggregator::Neighbor => "neighbor",
        }
    }
}

/// User-tower propagation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Normalised transformed neighbour sum with LeakyReLU.
    Dekgci,
    /// Self term plus neighbour and element-wise interaction messages.
    Ngcf,
    /// Plain normalised neighbour sum.
    Lightgcn,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dekgci, Variant::Ngcf, Variant::Lightgcn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Dekgci => "dekgci",
            Variant::Ngcf => "ngcf",
            Variant::Lightgcn => "lightgcn",
        }
    }
}

macro_rules! parse_enum {
    ($ty:ty, $what:literal) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                <$ty>::ALL
                    .into_iter()
                    .find(|x| x.as_str() == s)
                    .ok_or_else(|| Error::Invalid(format!("unknown {} {s:?}", $what)))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_enum!(Aggregator, "aggregator");
parse_enum!(Variant, "variant");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub layers: usize,
    pub dim: usize,
    pub aggregator: Aggregator,
    pub variant: Variant,
    pub leaky_slope: f64,
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.dim == 0 {
            return Err(Error::Invalid("layers and dim must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope <= 1.0) {
            return Err(Error::Invalid(format!(
                "leaky slope {} outside (0, 1]",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.aggregator.output_dim(self.dim, self.layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptiveConfig {
    pub depth: usize,
    pub n_neighbor: usize,
}

/// Every training knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batchsize: usize,
    pub n_neighbor: usize,
    pub dim: usize,
    pub lr: f64,
    pub layers: usize,
    pub aggregator: Aggregator,
    pub variant: Variant,
    pub leaky_slope: f64,
    pub depth: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Preset::Lastfm.hyperparams()
    }
}

impl Hyperparams {
    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            layers: self.layers,
            dim: self.dim,
            aggregator: self.aggregator,
            variant: self.variant,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn receptive(&self) -> ReceptiveConfig {
        ReceptiveConfig {
            depth: self.depth,
            n_neighbor: self.n_neighbor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.propagation().validate()?;
        let positive = [
            ("batchsize", self.batchsize),
            ("n_neighbor", self.n_neighbor),
            ("depth", self.depth),
            ("max_epochs", self.max_epochs),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("{k} must be positive")));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("lr {} must be finite and >= 0", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Invalid("weight_decay must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Set one field from its textual `key=value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Invalid(format!("bad value {v:?} for {key}")))
        }
        let key = key.replace('-', "_");
        match key.as_str() {
            "batchsize" => self.batchsize = p(&key, value)?,
            "n_neighbor" => self.n_neighbor = p(&key, value)?,
            "dim" => self.dim = p(&key, value)?,
            "lr" => self.lr = p(&key, value)?,
            "layers" => self.layers = p(&key, value)?,
            "aggregator" => self.aggregator = value.parse()?,
            "variant" => self.variant = value.parse()?,
            "leaky_slope" => self.leaky_slope = p(&key, value)?,
            "depth" => self.depth = p(&key, value)?,
            "max_epochs" | "epochs" => self.max_epochs = p(&key, value)?,
            "patience" => self.patience = p(&key, value)?,
            "weight_decay" => self.weight_decay = p(&key, value)?,
            "seed" => self.seed = p(&key, value)?,
            _ => return Err(Error::Invalid(format!("unknown hyperparameter {key:?}"))),
        }
        Ok(())
    }

    /// Apply a flat map, rejecting unknown keys.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in kv {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("batchsize", self.batchsize.to_string()),
            ("n_neighbor", self.n_neighbor.to_string()),
            ("dim", self.dim.to_string()),
            ("lr", self.lr.to_string()),
            ("layers", self.layers.to_string()),
            ("aggregator", self.aggregator.to_string()),
            ("variant", self.variant.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("depth", self.depth.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Named benchmark presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Movielens,
    Book,
    Lastfm,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Movielens, Preset::Book, Preset::Lastfm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Movielens => "movielens",
            Preset::Book => "book",
            Preset::Lastfm => "lastfm",
        }
    }

    /// Explicit ratings are binarised at 4 for MovieLens; the others are
    /// implicit already.
    pub fn positive_threshold(&self) -> Option<f64> {
        match self {
            Preset::Movielens => Some(4.0),
            Preset::Book | Preset::Lastfm => None,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let (batchsize, n_neighbor, dim, layers) = match self {
            Preset::Movielens => (1024, 10, 128, 3),
            Preset::Book => (16, 8, 16, 6),
            Preset::Lastfm => (32, 8, 64, 3),
        };
        Hyperparams {
            batchsize,
            n_neighbor,
            dim,
            lr: 0.0005,
            layers,
            aggregator: Aggregator::Sum,
            variant: Variant::Dekgci,
            leaky_slope: crate::DEFAULT_LEAKY_SLOPE,
            depth: 1,
            max_epochs: 50,
            patience: 5,
            weight_decay: 0.0,
            seed: 2023,
        }
    }
}

parse_enum!(Preset, "dataset");
