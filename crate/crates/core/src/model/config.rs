use std::fmt;
use std::str::FromStr;

use super::ModelError;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Fingerprints with graph attention, pretrained-style sequence embeddings.
    DeepGS,
    /// One-hot sequence encodings instead of embedding lookups.
    DeepGS1,
    /// Attention-free neighbor-sum message passing in the graph branch.
    DeepGS2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::DeepGS, Variant::DeepGS1, Variant::DeepGS2];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::DeepGS => "deepgs",
            Variant::DeepGS1 => "deepgs1",
            Variant::DeepGS2 => "deepgs2",
        }
    }

    pub fn uses_one_hot(self) -> bool {
        self == Variant::DeepGS1
    }

    pub fn uses_attention(self) -> bool {
        self != Variant::DeepGS2
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "deepgs" => Ok(Variant::DeepGS),
            "deepgs1" => Ok(Variant::DeepGS1),
            "deepgs2" => Ok(Variant::DeepGS2),
            other => Err(format!(
                "unknown variant `{other}` (expected deepgs, deepgs1 or deepgs2)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepGSConfig {
    pub radius: usize,
    pub ngram: usize,
    pub cnn_kernel: usize,
    /// Output channels of each convolution; the length is the layer count.
    pub cnn_channels: Vec<usize>,
    pub bigru_hidden: usize,
    pub gat_depth: usize,
    pub gat_heads: usize,
    pub gat_hidden: usize,
    /// Width of the learned fingerprint embedding.
    pub fp_dim: usize,
    /// Sequence embedding width; also the one-hot width for `DeepGS1`.
    pub embed_dim: usize,
    pub l_ds: usize,
    pub l_ps: usize,
    pub fusion_hidden: Vec<usize>,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_interval: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub variant: Variant,
    /// Start the output bias at the mean training label.
    pub init_bias_to_mean: bool,
}

impl Default for DeepGSConfig {
    fn default() -> Self {
        Self {
            radius: 2,
            ngram: 3,
            cnn_kernel: 23,
            cnn_channels: vec![32, 64, 96],
            bigru_hidden: 100,
            gat_depth: 2,
            gat_heads: 10,
            gat_hidden: 32,
            fp_dim: 32,
            embed_dim: 100,
            l_ds: 100,
            l_ps: 1000,
            fusion_hidden: vec![1024, 512],
            lr: 1e-4,
            lr_decay: 0.9,
            decay_interval: 20,
            weight_decay: 1e-5,
            epochs: 100,
            batch: 1,
            variant: Variant::DeepGS,
            init_bias_to_mean: true,
        }
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ModelError> {
    value
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ModelError::Config(format!("`{key}` expects comma-separated integers, got `{value}`")))
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ModelError> {
    value
        .trim()
        .parse()
        .map_err(|_| ModelError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl DeepGSConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            lr_decay: self.lr_decay,
            decay_interval: self.decay_interval,
            ..AdamConfig::default()
        }
    }

    /// Rows of the protein matrix.
    pub fn protein_rows(&self) -> usize {
        self.l_ps / self.ngram
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        let value = value.trim();
        match key {
            "radius" => self.radius = parse_value(key, value)?,
            "ngram" => self.ngram = parse_value(key, value)?,
            "cnn_kernel" => self.cnn_kernel = parse_value(key, value)?,
            "cnn_channels" => self.cnn_channels = parse_list(key, value)?,
            "cnn_layers" => {
                let n: usize = parse_value(key, value)?;
                let last = self.cnn_channels.last().copied().unwrap_or(32);
                self.cnn_channels.resize(n, last);
            }
            "bigru_hidden" => self.bigru_hidden = parse_value(key, value)?,
            "bigru_layers" => {
                if parse_value::<usize>(key, value)? != 1 {
                    return Err(ModelError::Config("only a single BiGRU layer is supported".into()));
                }
            }
            "gat_depth" => self.gat_depth = parse_value(key, value)?,
            "gat_heads" => self.gat_heads = parse_value(key, value)?,
            "gat_hidden" => self.gat_hidden = parse_value(key, value)?,
            "fp_dim" => self.fp_dim = parse_value(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "l_ds" => self.l_ds = parse_value(key, value)?,
            "l_ps" => self.l_ps = parse_value(key, value)?,
            "fusion_hidden" => self.fusion_hidden = parse_list(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "lr_decay" => self.lr_decay = parse_value(key, value)?,
            "decay_interval" => self.decay_interval = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "variant" => self.variant = value.parse().map_err(ModelError::Config)?,
            "init_bias_to_mean" => self.init_bias_to_mean = parse_value(key, value)?,
            other => return Err(ModelError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ModelError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                ModelError::Config(msg) => ModelError::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        format!(
            "radius = {}\nngram = {}\ncnn_kernel = {}\ncnn_channels = {}\nbigru_hidden = {}\n\
             gat_depth = {}\ngat_heads = {}\ngat_hidden = {}\nfp_dim = {}\nembed_dim = {}\n\
             l_ds = {}\nl_ps = {}\nfusion_hidden = {}\nlr = {}\nlr_decay = {}\n\
             decay_interval = {}\nweight_decay = {}\nepochs = {}\nbatch = {}\nvariant = {}\n\
             init_bias_to_mean = {}\n",
            self.radius,
            self.ngram,
            self.cnn_kernel,
            join(&self.cnn_channels),
            self.bigru_hidden,
            self.gat_depth,
            self.gat_heads,
            self.gat_hidden,
            self.fp_dim,
            self.embed_dim,
            self.l_ds,
            self.l_ps,
            join(&self.fusion_hidden),
            self.lr,
            self.lr_decay,
            self.decay_interval,
            self.weight_decay,
            self.epochs,
            self.batch,
            self.variant,
            self.init_bias_to_mean,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("ngram", self.ngram),
            ("cnn_kernel", self.cnn_kernel),
            ("bigru_hidden", self.bigru_hidden),
            ("gat_heads", self.gat_heads),
            ("gat_hidden", self.gat_hidden),
            ("fp_dim", self.fp_dim),
            ("l_ds", self.l_ds),
            ("l_ps", self.l_ps),
            ("batch", self.batch),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("`{k}` must be positive")));
            }
        }
        if self.embed_dim < 2 {
            return Err(ModelError::Config("`embed_dim` must be at least 2".into()));
        }
        if self.cnn_channels.is_empty() || self.cnn_channels.contains(&0) {
            return Err(ModelError::Config(
                "`cnn_channels` must be non-empty and positive".into(),
            ));
        }
        if self.fusion_hidden.contains(&0) {
            return Err(ModelError::Config("`fusion_hidden` widths must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config("`lr` must be positive".into()));
        }
        if self.batch != 1 {
            return Err(ModelError::Config("only batch size 1 is supported".into()));
        }
        if self.protein_rows() == 0 {
            return Err(ModelError::Config("`l_ps` is shorter than one n-gram".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = DeepGSConfig::default();
        assert_eq!(DeepGSConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(c.protein_rows(), 333);
    }

    #[test]
    fn overrides_and_errors() {
        let c = DeepGSConfig::from_text("# tiny\nl_ds = 50\nvariant = DeepGS2\ncnn_channels = 4, 8\n").unwrap();
        assert_eq!(
            (c.l_ds, c.variant, c.cnn_channels.clone()),
            (50, Variant::DeepGS2, vec![4, 8])
        );
        assert!(DeepGSConfig::from_text("nope = 1").is_err());
        assert!(DeepGSConfig::from_text("lr = abc").is_err());
        assert!(DeepGSConfig::from_text("batch = 4").is_err());
        assert!(DeepGSConfig::from_text("l_ds").is_err());
    }
}
