//! Plain `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment. Relative dataset paths are
//! resolved against the directory of the config file. `--set key=value`
//! overrides are applied after the file, in order.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use swapgt_core::train::{TrainConfig, Variant};
use swapgt_core::SbmSpec;

use crate::error::{CliError, Result};

/// Synthetic graph settings; either `sizes` or `blocks` x `block_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub blocks: usize,
    pub block_size: usize,
    pub sizes: Option<Vec<usize>>,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self { blocks: 4, block_size: 50, sizes: None, p_in: 0.1, p_out: 0.01, dim: 16, separation: 2.0, noise: 1.0, seed: 0 }
    }
}

impl SbmConfig {
    pub fn spec(&self) -> SbmSpec {
        SbmSpec {
            block_sizes: self.sizes.clone().unwrap_or_else(|| vec![self.block_size; self.blocks]),
            p_intra: self.p_in,
            p_inter: self.p_out,
            dim: self.dim,
            separation: self.separation,
            noise: self.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { features: PathBuf, edges: PathBuf, labels: PathBuf, num_classes: Option<usize> },
    Sbm(SbmConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub source: DataSource,
    pub train: TrainConfig,
}

#[derive(Debug, Default)]
struct Builder {
    dataset: Option<String>,
    features: Option<PathBuf>,
    edges: Option<PathBuf>,
    labels: Option<PathBuf>,
    num_classes: Option<usize>,
    sbm: SbmConfig,
    sbm_touched: bool,
    train: TrainConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value.parse().map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid value {value:?} for {key}: expected true or false")),
    }
}

impl Builder {
    fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> std::result::Result<(), String> {
        let path = |v: &str| match base {
            Some(dir) if Path::new(v).is_relative() => dir.join(v),
            _ => PathBuf::from(v),
        };
        let t = &mut self.train;
        if let Some(sub) = key.strip_prefix("sbm.") {
            let s = &mut self.sbm;
            match sub {
                "blocks" => s.blocks = parse(key, value)?,
                "block_size" => s.block_size = parse(key, value)?,
                "sizes" => {
                    s.sizes = Some(value.split(',').map(|v| parse(key, v.trim())).collect::<std::result::Result<_, _>>()?)
                }
                "p_in" => s.p_in = parse(key, value)?,
                "p_out" => s.p_out = parse(key, value)?,
                "dim" => s.dim = parse(key, value)?,
                "separation" => s.separation = parse(key, value)?,
                "noise" => s.noise = parse(key, value)?,
                "seed" => s.seed = parse(key, value)?,
                _ => return Err(format!("unknown key {key:?}")),
            }
            self.sbm_touched = true;
            return Ok(());
        }
        match key {
            "dataset" => self.dataset = Some(value.to_string()),
            "features_path" => self.features = Some(path(value)),
            "edges_path" => self.edges = Some(path(value)),
            "labels_path" => self.labels = Some(path(value)),
            "num_classes" => self.num_classes = Some(parse(key, value)?),
            "k" => t.k = parse(key, value)?,
            "ppr_steps" => t.ppr_steps = parse(key, value)?,
            "ppr_beta" => t.ppr_beta = parse(key, value)?,
            "swap_p" => t.swap_p = parse(key, value)?,
            "swap_t" => t.swap_t = parse(key, value)?,
            "aug_s" => t.aug_s = parse(key, value)?,
            "resample_each_epoch" => t.resample_each_epoch = parse_bool(key, value)?,
            "hidden_dim" => t.hidden_dim = parse(key, value)?,
            "ffn_dim" => t.ffn_dim = parse(key, value)?,
            "layers" => t.layers = parse(key, value)?,
            "heads" => t.heads = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "lambda" => t.lambda = parse(key, value)?,
            "dropout" => t.dropout = parse(key, value)?,
            "share_encoder" => t.share_encoder = parse_bool(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "runs" => t.runs = parse(key, value)?,
            "base_seed" => t.base_seed = parse(key, value)?,
            "split" => t.split = parse(key, value)?,
            "variant" => t.variant = parse(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    fn build(self) -> Result<RunConfig> {
        let source = match (self.features, self.edges, self.labels) {
            (Some(features), Some(edges), Some(labels)) => {
                if self.sbm_touched {
                    return Err(CliError::Usage("both dataset files and sbm.* keys are set".into()));
                }
                DataSource::Files { features, edges, labels, num_classes: self.num_classes }
            }
            (None, None, None) if self.sbm_touched || self.dataset.as_deref() == Some("sbm") => DataSource::Sbm(self.sbm),
            (None, None, None) => {
                return Err(CliError::Usage("no dataset: set features_path/edges_path/labels_path or sbm.* keys".into()))
            }
            _ => return Err(CliError::Usage("features_path, edges_path and labels_path must be set together".into())),
        };
        let dataset = self.dataset.unwrap_or_else(|| match source {
            DataSource::Sbm(_) => "sbm".into(),
            DataSource::Files { .. } => "custom".into(),
        });
        self.train.validate()?;
        Ok(RunConfig { dataset, source, train: self.train })
    }
}

/// Splits `key=value`, trimming both sides.
pub fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty()).then_some((k, v))
}

impl RunConfig {
    /// Parses config text followed by overrides.
    pub fn from_text(text: &str, origin: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut b = Builder::default();
        let base = origin.and_then(Path::parent);
        let label = origin.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<config>"));
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Config { path: label.clone(), line: n + 1, message };
            let (k, v) = split_assignment(line).ok_or_else(|| err("expected key = value".into()))?;
            b.set(k, v, base).map_err(err)?;
        }
        for o in overrides {
            let (k, v) = split_assignment(o).ok_or_else(|| CliError::Usage(format!("override {o:?} is not key=value")))?;
            b.set(k, v, None).map_err(CliError::Usage)?;
        }
        b.build()
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_text(&text, Some(p), overrides)
            }
            None => Self::from_text("", None, overrides),
        }
    }

    /// Every effective key in a fixed order; parsing the rendered text gives
    /// back an equal config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("dataset", self.dataset.clone())];
        match &self.source {
            DataSource::Files { features, edges, labels, num_classes } => {
                out.push(("features_path", features.display().to_string()));
                out.push(("edges_path", edges.display().to_string()));
                out.push(("labels_path", labels.display().to_string()));
                if let Some(c) = num_classes {
                    out.push(("num_classes", c.to_string()));
                }
            }
            DataSource::Sbm(s) => {
                match &s.sizes {
                    Some(sizes) => {
                        out.push(("sbm.sizes", sizes.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")))
                    }
                    None => {
                        out.push(("sbm.blocks", s.blocks.to_string()));
                        out.push(("sbm.block_size", s.block_size.to_string()));
                    }
                }
                out.push(("sbm.p_in", s.p_in.to_string()));
                out.push(("sbm.p_out", s.p_out.to_string()));
                out.push(("sbm.dim", s.dim.to_string()));
                out.push(("sbm.separation", s.separation.to_string()));
                out.push(("sbm.noise", s.noise.to_string()));
                out.push(("sbm.seed", s.seed.to_string()));
            }
        }
        let t = &self.train;
        out.extend([
            ("k", t.k.to_string()),
            ("ppr_steps", t.ppr_steps.to_string()),
            ("ppr_beta", t.ppr_beta.to_string()),
            ("swap_p", t.swap_p.to_string()),
            ("swap_t", t.swap_t.to_string()),
            ("aug_s", t.aug_s.to_string()),
            ("resample_each_epoch", t.resample_each_epoch.to_string()),
            ("hidden_dim", t.hidden_dim.to_string()),
            ("ffn_dim", t.ffn_dim.to_string()),
            ("layers", t.layers.to_string()),
            ("heads", t.heads.to_string()),
            ("alpha", t.alpha.to_string()),
            ("lambda", t.lambda.to_string()),
            ("dropout", t.dropout.to_string()),
            ("share_encoder", t.share_encoder.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("runs", t.runs.to_string()),
            ("base_seed", t.base_seed.to_string()),
            ("split", t.split.as_str().to_string()),
            ("variant", t.variant.as_str().to_string()),
        ]);
        out
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Single-line `k=v;k=v` form for CSV cells.
    pub fn to_inline(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }

    /// Digest of everything that determines token tables and sequences.
    pub fn data_fingerprint(&self) -> u64 {
        const KEYS: [&str; 8] = ["k", "ppr_steps", "ppr_beta", "swap_p", "swap_t", "aug_s", "variant", "base_seed"];
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "dataset" && (KEYS.contains(&k) || k.ends_with("_path") || k.starts_with("sbm.") || k == "num_classes") {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(v.as_bytes());
                h.update(b"\n");
            }
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut c = self.clone();
        c.train.variant = variant;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "# demo\nsbm.blocks = 3\nsbm.block_size=20\nk = 4 # inline\nvariant = no-cal\nsplit = sparse\n";
        let c = RunConfig::from_text(text, None, &["alpha=0.3".into(), "share_encoder=false".into()]).unwrap();
        assert_eq!(c.train.k, 4);
        assert_eq!(c.train.alpha, 0.3);
        assert!(!c.train.share_encoder);
        assert_eq!(c.train.variant, Variant::NoCal);
        assert_eq!(RunConfig::from_text(&c.to_text(), None, &[]).unwrap(), c);
        assert!(c.to_inline().contains("k=4;"));
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let c = RunConfig::from_text("dataset = sbm\nk = 4\n", None, &["k=8".into()]).unwrap();
        assert_eq!(c.train.k, 8);
        let e = RunConfig::from_text("dataset = sbm\nkay = 4\n", None, &[]).unwrap_err();
        assert!(matches!(e, CliError::Config { line: 2, .. }), "{e}");
        assert_eq!(RunConfig::from_text("dataset = sbm", None, &["bogus=1".into()]).unwrap_err().exit_code(), 1);
        assert!(RunConfig::from_text("k = 4", None, &[]).is_err());
        assert!(RunConfig::from_text("dataset = sbm\npatience = 900", None, &[]).is_err());
    }

    #[test]
    fn relative_paths_follow_config_location() {
        let text = "features_path = f.csv\nedges_path = /abs/e.txt\nlabels_path = l.txt\n";
        let c = RunConfig::from_text(text, Some(Path::new("/data/cfg/run.conf")), &[]).unwrap();
        match c.source {
            DataSource::Files { features, edges, .. } => {
                assert_eq!(features, PathBuf::from("/data/cfg/f.csv"));
                assert_eq!(edges, PathBuf::from("/abs/e.txt"));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn fingerprint_tracks_data_keys_only() {
        let a = RunConfig::from_text("dataset = sbm\n", None, &[]).unwrap();
        let b = RunConfig::from_text("dataset = sbm\nlearning_rate = 0.01\n", None, &[]).unwrap();
        let c = RunConfig::from_text("dataset = sbm\nk = 7\n", None, &[]).unwrap();
        assert_eq!(a.data_fingerprint(), b.data_fingerprint());
        assert_ne!(a.data_fingerprint(), c.data_fingerprint());
    }
}
