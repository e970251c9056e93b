//! Pipeline configuration.
//!
//! Values resolve in order of precedence: command-line flags, then a flat
//! `key = value` config file, then built-in defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::{Connectivity, Keep};

pub const DEFAULT_ALPHA: f64 = 0.06;
/// Support threshold used when locating parts.
pub const PARTS_ALPHA: f64 = 0.07;
pub const DEFAULT_PARTS_K: usize = 4;
pub const DEFAULT_LAMBDA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub connectivity: Connectivity,
    pub keep: Keep,
    pub max_boxes: Option<usize>,
    pub parts_k: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Tensors to merge, in channel order. The largest grid is canonical.
    pub layers: Vec<String>,
    /// Multiplier on the support value in the part clustering features.
    pub support_weight: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: DEFAULT_ALPHA,
            connectivity: Connectivity::Eight,
            keep: Keep::Largest,
            max_boxes: None,
            parts_k: DEFAULT_PARTS_K,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            layers: vec!["pool5".into(), "relu5".into()],
            support_weight: 1.0,
        }
    }
}

impl PipelineConfig {
    /// Defaults for part localization.
    pub fn for_parts() -> Self {
        PipelineConfig {
            alpha: PARTS_ALPHA,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Argument(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.parts_k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.support_weight >= 0.0 && self.support_weight.is_finite()) {
            return Err(Error::Argument(format!(
                "support_weight must be finite and non-negative, got {}",
                self.support_weight
            )));
        }
        if self.layers.is_empty() || self.layers.iter().any(|l| l.is_empty()) {
            return Err(Error::Argument("layers must name at least one tensor".into()));
        }
        Ok(())
    }

    /// Applies every set field of `overrides` on top of `self`.
    pub fn apply(&mut self, overrides: &ConfigOverrides) {
        let o = overrides;
        if let Some(v) = o.alpha {
            self.alpha = v;
        }
        if let Some(v) = o.connectivity {
            self.connectivity = v;
        }
        if let Some(v) = o.keep {
            self.keep = v;
        }
        if let Some(v) = o.max_boxes {
            self.max_boxes = Some(v);
        }
        if let Some(v) = o.parts_k {
            self.parts_k = v;
        }
        if let Some(v) = o.lambda {
            self.lambda = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.layers {
            self.layers = v.clone();
        }
        if let Some(v) = o.support_weight {
            self.support_weight = v;
        }
    }

    /// `defaults` < `file` < `flags`, then validated.
    pub fn resolve(
        defaults: PipelineConfig,
        file: Option<&ConfigOverrides>,
        flags: &ConfigOverrides,
    ) -> Result<Self> {
        let mut config = defaults;
        if let Some(file) = file {
            config.apply(file);
        }
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }
}

/// A partial configuration, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub alpha: Option<f64>,
    pub connectivity: Option<Connectivity>,
    pub keep: Option<Keep>,
    pub max_boxes: Option<usize>,
    pub parts_k: Option<usize>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub layers: Option<Vec<String>>,
    pub support_weight: Option<f64>,
}

pub fn parse_connectivity(s: &str) -> Result<Connectivity> {
    let v: u8 = s
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("connectivity must be 4 or 8, got `{s}`")))?;
    Connectivity::try_from(v)
}

pub fn parse_keep(s: &str) -> Result<Keep> {
    match s.trim() {
        "largest" => Ok(Keep::Largest),
        "all" => Ok(Keep::All),
        other => Err(Error::Argument(format!("keep must be `largest` or `all`, got `{other}`"))),
    }
}

pub fn parse_layers(s: &str) -> Vec<String> {
    s.split(',')
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Argument(format!("bad value `{value}` for `{key}`")))
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<ConfigOverrides> {
    let mut o = ConfigOverrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Argument(format!("config line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "alpha" => o.alpha = Some(parse_num(&key, value)?),
            "connectivity" => o.connectivity = Some(parse_connectivity(value)?),
            "keep" => o.keep = Some(parse_keep(value)?),
            "max_boxes" => o.max_boxes = Some(parse_num(&key, value)?),
            "k" | "parts_k" => o.parts_k = Some(parse_num(&key, value)?),
            "lambda" => o.lambda = Some(parse_num(&key, value)?),
            "seed" => o.seed = Some(parse_num(&key, value)?),
            "layers" => o.layers = Some(parse_layers(value)),
            "support_weight" => o.support_weight = Some(parse_num(&key, value)?),
            other => {
                return Err(Error::Argument(format!(
                    "config line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.alpha, 0.06);
        assert_eq!(c.connectivity, Connectivity::Eight);
        assert_eq!(c.keep, Keep::Largest);
        assert_eq!((c.parts_k, c.lambda, c.seed), (4, 0.25, 0));
        assert_eq!(PipelineConfig::for_parts().alpha, 0.07);
        c.validate().unwrap();
    }

    #[test]
    fn file_then_flags() {
        let file = parse_config_text(
            "# dataset tuning\nalpha = 0.05\nconnectivity=4\nkeep = all\nmax-boxes = 3\nlayers = relu5\n",
        )
        .unwrap();
        let flags = ConfigOverrides {
            alpha: Some(0.08),
            ..Default::default()
        };
        let c = PipelineConfig::resolve(PipelineConfig::default(), Some(&file), &flags).unwrap();
        assert_eq!(c.alpha, 0.08);
        assert_eq!(c.connectivity, Connectivity::Four);
        assert_eq!(c.keep, Keep::All);
        assert_eq!(c.max_boxes, Some(3));
        assert_eq!(c.layers, vec!["relu5".to_string()]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_config_text("alpha 0.1").is_err());
        assert!(parse_config_text("colour = red").is_err());
        assert!(parse_config_text("connectivity = 6").is_err());
        for alpha in [0.0, 1.5, -0.2] {
            let flags = ConfigOverrides {
                alpha: Some(alpha),
                ..Default::default()
            };
            assert!(PipelineConfig::resolve(PipelineConfig::default(), None, &flags).is_err());
        }
    }

    #[test]
    fn json_echo_uses_numeric_connectivity() {
        let json = serde_json::to_value(PipelineConfig::default()).unwrap();
        assert_eq!(json["connectivity"], 8);
        assert_eq!(json["keep"], "largest");
    }
}
