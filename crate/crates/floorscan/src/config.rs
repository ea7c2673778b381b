//! Pipeline configuration: a flat `key = value ...` text format with strict
//! key validation, mapping onto the per-stage config structs.

use crate::planes::{OrientationConfig, RansacConfig};
use crate::rooms::ClipConfig;
use crate::scale::ScaleSearchConfig;
use crate::shape::{IspaSchedule, RoundSpec, SpaWeights};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown config key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}`: expected {expected}")]
    BadValue {
        line: usize,
        key: String,
        expected: &'static str,
    },
    #[error("line {line}: expected `key = value`")]
    BadSyntax { line: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// All tunables of the batch pipeline, with paper-faithful defaults.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scale: ScaleSearchConfig,
    pub room: ClipConfig,
    pub ransac: RansacConfig,
    pub orient: OrientationConfig,
    pub weights: SpaWeights,
    pub schedule: IspaSchedule,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scale: ScaleSearchConfig::default(),
            room: ClipConfig::default(),
            ransac: RansacConfig::default(),
            orient: OrientationConfig::default(),
            weights: SpaWeights::default(),
            schedule: IspaSchedule::default(),
        }
    }
}

impl PipelineConfig {
    /// Parse the flat text format. Lines are `key = value [value ...]`;
    /// `#` starts a comment; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (line_idx, raw) in text.lines().enumerate() {
            let line_no = line_idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadSyntax { line: line_no });
            };
            let key = key.trim();
            let values: Vec<&str> = value.split_whitespace().collect();
            config.apply(key, &values, line_no)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, values: &[&str], line: usize) -> Result<(), ConfigError> {
        fn floats(
            values: &[&str],
            n: Option<usize>,
            key: &str,
            line: usize,
        ) -> Result<Vec<f64>, ConfigError> {
            if let Some(n) = n {
                if values.len() != n {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        expected: "a fixed number of numeric values",
                    });
                }
            }
            values
                .iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        expected: "numeric values",
                    })
                })
                .collect()
        }
        fn integer(values: &[&str], key: &str, line: usize) -> Result<u64, ConfigError> {
            if values.len() != 1 {
                return Err(ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    expected: "one integer",
                });
            }
            values[0].parse::<u64>().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                expected: "one integer",
            })
        }
        match key {
            "scale.range" => {
                let v = floats(values, Some(2), key, line)?;
                self.scale.search_range = (v[0], v[1]);
            }
            "scale.steps" => {
                let v = floats(values, None, key, line)?;
                self.scale.step_schedule = v;
            }
            "scale.window" => self.scale.window_size = integer(values, key, line)? as usize,
            "scale.warmup_fraction" => {
                self.scale.warmup_fraction = floats(values, Some(1), key, line)?[0];
            }
            "scale.cell_size" => {
                self.scale.grid_cell_size = floats(values, Some(1), key, line)?[0];
            }
            "room.clip_radius" => self.room.radius = floats(values, Some(1), key, line)?[0],
            "room.threshold" => {
                self.room.membership_threshold = floats(values, Some(1), key, line)?[0];
            }
            "room.patience" => {
                self.room.dormancy_patience = integer(values, key, line)? as usize;
            }
            "ransac.max_residual" => {
                self.ransac.max_residual = floats(values, Some(1), key, line)?[0];
            }
            "ransac.inlier_min" => {
                self.ransac.inlier_ratio_min = floats(values, Some(1), key, line)?[0];
            }
            "ransac.iterations" => {
                self.ransac.iterations = integer(values, key, line)? as usize;
            }
            "ransac.seed" => self.ransac.seed = integer(values, key, line)?,
            "orient.sigma0" => self.orient.sigma0 = floats(values, Some(1), key, line)?[0],
            "orient.lambda" => self.orient.lambda = floats(values, Some(1), key, line)?[0],
            "orient.gate" => self.orient.gate = floats(values, Some(1), key, line)?[0],
            "orient.accept" => self.orient.accept = floats(values, Some(1), key, line)?[0],
            "spa.lambdas.ori" => self.weights.ori = floats(values, Some(1), key, line)?[0],
            "spa.lambdas.plane" => self.weights.plane = floats(values, Some(1), key, line)?[0],
            "spa.lambdas.mask" => self.weights.mask = floats(values, Some(1), key, line)?[0],
            "spa.lambdas.complex" => {
                self.weights.complex = floats(values, Some(1), key, line)?[0];
            }
            "spa.rounds" => {
                let sizes = floats(values, None, key, line)?;
                if sizes.is_empty() || sizes.iter().any(|&s| s < 9.0 || s.fract() != 0.0) {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        expected: "integer grid sizes of at least 9",
                    });
                }
                let template = self.schedule.rounds[0];
                self.schedule.rounds = sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| RoundSpec {
                        grid_size: s as usize,
                        max_edge_length: if i == 0 { template.max_edge_length } else { None },
                        corner_neighborhood_radius: template.corner_neighborhood_radius,
                    })
                    .collect();
            }
            "spa.max_edge_len" => {
                let v = integer(values, key, line)? as usize;
                if let Some(first) = self.schedule.rounds.first_mut() {
                    first.max_edge_length = Some(v);
                }
            }
            "spa.neighborhood_radius" => {
                let v = integer(values, key, line)? as usize;
                for round in &mut self.schedule.rounds {
                    round.corner_neighborhood_radius = v;
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scale
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.room.radius <= 0.0 {
            return Err(ConfigError::Invalid("clip radius must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.room.membership_threshold)
            || self.room.membership_threshold <= 0.0
        {
            return Err(ConfigError::Invalid(
                "membership threshold must be in (0, 1)".into(),
            ));
        }
        if self.room.dormancy_patience == 0 {
            return Err(ConfigError::Invalid("patience must be at least 1".into()));
        }
        if self.schedule.rounds.is_empty() {
            return Err(ConfigError::Invalid("schedule needs a round".into()));
        }
        Ok(())
    }

    /// Canonical rendering of every key; hashing this pins the provenance of
    /// an output file to its exact configuration.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let (lo, hi) = self.scale.search_range;
        out.push_str(&format!("scale.range = {lo} {hi}\n"));
        out.push_str("scale.steps =");
        for s in &self.scale.step_schedule {
            out.push_str(&format!(" {s}"));
        }
        out.push('\n');
        out.push_str(&format!("scale.window = {}\n", self.scale.window_size));
        out.push_str(&format!(
            "scale.warmup_fraction = {}\n",
            self.scale.warmup_fraction
        ));
        out.push_str(&format!("scale.cell_size = {}\n", self.scale.grid_cell_size));
        out.push_str(&format!("room.clip_radius = {}\n", self.room.radius));
        out.push_str(&format!(
            "room.threshold = {}\n",
            self.room.membership_threshold
        ));
        out.push_str(&format!("room.patience = {}\n", self.room.dormancy_patience));
        out.push_str(&format!(
            "ransac.max_residual = {}\n",
            self.ransac.max_residual
        ));
        out.push_str(&format!(
            "ransac.inlier_min = {}\n",
            self.ransac.inlier_ratio_min
        ));
        out.push_str(&format!("ransac.iterations = {}\n", self.ransac.iterations));
        out.push_str(&format!("ransac.seed = {}\n", self.ransac.seed));
        out.push_str(&format!("orient.sigma0 = {}\n", self.orient.sigma0));
        out.push_str(&format!("orient.lambda = {}\n", self.orient.lambda));
        out.push_str(&format!("orient.gate = {}\n", self.orient.gate));
        out.push_str(&format!("orient.accept = {}\n", self.orient.accept));
        out.push_str(&format!("spa.lambdas.ori = {}\n", self.weights.ori));
        out.push_str(&format!("spa.lambdas.plane = {}\n", self.weights.plane));
        out.push_str(&format!("spa.lambdas.mask = {}\n", self.weights.mask));
        out.push_str(&format!("spa.lambdas.complex = {}\n", self.weights.complex));
        out.push_str("spa.rounds =");
        for round in &self.schedule.rounds {
            out.push_str(&format!(" {}", round.grid_size));
        }
        out.push('\n');
        if let Some(l) = self.schedule.rounds.first().and_then(|r| r.max_edge_length) {
            out.push_str(&format!("spa.max_edge_len = {l}\n"));
        }
        if let Some(round) = self.schedule.rounds.first() {
            out.push_str(&format!(
                "spa.neighborhood_radius = {}\n",
                round.corner_neighborhood_radius
            ));
        }
        out
    }
}
