//! Evaluation settings, read from TOML with dotted `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationMode, MetricWeights};
use crate::clear::{NormalizationThresholds, DEFAULT_IOU_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::EvaluationRange;
use crate::relevance::{RelevanceConfig, SeverityThresholds, DEFAULT_PREDICTION_STEP};
use crate::scenario::EnvironmentParams;
use crate::timing::{TimeConfig, TimeWeighting, DEFAULT_TIME_LOWER};
use crate::verification::VerificationConfig;

/// Environment values that replace the ones stored in a scenario header.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentOverrides {
    pub mu: Option<f64>,
    pub g: Option<f64>,
    pub a_brake: Option<f64>,
    pub rho: Option<f64>,
    pub a_accel_max: Option<f64>,
    pub a_brake_min: Option<f64>,
    pub a_brake_max: Option<f64>,
    pub a_lat_accel_max: Option<f64>,
    pub a_lat_brake_min: Option<f64>,
    pub mu_lat: Option<f64>,
}

impl EnvironmentOverrides {
    pub fn apply(&self, base: &EnvironmentParams) -> EnvironmentParams {
        let mut env = *base;
        let pairs: [(&Option<f64>, &mut f64); 9] = [
            (&self.mu, &mut env.friction),
            (&self.g, &mut env.gravity),
            (&self.rho, &mut env.rss.response_time),
            (&self.a_accel_max, &mut env.rss.accel_max),
            (&self.a_brake_min, &mut env.rss.brake_min),
            (&self.a_brake_max, &mut env.rss.brake_max),
            (&self.a_lat_accel_max, &mut env.rss.lat_accel_max),
            (&self.a_lat_brake_min, &mut env.rss.lat_brake_min),
            (&self.mu_lat, &mut env.rss.lat_fluctuation),
        ];
        for (value, slot) in pairs {
            if let Some(v) = value {
                *slot = *v;
            }
        }
        if self.a_brake.is_some() {
            env.brake_override = self.a_brake;
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub iou_threshold: f64,
    pub verification_enabled: bool,
    pub verification: VerificationConfig,
    pub environment: EnvironmentOverrides,
    pub relevance: RelevanceConfig,
    pub time: TimeConfig,
    pub motp: NormalizationThresholds,
    pub weights: MetricWeights,
    pub mode: AggregationMode,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            verification_enabled: true,
            verification: VerificationConfig::default(),
            environment: EnvironmentOverrides::default(),
            relevance: RelevanceConfig::default(),
            time: TimeConfig::default(),
            motp: NormalizationThresholds::MOTP,
            weights: MetricWeights::default(),
            mode: AggregationMode::Cumulative,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    matching: RawMatching,
    verification: RawVerification,
    rss: EnvironmentOverrides,
    severity: RawSeverity,
    prediction: RawPrediction,
    time: RawTime,
    motp: RawMotp,
    weights: RawWeights,
    aggregation: RawAggregation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMatching {
    iou_threshold: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawVerification {
    enabled: bool,
    #[serde(rename = "mC")]
    min_cover: f64,
    #[serde(rename = "oT")]
    over_tolerance: f64,
    #[serde(rename = "mO")]
    max_over: f64,
    max_distance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSeverity {
    vru: [f64; 3],
    crumple: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPrediction {
    dt: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTime {
    #[serde(rename = "T_l")]
    lower: f64,
    weighting: TimeWeighting,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMotp {
    #[serde(rename = "T_l")]
    lower: f64,
    #[serde(rename = "T_u")]
    upper: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawWeights {
    #[serde(rename = "w_D")]
    w_d: f64,
    #[serde(rename = "w_T")]
    w_t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAggregation {
    mode: AggregationMode,
}

impl Default for RawMatching {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

impl Default for RawVerification {
    fn default() -> Self {
        let v = VerificationConfig::default();
        Self {
            enabled: true,
            min_cover: v.min_cover,
            over_tolerance: v.over_tolerance,
            max_over: v.max_over,
            max_distance: v.range.max_distance(),
        }
    }
}

impl Default for RawSeverity {
    fn default() -> Self {
        let s = SeverityThresholds::default();
        Self {
            vru: s.vru,
            crumple: s.crumple_zone,
        }
    }
}

impl Default for RawPrediction {
    fn default() -> Self {
        Self {
            dt: DEFAULT_PREDICTION_STEP,
        }
    }
}

impl Default for RawTime {
    fn default() -> Self {
        Self {
            lower: DEFAULT_TIME_LOWER,
            weighting: TimeWeighting::Count,
        }
    }
}

impl Default for RawMotp {
    fn default() -> Self {
        Self {
            lower: NormalizationThresholds::MOTP.lower(),
            upper: NormalizationThresholds::MOTP.upper(),
        }
    }
}

impl Default for RawWeights {
    fn default() -> Self {
        let w = MetricWeights::default();
        Self { w_d: w.w_d(), w_t: w.w_t() }
    }
}

impl Default for RawAggregation {
    fn default() -> Self {
        Self {
            mode: AggregationMode::Cumulative,
        }
    }
}

impl RawConfig {
    fn validate(self) -> Result<EvaluationConfig> {
        let iou_threshold = self.matching.iou_threshold;
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "matching.iou_threshold must be in (0, 1], got {iou_threshold}"
            )));
        }
        let v = &self.verification;
        let verification = VerificationConfig::new(
            v.min_cover,
            v.over_tolerance,
            v.max_over,
            EvaluationRange::new(v.max_distance)?,
        )?;
        let dt = self.prediction.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("prediction.dt must be positive, got {dt}")));
        }
        let env = self.rss.apply(&EnvironmentParams::default());
        env.validate().map_err(|e| Error::Config(format!("rss: {e}")))?;
        Ok(EvaluationConfig {
            iou_threshold,
            verification_enabled: v.enabled,
            verification,
            environment: self.rss,
            relevance: RelevanceConfig {
                prediction_step: dt,
                thresholds: SeverityThresholds::new(self.severity.vru, self.severity.crumple)?,
            },
            time: TimeConfig::new(self.time.lower, self.time.weighting)?,
            motp: NormalizationThresholds::new(self.motp.lower, self.motp.upper)?,
            weights: MetricWeights::new(self.weights.w_d, self.weights.w_t)?,
            mode: self.aggregation.mode,
        })
    }
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// Applies one `section.key=value` override to a parsed TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override '{assignment}' has an empty key")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut current = table;
    for part in parents {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{assignment}': '{part}' is not a section")))?;
    }
    current.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

impl EvaluationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_sources::<&str>(Some(text), &[])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_sources::<&str>(Some(&text), &[])
    }

    /// Builds a configuration from optional TOML text plus `key=value` overrides,
    /// applied in order.
    pub fn from_sources<S: AsRef<str>>(toml_text: Option<&str>, overrides: &[S]) -> Result<Self> {
        let mut table = match toml_text {
            Some(text) => toml::from_str::<toml::Table>(text).map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o.as_ref())?;
        }
        let raw: RawConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        raw.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIPPED: &str = include_str!("../../../config/default.toml");

    #[test]
    fn shipped_file_matches_defaults() {
        assert_eq!(EvaluationConfig::from_toml_str(SHIPPED).unwrap(), EvaluationConfig::default());
        assert_eq!(EvaluationConfig::from_toml_str("").unwrap(), EvaluationConfig::default());
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = EvaluationConfig::from_sources(
            Some(SHIPPED),
            &["weights.w_D=1", "weights.w_T=0", "aggregation.mode=per_frame_mean", "rss.mu=0.3"],
        )
        .unwrap();
        assert_eq!(cfg.weights.w_d(), 1.0);
        assert_eq!(cfg.mode, AggregationMode::PerFrameMean);
        assert_eq!(cfg.environment.mu, Some(0.3));
        let cfg = EvaluationConfig::from_sources(None, &["time.weighting=\"weight_sum\""]).unwrap();
        assert_eq!(cfg.time.weighting, TimeWeighting::WeightSum);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for bad in [
            "weights.w_D=0.7",
            "verification.mC=1.2",
            "motp.T_l=3.0",
            "matching.iou_threshold=0",
            "severity.vru=[3.0, 2.0, 1.0]",
            "prediction.dt=-1",
            "rss.mu=0",
            "nonsense",
        ] {
            let err = EvaluationConfig::from_sources(None, &[bad]).unwrap_err();
            assert!(err.is_config(), "{bad}: {err}");
        }
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = EvaluationConfig::from_toml_str("[weights]\nw_X = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("weights"), "{err}");
        assert!(err.is_config());
    }

    #[test]
    fn environment_overrides() {
        let o = EnvironmentOverrides {
            mu: Some(0.3),
            a_brake_min: Some(2.0),
            ..Default::default()
        };
        let env = o.apply(&EnvironmentParams::default());
        assert_eq!(env.friction, 0.3);
        assert_eq!(env.rss.brake_min, 2.0);
        assert_eq!(env.rss.brake_max, 8.0);
    }
}
