//! Safety-oriented evaluation of object detection and tracking.
//!
//! Perception output is compared with ground truth using the CLEAR metrics.
//! Matched IoUs are then weighted by distance and cover, missed objects that
//! could cause a collision lower the score by the expected impact severity, and
//! late perception of critical objects is penalized. The result is a single
//! safety score in `[0, 1]` with a five-level classification.
//!
//! ```
//! use perception_safety::{evaluate_scenario, parse_scenario, EvaluationConfig, PerceptionLog};
//!
//! let text = r#"{"meta":{"name":"doc"}}
//! {"index":0,"ego":{"x":0,"y":0,"yaw":0,"v":10},"objects":[{"id":"a","class":"car","x":30,"y":3.5,"yaw":0,"l":4,"w":1.8,"vx":10,"vy":0}]}
//! "#;
//! let scenario = parse_scenario(text, "doc").unwrap();
//! let log = PerceptionLog::mirror_of(&scenario);
//! let report = evaluate_scenario(&scenario, &log, &EvaluationConfig::default()).unwrap();
//! assert_eq!(report.s, Some(1.0));
//! ```

pub mod aggregation;
pub mod assignment;
pub mod clear;
pub mod config;
pub mod error;
#[cfg(feature = "fixtures")]
pub mod fixture;
pub mod geometry;
pub mod relevance;
pub mod report;
pub mod scenario;
pub mod timing;
pub mod verification;

pub use aggregation::{classify, evaluate_scenario, AggregationMode, MetricWeights, SafetyLabel, SafetyReport};
pub use config::EvaluationConfig;
pub use error::{Error, Result};
pub use geometry::{cover, iou, OrientedBox};
pub use scenario::{
    load_perception_log, load_scenario, parse_perception_log, parse_scenario, PerceptionLog, Scenario,
};
