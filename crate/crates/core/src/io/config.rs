use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::PipelineConfig;
use crate::error::Result;
use crate::metrics::MetricsConfig;
use crate::raster::RasterConfig;
use crate::scene::SceneConfig;

/// Every tunable of a run. Missing sections and keys take their defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub pipeline: PipelineConfig,
    pub rasterize: RasterConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.pipeline.validate()?;
        self.rasterize.validate()?;
        self.metrics.validate()
    }
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let cfg: RunConfig = super::read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::io::{from_json_str, to_json_string};

    #[test]
    fn empty_object_is_default() {
        assert_eq!(from_json_str::<RunConfig>("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn default_round_trips() {
        let text = to_json_string(&RunConfig::default()).unwrap();
        assert_eq!(from_json_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        for (doc, want) in [
            (r#"{"sceen": {}}"#, "sceen"),
            (r#"{"scene": {"seeed": 1}}"#, "scene.seeed"),
            (r#"{"rasterize": {"voxel": {"size": 1}}}"#, "rasterize.voxel.size"),
            (r#"{"metrics": {"stats": {"height": {"min": 0, "max": 1, "bins": 2, "x": 0}}}}"#, "metrics.stats.height.x"),
        ] {
            match from_json_str::<RunConfig>(doc).unwrap_err() {
                Error::SchemaViolation { path, .. } => assert_eq!(path, want, "{doc}"),
                e => panic!("{doc}: {e}"),
            }
        }
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let cfg: RunConfig = from_json_str(r#"{"scene": {"seed": 9}, "metrics": {"match_threshold": 2.0}}"#).unwrap();
        assert_eq!(cfg.scene.seed, 9);
        assert_eq!(cfg.metrics.match_threshold, 2.0);
        assert_eq!(cfg.metrics.resample_spacing, MetricsConfig::default().resample_spacing);
        assert_eq!(cfg.pipeline, PipelineConfig::default());
    }
}
