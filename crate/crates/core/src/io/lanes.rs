use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cubic::CubicCurve;
use crate::error::{Error, Result};
use crate::lane::{LanePolyline, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSource {
    Manual,
    Auto,
}

/// Lateral cubic coefficients attached to a lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl From<&CubicCurve> for LaneCurve {
    fn from(c: &CubicCurve) -> Self {
        Self { a: c.a, b: c.b, c: c.c, d: c.d }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneRecord {
    pub instance_id: u32,
    pub points: Vec<[f64; 3]>,
    pub source: LaneSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<LaneCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneFile {
    pub frame_id: String,
    pub lanes: Vec<LaneRecord>,
}

impl LaneFile {
    pub fn from_polylines(frame_id: impl Into<String>, lanes: &[LanePolyline], source: LaneSource) -> Self {
        Self {
            frame_id: frame_id.into(),
            lanes: lanes
                .iter()
                .map(|l| LaneRecord {
                    instance_id: l.instance_id(),
                    points: l.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
                    source,
                    curve: None,
                })
                .collect(),
        }
    }

    /// Checks id uniqueness and point finiteness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, lane) in self.lanes.iter().enumerate() {
            if let Some(first) = seen.insert(lane.instance_id, i) {
                return Err(Error::schema(
                    format!("lanes[{i}].instance_id"),
                    format!("duplicate instance_id {} (first at lanes[{first}])", lane.instance_id),
                ));
            }
            if let Some(j) = lane.points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
                return Err(Error::schema(format!("lanes[{i}].points[{j}]"), "non-finite coordinate"));
            }
            if let Some(c) = &lane.curve {
                if ![c.a, c.b, c.c, c.d].iter().all(|v| v.is_finite()) {
                    return Err(Error::schema(format!("lanes[{i}].curve"), "non-finite coefficient"));
                }
            }
        }
        Ok(())
    }

    /// Converts every record into a polyline, naming the failing record on error.
    pub fn polylines(&self) -> Result<Vec<LanePolyline>> {
        self.lanes
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let pts = r.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
                LanePolyline::new(r.instance_id, pts)
                    .map_err(|e| Error::schema(format!("lanes[{i}].points"), e.to_string()))
            })
            .collect()
    }
}

pub fn read_lanes(path: impl AsRef<Path>) -> Result<LaneFile> {
    let file: LaneFile = super::read_json(path)?;
    file.validate()?;
    Ok(file)
}

pub fn write_lanes(file: &LaneFile, path: impl AsRef<Path>) -> Result<()> {
    file.validate()?;
    super::write_json(file, path)
}
