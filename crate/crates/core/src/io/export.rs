use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lane::Roi;
use crate::metrics::{Histogram1D, Histogram2D};
use crate::metrics::StatsReport;
use crate::raster::BevGrid;

/// `lo,hi,count` rows, one per bin.
pub fn histogram_csv(h: &Histogram1D) -> String {
    let mut s = String::from("lo,hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.edges(i);
        writeln!(s, "{lo},{hi},{c}").expect("writing to a String");
    }
    s
}

/// Long-format heatmap: `x_lo,x_hi,y_lo,y_hi,count`, x-major.
pub fn xy_histogram_csv(h: &Histogram2D) -> String {
    let mut s = String::from("x_lo,x_hi,y_lo,y_hi,count\n");
    for (ix, col) in h.counts.iter().enumerate() {
        let x_lo = h.roi.x_min + ix as f64 * h.cell;
        for (iy, c) in col.iter().enumerate() {
            let y_lo = h.roi.y_min + iy as f64 * h.cell;
            writeln!(s, "{x_lo},{},{y_lo},{},{c}", x_lo + h.cell, y_lo + h.cell)
                .expect("writing to a String");
        }
    }
    s
}

/// Writes the four histograms as `<stem>_xy.csv`, `<stem>_height.csv`,
/// `<stem>_curvature_a.csv` and `<stem>_slope_deg.csv` under `dir`.
pub fn write_stats_csv(report: &StatsReport, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let files = [
        ("xy", xy_histogram_csv(&report.xy)),
        ("height", histogram_csv(&report.height)),
        ("curvature_a", histogram_csv(&report.curvature_a)),
        ("slope_deg", histogram_csv(&report.slope_deg)),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let p = dir.join(format!("{stem}_{name}.csv"));
        super::write_atomic(&p, body.as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

/// Plain (P2) graymap of per-cell point counts.
///
/// Columns run along +x and rows along -y, so the first row is the roi's
/// `y_max` edge. Counts above 65535 saturate. Lines are wrapped at 70
/// characters.
pub fn bev_pgm(grid: &BevGrid) -> String {
    let (nx, ny) = grid.shape();
    let g = grid.geometry();
    let roi = g.roi();
    let value = |ix: usize, iy: usize| grid.cell(ix, iy).count.min(65535);
    let maxval = grid.cells().iter().map(|c| c.count.min(65535)).max().unwrap_or(0).max(1);
    let mut s = String::with_capacity(nx * ny * 2 + 128);
    s.push_str("P2\n");
    writeln!(
        s,
        "# roi {} {} {} {} resolution {} dropped {}",
        roi.x_min,
        roi.x_max,
        roi.y_min,
        roi.y_max,
        g.resolution(),
        grid.dropped()
    )
    .expect("writing to a String");
    writeln!(s, "{nx} {ny}\n{maxval}").expect("writing to a String");
    for iy in (0..ny).rev() {
        let mut line_len = 0;
        for ix in 0..nx {
            let v = value(ix, iy).to_string();
            if line_len > 0 && line_len + 1 + v.len() > 70 {
                s.push('\n');
                line_len = 0;
            } else if line_len > 0 {
                s.push(' ');
                line_len += 1;
            }
            line_len += v.len();
            s.push_str(&v);
        }
        s.push('\n');
    }
    s
}

pub fn write_bev_pgm(grid: &BevGrid, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path, bev_pgm(grid).as_bytes())
}

/// Summary of a BEV grid for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevStats {
    pub roi: Roi,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    pub in_roi_points: u64,
    pub dropped_points: usize,
    pub occupied_cells: usize,
    pub max_count: u32,
    pub mean_intensity: Option<f64>,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    /// Points per x column.
    pub x_profile: Vec<u64>,
    /// Points per y row.
    pub y_profile: Vec<u64>,
}

pub fn bev_stats(grid: &BevGrid) -> BevStats {
    let (nx, ny) = grid.shape();
    let mut x_profile = vec![0u64; nx];
    let mut y_profile = vec![0u64; ny];
    let (mut z_min, mut z_max) = (None::<f64>, None::<f64>);
    let mut intensity = 0.0;
    for ix in 0..nx {
        for iy in 0..ny {
            let c = grid.cell(ix, iy);
            x_profile[ix] += c.count as u64;
            y_profile[iy] += c.count as u64;
            intensity += c.intensity_sum;
            if let Some(z) = c.max_z() {
                z_min = Some(z_min.map_or(z, |m| m.min(z)));
                z_max = Some(z_max.map_or(z, |m| m.max(z)));
            }
        }
    }
    let total = grid.total_count();
    BevStats {
        roi: grid.geometry().roi(),
        resolution: grid.geometry().resolution(),
        nx,
        ny,
        in_roi_points: total,
        dropped_points: grid.dropped(),
        occupied_cells: grid.occupied(),
        max_count: grid.cells().iter().map(|c| c.count).max().unwrap_or(0),
        mean_intensity: (total > 0).then(|| intensity / total as f64),
        z_min,
        z_max,
        x_profile,
        y_profile,
    }
}
