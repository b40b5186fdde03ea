use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use laneforge_core::annotate::{run_pipeline, PipelineReport};
use laneforge_core::io::{
    bev_stats, read_cloud, read_lanes, read_run_config, write_bev_pgm, write_cloud, write_json,
    write_lanes, write_stats_csv, LaneCurve, LaneFile, LaneSource, RunConfig,
};
use laneforge_core::metrics::evaluate_frame;
use laneforge_core::{dataset_stats, generate_scene, pillarize, EvalReport, LanePolyline, Roi};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{AnnotateArgs, BevArgs, Cli, Command, EvalArgs, GenArgs, StatsArgs};
use crate::UsageError;

pub const THREADS_ENV: &str = "LANEFORGE_THREADS";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn resolve_threads(flag: Option<u32>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n as usize);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(usage(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => read_run_config(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    threads: usize,
    config: &'a RunConfig,
}

fn echo(command: &str, threads: usize, config: &RunConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(&Echo { command, threads, config })?;
    println!("{text}");
    Ok(())
}

fn same_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(usage(format!("expected {want} {name} path(s), got {got}")));
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `<dir>/<stem><suffix>` beside `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_file_name(format!("{}{suffix}", stem(path)))
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    pool.install(|| match cli.command {
        Command::Gen(a) => gen(a, threads),
        Command::Annotate(a) => annotate(a, threads),
        Command::Bev(a) => bev(a, threads),
        Command::Eval(a) => eval(a, threads),
        Command::Stats(a) => stats(a, threads),
    })
}

fn gen(a: GenArgs, threads: usize) -> Result<()> {
    let mut cfg = load_config(a.config.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.scene.seed = seed;
    }
    cfg.validate()?;
    let n = a.out_cloud.len();
    same_len("--out-lanes", a.out_lanes.len(), n)?;
    if !a.out_sparse.is_empty() {
        same_len("--out-sparse", a.out_sparse.len(), n)?;
    }
    echo("gen", threads, &cfg)?;
    (0..n).into_par_iter().try_for_each(|i| -> Result<()> {
        let mut scene_cfg = cfg.scene.clone();
        scene_cfg.seed = cfg.scene.seed.wrapping_add(i as u64);
        let mut scene = generate_scene(&scene_cfg)
            .with_context(|| format!("generating scene with seed {}", scene_cfg.seed))?;
        let frame = stem(&a.out_cloud[i]);
        scene.cloud.frame_id = frame.clone();
        write_cloud(&scene.cloud, &a.out_cloud[i])?;
        write_lanes(
            &LaneFile::from_polylines(&frame, &scene.gt_dense_lanes, LaneSource::Manual),
            &a.out_lanes[i],
        )?;
        if let Some(p) = a.out_sparse.get(i) {
            write_lanes(&LaneFile::from_polylines(&frame, &scene.gt_sparse_lanes, LaneSource::Manual), p)?;
        }
        eprintln!("{frame}: seed {}, {} points, {} lanes", scene_cfg.seed, scene.cloud.len(), scene.gt_dense_lanes.len());
        Ok(())
    })
}

#[derive(Serialize)]
struct AnnotateReport<'a> {
    frame_id: &'a str,
    #[serde(flatten)]
    report: &'a PipelineReport,
}

fn annotate(a: AnnotateArgs, threads: usize) -> Result<()> {
    let cfg = load_config(a.config.config.as_deref())?;
    let n = a.cloud.len();
    same_len("--lanes", a.lanes.len(), n)?;
    same_len("--out", a.out.len(), n)?;
    if !a.report.is_empty() {
        same_len("--report", a.report.len(), n)?;
    }
    echo("annotate", threads, &cfg)?;
    (0..n).into_par_iter().try_for_each(|i| -> Result<()> {
        let cloud = read_cloud(&a.cloud[i]).with_context(|| format!("reading {}", a.cloud[i].display()))?;
        let manual = read_lanes(&a.lanes[i])
            .and_then(|f| f.polylines())
            .with_context(|| format!("reading {}", a.lanes[i].display()))?;
        let out = run_pipeline(&cloud, &manual, &cfg.pipeline)?;
        let mut file = LaneFile::from_polylines(&cloud.frame_id, &out.lanes, LaneSource::Auto);
        for rec in &mut file.lanes {
            rec.curve = out
                .report
                .lanes
                .iter()
                .find(|r| r.instance_id == rec.instance_id)
                .and_then(|r| r.lateral.as_ref())
                .map(LaneCurve::from);
        }
        write_lanes(&file, &a.out[i])?;
        let report_path = a.report.get(i).cloned().unwrap_or_else(|| sibling(&a.out[i], ".report.json"));
        write_json(&AnnotateReport { frame_id: &cloud.frame_id, report: &out.report }, &report_path)?;
        eprintln!(
            "{}: {} of {} lanes densified",
            cloud.frame_id,
            out.lanes.len(),
            manual.len()
        );
        Ok(())
    })
}

fn bev(a: BevArgs, threads: usize) -> Result<()> {
    let mut cfg = load_config(a.config.config.as_deref())?;
    if let Some(r) = &a.roi {
        cfg.rasterize.roi = Roi::new(r[0], r[1], r[2], r[3]).map_err(|e| usage(format!("--roi: {e}")))?;
    }
    if let Some(res) = a.res {
        cfg.rasterize.bev_resolution = res;
    }
    cfg.rasterize.validate().map_err(|e| usage(e.to_string()))?;
    echo("bev", threads, &cfg)?;
    let cloud = read_cloud(&a.cloud).with_context(|| format!("reading {}", a.cloud.display()))?;
    let grid = pillarize(&cloud, cfg.rasterize.roi, cfg.rasterize.bev_resolution)?;
    write_bev_pgm(&grid, &a.out)?;
    let stats_path = a.stats.unwrap_or_else(|| sibling(&a.out, ".stats.json"));
    write_json(&bev_stats(&grid), &stats_path)?;
    let (nx, ny) = grid.shape();
    eprintln!("{}: {nx}x{ny} cells, {} occupied, {} dropped", cloud.frame_id, grid.occupied(), grid.dropped());
    Ok(())
}

fn read_polylines(path: &Path) -> Result<(String, Vec<LanePolyline>)> {
    let f = read_lanes(path).with_context(|| format!("reading {}", path.display()))?;
    let lanes = f.polylines().with_context(|| format!("reading {}", path.display()))?;
    Ok((f.frame_id, lanes))
}

fn eval(a: EvalArgs, threads: usize) -> Result<()> {
    let mut cfg = load_config(a.config.config.as_deref())?;
    if let Some(t) = a.tau {
        cfg.metrics.match_threshold = t;
    }
    if let Some(s) = a.spacing {
        cfg.metrics.resample_spacing = s;
    }
    cfg.metrics.validate().map_err(|e| usage(e.to_string()))?;
    same_len("--gt", a.gt.len(), a.pred.len())?;
    echo("eval", threads, &cfg)?;
    let frames = a
        .pred
        .par_iter()
        .zip(&a.gt)
        .map(|(p, g)| -> Result<_> {
            let (_, pred) = read_polylines(p)?;
            let (frame_id, gt) = read_polylines(g)?;
            Ok(evaluate_frame(&frame_id, &pred, &gt, &cfg.metrics)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::aggregate(frames, &cfg.metrics);
    write_json(&report, &a.out)?;
    eprintln!(
        "P {:.4} R {:.4} F1 {:.4} CD3D {} CDBEV {}",
        report.counts.precision,
        report.counts.recall,
        report.counts.f1,
        report.cd_3d.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.cd_bev.map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    Ok(())
}

fn stats(a: StatsArgs, threads: usize) -> Result<()> {
    let cfg = load_config(a.config.config.as_deref())?;
    echo("stats", threads, &cfg)?;
    let per_file = a
        .lanes
        .par_iter()
        .map(|p| read_polylines(p).map(|(_, l)| l))
        .collect::<Result<Vec<_>>>()?;
    let lanes: Vec<LanePolyline> = per_file.into_iter().flatten().collect();
    let report = dataset_stats(&lanes, &cfg.metrics.stats)?;
    write_json(&report, &a.out)?;
    let dir = a.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_stats_csv(&report, dir, &stem(&a.out))?;
    eprintln!(
        "{} lanes, {} points, {} skipped for curvature",
        report.lane_count, report.point_count, report.skipped_curvature
    );
    Ok(())
}
