//! Implementations behind the `borderforge` subcommands. Each returns whether the
//! work succeeded; I/O and input problems surface as errors.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use borderforge_core::extraction::{extract_border, extract_border_at, ExtractionParams};
use borderforge_core::geometry::{Point2, Pose2};
use borderforge_core::gridmap::{decode_pgm, integrate_border, load_map, save_map, OccupancyGrid};
use borderforge_core::harness::{batch_report, builtin, builtin_scenarios, run_scenario, RunOptions, Scenario};
use borderforge_core::interaction::{to_json_lines, Mode};
use serde::Serialize;

/// `builtin:N` or a path to a scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if spec.starts_with("builtin:") {
        return builtin(spec).with_context(|| format!("unknown builtin scenario {spec:?} (expected builtin:1..3)"));
    }
    let sc = Scenario::load(spec).with_context(|| format!("loading scenario {spec}"))?;
    sc.validate().with_context(|| format!("validating scenario {spec}"))?;
    Ok(sc)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Replays one scenario and writes the report, maps, event log and the scripted user's
/// action trace into `out`.
pub fn run(scenario: &Scenario, opts: RunOptions, out: &Path) -> Result<bool> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let art = run_scenario(scenario, opts)?;
    write_json(&out.join("report.json"), &art.report)?;
    save_map(&art.prior, out.join("prior.yaml"))?;
    save_map(&art.ground_truth, out.join("ground_truth.yaml"))?;
    if let Some(post) = &art.posterior {
        save_map(post, out.join("posterior.yaml"))?;
    }
    fs::write(out.join("events.jsonl"), to_json_lines(&art.events))?;
    let mut actions = String::new();
    for a in &art.actions {
        actions += &serde_json::to_string(a)?;
        actions.push('\n');
    }
    fs::write(out.join("actions.jsonl"), actions)?;
    let r = &art.report;
    match (&r.reason, r.jsi) {
        (None, Some(jsi)) => tracing::info!(
            scenario = %r.scenario, mode = %r.mode, seed = r.seed, jsi, total = r.timing.total, "run succeeded"
        ),
        (reason, _) => tracing::warn!(scenario = %r.scenario, mode = %r.mode, seed = r.seed, ?reason, "run failed"),
    }
    Ok(r.success)
}

#[derive(Debug, Serialize)]
struct RunRow<'a> {
    scenario: &'a str,
    mode: Mode,
    seed: u64,
    success: bool,
    jsi: Option<f64>,
    guide: f64,
    border: f64,
    seed_time: f64,
    total: f64,
    guide_path_length: Option<f64>,
    border_points: usize,
    seed_points: usize,
    reason: Option<&'a str>,
}

/// Runs every scenario in both modes for seeds `0..seeds`; writes `summary.csv`,
/// `runs.csv` and `batch.json`.
pub fn batch(scenarios: &[Scenario], seeds: u64, noise_scale: f64, out: &Path) -> Result<bool> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let result = batch_report(scenarios, &[Mode::Nrs, Mode::RobotOnly], seeds, noise_scale)?;

    let mut summary = csv::Writer::from_path(out.join("summary.csv"))?;
    for row in &result.rows {
        summary.serialize(row)?;
    }
    summary.flush()?;

    let mut runs = csv::Writer::from_path(out.join("runs.csv"))?;
    for r in &result.runs {
        runs.serialize(RunRow {
            scenario: &r.scenario,
            mode: r.mode,
            seed: r.seed,
            success: r.success,
            jsi: r.jsi,
            guide: r.timing.guide,
            border: r.timing.border,
            seed_time: r.timing.seed,
            total: r.timing.total,
            guide_path_length: r.guide_path_length,
            border_points: r.points_collected.border,
            seed_points: r.points_collected.seed,
            reason: r.reason.as_deref(),
        })?;
    }
    runs.flush()?;
    write_json(&out.join("batch.json"), &result)?;

    for row in &result.rows {
        tracing::info!(
            scenario = %row.scenario,
            mode = %row.mode,
            success_rate = row.success_rate,
            jsi_median = row.jsi_median,
            total_mean = row.total_mean,
            speedup = ?row.speedup,
            "batch row"
        );
    }
    Ok(result.runs.iter().all(|r| r.success))
}

pub fn default_scenarios() -> Vec<Scenario> {
    builtin_scenarios()
}

/// Reads `x,y` rows (meters). A header row and extra columns are tolerated.
pub fn read_points(path: &Path) -> Result<Vec<Point2>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(x), Some(y)) => points.push(Point2::new(x, y)),
            // header line
            _ if i == 0 => {}
            _ => bail!("{}:{}: expected two numbers x,y", path.display(), i + 1),
        }
    }
    Ok(points)
}

/// Loads a map from a YAML descriptor, a PGM with a sibling descriptor, or a bare PGM
/// (then `resolution` and a zero origin are assumed).
pub fn read_map(path: &Path, resolution: f64) -> Result<OccupancyGrid> {
    if path.with_extension("yaml").exists() {
        return Ok(load_map(path)?);
    }
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h, cells) = decode_pgm(&bytes)?;
    Ok(OccupancyGrid::from_cells(w, h, resolution, Pose2::default(), cells)?)
}

/// Where the restricted side of the border is.
pub enum SeedInput {
    /// A known location.
    At(Point2),
    /// Recorded laser detections; the largest cluster's centroid is used.
    Recorded(Vec<Point2>),
}

pub struct ExtractInput {
    pub points: PathBuf,
    pub seed: SeedInput,
    pub params: Option<PathBuf>,
    pub map: PathBuf,
    pub resolution: f64,
    pub out: PathBuf,
}

/// Runs clustering, thinning, chain generation and map integration on recorded points.
pub fn extract(input: &ExtractInput) -> Result<bool> {
    let params = match &input.params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<ExtractionParams>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExtractionParams::default(),
    };
    let points = read_points(&input.points)?;
    let prior = read_map(&input.map, input.resolution)?;
    let extracted = match &input.seed {
        SeedInput::At(p) => extract_border_at(&points, *p, &params),
        SeedInput::Recorded(pts) => extract_border(&points, pts, &params),
    };
    let (border, diag) = match extracted {
        Ok(r) => r,
        Err(e) => {
            tracing::error!(stage = e.stage(), "{e}");
            return Ok(false);
        }
    };
    tracing::info!(
        kind = ?border.kind,
        vertices = border.chain.len(),
        clusters = diag.clusters,
        dropped = diag.dropped_points,
        "border extracted"
    );
    let posterior = match integrate_border(&prior, &border) {
        Ok(p) => p,
        Err(e) => {
            tracing::error!(stage = "integration", "{e}");
            return Ok(false);
        }
    };
    if let Some(dir) = input.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_map(&posterior, &input.out)?;
    Ok(true)
}
