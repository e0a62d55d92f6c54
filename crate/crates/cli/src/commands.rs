use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use conefield::cone::{verify_positivity, write_cone_grid, ConeField, PositivityReport, TabulatedCones};
use conefield::flow::{integrate_prolonged, IntegratorConfig};
use conefield::koopman::EigenpairSet;
use conefield::linalg::Matrix;
use conefield::pf::{level_grid, pf_continuity, pf_field, write_level_csv, write_pf_csv, Level, PfVector};
use conefield::{Exec, Grid, SystemSpec};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::pipeline::{analyze_system, Analysis};
use crate::CliError;

/// Generator residuals below this count as resolved eigenfunctions.
const RESIDUAL_TOL: f64 = 1e-3;

/// Wall-clock stage timings, kept only in the manifest.
#[derive(Default)]
struct Timings(Map<String, Value>);

impl Timings {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(name.into(), json!(start.elapsed().as_secs_f64()));
        out
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok((path, BufWriter::new(f)))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn flush(path: &Path, mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush().map_err(io_err(path))
}

fn write_manifest(dir: &Path, manifest: Value) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    writeln!(w).map_err(io_err(&path))?;
    flush(&path, w)?;
    Ok(path)
}

fn base_manifest(command: &str, cfg: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!("conefield"));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    m.insert("parallel_feature".into(), json!(cfg!(feature = "parallel")));
    m.insert("config".into(), cfg.echo());
    m
}

fn fmt_e(v: f64) -> String {
    format!("{v:.6e}")
}

/// Per-pair statistics of the eigenfunctions on the grid.
struct EigenStats {
    resolved: usize,
    pass_fraction: Vec<f64>,
    worst_residual: Vec<f64>,
    max_horizon: f64,
}

fn eigen_stats(set: &EigenpairSet, points: &[Vec<f64>], exec: Exec) -> EigenStats {
    let n = set.pairs().len();
    let rows: Vec<Option<(Vec<f64>, f64)>> = exec.map(points, |_, x| {
        let v = set.evaluate(x).ok()?;
        let res = (0..n).map(|j| set.generator_residual(j, x)).collect();
        let h = v.iter().map(|p| p.horizon).fold(0.0, f64::max);
        Some((res, h))
    });
    let ok: Vec<&(Vec<f64>, f64)> = rows.iter().flatten().collect();
    let resolved = ok.len();
    let pass_fraction = (0..n)
        .map(|j| {
            let pass = ok.iter().filter(|r| r.0[j] < RESIDUAL_TOL).count();
            if resolved == 0 {
                0.0
            } else {
                pass as f64 / resolved as f64
            }
        })
        .collect();
    let worst_residual = (0..n).map(|j| ok.iter().map(|r| r.0[j]).fold(0.0, f64::max)).collect();
    let max_horizon = ok.iter().map(|r| r.1).fold(0.0, f64::max);
    EigenStats {
        resolved,
        pass_fraction,
        worst_residual,
        max_horizon,
    }
}

struct PfStats {
    resolved: usize,
    worst_residual: f64,
    min_margin: f64,
    max_neighbour_angle: f64,
    steep_pairs: usize,
    reversals: usize,
}

fn pf_stats(vectors: &[conefield::Result<PfVector>], grid: &Grid) -> PfStats {
    let ok: Vec<PfVector> = vectors.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let spacing = if grid.resolution > 1 {
        grid.lo
            .iter()
            .zip(&grid.hi)
            .map(|(a, b)| (b - a) / (grid.resolution - 1) as f64)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let cont = pf_continuity(&ok, spacing, 0.2);
    PfStats {
        resolved: ok.len(),
        worst_residual: ok.iter().flat_map(|p| p.residuals.iter().copied()).fold(0.0, f64::max),
        min_margin: ok.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min),
        max_neighbour_angle: cont.max_angle,
        steep_pairs: cont.steep.len(),
        reversals: cont.reversals,
    }
}

/// Eigenpairs, cone grid and PF field for the grid; shared by analyze and
/// export-grid.
struct Exported {
    analysis: Analysis,
    eigen: EigenStats,
    pf: PfStats,
    artifacts: Vec<String>,
}

fn export_fields(spec: &SystemSpec, grid: &Grid, points: &[Vec<f64>], cfg: &RunConfig, t: &mut Timings) -> Result<Exported, CliError> {
    let exec = cfg.exec();
    let analysis = t.stage("attractor", || analyze_system(spec, grid, cfg))?;
    let set = &analysis.set;
    let eigen = t.stage("eigenfunctions", || eigen_stats(set, points, exec));
    let mut artifacts = Vec::new();

    let (path, mut w) = create(&cfg.out, "eigenpairs.csv")?;
    set.write_csv(points, &mut w)?;
    flush(&path, w)?;
    artifacts.push("eigenpairs.csv".to_string());

    if spec.dim() == 2 {
        let (path, mut w) = create(&cfg.out, "cone_grid.csv")?;
        t.stage("cone_grid", || write_cone_grid(set, points, exec, &mut w))?;
        flush(&path, w)?;
        artifacts.push("cone_grid.csv".to_string());
    }

    let vectors = t.stage("pf_field", || pf_field(set, points, exec));
    let (path, mut w) = create(&cfg.out, "pf_field.csv")?;
    write_pf_csv(set, &vectors, &mut w)?;
    flush(&path, w)?;
    artifacts.push("pf_field.csv".to_string());
    let pf = pf_stats(&vectors, grid);

    Ok(Exported {
        analysis,
        eigen,
        pf,
        artifacts,
    })
}

fn describe_analysis(out: &mut String, e: &Exported, total_points: usize) {
    let a = &e.analysis;
    out.push_str(&format!("system: {}\n", a.set.spec().name()));
    out.push_str(&format!("pipeline: {}\n", a.pipeline));
    for line in &a.summary {
        out.push_str(&format!("{line}\n"));
    }
    for note in &a.notes {
        out.push_str(&format!("note: {note}\n"));
    }
    for w in a.set.warnings() {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push_str(&format!(
        "eigenfunctions resolved at {} of {} grid points (max averaging horizon {:.3})\n",
        e.eigen.resolved, total_points, e.eigen.max_horizon
    ));
    for (j, (frac, worst)) in e.eigen.pass_fraction.iter().zip(&e.eigen.worst_residual).enumerate() {
        out.push_str(&format!(
            "  pair {} (lambda = {}): generator residual < {} at {:.1}% of resolved points, worst {}\n",
            j + 1,
            a.set.pairs()[j].lambda,
            RESIDUAL_TOL,
            100.0 * frac,
            fmt_e(*worst)
        ));
    }
    let pf = &e.pf;
    out.push_str(&format!(
        "PF field: {} points, worst annihilation residual {}, smallest cone margin {}\n",
        pf.resolved,
        fmt_e(pf.worst_residual),
        fmt_e(pf.min_margin)
    ));
    out.push_str(&format!(
        "PF continuity: max neighbour angle {:.4} rad, {} pairs above 0.2 rad, {} orientation reversals\n",
        pf.max_neighbour_angle, pf.steep_pairs, pf.reversals
    ));
}

fn stats_json(e: &Exported) -> Value {
    json!({
        "eigenfunctions_resolved": e.eigen.resolved,
        "generator_residual_pass_fraction": e.eigen.pass_fraction,
        "generator_residual_worst": e.eigen.worst_residual,
        "averaging_horizon_max": e.eigen.max_horizon,
        "pf_resolved": e.pf.resolved,
        "pf_worst_residual": e.pf.worst_residual,
        "pf_min_margin": e.pf.min_margin,
        "pf_max_neighbour_angle": e.pf.max_neighbour_angle,
        "pf_orientation_reversals": e.pf.reversals,
    })
}

fn report_json(r: &PositivityReport) -> Value {
    json!({
        "verdict": r.verdict.label(),
        "resolved_points": r.resolved,
        "skipped_points": r.skipped,
        "worst_margin": r.worst_margin,
        "strictness": r.strictness,
        "counterexamples": r.counterexamples.len(),
        "strict_t": r.settings.strict_t,
    })
}

fn positivity_text(r: &PositivityReport) -> String {
    let mut buf = Vec::new();
    r.write_text(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("report is utf-8")
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let (path, mut w) = create(dir, name)?;
    w.write_all(text.as_bytes()).map_err(io_err(&path))?;
    flush(&path, w)
}

pub fn analyze(cfg: &RunConfig) -> Result<i32, CliError> {
    let mut t = Timings::default();
    let spec = cfg.system.load()?;
    let grid = cfg.grid(spec.dim())?;
    let points = grid.points();
    make_dir(&cfg.out)?;
    let exported = export_fields(&spec, &grid, &points, cfg, &mut t)?;
    let strict_t = cfg.strict_t.unwrap_or(exported.analysis.strict_t);
    let settings = cfg.verify_settings(strict_t);
    let report = t.stage("verify", || {
        verify_positivity(&spec, &exported.analysis.set, &points, &grid.to_string(), &settings, cfg.exec())
    })?;

    let mut text = String::from("conefield analysis\n");
    describe_analysis(&mut text, &exported, points.len());
    text.push('\n');
    text.push_str(&positivity_text(&report));
    write_text(&cfg.out, "report.txt", &text)?;
    print!("{text}");

    let code = report.verdict.exit_code();
    let mut m = base_manifest("analyze", cfg);
    m.insert("pipeline".into(), json!(exported.analysis.pipeline));
    m.insert("grid_points".into(), json!(points.len()));
    m.insert("positivity".into(), report_json(&report));
    m.insert("statistics".into(), stats_json(&exported));
    m.insert("warnings".into(), json!(exported.analysis.set.warnings()));
    let mut artifacts = exported.artifacts.clone();
    artifacts.push("report.txt".into());
    m.insert("artifacts".into(), json!(artifacts));
    m.insert("exit_code".into(), json!(code));
    m.insert("timings_s".into(), Value::Object(t.0));
    write_manifest(&cfg.out, Value::Object(m))?;
    Ok(code)
}

pub fn verify(cfg: &RunConfig, cone_file: Option<&Path>) -> Result<i32, CliError> {
    let mut t = Timings::default();
    let spec = cfg.system.load()?;
    let grid = cfg.grid(spec.dim())?;
    let points = grid.points();
    make_dir(&cfg.out)?;
    let mut header = String::from("conefield verification\n");
    header.push_str(&format!("system: {}\n", spec.name()));
    let mut m = base_manifest("verify", cfg);

    let table;
    let analysis;
    let (field, strict_t): (&dyn ConeField, f64) = match cone_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            table = TabulatedCones::parse(&text)?;
            header.push_str(&format!("cone source: {}\n", path.display()));
            m.insert("cone_source".into(), json!(path.display().to_string()));
            (&table, cfg.strict_t.unwrap_or(2.0))
        }
        None => {
            analysis = t.stage("attractor", || analyze_system(&spec, &grid, cfg))?;
            header.push_str(&format!("cone source: computed ({})\n", analysis.pipeline));
            for line in &analysis.summary {
                header.push_str(&format!("{line}\n"));
            }
            m.insert("cone_source".into(), json!("computed"));
            m.insert("pipeline".into(), json!(analysis.pipeline));
            (&analysis.set, cfg.strict_t.unwrap_or(analysis.strict_t))
        }
    };
    let settings = cfg.verify_settings(strict_t);
    let report = t.stage("verify", || {
        verify_positivity(&spec, field, &points, &grid.to_string(), &settings, cfg.exec())
    })?;
    header.push('\n');
    header.push_str(&positivity_text(&report));
    write_text(&cfg.out, "report.txt", &header)?;
    print!("{header}");

    let code = report.verdict.exit_code();
    m.insert("grid_points".into(), json!(points.len()));
    m.insert("positivity".into(), report_json(&report));
    m.insert("artifacts".into(), json!(["report.txt"]));
    m.insert("exit_code".into(), json!(code));
    m.insert("timings_s".into(), Value::Object(t.0));
    write_manifest(&cfg.out, Value::Object(m))?;
    Ok(code)
}

pub fn export_grid(cfg: &RunConfig) -> Result<i32, CliError> {
    let mut t = Timings::default();
    let spec = cfg.system.load()?;
    let grid = cfg.grid(spec.dim())?;
    let points = grid.points();
    make_dir(&cfg.out)?;
    let mut exported = export_fields(&spec, &grid, &points, cfg, &mut t)?;
    let set = &exported.analysis.set;
    let mut levels = vec![
        (Level::DominantMagnitude, "level_dominant_magnitude.csv".to_string()),
        (Level::DominantAngle, "level_dominant_angle.csv".to_string()),
    ];
    for j in 2..=set.dim() {
        levels.push((Level::Subordinate(j), format!("level_subordinate_{j}.csv")));
    }
    for (which, name) in levels {
        let values = level_grid(set, &points, which, cfg.exec())?;
        let (path, mut w) = create(&cfg.out, &name)?;
        write_level_csv(&points, &values, &mut w).map_err(io_err(&path))?;
        flush(&path, w)?;
        exported.artifacts.push(name);
    }

    let mut text = String::from("conefield export\n");
    describe_analysis(&mut text, &exported, points.len());
    print!("{text}");

    let mut m = base_manifest("export-grid", cfg);
    m.insert("pipeline".into(), json!(exported.analysis.pipeline));
    m.insert("grid_points".into(), json!(points.len()));
    m.insert("statistics".into(), stats_json(&exported));
    m.insert("artifacts".into(), json!(exported.artifacts));
    m.insert("exit_code".into(), json!(0));
    m.insert("timings_s".into(), Value::Object(t.0));
    write_manifest(&cfg.out, Value::Object(m))?;
    Ok(0)
}

pub fn trace(cfg: &RunConfig, x0: &[f64], t_end: f64) -> Result<i32, CliError> {
    let spec = cfg.system.load()?;
    make_dir(&cfg.out)?;
    let n = spec.dim();
    let icfg: IntegratorConfig = cfg.integrator;
    let start = Instant::now();
    let traj = integrate_prolonged(&spec, x0, &Matrix::identity(n), t_end, &icfg)?;
    let (path, mut w) = create(&cfg.out, "trajectory.csv")?;
    traj.write_csv(&mut w).map_err(io_err(&path))?;
    flush(&path, w)?;
    let last = traj.last_state();
    println!(
        "traced {} from {:?} to t = {}: {} samples, final state {:?}",
        spec.name(),
        x0,
        traj.times.last().copied().unwrap_or(0.0),
        traj.times.len(),
        last
    );
    let mut m = base_manifest("trace", cfg);
    m.insert("x0".into(), json!(x0));
    m.insert("t".into(), json!(t_end));
    m.insert("samples".into(), json!(traj.times.len()));
    m.insert("final_state".into(), json!(last));
    m.insert("artifacts".into(), json!(["trajectory.csv"]));
    m.insert("exit_code".into(), json!(0));
    m.insert("timings_s".into(), json!({ "trace": start.elapsed().as_secs_f64() }));
    write_manifest(&cfg.out, Value::Object(m))?;
    Ok(0)
}
