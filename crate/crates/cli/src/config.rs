use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use conefield::cone::VerifySettings;
use conefield::flow::IntegratorConfig;
use conefield::koopman::AverageConfig;
use conefield::{Exec, Grid, SystemSpec};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Auto,
    FixedPoint,
    LimitCycle,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Auto => "auto",
            Mode::FixedPoint => "fixed-point",
            Mode::LimitCycle => "limit-cycle",
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct SystemArgs {
    /// Built-in system: fixedpoint-example, vanderpol, linear-diag(a1,..,an)
    #[arg(long)]
    pub builtin: Option<String>,
    /// File holding a system definition
    #[arg(long)]
    pub system_file: Option<PathBuf>,
    /// Inline system definition, e.g. "n=2; f1=x2; f2=-x1"
    #[arg(long)]
    pub system: Option<String>,
    /// TOML config file; command-line flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// lo1:hi1:lo2:hi2:...:res
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Drop grid points within this radius of the origin
    #[arg(long)]
    pub exclude_disk: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Newton guess / cycle start, comma separated
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub guess: Option<Vec<f64>>,
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    #[arg(long = "strict-T")]
    pub strict_t: Option<f64>,
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub slack: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks one per core, 1 runs sequentially
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    system: SystemSection,
    mode: Option<Mode>,
    seed: Option<u64>,
    workers: Option<usize>,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    integrator: IntegratorSection,
    #[serde(default)]
    averaging: AveragingSection,
    #[serde(default)]
    verify: VerifySection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    builtin: Option<String>,
    file: Option<PathBuf>,
    inline: Option<String>,
    guess: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    bounds: Option<String>,
    exclude_disk: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    max_step: Option<f64>,
    max_steps: Option<usize>,
    divergence_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AveragingSection {
    window: Option<f64>,
    t_max: Option<f64>,
    tol: Option<f64>,
    accept_tol: Option<f64>,
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    rays: Option<usize>,
    horizons: Option<Vec<f64>>,
    strict_t: Option<f64>,
    eps_min: Option<f64>,
    slack: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum SystemSource {
    Builtin(String),
    File(PathBuf),
    Inline(String),
}

impl SystemSource {
    pub fn load(&self) -> Result<SystemSpec, CliError> {
        Ok(match self {
            SystemSource::Builtin(name) => SystemSpec::builtin(name)?,
            SystemSource::Inline(text) => SystemSpec::parse(text)?,
            SystemSource::File(path) => {
                let text = read(path)?;
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("user");
                SystemSpec::parse_named(&text, name)?
            }
        })
    }

    fn echo(&self) -> Value {
        match self {
            SystemSource::Builtin(s) => json!({ "builtin": s }),
            SystemSource::File(p) => json!({ "file": p.display().to_string() }),
            SystemSource::Inline(s) => json!({ "inline": s }),
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemSource,
    pub mode: Mode,
    pub grid: Option<String>,
    pub exclude_disk: Option<f64>,
    pub guess: Option<Vec<f64>>,
    pub integrator: IntegratorConfig,
    pub averaging: AverageConfig,
    pub rays: usize,
    pub horizons: Vec<f64>,
    /// `None` picks 2 for fixed points and one period for cycles.
    pub strict_t: Option<f64>,
    pub eps_min: f64,
    pub slack: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl RunConfig {
    pub fn resolve(sys: &SystemArgs, run: &RunArgs) -> Result<Self, CliError> {
        let file: FileConfig = match &sys.config {
            Some(path) => toml::from_str(&read(path)?).map_err(|e| CliError::Config {
                path: path.clone(),
                msg: e.to_string(),
            })?,
            None => FileConfig::default(),
        };
        let system = match (&sys.builtin, &sys.system_file, &sys.system) {
            (Some(b), None, None) => SystemSource::Builtin(b.clone()),
            (None, Some(f), None) => SystemSource::File(f.clone()),
            (None, None, Some(s)) => SystemSource::Inline(s.clone()),
            (None, None, None) => match (file.system.builtin, file.system.file, file.system.inline) {
                (Some(b), None, None) => SystemSource::Builtin(b),
                (None, Some(f), None) => SystemSource::File(f),
                (None, None, Some(s)) => SystemSource::Inline(s),
                (None, None, None) => return Err(CliError::Usage("no system given (--builtin, --system-file or --system)".into())),
                _ => return Err(CliError::Usage("config names more than one system".into())),
            },
            _ => return Err(CliError::Usage("give exactly one of --builtin, --system-file, --system".into())),
        };
        if let SystemSource::File(p) = &system {
            if !p.is_file() {
                return Err(CliError::Usage(format!("system file {} does not exist", p.display())));
            }
        }

        let mut integrator = IntegratorConfig::default().with_tolerances(1e-12, 1e-11);
        let fi = &file.integrator;
        if let Some(v) = fi.abs_tol {
            integrator.abs_tol = v;
        }
        if let Some(v) = fi.rel_tol {
            integrator.rel_tol = v;
        }
        if let Some(v) = fi.max_step {
            integrator.max_step = v;
        }
        if let Some(v) = fi.max_steps {
            integrator.max_steps = v;
        }
        if let Some(v) = fi.divergence_radius {
            integrator.divergence_radius = v;
        }

        let mut averaging = AverageConfig::default();
        let fa = &file.averaging;
        if let Some(v) = fa.window {
            averaging.window = v;
        }
        if let Some(v) = fa.t_max {
            averaging.t_max = v;
        }
        if let Some(v) = fa.tol {
            averaging.tol = v;
        }
        if let Some(v) = fa.accept_tol {
            averaging.accept_tol = v;
        }
        if let Some(v) = fa.abs_tol {
            averaging.integrator.abs_tol = v;
        }
        if let Some(v) = fa.rel_tol {
            averaging.integrator.rel_tol = v;
        }
        if let Some(v) = fi.divergence_radius {
            averaging.integrator.divergence_radius = v;
        }

        let defaults = VerifySettings::default();
        let fv = file.verify;
        let cfg = RunConfig {
            system,
            mode: run.mode.or(file.mode).unwrap_or(Mode::Auto),
            grid: run.grid.clone().or(file.grid.bounds),
            exclude_disk: run.exclude_disk.or(file.grid.exclude_disk),
            guess: run.guess.clone().or(file.system.guess),
            integrator,
            averaging,
            rays: run.rays.or(fv.rays).unwrap_or(defaults.ray_count),
            horizons: run.horizons.clone().or(fv.horizons).unwrap_or(defaults.horizons),
            strict_t: run.strict_t.or(fv.strict_t),
            eps_min: run.eps_min.or(fv.eps_min).unwrap_or(defaults.eps_min),
            slack: run.slack.or(fv.slack).unwrap_or(defaults.slack),
            out: run.out.clone().or(file.output.dir).unwrap_or_else(|| PathBuf::from("out")),
            seed: run.seed.or(file.seed).unwrap_or(0),
            workers: run.workers.or(file.workers).unwrap_or(0),
        };
        cfg.integrator.validate()?;
        cfg.averaging.validate()?;
        if let Some(r) = cfg.exclude_disk {
            if !(r >= 0.0) {
                return Err(CliError::Usage("--exclude-disk must be non-negative".into()));
            }
        }
        Ok(cfg)
    }

    pub fn exec(&self) -> Exec {
        match self.workers {
            0 => Exec::default(),
            1 => Exec::Sequential,
            w => Exec::Parallel { workers: w },
        }
    }

    /// The configured grid, or `[-1, 1]^n` with 11 points per axis.
    pub fn grid(&self, dim: usize) -> Result<Grid, CliError> {
        let grid = match &self.grid {
            Some(text) => Grid::parse(text)?,
            None => Grid::new(vec![-1.0; dim], vec![1.0; dim], 11)?,
        };
        if grid.dim() != dim {
            return Err(CliError::Usage(format!(
                "grid has {} axes but the system has dimension {dim}",
                grid.dim()
            )));
        }
        Ok(grid.with_exclusion(self.exclude_disk))
    }

    pub fn verify_settings(&self, strict_t: f64) -> VerifySettings {
        VerifySettings {
            ray_count: self.rays,
            horizons: self.horizons.clone(),
            slack: self.slack,
            strict_t,
            eps_min: self.eps_min,
            seed: self.seed,
            integrator: self.integrator,
            ..Default::default()
        }
    }

    pub fn echo(&self) -> Value {
        let i = &self.integrator;
        let a = &self.averaging;
        json!({
            "system": self.system.echo(),
            "mode": self.mode.label(),
            "grid": self.grid,
            "exclude_disk": self.exclude_disk,
            "guess": self.guess,
            "integrator": {
                "abs_tol": i.abs_tol,
                "rel_tol": i.rel_tol,
                "max_step": i.max_step,
                "max_steps": i.max_steps,
                "divergence_radius": i.divergence_radius,
            },
            "averaging": {
                "window": a.window,
                "t_max": a.t_max,
                "tol": a.tol,
                "accept_tol": a.accept_tol,
                "checkpoints": a.checkpoints,
                "abs_tol": a.integrator.abs_tol,
                "rel_tol": a.integrator.rel_tol,
                "max_step": a.integrator.max_step,
            },
            "verify": {
                "rays": self.rays,
                "horizons": self.horizons,
                "strict_t": self.strict_t,
                "eps_min": self.eps_min,
                "slack": self.slack,
            },
            "out": self.out.display().to_string(),
            "seed": self.seed,
            "workers": self.workers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("conefield-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(
            &path,
            "seed = 7\n[system]\nbuiltin = \"vanderpol\"\n[verify]\nrays = 8\neps_min = 0.01\n[averaging]\nt_max = 150.0\n",
        )
        .unwrap();
        let sys = SystemArgs {
            config: Some(path),
            ..Default::default()
        };
        let run = RunArgs {
            rays: Some(12),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&sys, &run).unwrap();
        assert!(matches!(cfg.system, SystemSource::Builtin(ref s) if s == "vanderpol"));
        assert_eq!(cfg.rays, 12);
        assert_eq!(cfg.eps_min, 0.01);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.averaging.t_max, 150.0);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn unknown_keys_and_double_systems_rejected() {
        let dir = std::env::temp_dir().join(format!("conefield-config-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.toml");
        std::fs::write(&path, "[verify]\nrayz = 8\n").unwrap();
        let sys = SystemArgs {
            builtin: Some("vanderpol".into()),
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&sys, &RunArgs::default()), Err(CliError::Config { .. })));
        let sys = SystemArgs {
            builtin: Some("vanderpol".into()),
            system: Some("n=1; f1=-x1".into()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&sys, &RunArgs::default()), Err(CliError::Usage(_))));
        std::fs::remove_dir_all(dir).ok();
    }
}
