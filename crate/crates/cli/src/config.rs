//! Run configuration: built-in defaults, then a `key = value` config file,
//! then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use mfd_core::analysis::{SpectrumMode, DEFAULT_MAX_DENSE_DOFS, DEFAULT_SEED};
use mfd_core::field::{AdvectiveField, FieldKind, PsiParams, SAW_PERP_SCALE};
use mfd_core::grid::{GridSpec, DEFAULT_LX, DEFAULT_LY, DEFAULT_LZ};
use mfd_core::linalg::DEFAULT_TOL;
use mfd_core::models::{DEFAULT_ETA, DEFAULT_ZETA};
use mfd_core::operators::WeightPair;
use mfd_core::timeint::Integrator;

pub const OUTPUT_ENV: &str = "MFD_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "mfd-output";

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Options shared by every subcommand; each one reads only what it needs.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Grid nodes per direction (`16` or `16,32,8`).
    #[arg(long, value_name = "N|NX,NY,NZ")]
    pub n: Option<String>,
    /// Resolutions for convergence studies, e.g. `16,32,64`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Domain length in x (default 30).
    #[arg(long)]
    pub lx: Option<f64>,
    /// Domain length in y (default 60).
    #[arg(long)]
    pub ly: Option<f64>,
    /// Domain length in z, periodic (default 2π).
    #[arg(long)]
    pub lz: Option<f64>,
    /// Weight of the advective form in `C_pq`.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the advective form in `C_qp`.
    #[arg(long)]
    pub beta: Option<f64>,
    /// SAW coupling ζ.
    #[arg(long)]
    pub zeta: Option<f64>,
    /// SAW parallel resistivity η.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// `rk4` or `cn`.
    #[arg(long)]
    pub integrator: Option<String>,
    /// Seed for random probes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; falls back to `$MFD_OUTPUT_DIR`, then `mfd-output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Factor on the perpendicular components of `b`.
    #[arg(long = "perp-scale")]
    pub perp_scale: Option<f64>,
    /// Spectrum method: `bound` or `dense`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Largest system the dense spectrum accepts.
    #[arg(long = "max-dense-dofs")]
    pub max_dense_dofs: Option<usize>,
    /// Record the energy every this many steps.
    #[arg(long = "trace-every")]
    pub trace_every: Option<usize>,
    /// Krylov tolerance for implicit steps.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Random pairs for the skewness check.
    #[arg(long)]
    pub trials: Option<usize>,
    /// `wave` or `saws` (spectrum, export-system).
    #[arg(long)]
    pub system: Option<String>,
    /// `pq`, `qp` or `both` (operator-convergence).
    #[arg(long)]
    pub mapping: Option<String>,
    /// `cholesky` or `cg` for the perpendicular-Laplacian solve.
    #[arg(long = "mass-solver")]
    pub mass_solver: Option<String>,
    /// Ψ amplitude `A_mag`.
    #[arg(long = "a-mag")]
    pub a_mag: Option<f64>,
    /// Ψ centre `x_mag`.
    #[arg(long = "x-mag")]
    pub x_mag: Option<f64>,
    /// Ψ centre `y_mag1`.
    #[arg(long = "y-mag1")]
    pub y_mag1: Option<f64>,
    /// Ψ log-term centre `y_mag2`, outside the domain.
    #[arg(long = "y-mag2")]
    pub y_mag2: Option<f64>,
    /// Ψ width `a_s`.
    #[arg(long = "a-s")]
    pub a_s: Option<f64>,
    /// TOML file of `key = value` settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl Overrides {
    /// Fields set in `other` win.
    pub fn merge(mut self, other: Overrides) -> Overrides {
        merge_fields!(self, other; n, levels, lx, ly, lz, alpha, beta, zeta, eta, dt, t_end, integrator, seed,
            out, perp_scale, mode, max_dense_dofs, trace_every, tol, trials, system, mapping, mass_solver,
            a_mag, x_mag, y_mag1, y_mag2, a_s, config, threads);
        self
    }

    /// Parses a flat TOML file. Unknown keys are rejected.
    pub fn from_config_text(text: &str) -> Result<Overrides, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| err("config", e.message().to_string()))?;
        let mut o = Overrides::default();
        for (key, value) in &table {
            let k = key.as_str();
            let float = || -> Result<f64, ConfigError> {
                match value {
                    toml::Value::Float(v) => Ok(*v),
                    toml::Value::Integer(v) => Ok(*v as f64),
                    _ => Err(err(k, "expected a number")),
                }
            };
            let uint = || -> Result<u64, ConfigError> {
                match value {
                    toml::Value::Integer(v) if *v >= 0 => Ok(*v as u64),
                    _ => Err(err(k, "expected a non-negative integer")),
                }
            };
            let text = || -> Result<String, ConfigError> {
                match value {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(v) => Ok(v.to_string()),
                    toml::Value::Array(a) => a
                        .iter()
                        .map(|v| {
                            v.as_integer()
                                .map(|i| i.to_string())
                                .ok_or_else(|| err(k, "expected integers"))
                        })
                        .collect::<Result<Vec<_>, _>>()
                        .map(|v| v.join(",")),
                    _ => Err(err(k, "expected a string")),
                }
            };
            match k {
                "n" => o.n = Some(text()?),
                "levels" => o.levels = Some(text()?),
                "lx" => o.lx = Some(float()?),
                "ly" => o.ly = Some(float()?),
                "lz" => o.lz = Some(float()?),
                "alpha" => o.alpha = Some(float()?),
                "beta" => o.beta = Some(float()?),
                "zeta" => o.zeta = Some(float()?),
                "eta" => o.eta = Some(float()?),
                "dt" => o.dt = Some(float()?),
                "t_end" => o.t_end = Some(float()?),
                "integrator" => o.integrator = Some(text()?),
                "seed" => o.seed = Some(uint()?),
                "out" => o.out = Some(PathBuf::from(text()?)),
                "perp_scale" => o.perp_scale = Some(float()?),
                "mode" => o.mode = Some(text()?),
                "max_dense_dofs" => o.max_dense_dofs = Some(uint()? as usize),
                "trace_every" => o.trace_every = Some(uint()? as usize),
                "tol" => o.tol = Some(float()?),
                "trials" => o.trials = Some(uint()? as usize),
                "system" => o.system = Some(text()?),
                "mapping" => o.mapping = Some(text()?),
                "mass_solver" => o.mass_solver = Some(text()?),
                "a_mag" => o.a_mag = Some(float()?),
                "x_mag" => o.x_mag = Some(float()?),
                "y_mag1" => o.y_mag1 = Some(float()?),
                "y_mag2" => o.y_mag2 = Some(float()?),
                "a_s" => o.a_s = Some(float()?),
                "threads" => o.threads = Some(uint()? as usize),
                _ => return Err(err(k, "unknown key")),
            }
        }
        Ok(o)
    }

    pub fn from_config_file(path: &Path) -> Result<Overrides, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("config", format!("{}: {e}", path.display())))?;
        Overrides::from_config_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    OperatorConvergence,
    WaveSim,
    SawsSim,
    MmsConvergence,
    SkewnessCheck,
    Spectrum,
    ExportSystem,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::OperatorConvergence => "operator-convergence",
            Command::WaveSim => "wave-sim",
            Command::SawsSim => "saws-sim",
            Command::MmsConvergence => "mms-convergence",
            Command::SkewnessCheck => "skewness-check",
            Command::Spectrum => "spectrum",
            Command::ExportSystem => "export-system",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Wave,
    Saws,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingChoice {
    Pq,
    Qp,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassSolver {
    Cholesky,
    Cg,
}

/// Fully resolved parameters for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub nodes: [usize; 3],
    pub levels: Vec<usize>,
    pub lengths: [f64; 3],
    pub weights: WeightPair,
    pub zeta: f64,
    pub eta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub seed: u64,
    pub out: PathBuf,
    pub perp_scale: f64,
    pub psi: PsiParams,
    pub mode: SpectrumMode,
    pub max_dense_dofs: usize,
    pub trace_every: usize,
    pub tol: f64,
    pub trials: usize,
    pub system: SystemKind,
    pub mapping: MappingChoice,
    pub mass_solver: MassSolver,
    pub threads: Option<usize>,
}

fn parse_list(key: &str, s: &str) -> Result<Vec<usize>, ConfigError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| err(key, format!("`{s}` is not a list of integers")))
        })
        .collect()
}

fn finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(key, "must be finite"))
    }
}

impl RunConfig {
    /// Resolves `o` against the defaults of `command`. `env_out` is the
    /// value of `$MFD_OUTPUT_DIR`, if any.
    pub fn resolve(
        command: Command,
        o: &Overrides,
        env_out: Option<PathBuf>,
    ) -> Result<RunConfig, ConfigError> {
        let saws_like = matches!(command, Command::SawsSim | Command::MmsConvergence);
        let default_n = match command {
            Command::SkewnessCheck | Command::ExportSystem => 8,
            Command::Spectrum => 6,
            _ => 16,
        };
        let nodes = match &o.n {
            None => [default_n; 3],
            Some(s) => match parse_list("n", s)?.as_slice() {
                [n] => [*n; 3],
                [x, y, z] => [*x, *y, *z],
                _ => return Err(err("n", "expected N or NX,NY,NZ")),
            },
        };
        let levels = match &o.levels {
            None => vec![16, 32, 64],
            Some(s) => parse_list("levels", s)?,
        };
        if matches!(
            command,
            Command::OperatorConvergence | Command::MmsConvergence
        ) && levels.len() < 3
        {
            return Err(err("levels", "need at least 3 resolutions"));
        }
        let lengths = [
            finite("lx", o.lx.unwrap_or(DEFAULT_LX))?,
            finite("ly", o.ly.unwrap_or(DEFAULT_LY))?,
            finite("lz", o.lz.unwrap_or(DEFAULT_LZ))?,
        ];
        let alpha = o.alpha.unwrap_or(0.5);
        let beta = o.beta.unwrap_or(0.5);
        let weights = WeightPair::new(alpha, beta).map_err(|e| {
            let key = if (0.0..=1.0).contains(&alpha) {
                "beta"
            } else {
                "alpha"
            };
            err(key, e.to_string())
        })?;
        let (dt, t_end, integrator, tol) = match command {
            Command::WaveSim => (0.05, 50.0, Integrator::CrankNicolson, 1e-12),
            Command::MmsConvergence => (1.25e-5, 0.002, Integrator::Rk4, DEFAULT_TOL),
            _ => (1e-3, 5.0, Integrator::Rk4, DEFAULT_TOL),
        };
        let integrator = match &o.integrator {
            None => integrator,
            Some(s) => s
                .parse()
                .map_err(|_| err("integrator", format!("expected rk4 or cn, got `{s}`")))?,
        };
        let mode = match &o.mode {
            None => SpectrumMode::Bound,
            Some(s) => s
                .parse()
                .map_err(|_| err("mode", format!("expected bound or dense, got `{s}`")))?,
        };
        let system = match o.system.as_deref() {
            None | Some("wave") => SystemKind::Wave,
            Some("saws") => SystemKind::Saws,
            Some(s) => return Err(err("system", format!("expected wave or saws, got `{s}`"))),
        };
        let mapping = match o.mapping.as_deref() {
            None | Some("both") => MappingChoice::Both,
            Some("pq") => MappingChoice::Pq,
            Some("qp") => MappingChoice::Qp,
            Some(s) => {
                return Err(err(
                    "mapping",
                    format!("expected pq, qp or both, got `{s}`"),
                ))
            }
        };
        let mass_solver = match o.mass_solver.as_deref() {
            None | Some("cholesky") => MassSolver::Cholesky,
            Some("cg") => MassSolver::Cg,
            Some(s) => {
                return Err(err(
                    "mass_solver",
                    format!("expected cholesky or cg, got `{s}`"),
                ))
            }
        };
        let uses_saws = saws_like || system == SystemKind::Saws;
        let perp_scale = o
            .perp_scale
            .unwrap_or(if uses_saws { SAW_PERP_SCALE } else { 1.0 });
        let base = PsiParams::for_domain(lengths[0], lengths[1]);
        let psi = PsiParams {
            a_mag: o.a_mag.unwrap_or(base.a_mag),
            x_mag: o.x_mag.unwrap_or(base.x_mag),
            y_mag1: o.y_mag1.unwrap_or(base.y_mag1),
            y_mag2: o.y_mag2.unwrap_or(base.y_mag2),
            a_s: o.a_s.unwrap_or(base.a_s),
        };
        let positive = |key: &str, v: f64| -> Result<f64, ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(err(key, format!("must be positive, got {v}")))
            }
        };
        let cfg = RunConfig {
            command,
            nodes,
            levels,
            lengths,
            weights,
            zeta: positive("zeta", o.zeta.unwrap_or(DEFAULT_ZETA))?,
            eta: {
                let eta = o.eta.unwrap_or(DEFAULT_ETA);
                if !(eta.is_finite() && eta >= 0.0) {
                    return Err(err("eta", format!("must be non-negative, got {eta}")));
                }
                eta
            },
            dt: positive("dt", o.dt.unwrap_or(dt))?,
            t_end: positive("t_end", o.t_end.unwrap_or(t_end))?,
            integrator,
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            out: o
                .out
                .clone()
                .or(env_out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
            perp_scale,
            psi,
            mode,
            max_dense_dofs: o.max_dense_dofs.unwrap_or(DEFAULT_MAX_DENSE_DOFS),
            trace_every: match o.trace_every.unwrap_or(10) {
                0 => return Err(err("trace_every", "must be at least 1")),
                v => v,
            },
            tol: positive("tol", o.tol.unwrap_or(tol))?,
            trials: match o.trials.unwrap_or(20) {
                0 => return Err(err("trials", "must be at least 1")),
                v => v,
            },
            system,
            mapping,
            mass_solver,
            threads: match o.threads {
                Some(0) => return Err(err("threads", "must be at least 1")),
                t => t,
            },
        };
        if !(cfg.perp_scale.is_finite() && cfg.perp_scale >= 0.0) {
            return Err(err("perp_scale", "must be finite and non-negative"));
        }
        cfg.grid_spec(cfg.nodes)
            .validate()
            .map_err(|e| err("n", e.to_string()))?;
        for &l in &cfg.levels {
            cfg.grid_spec([l; 3])
                .validate()
                .map_err(|e| err("levels", e.to_string()))?;
        }
        cfg.field()
            .validate(lengths[0], lengths[1])
            .map_err(|e| match e {
                mfd_core::MfdError::InvalidParameter { name, reason } => err(name, reason),
                other => err("psi", other.to_string()),
            })?;
        Ok(cfg)
    }

    pub fn grid_spec(&self, nodes: [usize; 3]) -> GridSpec {
        GridSpec::new(self.lengths, nodes)
    }

    pub fn field(&self) -> AdvectiveField {
        let kind = match (self.command, self.system) {
            (Command::SawsSim | Command::MmsConvergence, _) | (_, SystemKind::Saws) => {
                FieldKind::SawDimensionless
            }
            _ => FieldKind::WaveModel,
        };
        AdvectiveField::new(self.psi, kind).with_perp_scale(self.perp_scale)
    }

    /// `key = value` lines describing every resolved parameter.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let mut m: Vec<(String, String)> = vec![
            ("command".into(), self.command.name().into()),
            (
                "nodes".into(),
                format!("{},{},{}", self.nodes[0], self.nodes[1], self.nodes[2]),
            ),
            (
                "levels".into(),
                self.levels
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("lx".into(), format!("{:?}", self.lengths[0])),
            ("ly".into(), format!("{:?}", self.lengths[1])),
            ("lz".into(), format!("{:?}", self.lengths[2])),
            ("alpha".into(), format!("{:?}", self.weights.alpha)),
            ("beta".into(), format!("{:?}", self.weights.beta)),
            ("zeta".into(), format!("{:?}", self.zeta)),
            ("eta".into(), format!("{:?}", self.eta)),
            ("dt".into(), format!("{:?}", self.dt)),
            ("t_end".into(), format!("{:?}", self.t_end)),
            ("integrator".into(), self.integrator.name().into()),
            ("tol".into(), format!("{:?}", self.tol)),
            ("seed".into(), format!("{:?}", self.seed)),
            ("perp_scale".into(), format!("{:?}", self.perp_scale)),
            ("a_mag".into(), format!("{:?}", self.psi.a_mag)),
            ("x_mag".into(), format!("{:?}", self.psi.x_mag)),
            ("y_mag1".into(), format!("{:?}", self.psi.y_mag1)),
            ("y_mag2".into(), format!("{:?}", self.psi.y_mag2)),
            ("a_s".into(), format!("{:?}", self.psi.a_s)),
            ("trace_every".into(), format!("{:?}", self.trace_every)),
            ("trials".into(), format!("{:?}", self.trials)),
            (
                "mode".into(),
                match self.mode {
                    SpectrumMode::Bound => "bound".into(),
                    SpectrumMode::Dense => "dense".into(),
                },
            ),
            (
                "max_dense_dofs".into(),
                format!("{:?}", self.max_dense_dofs),
            ),
            (
                "system".into(),
                match self.system {
                    SystemKind::Wave => "wave".into(),
                    SystemKind::Saws => "saws".into(),
                },
            ),
            (
                "mapping".into(),
                match self.mapping {
                    MappingChoice::Pq => "pq".into(),
                    MappingChoice::Qp => "qp".into(),
                    MappingChoice::Both => "both".into(),
                },
            ),
            (
                "mass_solver".into(),
                match self.mass_solver {
                    MassSolver::Cholesky => "cholesky".into(),
                    MassSolver::Cg => "cg".into(),
                },
            ),
        ];
        m.push(("out".into(), self.out.display().to_string()));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let file = Overrides::from_config_text("alpha = 0.3\nbeta = 0.7\nn = 12\n").unwrap();
        let flags = Overrides {
            beta: Some(0.6),
            ..Default::default()
        };
        let merged = file.merge(flags);
        assert_eq!(merged.alpha, Some(0.3));
        assert_eq!(merged.beta, Some(0.6));
        let cfg = RunConfig::resolve(Command::SkewnessCheck, &merged, None).unwrap();
        assert_eq!(cfg.nodes, [12; 3]);
        assert_eq!(cfg.out, PathBuf::from(DEFAULT_OUTPUT));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Overrides::from_config_text("alpah = 0.3\n").unwrap_err();
        assert_eq!(e.key, "alpah");
        let e = Overrides::from_config_text("dt = \"fast\"\n").unwrap_err();
        assert_eq!(e.key, "dt");
    }

    #[test]
    fn defaults_per_command() {
        let o = Overrides::default();
        let saws = RunConfig::resolve(Command::SawsSim, &o, None).unwrap();
        assert_eq!(
            (saws.dt, saws.t_end, saws.perp_scale),
            (1e-3, 5.0, SAW_PERP_SCALE)
        );
        let mms = RunConfig::resolve(Command::MmsConvergence, &o, Some("env".into())).unwrap();
        assert_eq!((mms.dt, mms.t_end), (1.25e-5, 0.002));
        assert_eq!(mms.out, PathBuf::from("env"));
        let wave = RunConfig::resolve(Command::WaveSim, &o, None).unwrap();
        assert_eq!(wave.integrator, Integrator::CrankNicolson);
        assert_eq!(wave.perp_scale, 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |o: Overrides| {
            RunConfig::resolve(Command::WaveSim, &o, None)
                .unwrap_err()
                .key
        };
        assert_eq!(
            bad(Overrides {
                alpha: Some(1.5),
                ..Default::default()
            }),
            "alpha"
        );
        assert_eq!(
            bad(Overrides {
                dt: Some(-1.0),
                ..Default::default()
            }),
            "dt"
        );
        assert_eq!(
            bad(Overrides {
                n: Some("2".into()),
                ..Default::default()
            }),
            "n"
        );
        assert_eq!(
            bad(Overrides {
                integrator: Some("euler".into()),
                ..Default::default()
            }),
            "integrator"
        );
        assert_eq!(
            bad(Overrides {
                y_mag2: Some(30.0),
                ..Default::default()
            }),
            "y_mag2"
        );
    }
}
