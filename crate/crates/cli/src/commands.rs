use std::fs;
use std::path::{Path, PathBuf};

use mfd_core::analysis::{
    default_initial_state, export_system, growth_rate, mms_convergence, operator_convergence,
    skewness_residual, spectrum_report, trig_test_function, MmsConfig, SpectralSystem,
};
use mfd_core::grid::{quadrature_weights, DualGrid, GridTag};
use mfd_core::linalg::PerpMassSolver;
use mfd_core::models::{assemble_saws, assemble_wave, SawSystem};
use mfd_core::operators::{parallel_gradient, Mapping};
use mfd_core::timeint::{run_simulation, RunOptions, TraceMeta};
use mfd_core::{MfdError, Result};

use crate::config::{Command, MappingChoice, MassSolver, RunConfig, SystemKind};

/// Runs one subcommand and returns its one-line summary.
pub fn run(cfg: &RunConfig) -> Result<String> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;
    write_manifest(cfg)?;
    match cfg.command {
        Command::OperatorConvergence => operator_convergence_cmd(cfg),
        Command::WaveSim => wave_sim(cfg),
        Command::SawsSim => saws_sim(cfg),
        Command::MmsConvergence => mms_cmd(cfg),
        Command::SkewnessCheck => skewness_cmd(cfg),
        Command::Spectrum => spectrum_cmd(cfg),
        Command::ExportSystem => export_cmd(cfg),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> MfdError {
    MfdError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_manifest(cfg: &RunConfig) -> Result<()> {
    let mut text = String::new();
    for (k, v) in cfg.manifest() {
        println!("# {k} = {v}");
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = cfg.out.join(format!("{}.manifest.txt", cfg.command.name()));
    fs::write(&path, text).map_err(|e| io_error(&path, e))
}

fn grid(cfg: &RunConfig) -> Result<DualGrid> {
    DualGrid::new(cfg.grid_spec(cfg.nodes))
}

fn saws_system(cfg: &RunConfig, g: &DualGrid) -> Result<SawSystem> {
    let mut s = assemble_saws(g, &cfg.field(), cfg.zeta, cfg.eta, cfg.weights)?;
    if cfg.mass_solver == MassSolver::Cg {
        s.solver = PerpMassSolver::with_cg(g, cfg.tol.min(1e-10));
    }
    Ok(s)
}

fn meta(cfg: &RunConfig, with_saws: bool) -> TraceMeta {
    TraceMeta {
        alpha: cfg.weights.alpha,
        beta: cfg.weights.beta,
        zeta: with_saws.then_some(cfg.zeta),
        eta: with_saws.then_some(cfg.eta),
        dims: cfg.nodes,
        integrator: cfg.integrator.name().into(),
        dt: cfg.dt,
    }
}

fn run_options(cfg: &RunConfig) -> RunOptions {
    let mut o = RunOptions::new(cfg.integrator, cfg.dt, cfg.t_end);
    o.trace_every = cfg.trace_every;
    o.tol = cfg.tol;
    o
}

fn operator_convergence_cmd(cfg: &RunConfig) -> Result<String> {
    let specs: Vec<_> = cfg.levels.iter().map(|&n| cfg.grid_spec([n; 3])).collect();
    let mappings: &[(Mapping, &str)] = match cfg.mapping {
        MappingChoice::Pq => &[(Mapping::QToP, "pq")],
        MappingChoice::Qp => &[(Mapping::PToQ, "qp")],
        MappingChoice::Both => &[(Mapping::QToP, "pq"), (Mapping::PToQ, "qp")],
    };
    let mut parts = Vec::new();
    for (m, name) in mappings {
        let table =
            operator_convergence(&cfg.field(), &trig_test_function, *m, cfg.weights, &specs)?;
        table.write_csv(&cfg.out.join(format!("operator_convergence_{name}.csv")))?;
        parts.push(format!("slope_{name} = {:.4}", table.slopes[0]));
    }
    Ok(format!("operator-convergence: {}", parts.join(", ")))
}

fn wave_sim(cfg: &RunConfig) -> Result<String> {
    let g = grid(cfg)?;
    let s = assemble_wave(&g, &cfg.field(), cfg.weights)?;
    let (trace, state) = run_simulation(
        &s,
        &run_options(cfg),
        default_initial_state(&g),
        meta(cfg, false),
    )?;
    trace.write_csv(&cfg.out.join("energy_wave.csv"))?;
    let e0 = trace.energies[0];
    let drift = (state.energy - e0) / e0;
    let rate = growth_rate(&trace)
        .map(|r| format!("{r:.6e}"))
        .unwrap_or_else(|_| "n/a".into());
    Ok(format!(
        "wave-sim: relative energy change = {drift:.6e}, growth rate = {rate}"
    ))
}

fn saws_sim(cfg: &RunConfig) -> Result<String> {
    let g = grid(cfg)?;
    let s = saws_system(cfg, &g)?;
    let (trace, state) = run_simulation(
        &s,
        &run_options(cfg),
        default_initial_state(&g),
        meta(cfg, true),
    )?;
    trace.write_csv(&cfg.out.join("energy_saws.csv"))?;
    let rate = growth_rate(&trace)?;
    Ok(format!(
        "saws-sim: growth rate = {rate:.6e}, E(0) = {:.6e}, E(T) = {:.6e}",
        trace.energies[0], state.energy
    ))
}

fn mms_cmd(cfg: &RunConfig) -> Result<String> {
    let mc = MmsConfig {
        zeta: cfg.zeta,
        eta: cfg.eta,
        weights: cfg.weights,
        dt: cfg.dt,
        t_end: cfg.t_end,
        integrator: cfg.integrator,
        tol: cfg.tol,
        field: cfg.field(),
        specs: cfg.levels.iter().map(|&n| cfg.grid_spec([n; 3])).collect(),
    };
    let table = mms_convergence(&mc)?;
    table.write_csv(&cfg.out.join("mms_convergence.csv"))?;
    Ok(format!(
        "mms-convergence: slope_phi = {:.4}, slope_v = {:.4}",
        table.slopes[0], table.slopes[1]
    ))
}

fn skewness_cmd(cfg: &RunConfig) -> Result<String> {
    let g = grid(cfg)?;
    let f = cfg.field();
    let cpq = parallel_gradient(&g, &f, Mapping::QToP, cfg.weights)?;
    let cqp = parallel_gradient(&g, &f, Mapping::PToQ, cfg.weights)?;
    let wp = quadrature_weights(&g, GridTag::P).select(g.interior_nodes());
    let wq = quadrature_weights(&g, GridTag::Q).diag;
    let r = skewness_residual(&cpq, &cqp, &wp, &wq, cfg.trials, cfg.seed)?;
    let path = cfg.out.join("skewness.csv");
    let csv = format!(
        "alpha,beta,nx,ny,nz,trials,seed,residual\n{},{},{},{},{},{},{},{r:.16e}\n",
        cfg.weights.alpha,
        cfg.weights.beta,
        cfg.nodes[0],
        cfg.nodes[1],
        cfg.nodes[2],
        cfg.trials,
        cfg.seed
    );
    fs::write(&path, csv).map_err(|e| io_error(&path, e))?;
    Ok(format!("skewness-check: residual = {r:.6e}"))
}

fn spectrum_cmd(cfg: &RunConfig) -> Result<String> {
    let g = grid(cfg)?;
    let report = match cfg.system {
        SystemKind::Wave => {
            let s = assemble_wave(&g, &cfg.field(), cfg.weights)?;
            spectrum_report(
                SpectralSystem::Wave(&s),
                cfg.mode,
                cfg.max_dense_dofs,
                cfg.seed,
            )?
        }
        SystemKind::Saws => {
            let s = saws_system(cfg, &g)?;
            spectrum_report(
                SpectralSystem::Saw(&s),
                cfg.mode,
                cfg.max_dense_dofs,
                cfg.seed,
            )?
        }
    };
    report.write_csv(&cfg.out.join("spectrum.csv"))?;
    Ok(format!(
        "spectrum: max Re = {:.6e}, max |Im| = {:.6e}, symmetric part = {:.3e}, purely imaginary = {}",
        report.max_real_part, report.max_abs_imag_part, report.symmetric_part, report.purely_imaginary
    ))
}

fn export_cmd(cfg: &RunConfig) -> Result<String> {
    let g = grid(cfg)?;
    let spec = cfg.grid_spec(cfg.nodes);
    let (dir, files): (PathBuf, Vec<PathBuf>) = match cfg.system {
        SystemKind::Wave => {
            let s = assemble_wave(&g, &cfg.field(), cfg.weights)?;
            let dir = cfg.out.join("system_wave");
            let files = export_system(SpectralSystem::Wave(&s), &dir, &spec)?;
            (dir, files)
        }
        SystemKind::Saws => {
            let s = saws_system(cfg, &g)?;
            let dir = cfg.out.join("system_saws");
            let files = export_system(SpectralSystem::Saw(&s), &dir, &spec)?;
            (dir, files)
        }
    };
    Ok(format!(
        "export-system: wrote {} files to {}",
        files.len(),
        dir.display()
    ))
}
