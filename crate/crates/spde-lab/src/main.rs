use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spde_lab::config::{load_config, RunConfig};
use spde_lab::error::Result;
use spde_lab::estimate::{
    estimate_global, estimate_localized, estimate_nonparametric, estimate_spectral,
    EstimateResult,
};
use spde_lab::io::{
    read_rate_points, read_trajectory, write_diagnostics_csv, write_estimate_csv, write_mc_csv,
    write_plot_script, write_points_csv, write_rate_csv, write_trajectory,
};
use spde_lab::mc::{fit_rate, run_mc};
use spde_lab::mesh::{check_mesh, check_mesh_spacings, MeshStatus};
use spde_lab::simulate::{simulate_with, Trajectory};

/// Numerical laboratory for reaction-intensity estimation in a
/// semi-linear stochastic heat equation at small diffusivity.
#[derive(Parser)]
#[command(name = "spde-lab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one trajectory and store it as an SPD1 file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output trajectory path.
        #[arg(long)]
        out: PathBuf,
        /// Seed (default: the mc base seed if present, else 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Whole-domain intensity estimate from a stored trajectory.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// SPD1 trajectory file.
        #[arg(long)]
        traj: PathBuf,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate restricted to the configured space-time window.
    EstimateLocal {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pointwise estimates of a varying intensity.
    EstimateNonparam {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate from the leading eigenmode paths.
    EstimateSpectral {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Retained mode count (default: adapted to the diffusivity).
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Monte-Carlo sweep over diffusivities; writes mc.csv,
    /// diagnostics.csv, rate.csv and a plot script.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the configured one).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Log-log rate fit over (nu, mse) rows from a CSV file.
    Rate {
        /// CSV file with nu and mse columns.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check grid spacings against the mesh admissibility policy.
    CheckMesh {
        #[arg(long)]
        config: PathBuf,
        /// Override the time spacing instead of using T/N.
        #[arg(long)]
        delta_t: Option<f64>,
        /// Override the space spacing instead of using l/M.
        #[arg(long)]
        delta_y: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::from(e.exit_code())
        }
    }
}

fn print_estimate(label: &str, est: &EstimateResult) {
    println!(
        "{label}: theta_hat = {:.8}  stderr = {:.3e}  ci{:.0} = [{:.8}, {:.8}]  increments = {}",
        est.theta_hat,
        est.stderr,
        100.0 * (1.0 - est.alpha_bar),
        est.ci.0,
        est.ci.1,
        est.n_increments
    );
}

fn load_pair(config: &PathBuf, traj: &PathBuf) -> Result<(RunConfig, Trajectory)> {
    let cfg = load_config(config)?;
    let traj = read_trajectory(traj)?;
    Ok((cfg, traj))
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { config, out, seed } => {
            let cfg = load_config(&config)?;
            let model = cfg.model()?;
            let grid = cfg.grid()?;
            let seed = seed.or(cfg.base_seed()).unwrap_or(0);
            let traj = simulate_with(&model, &grid, seed, &cfg.sim_options()?)?;
            write_trajectory(&out, &traj)?;
            println!(
                "wrote {} (M = {}, N = {}, nu = {}, seed = {}, sup|X| = {:.4})",
                out.display(),
                grid.m(),
                grid.n(),
                model.nu(),
                seed,
                traj.sup_norm()
            );
            Ok(())
        }
        Cmd::Estimate { config, traj, out } => {
            let (cfg, traj) = load_pair(&config, &traj)?;
            let est = estimate_global(&traj, &cfg.physics()?, cfg.alpha_bar()?)?;
            print_estimate("global", &est);
            if let Some(out) = out {
                write_estimate_csv(&out, &est, Some(traj.seed()))?;
            }
            Ok(())
        }
        Cmd::EstimateLocal { config, traj, out } => {
            let (cfg, traj) = load_pair(&config, &traj)?;
            let est = estimate_localized(&traj, &cfg.physics()?, &cfg.window()?, cfg.alpha_bar()?)?;
            print_estimate("localized", &est);
            if let Some(out) = out {
                write_estimate_csv(&out, &est, Some(traj.seed()))?;
            }
            Ok(())
        }
        Cmd::EstimateNonparam { config, traj, out } => {
            let (cfg, traj) = load_pair(&config, &traj)?;
            let points =
                estimate_nonparametric(&traj, &cfg.physics()?, &cfg.nonparam()?, cfg.alpha_bar()?)?;
            for p in &points {
                match &p.outcome {
                    Ok(est) => println!(
                        "theta({:.4}, {:.4}) = {:.8}  stderr = {:.3e}  window = {:.4} x {:.4}",
                        p.y0, p.t0, est.theta_hat, est.stderr, p.delta_y, p.delta_t
                    ),
                    Err(e) => println!("theta({:.4}, {:.4}): failed [{}] {}", p.y0, p.t0, e.code(), e),
                }
            }
            if let Some(out) = out {
                write_points_csv(&out, &points, Some(traj.seed()))?;
            }
            Ok(())
        }
        Cmd::EstimateSpectral { config, traj, out, modes } => {
            let (cfg, traj) = load_pair(&config, &traj)?;
            let modes = modes.or(cfg.spectral_modes());
            let est = estimate_spectral(&traj, &cfg.physics()?, modes, cfg.alpha_bar()?)?;
            print_estimate("spectral", &est);
            if let Some(out) = out {
                write_estimate_csv(&out, &est, Some(traj.seed()))?;
            }
            Ok(())
        }
        Cmd::Mc { config, out_dir } => {
            let cfg = load_config(&config)?;
            let mc_cfg = cfg.mc_config()?;
            let result = run_mc(&mc_cfg)?;
            let dir = out_dir.unwrap_or_else(|| cfg.output_dir());
            std::fs::create_dir_all(&dir)?;
            for r in &result.per_nu {
                match &r.aggregates {
                    Some(a) => println!(
                        "nu = {:.4e}: used {}/{} (blow-ups {}), mse = {:.6e}, coverage = {:.3}, ks = {:.4}",
                        r.nu, a.used, r.attempted, r.blowups, a.mse, a.coverage, a.ks
                    ),
                    None => println!(
                        "nu = {:.4e}: no usable runs out of {} (blow-ups {})",
                        r.nu, r.attempted, r.blowups
                    ),
                }
            }
            if cfg.wants_format("csv") {
                write_mc_csv(dir.join("mc.csv"), &result)?;
                write_diagnostics_csv(dir.join("diagnostics.csv"), &result)?;
            }
            let points = result.mse_points();
            if points.len() >= 3 {
                let fit = fit_rate(&points)?;
                println!(
                    "rate: mse ~ nu^{:.4} (intercept {:.4}, r2 = {:.4}, {} points)",
                    fit.slope, fit.intercept, fit.r2, fit.n_points
                );
                if cfg.wants_format("csv") {
                    write_rate_csv(dir.join("rate.csv"), &fit, Some(result.base_seed))?;
                }
            } else {
                eprintln!("rate fit skipped: needs at least 3 usable sweep points");
            }
            if cfg.wants_format("plot") {
                write_plot_script(dir.join("plot.gp"), "diagnostics.csv", "mse.png")?;
            }
            println!("outputs in {}", dir.display());
            Ok(())
        }
        Cmd::Rate { points, out } => {
            let pts = read_rate_points(&points)?;
            let fit = fit_rate(&pts)?;
            println!(
                "rate: mse ~ nu^{:.4} (intercept {:.4}, r2 = {:.4}, {} points)",
                fit.slope, fit.intercept, fit.r2, fit.n_points
            );
            if let Some(out) = out {
                write_rate_csv(&out, &fit, None)?;
            }
            Ok(())
        }
        Cmd::CheckMesh { config, delta_t, delta_y } => {
            let cfg = load_config(&config)?;
            let policy = cfg.mesh_policy()?;
            let report = match (delta_t, delta_y) {
                (None, None) => check_mesh(&cfg.model()?, &cfg.grid()?, &policy)?,
                (dt, dy) => {
                    let grid = cfg.grid()?;
                    check_mesh_spacings(
                        cfg.model()?.nu(),
                        dt.unwrap_or_else(|| grid.delta_t()),
                        dy.unwrap_or_else(|| grid.delta_y()),
                        &policy,
                    )?
                }
            };
            let verdict = |ok: bool| if ok { "PASS" } else { "WARN" };
            println!(
                "time:  delta_t = {:.6e}, r_t = {:.6} (limit 1, threshold {:.6e}) {}",
                report.delta_t,
                report.r_t,
                report.time_threshold,
                verdict(report.time_ok)
            );
            println!(
                "space: delta_y = {:.6e}, r_y = {:.6} (limit 1) {}",
                report.delta_y,
                report.r_y,
                verdict(report.space_ok)
            );
            println!(
                "overall: {}",
                match report.status {
                    MeshStatus::Pass => "PASS",
                    MeshStatus::Warn => "WARN",
                }
            );
            Ok(())
        }
    }
}
