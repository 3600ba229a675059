use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use initlab_core::convergence::{analyze_drag, read_series_csv, to_ctu, write_series_csv};
use initlab_core::grid::{rasterize_obstacle, FreestreamConditions, Grid};
use initlab_core::{build_proxy_surrogate, emit_plots, load_config, run_experiment, save_surrogate, SurrogateSource};

#[derive(Parser)]
#[command(name = "initlab", version, about = "Compare flow initialization strategies by time to statistical convergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy in the config and write the comparison table.
    Run {
        config: PathBuf,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Filter a force series and report its drag convergence time.
    Analyze {
        series: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        /// Freestream speed and reference length, to report CTUs.
        #[arg(long, requires = "l0")]
        u_inf: Option<f64>,
        #[arg(long, requires = "u_inf")]
        l0: Option<f64>,
        /// Write the series with its filtered column here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw force_raw.svg and force_filtered.svg for an output directory.
    Plot {
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
    },
    /// Build the coarse-grid surrogate for a config and save it.
    SurrogateProxy {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("INITLAB_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("INITLAB_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "INITLAB_THREADS must be a positive integer");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::Run { config, no_plots } => {
            let cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            let table = run_experiment(&cfg)?;
            print!("{}", table.to_text());
            if !no_plots {
                match emit_plots(&cfg.output_dir, cfg.tol) {
                    Ok(r) => log::info!("wrote {} plot files", r.files.len()),
                    Err(e) => log::warn!("plots skipped: {e}"),
                }
            }
            let failed = table.failures();
            if failed > 0 {
                eprintln!("{failed} of {} strategies failed", table.rows.len());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Analyze { series, tol, u_inf, l0, output } => {
            let (s, _) = read_series_csv(&series)?;
            let (filtered, report) = analyze_drag(&s, tol)?;
            println!("samples      {}", s.len());
            println!("t_conv       {} s", report.t_conv);
            if let (Some(u), Some(l)) = (u_inf, l0) {
                let fs = FreestreamConditions::new(u, 1.0, 1.0, 0.0, l)?;
                println!("t_conv_ctu   {}", to_ctu(report.t_conv, &fs));
            }
            println!("final_value  {}", report.final_value);
            println!("band         {}", if report.absolute { "absolute" } else { "relative" });
            if let Some(out) = output {
                write_series_csv(&out, &s, Some(&filtered.filtered))?;
            }
        }
        Command::Plot { output_dir, tol } => {
            let r = emit_plots(&output_dir, tol)?;
            for f in &r.files {
                println!("{}", f.display());
            }
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::SurrogateProxy { config, output } => {
            let cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            let SurrogateSource::CoarseProxy(opts) = cfg.surrogate else {
                anyhow::bail!("config names a surrogate file; the proxy needs [surrogate] proxy settings");
            };
            let grid = Grid::new(cfg.grid)?;
            let mask = rasterize_obstacle(&grid, &cfg.shape)?;
            let s = build_proxy_surrogate(&grid, &mask, &cfg.freestream, &opts)?;
            save_surrogate(&output, &s)?;
            println!("{} samples written to {}", s.len(), output.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
