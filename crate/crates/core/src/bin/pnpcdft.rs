//! Batch front end. Exit codes: 0 success, 2 usage, 3 non-convergence
//! (a partial report is still written), 4 config, 5 io, 6 numerics,
//! 1 anything else. Failures print one `error[<category>]: <message>` line
//! on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pnpcdft::cdft::HsFunctional;
use pnpcdft::checks::{convolution_check, derivative_check};
use pnpcdft::config::{parse_config, write_site_file, SimulationConfig};
use pnpcdft::grid::DumpFormat;
use pnpcdft::report::{write_fields, SolveReport};
use pnpcdft::transport::{complexity_probe, size_sweep, solve_config, temperature_sweep};
use pnpcdft::Error;

#[derive(Parser)]
#[command(name = "pnpcdft", version, about = "Steady-state PNP transport with cDFT excess potentials")]
struct Cli {
    /// Worker threads; overrides PNPCDFT_THREADS and the config value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Job {
    /// Flat key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Use M = 10 cells along the transport direction.
    #[arg(long)]
    small: bool,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once; writes report.json, the site file and the fields.
    Run(Job),
    /// Full solve per temperature; writes temperature.csv and .gp.
    SweepTemperature {
        #[command(flatten)]
        job: Job,
        #[arg(long, value_delimiter = ',', default_values_t = vec![200.0, 260.0, 320.0])]
        temperatures: Vec<f64>,
    },
    /// Full solve per cell count M; writes size.csv and .gp.
    SweepSize {
        #[command(flatten)]
        job: Job,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20, 40])]
        cells: Vec<usize>,
    },
    /// Times a fixed number of sweeps over grid refinements.
    Complexity {
        #[command(flatten)]
        job: Job,
        #[arg(long, value_delimiter = ',', default_values_t = vec![4, 6, 8, 10])]
        resolutions: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        sweeps: usize,
    },
    /// FFT convolution against the direct sum on small grids.
    CheckConvolution,
    /// Hard-sphere partials against central differences.
    CheckDerivatives {
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Solve once and dump every field.
    DumpFields {
        #[command(flatten)]
        job: Job,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

/// Non-convergence is reported through the exit code, not as an error.
enum Outcome {
    Done,
    NotConverged,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "convergence" => 3,
        "config" => 4,
        "io" => 5,
        "numerics" => 6,
        _ => 1,
    }
}

fn init_threads(flag: Option<usize>, config: usize) {
    let env = std::env::var("PNPCDFT_THREADS").ok().and_then(|v| v.parse().ok());
    let n = flag.or(env).unwrap_or(config);
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already set up: {e}");
        }
    }
}

fn load(job: &Job, threads: Option<usize>) -> pnpcdft::Result<(SimulationConfig, PathBuf)> {
    let mut cfg = parse_config(&job.config)?;
    if job.small {
        cfg.cells_y = 10;
    }
    init_threads(threads, cfg.threads);
    let out = job.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn run(job: &Job, threads: Option<usize>, format: Option<DumpFormat>) -> pnpcdft::Result<Outcome> {
    let (cfg, out) = load(job, threads)?;
    write_site_file(&out.join("sites.txt"), &cfg.site_groups()?)?;
    let (p, state, summary) = solve_config(&cfg)?;
    let report = SolveReport::new(&cfg, &p, summary);
    report.write(&out.join("report.json"))?;
    let files = write_fields(&out.join("fields"), &p, &state, format.unwrap_or(DumpFormat::Binary))?;
    println!(
        "sigma {:.6e} S/cm  F_sh {:.6e} eV  iterations {} (+{} equilibrium)  converged {}",
        report.sigma_s_per_cm,
        report.f_sh_ev,
        report.convergence.iterations,
        report.convergence.equilibrium_iterations,
        report.converged
    );
    println!("wrote {} and {} field files", out.join("report.json").display(), files.len());
    Ok(if report.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn sweep_done(rows: &[pnpcdft::transport::SweepRow], out: &Path, stem: &str) -> Outcome {
    println!("wrote {}", out.join(format!("{stem}.csv")).display());
    if rows.iter().all(|r| r.converged) {
        Outcome::Done
    } else {
        Outcome::NotConverged
    }
}

fn dispatch(cli: Cli) -> pnpcdft::Result<Outcome> {
    match cli.command {
        Command::Run(job) => run(&job, cli.threads, None),
        Command::DumpFields { job, format } => {
            let f = match format {
                Format::Binary => DumpFormat::Binary,
                Format::Csv => DumpFormat::Csv,
            };
            run(&job, cli.threads, Some(f))
        }
        Command::SweepTemperature { job, temperatures } => {
            let (cfg, out) = load(&job, cli.threads)?;
            let r = temperature_sweep(&cfg, &temperatures)?;
            r.write(&out, "temperature")?;
            print!("{}", r.to_csv());
            Ok(sweep_done(&r.rows, &out, "temperature"))
        }
        Command::SweepSize { job, cells } => {
            let (cfg, out) = load(&job, cli.threads)?;
            let r = size_sweep(&cfg, &cells)?;
            r.write(&out, "size")?;
            print!("{}", r.to_csv());
            Ok(sweep_done(&r.rows, &out, "size"))
        }
        Command::Complexity {
            job,
            resolutions,
            sweeps,
        } => {
            let (cfg, out) = load(&job, cli.threads)?;
            let t = complexity_probe(&cfg, &resolutions, sweeps)?;
            t.write(&out, "complexity")?;
            print!("{}", t.to_csv());
            println!("fft slope {:.3}  total slope {:.3}", t.fft_slope, t.total_slope);
            Ok(Outcome::Done)
        }
        Command::CheckConvolution => {
            init_threads(cli.threads, 0);
            let cases = convolution_check()?;
            let worst = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
            for c in &cases {
                println!("{:?} {}: {:.3e}", c.dims, c.kernel, c.max_rel_error);
            }
            println!("max oracle error {worst:.3e}");
            if worst <= 1e-10 {
                Ok(Outcome::Done)
            } else {
                Err(Error::InvalidArgument(format!("convolution oracle error {worst:.3e} above 1e-10")))
            }
        }
        Command::CheckDerivatives { points } => {
            init_threads(cli.threads, 0);
            let mut worst = 0.0_f64;
            for v in [HsFunctional::Fmt, HsFunctional::Mfmt] {
                let g = derivative_check(points, v)?;
                println!("{v:?}: max finite-difference gap {g:.3e} over {points} points");
                worst = worst.max(g);
            }
            if worst <= 1e-5 {
                Ok(Outcome::Done)
            } else {
                Err(Error::InvalidArgument(format!("derivative gap {worst:.3e} above 1e-5")))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("error[convergence]: iteration cap reached; partial report written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
