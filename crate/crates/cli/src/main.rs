use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isac_core::experiment::{
    audit_sweep, contour_rows, crb_breakdown, emit_plot_data, isotropic_covariance, read_sweep_csv, read_w_csv,
    run_design, run_sweep, simulate, write_json, write_rows, write_w_csv, PlotStyle, Scenario, SweepAxis,
    SweepSpec,
};
use isac_core::par::ExecMode;
use isac_core::sdr::DesignVariant;
use isac_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "isac", version, about = "Extended-target ISAC beamforming experiments")]
struct Cli {
    /// Scenario JSON; built-in defaults when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Solver tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Write the conic problem in text form before solving.
    #[arg(long, global = true)]
    dump_problem: Option<PathBuf>,
    /// Disable the worker pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form and oracle CRB with per-subsection terms.
    Crb {
        /// Precoder CSV; isotropic full-power covariance when omitted.
        #[arg(long)]
        w: Option<PathBuf>,
    },
    /// Run the design pipeline once.
    Design(DesignArgs),
    /// Sweep one scenario parameter across design variants.
    Sweep {
        #[arg(long, default_value = "N_t")]
        axis: String,
        /// Comma-separated values; a per-axis default grid when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [Variant::CrbMin, Variant::Bp1, Variant::Bp2])]
        variants: Vec<Variant>,
        #[arg(long, default_value = "series")]
        plot_style: String,
    },
    /// Monte-Carlo direction estimation against the CRB.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Precoder CSV; designed from the scenario when omitted.
        #[arg(long)]
        w: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        grid_span_deg: Option<f64>,
        #[arg(long)]
        grid_step_deg: Option<f64>,
    },
    /// Sampled contour with the visibility flag.
    Contour {
        #[arg(long, default_value_t = 720)]
        samples: usize,
    },
    /// Recompute every sweep row's CRB from its stored precoder.
    Audit {
        /// Sweep table; `<out>/sweep.csv` when omitted.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    /// Randomization epochs.
    #[arg(long)]
    n_e: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    CrbMin,
    Bp1,
    Bp2,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(DesignVariant::from(*self).as_str())
    }
}

impl From<Variant> for DesignVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::CrbMin => DesignVariant::CrbMin,
            Variant::Bp1 => DesignVariant::Bp1,
            Variant::Bp2 => DesignVariant::Bp2,
        }
    }
}

fn default_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Nt => (12..=20).map(f64::from).collect(),
        SweepAxis::C => (2..=5).map(f64::from).collect(),
        SweepAxis::GammaDb => vec![4.0, 6.0, 8.0, 10.0, 12.0],
        SweepAxis::PtDbw => vec![-10.0, -5.0, 0.0, 5.0, 10.0],
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario> {
    let mut s = match &cli.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        s.design.seed = seed;
    }
    if let Some(t) = cli.tolerance {
        s.design.tolerance = t;
    }
    Ok(s)
}

fn apply_design_args(s: &mut Scenario, args: &DesignArgs) {
    if let Some(v) = args.variant {
        s.design.variant = v.into();
    }
    if let Some(n) = args.n_e {
        s.design.n_e = n;
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let mode = if cli.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    let mut scenario = load_scenario(cli)?;
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    let dump = cli.dump_problem.as_deref();
    match &cli.command {
        Command::Crb { w } => {
            let res = scenario.resolve(mode)?;
            let rx = match w {
                Some(p) => {
                    let w = read_w_csv(p)?;
                    &w * w.adjoint()
                }
                None => isotropic_covariance(&res),
            };
            let report = crb_breakdown(&res, &rx)?;
            write_rows(&out.join("crb_terms.csv"), &report.terms)?;
            write_json(&out.join("crb.json"), &report)?;
            print_json(&report)?;
        }
        Command::Design(args) => {
            apply_design_args(&mut scenario, args);
            let res = scenario.resolve(mode)?;
            let outcome = run_design(&res, scenario.design.variant, dump)?;
            write_w_csv(&out.join("w.csv"), &outcome.set.w)?;
            write_json(&out.join("design.json"), &outcome.report)?;
            print_json(&outcome.report)?;
        }
        Command::Sweep {
            axis,
            values,
            variants,
            plot_style,
        } => {
            let axis = SweepAxis::from_str(axis)?;
            let style = PlotStyle::from_str(plot_style)?;
            if dump.is_some() {
                log::warn!("--dump-problem is ignored by sweep");
            }
            let spec = SweepSpec {
                axis,
                values: if values.is_empty() {
                    default_values(axis)
                } else {
                    values.clone()
                },
                variants: variants.iter().map(|&v| v.into()).collect(),
            };
            let rows = run_sweep(&scenario, &spec, mode, Some(out))?;
            write_rows(&out.join("sweep.csv"), &rows)?;
            emit_plot_data(&rows, style, out)?;
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!("{} rows, {failed} failed", rows.len());
        }
        Command::Simulate {
            design,
            w,
            runs,
            grid_span_deg,
            grid_step_deg,
        } => {
            apply_design_args(&mut scenario, design);
            if let Some(r) = runs {
                scenario.sim.runs = *r;
            }
            if let Some(v) = grid_span_deg {
                scenario.sim.grid_span_deg = *v;
            }
            if let Some(v) = grid_step_deg {
                scenario.sim.grid_step_deg = *v;
            }
            let res = scenario.resolve(mode)?;
            let w = match w {
                Some(p) => read_w_csv(p)?,
                None => run_design(&res, scenario.design.variant, dump)?.set.w,
            };
            let (rows, summary) = simulate(&scenario, &res, &w, mode)?;
            write_rows(&out.join("simulate_runs.csv"), &rows)?;
            write_json(&out.join("simulate.json"), &summary)?;
            print_json(&summary)?;
        }
        Command::Contour { samples } => {
            if *samples == 0 {
                return Err(Error::BadInput("samples must be positive".into()));
            }
            let res = scenario.resolve(mode)?;
            write_rows(&out.join("contour.csv"), &contour_rows(&res, *samples))?;
        }
        Command::Audit { sweep } => {
            let path = sweep.clone().unwrap_or_else(|| out.join("sweep.csv"));
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let rows = read_sweep_csv(&path)?;
            let audit = audit_sweep(&scenario, &rows, &dir)?;
            write_rows(&out.join("audit.csv"), &audit)?;
            let bad = audit.iter().filter(|a| !a.ok).count();
            eprintln!("{} rows audited, {bad} mismatched", audit.len());
            if bad > 0 {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(4),
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
