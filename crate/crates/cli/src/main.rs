use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mpet_core::config::{parse_config, RunConfig, SolverChoice};
use mpet_core::model::UnitMode;
use mpet_core::report::{RunReport, SolverKind};
use mpet_core::sweep::{run_table_sweep, table_base, TableId, PAPER_MESHES};
use mpet_core::Error;

mod verify;

const EXIT_CELL_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "mpet", version, about = "Multiple-network poroelasticity solvers and benchmark sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Si,
    #[value(name = "paper_raw")]
    PaperRaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem and print its report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep one of the published iteration-count tables.
    Table {
        /// T2, T3, T4 or T7.
        table: String,
        /// Subdivisions per side; defaults to 16 32 64.
        #[arg(long, num_args = 1..)]
        mesh: Vec<usize>,
        #[arg(long, value_enum, default_value = "si")]
        units: Units,
        /// Configuration supplying every other setting.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the CSV, timing and text outputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the consistency checks on small meshes.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
    },
}

fn config_error(e: &Error) -> bool {
    matches!(e, Error::Config { .. } | Error::InvalidParameter(_))
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if config_error(&e) { EXIT_CONFIG } else { EXIT_CELL_FAILURE })
}

fn read_config(path: &Path) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config { line: 0, message: format!("cannot read {}: {e}", path.display()) })?;
    parse_config(&text)
}

fn cmd_run(path: &Path) -> ExitCode {
    let cfg = match read_config(path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let rep = match mpet_core::runner::run(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    print_run(&rep);
    if let Some(out) = &cfg.output {
        if let Err(e) = rep.append_to(out) {
            return fail(e);
        }
    }
    if rep.solves.iter().all(|s| s.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CELL_FAILURE)
    }
}

fn print_run(rep: &RunReport) {
    let d = &rep.dofs;
    println!(
        "N = {}  dofs: {} displacement, {} flux, {} pressure ({} total)",
        rep.config.n, d.displacement, d.flux, d.pressure, d.total
    );
    for kind in [SolverKind::Minres, SolverKind::FixedStress] {
        if let Some(s) = rep.solve(kind) {
            println!(
                "{:<13} {:>4} iterations  residual ratio {:.3e}  {}  {:.2}s",
                kind.name(),
                s.iterations,
                s.final_ratio(),
                if s.converged { "converged" } else { "NOT CONVERGED" },
                s.wall_time
            );
        }
    }
    if let Some(a) = &rep.audit {
        println!(
            "audit: beta^2 = {:.4} (N = {}), cK^2 = {:.4}, rate bound {:.4}, max ratio {:.4} over {} steps, {} violations",
            a.beta2, a.estimate_mesh, a.ck2, a.rate_bound, a.max_ratio, a.ratios_checked, a.contraction_violations
        );
        println!(
            "       energy slack {}{}, conservation {:.2e}, reference residual {:.2e}",
            a.energy_max_slack.map_or("n/a".to_string(), |s| format!("{s:.2e}")),
            if a.l_admissible { "" } else { " (L < 1/(lambda + cK^2): not guaranteed)" },
            a.conservation,
            a.reference_residual
        );
    }
}

fn cmd_table(table: &str, mesh: Vec<usize>, units: Units, config: Option<PathBuf>, out: Option<PathBuf>) -> ExitCode {
    let table: TableId = match table.parse() {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let mut base = match &config {
        Some(p) => match read_config(p) {
            Ok(c) => c,
            Err(e) => return fail(e),
        },
        None => table_base(SolverChoice::Both),
    };
    base.units = match units {
        Units::Si => UnitMode::Si,
        Units::PaperRaw => UnitMode::PaperRaw,
    };
    let meshes = if mesh.is_empty() { PAPER_MESHES.to_vec() } else { mesh };
    if let Some(&bad) = meshes.iter().find(|&&n| n == 0 || n > mpet_core::config::MAX_SUBDIVISIONS) {
        return fail(Error::Config { line: 0, message: format!("mesh size {bad} outside 1..=256") });
    }
    let result = run_table_sweep(table, &base, &meshes);
    print!("{}", result.aligned_text());
    if let Some(dir) = out {
        let write = || -> Result<(), Error> {
            fs::create_dir_all(&dir)?;
            let name = table.name();
            result.write_csv(fs::File::create(dir.join(format!("{name}.csv")))?)?;
            result.write_timings_csv(fs::File::create(dir.join(format!("{name}_timings.csv")))?)?;
            fs::write(dir.join(format!("{name}.txt")), result.aligned_text())?;
            Ok(())
        };
        if let Err(e) = write() {
            return fail(e);
        }
    }
    for r in result.results.iter().filter(|r| r.failed()) {
        eprintln!(
            "cell h=1/{} lambda*{:e} K*({:e}, {:e}) failed{}",
            r.cell.n,
            r.cell.lambda_scale,
            r.cell.row_scale,
            r.cell.col_scale,
            r.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default()
        );
    }
    if result.any_failed() {
        ExitCode::from(EXIT_CELL_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Table { table, mesh, units, config, out } => cmd_table(&table, mesh, units, config, out),
        Command::Verify { level } => verify::run(matches!(level, Level::Full)),
    }
}
