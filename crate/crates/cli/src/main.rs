use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fracreact::output::RunWriter;
use fracreact::scenario::{damkohler_splitting_study, write_config, ScenarioConfig};
use fracreact::{find_scenario, list_scenarios, parse_config, run, OutputSink};

#[derive(Parser)]
#[command(name = "fracreact", version, about = "Reactive flow in fractured porous media")]
struct Cli {
    /// Log defaults and progress (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in scenario.
    Run {
        /// Path to a scenario file, or the name of a built-in scenario.
        target: String,
        /// Time step; the end time is kept and the step count rounded up.
        #[arg(long, conflicts_with = "nt")]
        dt: Option<f64>,
        /// Number of time steps.
        #[arg(long)]
        nt: Option<usize>,
        /// Output directory (overrides the scenario's).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write only the balance table.
        #[arg(long)]
        no_vtk: bool,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Parse a scenario file, build its mesh and check it.
    Validate { config: PathBuf },
    /// Print a built-in scenario in the file format.
    Show { name: String },
    /// Numerical studies.
    Study {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Subcommand)]
enum Study {
    /// Splitting error against a monolithic solve for several Damkohler
    /// numbers and step counts.
    SplittingError {
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        nt_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100")]
        da_list: Vec<f64>,
        /// Base scenario (file or built-in name).
        #[arg(long, default_value = "test1d_splitting")]
        scenario: String,
    },
}

fn load(target: &str) -> fracreact::Result<ScenarioConfig> {
    let path = Path::new(target);
    if path.exists() {
        return parse_config(path);
    }
    match find_scenario(target) {
        Some(entry) => entry.config(),
        None => Err(fracreact::Error::Config(format!(
            "'{target}' is neither a file nor a built-in scenario (see list-scenarios)"
        ))),
    }
}

fn run_command(target: &str, dt: Option<f64>, nt: Option<usize>, out: Option<PathBuf>, no_vtk: bool) -> fracreact::Result<()> {
    let mut config = load(target)?;
    if let Some(dt) = dt {
        if !(dt > 0.0) {
            return Err(fracreact::Error::Config(format!("--dt must be positive, got {dt}")));
        }
        let steps = (config.time.end / dt - 1e-9).ceil().max(1.0) as usize;
        config = config.with_steps(steps)?;
    }
    if let Some(nt) = nt {
        config = config.with_steps(nt)?;
    }
    if let Some(out) = out {
        config.output.dir = out;
    }
    if no_vtk {
        config.output.vtk = false;
    }
    let scenario = config.build()?;
    let mut writer = RunWriter::new(
        &scenario.output.dir,
        &scenario.name,
        &scenario.mesh,
        &scenario.model.topo,
        scenario.output.every,
        scenario.grid.steps,
        scenario.output.vtk,
    )?;
    let outcome = {
        let mut sinks: [&mut dyn OutputSink; 1] = [&mut writer];
        run(&scenario.model, scenario.initial.clone(), &scenario.grid, &mut sinks)?
    };
    let first = &outcome.reports[0];
    let last = outcome.reports.last().expect("initial report");
    let worst = outcome.reports.iter().map(|r| r.delta_m.abs()).fold(0.0, f64::max);
    println!(
        "{}: {} steps of {:e} to t = {:e}",
        scenario.name,
        scenario.grid.steps,
        scenario.grid.dt(),
        scenario.grid.end
    );
    println!("  total mass {:.6e} -> {:.6e}, max |delta_m| {:.3e}", first.total_mass(), last.total_mass(), worst);
    println!("  balance table {}", writer.balance_path().display());
    println!("  {} snapshot files in {}", writer.snapshots().len(), scenario.output.dir.display());
    Ok(())
}

fn validate_command(path: &Path) -> fracreact::Result<()> {
    let config = parse_config(path)?;
    let scenario = config.build()?;
    let mesh = &scenario.mesh;
    println!(
        "{}: ok ({} cells, {} fractures with {} cells, {} intersections, {} steps of {:e})",
        scenario.name,
        mesh.cells.len(),
        mesh.fractures.len(),
        mesh.num_fracture_cells(),
        mesh.intersections.len(),
        scenario.grid.steps,
        scenario.grid.dt()
    );
    Ok(())
}

fn study_command(study: Study) -> fracreact::Result<()> {
    let Study::SplittingError { nt_list, da_list, scenario } = study;
    let base = load(&scenario)?;
    let columns = damkohler_splitting_study(&base, &da_list, &nt_list)?;
    println!("{:>10} {:>10} {:>6} {:>12} {:>14}", "Da", "CFL", "N", "dt", "max |u - ref|");
    for col in &columns {
        for row in &col.rows {
            println!(
                "{:>10} {:>10.3e} {:>6} {:>12.4e} {:>14.4e}",
                col.damkohler, col.courant, row.steps, row.dt, row.error
            );
        }
        println!("{:>10} order {:.3}", "", col.order);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> fracreact::Result<()> {
    match cli.command {
        Command::Run { target, dt, nt, out, no_vtk } => run_command(&target, dt, nt, out, no_vtk),
        Command::ListScenarios => {
            for e in list_scenarios() {
                println!("{:<30} {}", e.name, e.mirrors);
            }
            Ok(())
        }
        Command::Validate { config } => validate_command(&config),
        Command::Show { name } => {
            let entry = find_scenario(&name)
                .ok_or_else(|| fracreact::Error::Config(format!("no built-in scenario named '{name}'")))?;
            print!("{}", write_config(&entry.config()?));
            Ok(())
        }
        Command::Study { study } => study_command(study),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
