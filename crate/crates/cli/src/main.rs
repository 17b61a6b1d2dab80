use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nfmlab::commands::{self, EvalArgs, Run, SampleArgs};
use nfmlab::config::parse_class;
use nfmlab::{load_config, CliError, ConfigError, CouplingName};
use nfmlab_core::sampling::{ClassChoice, ScheduleKind, Solver};

#[derive(Parser)]
#[command(name = "nfmlab", version, about = "Flow-matching students distilled from normalizing-flow teachers")]
struct Cli {
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the conditional flow teacher.
    TrainTeacher {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train a velocity-field student under a coupling.
    Distill {
        #[arg(long)]
        coupling: Option<CouplingName>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Integrate a trained student from noise to data.
    Sample {
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        solver: Option<Solver>,
        #[arg(long)]
        schedule: Option<ScheduleKind>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        guidance: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_parser = parse_class)]
        class: Option<ClassChoice>,
        #[arg(long)]
        trajectories: bool,
    },
    /// W2 and curvature over a list of NFE budgets.
    Eval {
        #[arg(long)]
        student: PathBuf,
        #[arg(long, value_delimiter = ',')]
        nfe: Option<Vec<String>>,
        #[arg(long)]
        solver: Option<Solver>,
        #[arg(long)]
        schedule: Option<ScheduleKind>,
        #[arg(long)]
        search_guidance: bool,
    },
    /// Distances between coupled pairs for teachers trained at several noise levels.
    Ztable {
        #[arg(long = "teacher", required = true)]
        teachers: Vec<PathBuf>,
    },
}

fn set(config: &mut nfmlab::RunConfig, key: &str, value: String) -> Result<(), CliError> {
    config.set(key, &value).map_err(|message| CliError::Config {
        path: PathBuf::from("<command line>"),
        source: ConfigError {
            line: None,
            key: Some(key.to_string()),
            message,
        },
    })
}

fn run(cli: Cli, log: &mut dyn Write) -> Result<(), CliError> {
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    match &cli.command {
        Command::TrainTeacher { eta, steps } => {
            if let Some(eta) = eta {
                set(&mut config, "teacher.eta", eta.to_string())?;
            }
            if let Some(steps) = steps {
                set(&mut config, "teacher.steps", steps.to_string())?;
            }
        }
        Command::Distill { coupling, steps, .. } => {
            if let Some(c) = coupling {
                config.student.coupling = *c;
            }
            if let Some(steps) = steps {
                set(&mut config, "student.steps", steps.to_string())?;
            }
        }
        _ => {}
    }
    config.validate().map_err(|source| CliError::Config {
        path: PathBuf::from("<resolved>"),
        source,
    })?;
    let run = Run::new(config);
    match cli.command {
        Command::TrainTeacher { .. } => commands::train_teacher(&run, log).map(drop),
        Command::Distill { teacher, .. } => {
            commands::distill(&run, run.config.student.coupling, teacher.as_deref(), log).map(drop)
        }
        Command::Sample {
            student,
            solver,
            schedule,
            steps,
            guidance,
            count,
            class,
            trajectories,
        } => {
            let args = SampleArgs {
                solver,
                schedule,
                steps,
                guidance,
                count,
                class,
                trajectories,
            };
            commands::sample(&run, &student, &args, log).map(drop)
        }
        Command::Eval {
            student,
            nfe,
            solver,
            schedule,
            search_guidance,
        } => {
            let nfe = nfe.map(parse_nfe_list).transpose()?;
            let args = EvalArgs {
                nfe,
                solver,
                schedule,
                search_guidance,
            };
            commands::eval(&run, &student, &args, log).map(drop)
        }
        Command::Ztable { teachers } => commands::ztable(&run, &teachers, log).map(drop),
    }
}

fn parse_nfe_list(items: Vec<String>) -> Result<Vec<usize>, CliError> {
    let items: Vec<&str> = items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Usage("--nfe needs at least one value".into()));
    }
    items
        .iter()
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad NFE value {s:?}"))))
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            drop(lock);
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
