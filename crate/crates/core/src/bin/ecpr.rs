use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ecpr::harness::{
    evaluate_checkpoint, gradcheck_model, model_config, reproduce, timing_text, train, Checkpoint,
    Claim, ExperimentConfig, SEEDS,
};
use ecpr::metrics::{MetricsReport, REPORT_HEADER};
use ecpr::models::{HeadSelector, ModelKind, TrainingDomain};
use ecpr::sim::{generate, oracle_to_tsv, read_oracle, Dataset};
use ecpr::Error;

/// Threshold for `gradcheck`.
const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "ecpr", version, about = "Entire-chain pre-ranking workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/eval datasets and the eval oracle into a directory.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        model: ModelKind,
        /// Directory from `simulate`, or a dataset file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        domain: Option<TrainingDomain>,
        /// Overrides the config stored next to the data.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint and write a TSV report plus `<report>.json`.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Directory from `simulate`, or an eval dataset file with a `.oracle.tsv` sibling.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "t1")]
        head: HeadSelector,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference check of a model's gradients.
    Gradcheck {
        #[arg(long)]
        model: ModelKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Merge JSON reports from `eval` into one TSV table on stdout.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run a canned experiment over three seeds.
    Reproduce {
        /// ssb, rcs or ablation.
        #[arg(long)]
        claim: Claim,
        /// Config file overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the report and check files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds [default: 1,2,3].
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

enum Failure {
    Error(Error),
    Acceptance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(io(path))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
}

/// Resolves a data argument to a dataset file and an optional config beside it.
fn data_paths(data: &Path, file: &str) -> (PathBuf, Option<PathBuf>) {
    if data.is_dir() {
        let cfg = data.join("config.cfg");
        (data.join(file), cfg.exists().then_some(cfg))
    } else {
        (data.to_path_buf(), None)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let sim = generate(cfg.seed, &cfg.sim)?;
            fs::create_dir_all(&out).map_err(io(&out))?;
            sim.train.write(&out.join("train.tsv"))?;
            sim.eval.write(&out.join("eval.tsv"))?;
            write(
                &out.join("eval.oracle.tsv"),
                &oracle_to_tsv(&sim.eval, &sim.eval_oracle),
            )?;
            write(&out.join("config.cfg"), &cfg.to_text())?;
            eprintln!(
                "wrote {} train and {} eval records to {}",
                sim.train.len(),
                sim.eval.len(),
                out.display()
            );
        }
        Command::Train {
            model,
            data,
            out,
            domain,
            config,
            seed,
        } => {
            let (file, beside) = data_paths(&data, "train.tsv");
            let mut cfg = load_config(config.as_deref().or(beside.as_deref()))?;
            cfg.model.kind = model;
            if let Some(d) = domain {
                cfg.domain = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dataset = Dataset::read(&file)?;
            let outcome = train(&cfg, &dataset)?;
            for (i, l) in outcome.epoch_losses.iter().enumerate() {
                eprintln!("epoch {}\tloss {l:.6}", i + 1);
            }
            outcome.checkpoint.save(&out)?;
            if let Some(reason) = outcome.aborted {
                return Err(Error::NonFinite(format!(
                    "training aborted ({reason}); last good parameters saved to {}",
                    out.display()
                ))
                .into());
            }
        }
        Command::Eval {
            ckpt,
            data,
            head,
            k,
            report,
        } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let (file, _) = data_paths(&data, "eval.tsv");
            let oracle_path = match file.to_str().and_then(|s| s.strip_suffix(".tsv")) {
                Some(stem) => PathBuf::from(format!("{stem}.oracle.tsv")),
                None => file.with_extension("oracle.tsv"),
            };
            let dataset = Dataset::read(&file)?;
            let oracle = read_oracle(&oracle_path, &dataset)?;
            let r = evaluate_checkpoint(&ckpt, &dataset, &oracle, head, k.as_deref())?;
            write(&report, &r.to_tsv())?;
            let mut json_path = report.clone().into_os_string();
            json_path.push(".json");
            write(Path::new(&json_path), &r.to_json())?;
            print!("{}", r.to_tsv());
        }
        Command::Gradcheck { model, seed } => {
            let start = Instant::now();
            let r = gradcheck_model(&model_config(model), seed, None)?;
            println!(
                "{model}\tmax_rel_error {:.3e}\tat {}[{}] (analytic {:.6e}, numeric {:.6e})\tcoords {}",
                r.max_rel_error, r.worst_param, r.worst_index, r.analytic, r.numeric, r.coords_checked
            );
            eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
            if r.max_rel_error >= GRADCHECK_TOL {
                return Err(Failure::Acceptance(format!(
                    "max relative error {:.3e} >= {GRADCHECK_TOL:e}",
                    r.max_rel_error
                )));
            }
        }
        Command::Report { reports } => {
            println!("{REPORT_HEADER}");
            for p in reports {
                let text = fs::read_to_string(&p).map_err(io(&p))?;
                let r = MetricsReport::from_json(&text, &p)?;
                print!("{}", r.tsv_rows());
            }
        }
        Command::Reproduce {
            claim,
            config,
            out,
            seeds,
        } => {
            let cfg = load_config(config.as_deref())?;
            let seeds = seeds.unwrap_or_else(|| SEEDS.to_vec());
            let start = Instant::now();
            let r = reproduce(claim, &cfg, &seeds)?;
            let table = r.to_tsv();
            let checks = r.checks_text();
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(io(&dir))?;
                write(&dir.join(format!("{}.tsv", claim.name())), &table)?;
                write(&dir.join(format!("{}.checks.txt", claim.name())), &checks)?;
            } else {
                print!("{table}");
            }
            print!("{checks}");
            eprint!("{}", timing_text(&r));
            eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
            for res in &r.results {
                if let Some(reason) = &res.aborted {
                    eprintln!(
                        "warning: {} seed {} aborted: {reason}",
                        res.cell.label(),
                        res.seed
                    );
                }
            }
            if !r.passed() {
                let names: Vec<String> = r.failures().iter().map(|c| c.name.clone()).collect();
                return Err(Failure::Acceptance(names.join("; ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance(msg)) => {
            eprintln!("acceptance check failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
