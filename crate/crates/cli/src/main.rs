use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gdiffretro::chem::{load_reactions, parse_smiles, write_reactions, Molecule};
use gdiffretro::diffusion::TrajectoryStep;
use gdiffretro::numerics::Rng;
use gdiffretro::pipeline::{
    evaluate, evaluate_center, format_table, gen_toy_corpus, load_center, load_completer,
    load_models, parse_topk, predict_record, sample_synthon, save_center, save_stage_two,
    train_center_stage, train_stage_two, DualGraphReport, PipelineConfig, PipelineError, ToyRule,
};

#[derive(Parser, Debug)]
#[command(
    name = "gdiffretro",
    version,
    about = "Two-stage retrosynthesis: reaction centers, then 3D synthon completion"
)]
struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a template-generated reaction corpus.
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Comma-separated subset of ester, amide, ether, sulfonamide.
        #[arg(long, value_delimiter = ',')]
        rules: Option<Vec<String>>,
    },
    /// Train the reaction-center scorer.
    TrainCenter {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Use the dual-graph branch.
        #[arg(long, value_enum)]
        dual: Option<Switch>,
    },
    /// Train the size classifier and the denoiser.
    TrainDiffusion {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Predict reactant sets for products given as SMILES or as a corpus.
    Predict {
        #[arg(long)]
        models: Option<PathBuf>,
        /// Product SMILES; repeatable.
        #[arg(long = "product")]
        products: Vec<String>,
        /// Corpus whose products are predicted and scored.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        /// Keep only this many candidates per record (largest value of the list).
        #[arg(long)]
        topk: Option<String>,
        #[arg(long, value_enum)]
        dual: Option<Switch>,
        /// Write every reverse-diffusion step as JSON lines.
        #[arg(long)]
        trajectory_dump: Option<PathBuf>,
        /// Records go here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-k exact-match accuracy on a corpus.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        topk: Option<String>,
        #[arg(long, value_enum)]
        dual: Option<Switch>,
        /// Evaluate with and without the dual graph.
        #[arg(long)]
        ablation: bool,
        /// Also write the prediction records.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Print the faces and dual graph of a molecule.
    Dualgraph { smiles: String },
    /// Complete a single synthon and rank the results.
    Sample {
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        synthon: String,
        /// Atom index that lost a bond; repeatable.
        #[arg(long = "anchor", required = true)]
        anchors: Vec<usize>,
        /// Atoms to generate; drawn from the size classifier when absent.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        trajectory_dump: Option<PathBuf>,
    },
}

/// Problems with the invocation rather than the run.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<Usage>().is_some()
            || matches!(
                e.downcast_ref::<PipelineError>(),
                Some(PipelineError::Config(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", format!("{err:#}").replace('\n', " "));
            ExitCode::from(if is_usage(&err) { 1 } else { 2 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    Ok(config)
}

fn pick(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| fallback.clone()).ok_or_else(|| {
        usage(format!(
            "--{name} is required (or set `{name}` in the config)"
        ))
    })
}

fn smiles(s: &str) -> Result<Molecule> {
    parse_smiles(s).map_err(|e| usage(format!("cannot parse SMILES {s:?}: {e}")))
}

fn writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn dump_trajectory(path: &Path, steps: &[(usize, TrajectoryStep)]) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    for (record, s) in steps {
        let mut v = serde_json::to_value(s)?;
        v["record"] = (*record).into();
        writeln!(w, "{v}")?;
    }
    Ok(w.flush()?)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::GenToy { out, n, rules } => {
            let rules = match rules {
                None => ToyRule::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<ToyRule>, _>>()?,
            };
            let corpus = gen_toy_corpus(&rules, n, &mut Rng::new(config.seed))?;
            write_reactions(&out, &corpus)
                .with_context(|| format!("cannot write {}", out.display()))?;
            println!("wrote {} reactions to {}", corpus.len(), out.display());
        }
        Command::TrainCenter { data, models, dual } => {
            if let Some(d) = dual {
                config.center.dual = d == Switch::On;
            }
            config.validate()?;
            let data = pick(&data, &config.data, "data")?;
            let dir = pick(&models, &config.models, "models")?;
            let corpus =
                load_reactions(&data).with_context(|| format!("cannot load {}", data.display()))?;
            let (net, report) = train_center_stage(&corpus, &config)?;
            save_center(&dir, &net)?;
            println!(
                "center (dual {}): {} steps, final loss {:.4}, training top-1 {:.3}",
                if net.config.dual { "on" } else { "off" },
                report.steps,
                report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                evaluate_center(&net, &corpus)?
            );
        }
        Command::TrainDiffusion { data, models } => {
            config.validate()?;
            let data = pick(&data, &config.data, "data")?;
            let dir = pick(&models, &config.models, "models")?;
            let corpus =
                load_reactions(&data).with_context(|| format!("cannot load {}", data.display()))?;
            let two = train_stage_two(&corpus, &config)?;
            save_stage_two(&dir, &two.size, &two.denoiser, config.t_max)?;
            println!(
                "size: final loss {:.4}; denoiser: {} steps, final loss {:.4}",
                two.size_report
                    .epoch_losses
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN),
                two.denoiser_report.steps,
                two.denoiser_report
                    .epoch_losses
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN)
            );
        }
        Command::Predict {
            models,
            products,
            data,
            samples,
            topk,
            dual,
            trajectory_dump,
            out,
        } => {
            if let Some(s) = samples {
                config.samples = s;
            }
            let keep = topk
                .as_deref()
                .map(parse_topk)
                .transpose()?
                .map(|ks| ks[ks.len() - 1]);
            let dual = dual.map_or(config.center.dual, |d| d == Switch::On);
            config.validate()?;
            let dir = pick(&models, &config.models, "models")?;
            let mut jobs: Vec<(Molecule, Option<String>)> = Vec::new();
            for p in &products {
                jobs.push((smiles(p)?, None));
            }
            if let Some(path) = data.or_else(|| {
                if products.is_empty() {
                    config.data.clone()
                } else {
                    None
                }
            }) {
                for rxn in load_reactions(&path)
                    .with_context(|| format!("cannot load {}", path.display()))?
                {
                    let truth = rxn.reactant_set_key();
                    jobs.push((rxn.product.mol, Some(truth)));
                }
            }
            if jobs.is_empty() {
                return Err(usage("nothing to predict: pass --product or --data"));
            }
            let models = load_models(&dir, dual)?;
            let mut w = writer(&out)?;
            let mut traj = Vec::new();
            for (k, (mol, truth)) in jobs.iter().enumerate() {
                let mut steps = trajectory_dump.as_ref().map(|_| Vec::new());
                let mut rec =
                    predict_record(mol, &models, &config, truth.as_deref(), steps.as_mut())?;
                if let Some(k) = keep {
                    rec.candidates.truncate(k);
                }
                writeln!(w, "{}", rec.to_json())?;
                if rec.candidates.is_empty() {
                    eprintln!(
                        "warning: {}",
                        PipelineError::NoValidCandidate(rec.product.clone())
                    );
                }
                traj.extend(steps.into_iter().flatten().map(|s| (k, s)));
            }
            w.flush()?;
            if let Some(p) = trajectory_dump {
                dump_trajectory(&p, &traj)?;
            }
        }
        Command::Evaluate {
            data,
            models,
            samples,
            topk,
            dual,
            ablation,
            records,
        } => {
            if let Some(s) = samples {
                config.samples = s;
            }
            if let Some(t) = topk {
                config.topk = parse_topk(&t)?;
            }
            config.validate()?;
            let data = pick(&data, &config.data, "data")?;
            let dir = pick(&models, &config.models, "models")?;
            let corpus =
                load_reactions(&data).with_context(|| format!("cannot load {}", data.display()))?;
            let variants = if ablation {
                vec![true, false]
            } else {
                vec![dual.map_or(config.center.dual, |d| d == Switch::On)]
            };
            let mut base = load_models(&dir, variants[0])?;
            let mut rows = Vec::new();
            let mut w = records.as_ref().map(|_| writer(&records)).transpose()?;
            for dual in variants {
                base.center = load_center(&dir, dual)?;
                let name = if dual { "dual" } else { "no-dual" };
                let (row, recs) = evaluate(&corpus, &base, &config, name)?;
                if let Some(w) = w.as_mut() {
                    for r in &recs {
                        writeln!(w, "{}", r.to_json())?;
                    }
                }
                rows.push(row);
            }
            if let Some(w) = w.as_mut() {
                w.flush()?;
            }
            print!("{}", format_table(&rows));
        }
        Command::Dualgraph { smiles: s } => {
            println!("{}", DualGraphReport::new(&smiles(&s)?).to_json());
        }
        Command::Sample {
            models,
            synthon,
            anchors,
            size,
            samples,
            trajectory_dump,
        } => {
            if let Some(s) = samples {
                config.samples = s;
            }
            config.validate()?;
            let dir = pick(&models, &config.models, "models")?;
            let mol = smiles(&synthon)?;
            let completer = load_completer(&dir)?;
            let mut steps = trajectory_dump.as_ref().map(|_| Vec::new());
            let rec = sample_synthon(&mol, &anchors, size, &completer, &config, steps.as_mut())?;
            println!("{}", rec.to_json());
            if let Some(p) = trajectory_dump {
                let steps: Vec<(usize, TrajectoryStep)> =
                    steps.into_iter().flatten().map(|s| (0, s)).collect();
                dump_trajectory(&p, &steps)?;
            }
        }
    }
    Ok(())
}
