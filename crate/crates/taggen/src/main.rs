use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use taggen::cli;
use taggen::config::RunConfig;
use taggen::corpus::Split;
use taggen::synth::{Flavor, SyntheticCorpusSpec};

/// Hashtag generation and hashtag-guided tweet classification.
#[derive(Parser)]
#[command(name = "taggen", version, about)]
struct Cli {
    /// Run directory (defaults to $TAGGEN_RUN_ROOT/run or ./run).
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config overrides, highest precedence (repeatable): --set key=value.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed for all stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract hashtags, normalize, split, build the vocabulary.
    Preprocess {
        /// Raw JSONL input: {"id","raw","label"?,"split"} per line.
        #[arg(long)]
        input: PathBuf,
        /// Vocabulary frequency threshold.
        #[arg(long)]
        min_count: Option<usize>,
        /// Apply the size-tiered low-resource subsample to the train split.
        #[arg(long)]
        sample: bool,
    },
    /// Build the tweet-memory bank over train+val.
    BuildMemory,
    /// Build the entity co-occurrence graph over train+val.
    BuildGraph {
        /// Plain-text gazetteer, one entity per line.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long)]
        gcn_layers: Option<usize>,
        #[arg(long)]
        gat_layers: Option<usize>,
    },
    /// Train the hashtag generator.
    TrainHashgen {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Disable the tweet-memory contribution.
        #[arg(long)]
        no_tam: bool,
        /// Disable the entity-graph contribution.
        #[arg(long)]
        no_eam: bool,
        /// Mask the query tweet's own memory row.
        #[arg(long)]
        exclude_self: bool,
    },
    /// Generate hashtags with beam search.
    Generate {
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Which splits to decode: train|val|test|all.
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Fuse generated hashtags with tweets for the classifier.
    Fuse {
        /// without|standard|start|end.
        #[arg(long)]
        fusion: Option<String>,
    },
    /// Train the downstream tweet classifier on fused inputs.
    TrainClf {
        /// JSON array declaring the task's label set.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate on the test split; writes report.json.
    Eval {
        /// One of the seven benchmark tasks (sets the metric); accuracy otherwise.
        #[arg(long)]
        task: Option<String>,
        /// Also train and score a without-hashtags baseline from the same inputs.
        #[arg(long)]
        compare: bool,
        /// Keep the per-class breakdown in the report.
        #[arg(long)]
        per_class: bool,
    },
    /// Train and score generator variants (full / -TAM / -EAM / -both).
    Ablate {
        #[arg(long)]
        no_tam: bool,
        #[arg(long)]
        no_eam: bool,
    },
    /// Gradient-check every registered layer; exit 0 iff all pass.
    Gradcheck {
        /// Accepted random draws per check.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Write a synthetic corpus for pipeline experiments.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// topic|retrieval|entity.
        #[arg(long, default_value = "topic")]
        flavor: String,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_val: usize,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        /// Comma-separated label names.
        #[arg(long, default_value = "alpha,beta")]
        labels: String,
        /// Hashtag-label correlation strength in [0,1].
        #[arg(long, default_value_t = 0.9)]
        strength: f64,
        /// Comma-separated hub entity surfaces (entity flavor).
        #[arg(long, default_value = "")]
        entities: String,
    },
}

fn resolve_config(args: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&args.set)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_dir(args: &Cli) -> PathBuf {
    args.run_dir.clone().unwrap_or_else(|| {
        std::env::var("TAGGEN_RUN_ROOT")
            .map(|root| PathBuf::from(root).join("run"))
            .unwrap_or_else(|_| PathBuf::from("run"))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Cli::parse();
    match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = resolve_config(&args)?;
    let dir = run_dir(&args);
    match &args.cmd {
        Cmd::Preprocess {
            input,
            min_count,
            sample,
        } => {
            if let Some(mc) = min_count {
                cfg.min_count = *mc;
            }
            cfg.sample |= *sample;
            cli::preprocess_stage(&dir, input, &cfg).context("preprocess")?;
        }
        Cmd::BuildMemory => cli::build_memory_stage(&dir, &cfg).context("build-memory")?,
        Cmd::BuildGraph {
            gazetteer,
            gcn_layers,
            gat_layers,
        } => {
            if let Some(g) = gazetteer {
                cfg.gazetteer = Some(g.clone());
            }
            if let Some(l) = gcn_layers {
                cfg.gcn_layers = *l;
            }
            if let Some(l) = gat_layers {
                cfg.gat_layers = *l;
            }
            cli::build_graph_stage(&dir, &cfg).context("build-graph")?;
        }
        Cmd::TrainHashgen {
            epochs,
            lr,
            no_tam,
            no_eam,
            exclude_self,
        } => {
            if let Some(e) = epochs {
                cfg.gen_epochs = *e;
            }
            if let Some(l) = lr {
                cfg.lr = *l;
            }
            cfg.no_tam |= *no_tam;
            cfg.no_eam |= *no_eam;
            cfg.exclude_self |= *exclude_self;
            cli::train_hashgen_stage(&dir, &cfg).context("train-hashgen")?;
        }
        Cmd::Generate {
            beam,
            max_len,
            split,
        } => {
            if let Some(b) = beam {
                cfg.beam = *b;
            }
            if let Some(m) = max_len {
                cfg.max_len = *m;
            }
            let splits = match split.as_str() {
                "train" => vec![Split::Train],
                "val" => vec![Split::Val],
                "test" => vec![Split::Test],
                "all" => vec![Split::Train, Split::Val, Split::Test],
                other => anyhow::bail!("unknown split `{other}`"),
            };
            cli::generate_stage(&dir, &cfg, &splits).context("generate")?;
        }
        Cmd::Fuse { fusion } => {
            if let Some(f) = fusion {
                cfg.fusion = f.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            }
            cli::fuse_stage(&dir, &cfg).context("fuse")?;
        }
        Cmd::TrainClf { labels, epochs } => {
            if let Some(e) = epochs {
                cfg.clf_epochs = *e;
            }
            cli::train_clf_stage(&dir, &cfg, labels.as_deref()).context("train-clf")?;
        }
        Cmd::Eval {
            task,
            compare,
            per_class,
        } => {
            if let Some(t) = task {
                cfg.task = Some(t.clone());
            }
            cfg.per_class |= *per_class;
            cli::eval_stage(&dir, &cfg, *compare).context("eval")?;
        }
        Cmd::Ablate { no_tam, no_eam } => {
            cli::ablate_stage(&dir, &cfg, *no_tam, *no_eam).context("ablate")?;
        }
        Cmd::Gradcheck { seeds } => {
            let ok = cli::gradcheck_stage(*seeds).context("gradcheck")?;
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Cmd::MakeSynthetic {
            out,
            flavor,
            n_train,
            n_val,
            n_test,
            labels,
            strength,
            entities,
        } => {
            let spec = SyntheticCorpusSpec {
                n_train: *n_train,
                n_val: *n_val,
                n_test: *n_test,
                labels: labels.split(',').map(str::to_string).collect(),
                strength: *strength,
                entities: entities
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
                seed: cfg.seed,
                flavor: flavor.parse::<Flavor>().map_err(|e| anyhow::anyhow!(e))?,
            };
            anyhow::ensure!(
                (0.0..=1.0).contains(&spec.strength),
                "strength must lie in [0,1]"
            );
            cli::make_synthetic_stage(out, &spec).context("make-synthetic")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
