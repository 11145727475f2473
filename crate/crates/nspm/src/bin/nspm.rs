//! Command-line front end for the question-to-SPARQL pipeline.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nspm::catalog::{build_catalog, CatalogOptions};
use nspm::codec::{tokenize_nl, CodecPreset, TokenSeq};
use nspm::dataset::{
    read_dataset, read_split, split_dataset, write_atomic, write_dataset, write_split, Partition,
};
use nspm::eval::evaluate;
use nspm::generator::{
    direct_translations, instantiate_with, parse_templates, GeneratorConfig, QueryTemplate,
};
use nspm::interpreter::interpret;
use nspm::learner::{
    load_model, save_model, train, HyperParams, Optimizer, Seq2SeqModel, TrainConfig, Vocab,
};
use nspm::ntriples::{parse_ntriples_with, ParseMode, Triple};
use nspm::pipeline::{
    curve_csv, report_text, run_ablation, run_pipeline, write_artifacts, ExperimentSetting,
    PipelineConfig,
};
use nspm::util::Execution;

#[derive(Parser)]
#[command(name = "nspm", about = "Template-generated question-to-SPARQL translation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SeedArg {
    /// RNG seed; falls back to the NSPM_SEED environment variable, then 42.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn get(&self) -> Result<u64, String> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var("NSPM_SEED") {
            Ok(v) => v
                .parse()
                .map_err(|_| format!("NSPM_SEED is not an integer: {v:?}")),
            Err(_) => Ok(42),
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 128)]
    embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = false)]
    bidirectional: bool,
}

impl ModelArgs {
    fn hp(&self) -> HyperParams {
        HyperParams {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.layers,
            dropout_rate: self.dropout,
            bidirectional: self.bidirectional,
        }
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// adam or sgd
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long, default_value_t = 5.0)]
    grad_clip: f64,
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    #[arg(long, default_value_t = 60)]
    max_decode_len: usize,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig, String> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::default(),
            "sgd" => Optimizer::Sgd,
            other => return Err(format!("unknown optimizer {other:?} (use adam or sgd)")),
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer,
            grad_clip_norm: self.grad_clip,
            seed,
            eval_every: self.eval_every,
            max_decode_len: self.max_decode_len,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a knowledge base and export the ranked entity catalog.
    Ingest {
        #[arg(long)]
        kb: PathBuf,
        /// Skip malformed lines instead of failing.
        #[arg(long, default_value_t = false)]
        lenient: bool,
        /// Keep only entities of this class IRI.
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Instantiate templates over the catalog into an NL/query dataset.
    Generate {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        /// Encoding setting: v1, v1.1, v2, v2.1, v3, v4.
        #[arg(long, default_value = "v3")]
        setting: String,
        #[arg(long, default_value_t = 10)]
        top_entity_count: usize,
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long, default_value_t = false)]
        lenient: bool,
        #[arg(long)]
        class: Option<String>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a dataset so no question string spans two partitions.
    Split {
        /// Directory holding data.nl / data.ql / meta.jsonl.
        #[arg(long)]
        data: PathBuf,
        /// train:dev:test percentages.
        #[arg(long, default_value = "80:10:10")]
        ratios: String,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Train a translation model on a split dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "v3")]
        setting: String,
        /// Count threshold for vocabulary membership.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long, default_value_t = false)]
        sequential: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        training: TrainArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate questions (arguments, or stdin lines) into SPARQL.
    Translate {
        #[arg(long)]
        model: PathBuf,
        /// Print raw token output without sequence repair.
        #[arg(long, default_value_t = false)]
        no_repair: bool,
        #[arg(long, default_value_t = 60)]
        max_decode_len: usize,
        /// Questions; stdin is read line by line when none are given.
        question: Vec<String>,
    },
    /// Score a model on one partition of a split dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, dev, or test.
        #[arg(long, default_value = "test")]
        part: String,
        #[arg(long, default_value_t = false)]
        no_repair: bool,
        #[arg(long, default_value_t = 60)]
        max_decode_len: usize,
        #[arg(long, default_value_t = false)]
        sequential: bool,
    },
    /// Run the whole pipeline: ingest, generate, split, train, evaluate.
    Pipeline {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[arg(long, default_value = "v3")]
        setting: String,
        #[arg(long, default_value = "80:10:10")]
        ratios: String,
        #[arg(long, default_value_t = 10)]
        top_entity_count: usize,
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long, default_value_t = false)]
        lenient: bool,
        #[arg(long)]
        class: Option<String>,
        #[arg(long, default_value_t = false)]
        sequential: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        training: TrainArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several encoding settings and print a comparison table.
    Ablation {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        /// Comma-separated setting names.
        #[arg(long, default_value = "v1,v1.1,v2,v2.1,v3,v4")]
        settings: String,
        #[arg(long, default_value = "80:10:10")]
        ratios: String,
        #[arg(long, default_value_t = 10)]
        top_entity_count: usize,
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long, default_value_t = false)]
        lenient: bool,
        #[arg(long)]
        class: Option<String>,
        #[arg(long, default_value_t = false)]
        sequential: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        training: TrainArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_kb(path: &PathBuf, lenient: bool) -> Result<Vec<Triple>, String> {
    let file = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let mode = if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let (triples, stats) =
        parse_ntriples_with(BufReader::new(file), mode).map_err(|e| e.to_string())?;
    if stats.skipped > 0 {
        eprintln!("skipped {} malformed lines", stats.skipped);
    }
    Ok(triples)
}

fn load_templates(path: &PathBuf) -> Result<Vec<QueryTemplate>, String> {
    let file = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    parse_templates(BufReader::new(file)).map_err(|e| e.to_string())
}

fn parse_ratios(s: &str) -> Result<(u32, u32, u32), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err(format!("ratios must look like 80:10:10, got {s:?}"));
    };
    let parse = |v: &str| v.parse::<u32>().map_err(|_| format!("bad ratio {v:?}"));
    Ok((parse(a)?, parse(b)?, parse(c)?))
}

fn setting_by_name(name: &str) -> Result<&'static ExperimentSetting, String> {
    ExperimentSetting::by_name(name)
        .ok_or_else(|| format!("unknown setting {name:?} (expected v1, v1.1, v2, v2.1, v3, v4)"))
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn catalog_opts(class: &Option<String>) -> CatalogOptions {
    CatalogOptions {
        target_class: class.clone(),
        ..CatalogOptions::default()
    }
}

#[allow(clippy::too_many_arguments)]
fn pipeline_config(
    setting: &'static ExperimentSetting,
    ratios: &str,
    top_entity_count: usize,
    max_pairs: Option<usize>,
    min_count: usize,
    class: &Option<String>,
    sequential: bool,
    model: &ModelArgs,
    training: &TrainArgs,
    seed: u64,
) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::new(setting);
    cfg.ratios = parse_ratios(ratios)?;
    cfg.seed = seed;
    cfg.top_entity_count = top_entity_count;
    cfg.max_pairs = max_pairs;
    cfg.min_count = min_count;
    cfg.catalog = catalog_opts(class);
    cfg.hp = model.hp();
    cfg.train = training.config(seed)?;
    cfg.execution = execution(sequential);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Ingest { kb, lenient, class, out } => {
            let triples = load_kb(&kb, lenient)?;
            let catalog =
                build_catalog(&triples, &catalog_opts(&class)).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            write_atomic(&out.join("ranking.tsv"), &catalog.export_tsv())
                .map_err(|e| e.to_string())?;
            println!(
                "{} triples, {} catalog entities -> {}",
                triples.len(),
                catalog.len(),
                out.join("ranking.tsv").display()
            );
            Ok(())
        }
        Command::Generate {
            kb,
            templates,
            setting,
            top_entity_count,
            max_pairs,
            lenient,
            class,
            seed,
            out,
        } => {
            let setting = setting_by_name(&setting)?;
            let triples = load_kb(&kb, lenient)?;
            let catalog =
                build_catalog(&triples, &catalog_opts(&class)).map_err(|e| e.to_string())?;
            let templates = load_templates(&templates)?;
            let mut gen_cfg = GeneratorConfig::new(setting.preset);
            gen_cfg.allow_multi_placeholder = setting.multi_placeholder;
            gen_cfg.top_entity_count = top_entity_count;
            gen_cfg.max_pairs = max_pairs;
            gen_cfg.seed = seed.get()?;
            let mut generated =
                instantiate_with(&templates, &catalog, &gen_cfg, Execution::default())
                    .map_err(|e| e.to_string())?;
            if setting.direct_translations {
                let direct =
                    direct_translations(&catalog, &setting.preset).map_err(|e| e.to_string())?;
                generated.pairs.extend(direct.pairs);
            }
            write_dataset(&out, &generated.pairs).map_err(|e| e.to_string())?;
            println!(
                "{} pairs written to {} ({} entities skipped)",
                generated.pairs.len(),
                out.display(),
                generated.skipped_entities
            );
            Ok(())
        }
        Command::Split { data, ratios, seed } => {
            let pairs = read_dataset(&data).map_err(|e| e.to_string())?;
            let split = split_dataset(&pairs, parse_ratios(&ratios)?, seed.get()?)
                .map_err(|e| e.to_string())?;
            write_split(&data, &split).map_err(|e| e.to_string())?;
            println!(
                "train {} / dev {} / test {}",
                split.train.len(),
                split.dev.len(),
                split.test.len()
            );
            Ok(())
        }
        Command::Train {
            data,
            setting,
            min_count,
            sequential,
            model,
            training,
            seed,
            out,
        } => {
            let setting = setting_by_name(&setting)?;
            let seed = seed.get()?;
            let pairs = read_dataset(&data).map_err(|e| e.to_string())?;
            let split = read_split(&data).map_err(|e| e.to_string())?;
            let to_seqs = |part| -> Vec<(TokenSeq, TokenSeq)> {
                split
                    .select(&pairs, part)
                    .into_iter()
                    .map(|p| (p.nl.clone(), p.query.clone()))
                    .collect()
            };
            let train_pairs = to_seqs(Partition::Train);
            let dev_pairs = to_seqs(Partition::Dev);
            let src = Vocab::build(train_pairs.iter().map(|(nl, _)| nl), min_count);
            let tgt = Vocab::build(train_pairs.iter().map(|(_, q)| q), min_count);
            let mut m = Seq2SeqModel::new(src, tgt, model.hp(), setting.preset.id, seed);
            let cfg = training.config(seed)?;
            let mut print_stat = |s: &nspm::learner::EpochStat| {
                match s.dev_bleu {
                    Some(b) => eprintln!(
                        "epoch {:>3}  loss {:.4}  dev bleu {:.4}",
                        s.epoch, s.train_loss, b
                    ),
                    None => eprintln!("epoch {:>3}  loss {:.4}", s.epoch, s.train_loss),
                }
            };
            let report = train(
                &mut m,
                &train_pairs,
                &dev_pairs,
                &cfg,
                execution(sequential),
                Some(&mut print_stat),
            )
            .map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            save_model(&m, &out.join("model.json")).map_err(|e| e.to_string())?;
            write_atomic(&out.join("curve.csv"), &curve_csv(&report.curve))
                .map_err(|e| e.to_string())?;
            println!(
                "model saved to {}; final dev bleu {}",
                out.join("model.json").display(),
                report
                    .final_dev_bleu
                    .map(|b| format!("{b:.4}"))
                    .unwrap_or_else(|| "n/a".into())
            );
            Ok(())
        }
        Command::Translate {
            model,
            no_repair,
            max_decode_len,
            question,
        } => {
            let m = load_model(&model).map_err(|e| e.to_string())?;
            let preset = CodecPreset::by_id(m.preset);
            let questions: Vec<String> = if question.is_empty() {
                let mut buf = String::new();
                std::io::stdin()
                    .read_to_string(&mut buf)
                    .map_err(|e| e.to_string())?;
                buf.lines().map(String::from).collect()
            } else {
                question
            };
            let mut failures = 0usize;
            for q in questions {
                if q.trim().is_empty() {
                    continue;
                }
                let nl = tokenize_nl(&q).map_err(|e| e.to_string())?;
                let raw = m.translate(&nl, max_decode_len);
                if no_repair {
                    println!("{raw}");
                } else {
                    match interpret(&raw, &preset) {
                        Ok((sparql, _)) => println!("{sparql}"),
                        Err(e) => {
                            eprintln!("error: {q:?}: {e}");
                            failures += 1;
                        }
                    }
                }
            }
            if failures > 0 {
                Err(format!("{failures} questions could not be translated"))
            } else {
                Ok(())
            }
        }
        Command::Eval {
            model,
            data,
            part,
            no_repair,
            max_decode_len,
            sequential,
        } => {
            let m = load_model(&model).map_err(|e| e.to_string())?;
            let preset = CodecPreset::by_id(m.preset);
            let pairs = read_dataset(&data).map_err(|e| e.to_string())?;
            let split = read_split(&data).map_err(|e| e.to_string())?;
            let part = match part.as_str() {
                "train" => Partition::Train,
                "dev" => Partition::Dev,
                "test" => Partition::Test,
                other => return Err(format!("unknown partition {other:?}")),
            };
            let eval_pairs: Vec<(TokenSeq, TokenSeq)> = split
                .select(&pairs, part)
                .into_iter()
                .map(|p| (p.nl.clone(), p.query.clone()))
                .collect();
            let report = evaluate(
                &m,
                &eval_pairs,
                &preset,
                !no_repair,
                max_decode_len,
                execution(sequential),
            );
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
        Command::Pipeline {
            kb,
            templates,
            setting,
            ratios,
            top_entity_count,
            max_pairs,
            min_count,
            lenient,
            class,
            sequential,
            model,
            training,
            seed,
            out,
        } => {
            let setting = setting_by_name(&setting)?;
            let cfg = pipeline_config(
                setting,
                &ratios,
                top_entity_count,
                max_pairs,
                min_count,
                &class,
                sequential,
                &model,
                &training,
                seed.get()?,
            )?;
            let triples = load_kb(&kb, lenient)?;
            let templates = load_templates(&templates)?;
            let output = run_pipeline(&triples, &templates, &cfg).map_err(|e| e.to_string())?;
            write_artifacts(&out, &output).map_err(|e| e.to_string())?;
            print!("{}", report_text(std::slice::from_ref(&output.report)));
            Ok(())
        }
        Command::Ablation {
            kb,
            templates,
            settings,
            ratios,
            top_entity_count,
            max_pairs,
            lenient,
            class,
            sequential,
            model,
            training,
            seed,
            out,
        } => {
            let names: Vec<&str> = settings.split(',').map(str::trim).collect();
            for name in &names {
                setting_by_name(name)?;
            }
            let cfg = pipeline_config(
                setting_by_name(names[0])?,
                &ratios,
                top_entity_count,
                max_pairs,
                1,
                &class,
                sequential,
                &model,
                &training,
                seed.get()?,
            )?;
            let triples = load_kb(&kb, lenient)?;
            let templates = load_templates(&templates)?;
            let reports =
                run_ablation(&triples, &templates, &cfg, &names).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let table = report_text(&reports);
            write_atomic(&out.join("ablation.txt"), &table).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
            write_atomic(&out.join("ablation.json"), &json).map_err(|e| e.to_string())?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
