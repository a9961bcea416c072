//! Command-line front end: retrofitting, training, evaluation, ablation
//! sweeps, and synthetic corpus generation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use ccnl_core::checkpoint;
use ccnl_core::data::{
    corpus_stats, load_corpus, load_raw_embeddings, pair_parallel, random_embeddings,
    save_corpus, save_raw_embeddings, split_train_val, synth_corpus, build_vocab,
    load_embeddings, CorpusColumns, ParallelExample, SynthSpec, Vocab,
};
use ccnl_core::error::{CcnlError, Result};
use ccnl_core::eval::{evaluate, majority_baseline, AblationReport, AblationRow};
use ccnl_core::lexinfuse::{
    build_graph, load_lexicon, load_relations, retrofit_embeddings, Lexicon,
    DEFAULT_ALPHA, DEFAULT_ITERATIONS, DEFAULT_MAX_NEIGHBORS,
};
use ccnl_core::model::{fit, Ablation, CcnlModel, ModelConfig};
use ccnl_core::rng::SeededRng;

#[derive(Parser)]
#[command(name = "ccnl", version, about = "Cross-lingual capsule-network text classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine an embedding file against lexicon neighbor graphs
    Retrofit(RetrofitArgs),
    /// Train a model on a paired (source, translated) corpus
    Train(TrainArgs),
    /// Evaluate a checkpoint, or print the majority baseline
    Eval(EvalArgs),
    /// Train and score every ablation variant
    Ablate(AblateArgs),
    /// Generate a synthetic bilingual corpus
    Synth(SynthArgs),
}

#[derive(Args)]
struct Shared {
    /// TOML file with model configuration overrides
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (overrides config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RetrofitArgs {
    #[command(flatten)]
    shared: Shared,
    /// Embedding file (word2vec text format, optional count header)
    #[arg(long)]
    embeddings: PathBuf,
    /// Lexicon file(s): token per line, optional TAB category
    #[arg(long, required = true)]
    lexicon: Vec<PathBuf>,
    /// Relations file: headword TAB comma-separated ranked neighbors
    #[arg(long)]
    relations: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args)]
struct CorpusArgs {
    /// Source-language corpus TSV (id, text, label)
    #[arg(long)]
    train_source: PathBuf,
    /// Machine-translated target-language corpus TSV, ids matching
    #[arg(long)]
    train_target: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Pre-trained source-language embeddings (random init if absent)
    #[arg(long)]
    source_embeddings: Option<PathBuf>,
    /// Pre-trained target-language embeddings (random init if absent)
    #[arg(long)]
    target_embeddings: Option<PathBuf>,
    /// Fraction of the corpus held out for validation (0 disables)
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Architecture variant tag
    #[arg(long)]
    ablation: Option<Ablation>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    shared: Shared,
    /// Trained model checkpoint
    #[arg(long, required_unless_present = "majority")]
    checkpoint: Option<PathBuf>,
    /// Test source-language corpus TSV
    #[arg(long, required_unless_present = "majority")]
    test_source: Option<PathBuf>,
    /// Test target-language corpus TSV
    #[arg(long, required_unless_present = "majority")]
    test_target: Option<PathBuf>,
    /// Print the majority-class baseline instead of evaluating a model
    #[arg(long)]
    majority: bool,
    /// Training corpus (labels only) for the majority baseline
    #[arg(long, required_if_eq("majority", "true"))]
    train: Option<PathBuf>,
    /// Test corpus (labels only) for the majority baseline
    #[arg(long, required_if_eq("majority", "true"))]
    test: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    shared: Shared,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Held-out test source corpus (validation split used if absent)
    #[arg(long)]
    test_source: Option<PathBuf>,
    /// Held-out test target corpus
    #[arg(long)]
    test_target: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    val_fraction: f64,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    shared: Shared,
    /// Number of examples
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    positive_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    separability: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Retrofit(a) => cmd_retrofit(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CcnlError::io(dir.display().to_string(), e))
}

/// defaults <- TOML file <- command-line flags
fn resolve_config(shared: &Shared) -> Result<ModelConfig> {
    let mut config = match &shared.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CcnlError::io(path.display().to_string(), e))?;
            toml::from_str::<ModelConfig>(&text)
                .map_err(|e| CcnlError::Config(format!("{}: {e}", path.display())))?
        }
        None => ModelConfig::default(),
    };
    if let Some(seed) = shared.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn cmd_retrofit(a: RetrofitArgs) -> Result<()> {
    ensure_out(&a.shared.out)?;
    let raw = load_raw_embeddings(&a.embeddings)?;
    let had_header = raw.had_header;
    let mut emb = raw.into_embedding_matrix();

    let mut lexicon = Lexicon::default();
    for path in &a.lexicon {
        lexicon.entries.extend(load_lexicon(path)?.entries);
    }
    let relations = match &a.relations {
        Some(p) => load_relations(p)?,
        None => Vec::new(),
    };
    let graph = build_graph(&mut emb, &lexicon, &relations, DEFAULT_MAX_NEIGHBORS);
    if graph.edge_count() == 0 {
        eprintln!("warning: lexicon does not overlap the embedding vocabulary; output equals input");
    }
    let trace = retrofit_embeddings(&mut emb, &graph, a.iterations, a.alpha);
    let formatted: Vec<String> = trace.iter().map(|v| format!("{v:.6}")).collect();
    println!("objective\t{}", formatted.join("\t"));

    let out = a.shared.out.join("retrofitted.vec");
    save_raw_embeddings(&out, &emb, had_header)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn load_pairs(corpus: &CorpusArgs) -> Result<Vec<ParallelExample>> {
    let cols = CorpusColumns::default();
    let src = load_corpus(&corpus.train_source, &cols)?;
    let tgt = load_corpus(&corpus.train_target, &cols)?;
    pair_parallel(&src, &tgt)
}

fn build_model(config: &ModelConfig, pairs: &[ParallelExample], source_embeddings: Option<&Path>, target_embeddings: Option<&Path>) -> Result<CcnlModel> {
    let src_vocab = build_vocab(pairs.iter().map(|p| p.source.text.as_str()), 1);
    let tgt_vocab = build_vocab(pairs.iter().map(|p| p.target_text.as_str()), 1);
    let mut rng = SeededRng::new(config.seed).derive("init");
    let src = embeddings_for(source_embeddings, &src_vocab, config.embedding_dim, &mut rng)?;
    let tgt = embeddings_for(target_embeddings, &tgt_vocab, config.embedding_dim, &mut rng)?;
    Ok(CcnlModel::new(config.clone(), src, tgt, &mut rng))
}

fn embeddings_for(
    path: Option<&Path>,
    vocab: &Vocab,
    dim: usize,
    rng: &mut SeededRng,
) -> Result<ccnl_core::layers::EmbeddingMatrix> {
    match path {
        Some(p) => load_embeddings(p, vocab, dim, rng),
        None => Ok(random_embeddings(vocab, dim, rng)),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    ensure_out(&a.shared.out)?;
    let mut config = resolve_config(&a.shared)?;
    if let Some(v) = a.ablation {
        config.ablation = v;
    }
    if let Some(v) = a.max_epochs {
        config.max_epochs = v;
    }
    if let Some(v) = a.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }

    let pairs = load_pairs(&a.corpus)?;
    let (train, val) = if a.val_fraction > 0.0 {
        let mut rng = SeededRng::new(config.seed).derive("split");
        split_train_val(&pairs, a.val_fraction, &mut rng)
    } else {
        (pairs.clone(), Vec::new())
    };
    let mut model = build_model(
        &config,
        &pairs,
        a.source_embeddings.as_deref(),
        a.target_embeddings.as_deref(),
    )?;
    let report = fit(&mut model, &train, &val)?;
    for e in &report.epochs {
        let val_part = match (e.val_f1, e.train_f1) {
            (Some(v), _) => format!("val_macro_f1 {v:.4}"),
            (None, Some(t)) => format!("train_macro_f1 {t:.4}"),
            _ => String::new(),
        };
        println!("epoch {}\tloss {:.6}\t{}", e.epoch, e.train_loss, val_part);
    }

    let ckpt = a.shared.out.join("model.ckpt");
    checkpoint::save(&model, &ckpt)?;
    let report_path = a.shared.out.join("training_report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CcnlError::Config(format!("report serialization: {e}")))?;
    fs::write(&report_path, json).map_err(|e| CcnlError::io(report_path.display().to_string(), e))?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if a.majority {
        let cols = CorpusColumns::default();
        let train = load_corpus(a.train.as_ref().unwrap(), &cols)?;
        let test = load_corpus(a.test.as_ref().unwrap(), &cols)?;
        let baseline = majority_baseline(
            corpus_stats(train.iter().map(|e| e.label)).mtr,
            corpus_stats(test.iter().map(|e| e.label)).mtr,
        );
        println!("majority_macro_f1\t{baseline:.4}");
        return Ok(());
    }
    ensure_out(&a.shared.out)?;
    let model = checkpoint::load(a.checkpoint.as_ref().unwrap())?;
    let cols = CorpusColumns::default();
    let src = load_corpus(a.test_source.as_ref().unwrap(), &cols)?;
    let tgt = load_corpus(a.test_target.as_ref().unwrap(), &cols)?;
    let pairs = pair_parallel(&src, &tgt)?;
    let preds = model.predict_parallel(&pairs)?;
    let gold: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    let predicted: Vec<u8> = preds.iter().map(|(l, _)| *l).collect();
    let ids: Vec<String> = pairs.iter().map(|p| p.source.id.clone()).collect();
    let report = evaluate(&gold, &predicted, &ids)?;

    let mut tsv = String::from("metric\tvalue\n");
    tsv.push_str(&format!("macro_f1\t{:.6}\n", report.macro_f1));
    tsv.push_str(&format!("accuracy\t{:.6}\n", report.accuracy));
    for c in 0..2 {
        tsv.push_str(&format!("precision_{c}\t{:.6}\n", report.per_class[c].precision));
        tsv.push_str(&format!("recall_{c}\t{:.6}\n", report.per_class[c].recall));
        tsv.push_str(&format!("f1_{c}\t{:.6}\n", report.per_class[c].f1));
    }
    for g in 0..2 {
        for p in 0..2 {
            tsv.push_str(&format!("confusion_{g}{p}\t{}\n", report.confusion[g][p]));
        }
    }
    let eval_path = a.shared.out.join("eval.tsv");
    fs::write(&eval_path, tsv).map_err(|e| CcnlError::io(eval_path.display().to_string(), e))?;
    let mis_path = a.shared.out.join("misclassified.tsv");
    let mis = report.misclassified.join("\n");
    fs::write(&mis_path, mis).map_err(|e| CcnlError::io(mis_path.display().to_string(), e))?;
    println!("macro_f1\t{:.4}", report.macro_f1);
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    ensure_out(&a.shared.out)?;
    let mut base = resolve_config(&a.shared)?;
    if let Some(v) = a.max_epochs {
        base.max_epochs = v;
    }
    let pairs = load_pairs(&a.corpus)?;
    let test_pairs = match (&a.test_source, &a.test_target) {
        (Some(s), Some(t)) => {
            let cols = CorpusColumns::default();
            Some(pair_parallel(&load_corpus(s, &cols)?, &load_corpus(t, &cols)?)?)
        }
        (None, None) => None,
        _ => {
            return Err(CcnlError::Config(
                "--test-source and --test-target must be given together".into(),
            ))
        }
    };
    let (train, val) = {
        let mut rng = SeededRng::new(base.seed).derive("split");
        split_train_val(&pairs, a.val_fraction, &mut rng)
    };

    let mut report = AblationReport::default();
    for ablation in Ablation::ALL {
        let mut config = base.clone();
        config.ablation = ablation;
        let mut model = build_model(&config, &pairs, None, None)?;
        fit(&mut model, &train, &val)?;
        let eval_set: &[ParallelExample] = match &test_pairs {
            Some(t) => t,
            None => &val,
        };
        let preds = model.predict_parallel(eval_set)?;
        let gold: Vec<u8> = eval_set.iter().map(|p| p.label).collect();
        let predicted: Vec<u8> = preds.iter().map(|(l, _)| *l).collect();
        let f1 = ccnl_core::eval::macro_f1(&gold, &predicted)?;
        println!("{}\t{f1:.4}", ablation.table_name());
        report.rows.push(AblationRow {
            name: ablation.table_name().to_string(),
            macro_f1: f1,
        });
    }
    let path = a.shared.out.join("ablation.tsv");
    fs::write(&path, report.to_tsv()).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    ensure_out(&a.shared.out)?;
    let spec = SynthSpec {
        positive_rate: a.positive_rate,
        separability: a.separability,
        ..SynthSpec::default()
    };
    let seed = a.shared.seed.unwrap_or(0);
    let (src, tgt) = synth_corpus(a.n, &spec, seed)?;
    let src_path = a.shared.out.join("synth_source.tsv");
    let tgt_path = a.shared.out.join("synth_target.tsv");
    save_corpus(&src_path, &src)?;
    save_corpus(&tgt_path, &tgt)?;
    println!("wrote {} and {}", src_path.display(), tgt_path.display());
    Ok(())
}
