//! `sgc`: featurize molecules, build folds, train, evaluate and search
//! hyperparameters from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sgc::chemio::{load_labels, parse_pdb, parse_sdf, ElementVocab, MolecularSystem};
use sgc::cvsplit::{
    agglomerative_split, identity_distances, parse_fasta, random_split, Cut, DistanceMatrix, Fold, FoldAssignment,
    Fractions,
};
use sgc::graphbuild::{extract_pocket, EdgeSchema, DEFAULT_POCKET_CUTOFF};
use sgc::harness::{
    evaluate_checkpoint, final_test, hyperparameter_search, read_file, seed_from_env, train, write_file, Dataset,
    DatasetMeta, ExperimentConfig, FailureClass, FoldedData, HarnessError,
};
use sgc::metrics::DEFAULT_CHI;
use sgc::potentialnet::ModelConfig;

#[derive(Parser)]
#[command(name = "sgc", version, about = "Staged spatial graph convolutions for molecular property prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse molecules and labels into a featurized dataset file.
    Featurize(FeaturizeArgs),
    /// Assign samples to train, validation and test folds.
    Split(SplitArgs),
    /// Train one model on the train fold, selecting the epoch on the validation fold.
    Train(TrainArgs),
    /// Report metrics of a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Random hyperparameter search with K-fold cross-validation, then a final test.
    Hpsearch(HpsearchArgs),
}

#[derive(clap::Args)]
struct FeaturizeArgs {
    /// Multi-record SDF of ligands; each record is one ligand-only sample.
    #[arg(long)]
    sdf: Vec<PathBuf>,
    /// Complex in PDB format; the sample id is the file stem.
    #[arg(long)]
    pdb: Vec<PathBuf>,
    /// Residue name of the ligand in PDB complexes.
    #[arg(long, default_value = "LIG")]
    ligand_resname: String,
    /// Protein atoms farther than this from every ligand atom are dropped (Å).
    #[arg(long, default_value_t = DEFAULT_POCKET_CUTOFF)]
    pocket_cutoff: f64,
    /// Label CSV: a sample-id column followed by one column per task.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// JSON edge schema; defaults to four bond orders and four distance bins.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated element symbols with their own one-hot slot.
    #[arg(long)]
    vocab: Option<String>,
    /// Keep explicit hydrogens as graph nodes.
    #[arg(long)]
    keep_hydrogens: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitMethod {
    Random,
    Agglomerative,
}

#[derive(clap::Args)]
struct SplitArgs {
    #[arg(long, value_enum)]
    method: SplitMethod,
    /// `computed-sequence FASTA` or `matrix CSV`.
    #[arg(long, num_args = 2, value_names = ["KIND", "FILE"])]
    distance: Option<Vec<String>>,
    /// Dataset whose ids are split (random method).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "0.75,0.17,0.08")]
    fractions: String,
    /// Cut the dendrogram into this many clusters.
    #[arg(long, conflicts_with = "threshold")]
    clusters: Option<usize>,
    /// Cut the dendrogram at this merge height.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the fold file named in the config.
    #[arg(long)]
    folds: Option<PathBuf>,
    /// Overrides the dataset named in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint, model config and run log.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Model config JSON; defaults to the checkpoint path with a `.json` extension.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Restrict evaluation to one fold of this assignment.
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    #[arg(long, value_parser = parse_fold, requires = "folds")]
    fold: Option<Fold>,
    #[arg(long, default_value_t = DEFAULT_CHI)]
    chi: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct HpsearchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Number of hyperparameter samples.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    folds: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_fold(s: &str) -> Result<Fold, String> {
    s.parse().map_err(|e: sgc::cvsplit::SplitError| e.to_string())
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output")
}

fn featurize(args: FeaturizeArgs) -> Result<(), HarnessError> {
    if args.sdf.is_empty() && args.pdb.is_empty() {
        return Err(config_err("give at least one --sdf or --pdb input"));
    }
    if !(args.pocket_cutoff.is_finite() && args.pocket_cutoff > 0.0) {
        return Err(config_err(format!("pocket cutoff {} must be positive", args.pocket_cutoff)));
    }
    let schema: EdgeSchema = match &args.schema {
        Some(p) => serde_json::from_slice(&read_file(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => EdgeSchema::default(),
    };
    let vocab = match &args.vocab {
        Some(v) => ElementVocab::from_symbols(&v.split(',').map(str::trim).collect::<Vec<_>>())
            .map_err(|e| config_err(format!("--vocab: {e}")))?,
        None => ElementVocab::default(),
    };
    let mut systems: Vec<MolecularSystem> = Vec::new();
    for p in &args.sdf {
        systems.extend(parse_sdf(&read_file(p)?).map_err(|e| in_file(p, e))?);
    }
    for p in &args.pdb {
        let mut s = parse_pdb(&read_file(p)?, &args.ligand_resname).map_err(|e| in_file(p, e))?;
        s.sample_id = p.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        systems.push(extract_pocket(&s, args.pocket_cutoff)?);
    }
    if !args.keep_hydrogens {
        systems = systems.iter().map(|s| s.strip_hydrogens()).collect::<Result<_, _>>()?;
    }
    let tasks = match &args.labels {
        Some(p) => {
            let table = load_labels(&read_file(p)?).map_err(|e| in_file(p, e))?;
            for s in &mut systems {
                s.labels = table
                    .get(&s.sample_id)
                    .ok_or_else(|| config_err(format!("no labels for sample {:?}", s.sample_id)))?
                    .to_vec();
            }
            table.tasks
        }
        None => {
            for s in &mut systems {
                s.labels = vec![None];
            }
            vec!["y".to_string()]
        }
    };
    let data = Dataset::from_systems(&systems, DatasetMeta { tasks, schema, vocab })?;
    write_file(&args.out, data.encode())?;
    log::info!("wrote {} samples to {}", data.len(), args.out.display());
    println!("{} samples, {} tasks -> {}", data.len(), data.meta.tasks.len(), args.out.display());
    Ok(())
}

fn in_file(path: &Path, e: sgc::chemio::ChemError) -> HarnessError {
    log::error!("while reading {}", path.display());
    HarnessError::Chem(e)
}

fn split(args: SplitArgs) -> Result<(), HarnessError> {
    let fractions: Fractions = args.fractions.parse()?;
    let seed = seed_from_env()?.unwrap_or(args.seed);
    let assignment = match args.method {
        SplitMethod::Random => {
            let p = args.data.as_ref().ok_or_else(|| config_err("random split needs --data"))?;
            let data = Dataset::decode(&read_file(p)?)?;
            random_split(&data.ids(), fractions, seed)?
        }
        SplitMethod::Agglomerative => {
            let spec = args.distance.as_ref().ok_or_else(|| config_err("agglomerative split needs --distance"))?;
            let path = Path::new(&spec[1]);
            let d = match spec[0].as_str() {
                "computed-sequence" => {
                    let text = String::from_utf8(read_file(path)?)
                        .map_err(|_| HarnessError::Parse { line: 0, msg: "FASTA is not UTF-8".into() })?;
                    identity_distances(&parse_fasta(&text)?)?
                }
                "matrix" => DistanceMatrix::from_csv(&read_file(path)?)?,
                other => return Err(config_err(format!("unknown distance kind {other:?}"))),
            };
            let cut = match (args.clusters, args.threshold) {
                (Some(k), None) => Cut::Clusters(k),
                (None, Some(t)) => Cut::Threshold(t),
                _ => return Err(config_err("agglomerative split needs --clusters or --threshold")),
            };
            agglomerative_split(&d, cut, fractions, seed)?
        }
    };
    write_file(&args.out, assignment.to_csv())?;
    let mut prov_path = args.out.clone().into_os_string();
    prov_path.push(".json");
    write_file(Path::new(&prov_path), to_json(&assignment.provenance))?;
    let c = assignment.counts();
    let a = assignment.provenance.achieved;
    println!(
        "train {} ({:.3}), valid {} ({:.3}), test {} ({:.3})",
        c[0], a[0], c[1], a[1], c[2], a[2]
    );
    for w in &assignment.provenance.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

struct Loaded {
    exp: ExperimentConfig,
    data: Dataset,
    folds: FoldAssignment,
}

/// Config, dataset and folds; a random split is made when no fold file is given.
fn load_experiment(config: &Path, data: Option<PathBuf>, folds: Option<PathBuf>, out: &Path) -> Result<Loaded, HarnessError> {
    let mut exp = ExperimentConfig::load(config)?;
    if data.is_some() {
        exp.data = data;
    }
    if folds.is_some() {
        exp.folds = folds;
    }
    let data_path = exp.data.clone().ok_or_else(|| config_err("no dataset: set \"data\" or pass --data"))?;
    let data = Dataset::decode(&read_file(&data_path)?)?;
    data.check_compatible(&exp.model)?;
    let folds = match &exp.folds {
        Some(p) => FoldAssignment::from_csv(&read_file(p)?)?,
        None => {
            let f = random_split(&data.ids(), exp.fractions, exp.seed)?;
            std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
            write_file(&out.join("folds.csv"), f.to_csv())?;
            f
        }
    };
    Ok(Loaded { exp, data, folds })
}

fn train_cmd(args: TrainArgs) -> Result<(), HarnessError> {
    let Loaded { exp, data, folds } = load_experiment(&args.config, args.data, args.folds, &args.out)?;
    let split = FoldedData::new(&data, &folds)?;
    let outcome = train(&exp.model, &split.train, &split.valid, &exp.training)?;
    std::fs::create_dir_all(&args.out).map_err(|e| HarnessError::io(&args.out, e))?;
    let run = serde_json::json!({
        "seed": exp.seed,
        "best_epoch": outcome.best_epoch,
        "best_valid_score": outcome.best_score,
        "failure": outcome.failure,
        "history": outcome.history,
    });
    write_file(&args.out.join("run.json"), to_json(&run))?;
    if let Some(f) = outcome.failure {
        return Err(HarnessError::Numeric(f));
    }
    write_file(&args.out.join("model.sgck"), outcome.model.to_checkpoint())?;
    write_file(&args.out.join("model.json"), exp.model.to_json())?;
    match (outcome.best_epoch, outcome.best_score) {
        (Some(e), Some(s)) => println!("best epoch {e}, validation score {s:.4}"),
        _ => println!("trained {} epochs (no validation score)", exp.training.epochs),
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), HarnessError> {
    let config_path = args.model_config.unwrap_or_else(|| args.checkpoint.with_extension("json"));
    let text = String::from_utf8(read_file(&config_path)?).map_err(|_| config_err("model config is not UTF-8"))?;
    let config = ModelConfig::from_json(&text)?;
    let data = Dataset::decode(&read_file(&args.data)?)?;
    let ids: Option<Vec<String>> = match (&args.folds, args.fold) {
        (Some(p), Some(fold)) => {
            let f = FoldAssignment::from_csv(&read_file(p)?)?;
            Some(f.ids_in(fold).into_iter().map(String::from).collect())
        }
        _ => None,
    };
    let report = evaluate_checkpoint(config, &read_file(&args.checkpoint)?, &data, ids.as_deref(), args.chi)?;
    if let Some(out) = &args.out {
        write_file(out, report.to_json())?;
    }
    match args.format {
        Format::Table => print!("{}", report.to_table()),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(())
}

fn hpsearch_cmd(args: HpsearchArgs) -> Result<(), HarnessError> {
    let Loaded { exp, data, folds } = load_experiment(&args.config, args.data, args.folds, &args.out)?;
    let split = FoldedData::new(&data, &folds)?;
    let pool = split.pool();
    let setup = exp.search_setup()?;
    let outcome = hyperparameter_search(&setup, &pool, args.n)?;
    std::fs::create_dir_all(&args.out).map_err(|e| HarnessError::io(&args.out, e))?;
    write_file(&args.out.join("search.json"), to_json(&outcome))?;
    let best = outcome.best_run();
    println!(
        "selected run {} of {}: mean validation {:.4}",
        best.index,
        outcome.runs.len(),
        best.mean_valid.unwrap_or(f64::NAN)
    );
    write_file(&args.out.join("best_model.json"), best.hyper.apply(&exp.model).to_json())?;
    if split.test_ids().is_empty() {
        println!("no test fold; skipping the final test");
        return Ok(());
    }
    let test = split.unseal_test(&data);
    let report = final_test(&setup, &best.hyper, &pool, &test, &data.meta.tasks, exp.chi)?;
    write_file(&args.out.join("final.json"), to_json(&report))?;
    print!("{}", report.to_table());
    Ok(())
}

fn exit_code(class: FailureClass) -> u8 {
    match class {
        FailureClass::Parse => 2,
        FailureClass::Config => 3,
        FailureClass::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Featurize(a) => featurize(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Hpsearch(a) => hpsearch_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
