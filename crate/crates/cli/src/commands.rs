use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use partial_ner::annotation::{mask_entities, write_sidecar, PartialCorpus};
use partial_ner::bde::{run_bde, MethodSpec};
use partial_ner::corpus::{parse_conll, serialize_conll};
use partial_ner::eval::evaluate;
use partial_ner::selftrain::{run_method, StageTrace};
use partial_ner::tagger::TaggerModel;

use crate::config::{load_toml, ExperimentConfig, SynthFileConfig, TrainFileConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{
    bde_config, create_file, generate_splits, read_file, read_results, run_experiment, scheme_for, seeded_stage, write_file,
    SUMMARY_FILE,
};
use crate::summary::render_summary;

#[derive(Debug, Parser)]
#[command(name = "pner", version, about = "Train NER taggers on partially annotated corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train/dev/test CoNLL files.
    Synth(SynthArgs),
    /// Keep a random fraction of the training entities; write the partial corpus and a sidecar.
    Mask(MaskArgs),
    /// Train a tagger with a method: supervised, bond, guided_bond or bde:<inner>+<final>.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled CoNLL file.
    Eval(EvalArgs),
    /// Run the fractions × seeds × methods matrix.
    Experiment(ExperimentArgs),
    /// Recompute summary.md from a results.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Fraction of entities kept, in [0, 1].
    #[arg(long)]
    pub fraction: f64,
    /// Mask seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Partial CoNLL output; the sidecar goes next to it with extension `.kept.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated categories; inferred from the tags when omitted.
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: MethodSpec,
    /// Training CoNLL; its labelled entities are the known annotations.
    #[arg(long)]
    pub train: PathBuf,
    /// Fully labelled validation CoNLL.
    #[arg(long)]
    pub dev: PathBuf,
    /// Checkpoint path. Traces and BDE artifacts are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the model seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Add precision, recall and F1 columns for each category.
    #[arg(long)]
    pub per_category: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment settings; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the mask seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Defaults to summary.md next to the results.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<MethodSpec, String> {
    s.parse().map_err(|_| format!("expected supervised, bond, guided_bond or bde:<inner>+<final>, got `{s}`"))
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() && !e.to_string().contains("Usage:") {
                eprintln!("\n{}", usage(args.get(1)));
            }
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Usage of the named subcommand, or of the whole program.
fn usage(subcommand: Option<&OsString>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let name = subcommand.and_then(|s| s.to_str()).unwrap_or_default().to_string();
    match cmd.find_subcommand_mut(&name) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Mask(a) => mask(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    }
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let mut config: SynthFileConfig = load_toml(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data = generate_splits(&config)?;
    for corpus in [&data.train, &data.dev, &data.test] {
        let path = args.out.join(format!("{}.conll", corpus.name));
        write_file(&path, serialize_conll(corpus))?;
        println!("{}: {} sentences, {} entities -> {}", corpus.name, corpus.len(), corpus.entity_count(), path.display());
    }
    Ok(())
}

fn mask(args: MaskArgs) -> CliResult<()> {
    let text = read_file(&args.train)?;
    let scheme = scheme_for(args.categories.as_deref(), &[&text])?;
    let corpus = parse_conll(&text, &scheme, "train")?;
    let partial = mask_entities(&corpus, args.fraction, args.seed)?;
    let kept = partial.kept();
    write_file(&args.out, serialize_conll(&partial.to_corpus()))?;
    let sidecar = args.out.with_extension("kept.csv");
    write_file(&sidecar, write_sidecar(&kept))?;
    println!("kept {} of {} entities -> {}, {}", kept.len(), corpus.entity_count(), args.out.display(), sidecar.display());
    Ok(())
}

fn train(args: TrainArgs) -> CliResult<()> {
    let mut config: TrainFileConfig = load_toml(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.stage.tagger.seed = seed;
    }
    config.stage.validate()?;
    let train_text = read_file(&args.train)?;
    let dev_text = read_file(&args.dev)?;
    let scheme = scheme_for(args.categories.as_deref(), &[&train_text, &dev_text])?;
    let partial = PartialCorpus::from_gold(&parse_conll(&train_text, &scheme, "train")?)?;
    let dev = parse_conll(&dev_text, &scheme, "dev")?;

    let seed = config.stage.tagger.seed;
    let stage = seeded_stage(&config.stage, seed);
    let outcome = match (args.method, bde_config(args.method, seed, config.bde_k, &stage)) {
        (MethodSpec::Single(method), _) => run_method(method, &partial, &dev, &stage)?,
        (_, Some(bde)) => {
            let out = run_bde(&partial, &dev, &bde)?;
            out.lineage.verify()?;
            let lineage = args.out.with_extension("lineage.csv");
            write_file(&lineage, out.lineage.to_csv())?;
            let base = args.out.with_extension("base.bin");
            out.base.write_to(BufWriter::new(create_file(&base)?))?;
            println!("lineage -> {}, base distributions -> {}", lineage.display(), base.display());
            out.outcome
        }
        (MethodSpec::Bde { .. }, None) => unreachable!("bde specs always have a config"),
    };

    outcome.model.save(BufWriter::new(create_file(&args.out)?))?;
    let trace = args.out.with_extension("trace.csv");
    let mut csv = format!("{}\n", StageTrace::CSV_HEADER);
    for t in &outcome.traces {
        csv.push_str(&t.csv_rows());
    }
    write_file(&trace, csv)?;
    println!("{}: val f1 {:.4} -> {}, {}", args.method, outcome.val_f1(), args.out.display(), trace.display());
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let model = TaggerModel::load(BufReader::new(File::open(&args.model).map_err(CliError::io(&args.model))?))?;
    let corpus = parse_conll(&read_file(&args.data)?, model.scheme(), "data")?;
    let result = evaluate(&model, &corpus)?;
    println!("{}", result.csv_header(args.per_category));
    println!("{}", result.csv_row(args.per_category));
    Ok(())
}

fn experiment(args: ExperimentArgs) -> CliResult<()> {
    let mut config: ExperimentConfig = load_toml(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.mask_seed = seed;
    }
    if args.jobs.is_some() {
        config.jobs = args.jobs;
    }
    let out = args
        .out
        .or_else(|| config.out.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out` in the config".into()))?;
    let records = run_experiment(&config, &out)?;
    let failed = records.iter().filter(|r| !r.ok()).count();
    println!("{} runs ({failed} failed) -> {}", records.len(), out.display());
    Ok(())
}

fn report(args: ReportArgs) -> CliResult<()> {
    let records = read_results(&args.results)?;
    let out = args.out.unwrap_or_else(|| args.results.with_file_name(SUMMARY_FILE));
    write_file(&out, render_summary(&records))?;
    println!("{} runs -> {}", records.len(), out.display());
    Ok(())
}
