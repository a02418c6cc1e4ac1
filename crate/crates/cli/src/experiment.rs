//! The fractions × seeds × methods matrix.

use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use partial_ner::annotation::{kept_count, mask_entities, read_sidecar, write_sidecar, PartialCorpus};
use partial_ner::bde::{run_bde, BdeConfig, LineageRecord, MethodSpec};
use partial_ner::corpus::{generate_synthetic, infer_categories, parse_conll, serialize_conll, Corpus, LabelScheme};
use partial_ner::eval::evaluate;
use partial_ner::selftrain::{run_method, SelfTrainConfig};
use partial_ner::tagger::fnv1a;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig, SynthFileConfig};
use crate::error::{CliError, CliResult};
use crate::summary::render_summary;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.md";

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn create_file(path: &Path) -> CliResult<fs::File> {
    create_parent(path)?;
    fs::File::create(path).map_err(CliError::io(path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    create_parent(path)?;
    fs::write(path, contents).map_err(CliError::io(path))
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(CliError::io(dir)),
        None => Ok(()),
    }
}

/// The scheme named by `categories`, or else by the tags found across `texts`.
pub fn scheme_for(categories: Option<&[String]>, texts: &[&str]) -> CliResult<LabelScheme> {
    let categories = match categories {
        Some(c) => c.to_vec(),
        None => {
            let mut all: Vec<String> = texts.iter().flat_map(|t| infer_categories(t)).collect();
            all.sort();
            all.dedup();
            all
        }
    };
    if categories.is_empty() {
        return Err(CliError::Usage("no entity categories: the data has no B-/I- tags and none were given".into()));
    }
    Ok(LabelScheme::new(categories)?)
}

pub fn generate_splits(config: &SynthFileConfig) -> CliResult<Datasets> {
    let [train, dev, test] = config.splits()?.map(|(name, c)| generate_synthetic(&c, name));
    Ok(Datasets { train: train?, dev: dev?, test: test? })
}

pub fn load_data(config: &DataConfig) -> CliResult<Datasets> {
    let (Some(train), Some(dev), Some(test)) = (&config.train, &config.dev, &config.test) else {
        return generate_splits(&config.synth.clone().unwrap_or_default());
    };
    let texts = [read_file(train)?, read_file(dev)?, read_file(test)?];
    let scheme = scheme_for(config.categories.as_deref(), &texts.iter().map(String::as_str).collect::<Vec<_>>())?;
    let parse = |text: &str, name| parse_conll(text, &scheme, name);
    Ok(Datasets { train: parse(&texts[0], "train")?, dev: parse(&texts[1], "dev")?, test: parse(&texts[2], "test")? })
}

pub fn corpus_hash(corpus: &Corpus) -> u64 {
    let mut bytes = corpus.scheme.categories().join(" ").into_bytes();
    bytes.push(b'\n');
    bytes.extend(serialize_conll(corpus).bytes());
    fnv1a(&bytes)
}

pub fn mask_cache_path(dir: &Path, corpus: &Corpus, fraction: f64, mask_seed: u64) -> PathBuf {
    dir.join(format!("{:016x}-f{fraction}-s{mask_seed}.kept.csv", corpus_hash(corpus)))
}

/// The entity mask for `(corpus, fraction, mask_seed)`, read from `cache_dir` when
/// present there and written to it otherwise.
pub fn cached_mask(corpus: &Corpus, fraction: f64, mask_seed: u64, cache_dir: &Path) -> CliResult<PartialCorpus> {
    let path = mask_cache_path(cache_dir, corpus, fraction, mask_seed);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(partial) = read_sidecar(&text).and_then(|kept| PartialCorpus::from_kept(corpus, &kept)) {
            if partial.kept().len() == kept_count(fraction, corpus.entity_count()) {
                return Ok(partial);
            }
        }
    }
    let partial = mask_entities(corpus, fraction, mask_seed)?;
    write_file(&path, write_sidecar(&partial.kept()))?;
    Ok(partial)
}

/// One row of results.csv. Metric columns are empty when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub fraction: f64,
    pub seed: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub val_f1: Option<f64>,
    pub kept_entities: usize,
    pub wall_ms: u64,
    pub error: String,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub record: RunRecord,
    pub lineage: Option<LineageRecord>,
}

/// BDE settings for `spec`; `None` for single-stage methods.
pub fn bde_config(spec: MethodSpec, seed: u64, k: usize, stage: &SelfTrainConfig) -> Option<BdeConfig> {
    match spec {
        MethodSpec::Single(_) => None,
        MethodSpec::Bde { inner, final_method } => {
            Some(BdeConfig { k, inner_method: inner, final_method, seed, stage: stage.clone() })
        }
    }
}

pub fn seeded_stage(stage: &SelfTrainConfig, seed: u64) -> SelfTrainConfig {
    let mut stage = stage.clone();
    stage.tagger.seed = seed;
    stage
}

/// Trains and tests one (method, fraction, seed) cell. Failures, including panics,
/// end up in the record's `error` field.
pub fn run_cell(
    spec: MethodSpec,
    fraction: f64,
    seed: u64,
    partial: &PartialCorpus,
    data: &Datasets,
    k: usize,
    stage: &SelfTrainConfig,
) -> CellOutput {
    let start = Instant::now();
    let stage = seeded_stage(stage, seed);
    let result = catch_unwind(AssertUnwindSafe(|| -> partial_ner::Result<_> {
        let (outcome, lineage) = match bde_config(spec, seed, k, &stage) {
            None => {
                let MethodSpec::Single(method) = spec else { unreachable!() };
                (run_method(method, partial, &data.dev, &stage)?, None)
            }
            Some(config) => {
                let out = run_bde(partial, &data.dev, &config)?;
                out.lineage.verify()?;
                (out.outcome, Some(out.lineage))
            }
        };
        let eval = evaluate(&outcome.model, &data.test)?;
        Ok((eval, outcome.val_f1(), lineage))
    }));
    let mut record = RunRecord {
        method: spec.to_string(),
        fraction,
        seed,
        precision: None,
        recall: None,
        f1: None,
        val_f1: None,
        kept_entities: partial.kept().len(),
        wall_ms: 0,
        error: String::new(),
    };
    let mut lineage = None;
    match result {
        Ok(Ok((eval, val_f1, l))) => {
            record.precision = Some(eval.precision);
            record.recall = Some(eval.recall);
            record.f1 = Some(eval.f1);
            record.val_f1 = Some(val_f1);
            lineage = l;
        }
        Ok(Err(e)) => record.error = e.to_string(),
        Err(panic) => {
            record.error = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
        }
    }
    record.wall_ms = start.elapsed().as_millis() as u64;
    CellOutput { record, lineage }
}

pub fn lineage_file_name(method: &str, fraction: f64, seed: u64) -> String {
    let method: String = method.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect();
    format!("{method}-f{fraction}-s{seed}.csv")
}

pub fn write_results(path: &Path, records: &[RunRecord]) -> CliResult<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(path, bytes)
}

pub fn read_results(path: &Path) -> CliResult<Vec<RunRecord>> {
    let text = read_file(path)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<RunRecord>, _>>()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hash: String,
    train_hash: String,
    train_sentences: usize,
    train_entities: usize,
    config: &'a ExperimentConfig,
}

/// Runs every cell of the matrix and writes results.csv, summary.md, the mask cache,
/// lineage files of BDE cells and a manifest into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> CliResult<Vec<RunRecord>> {
    config.validate()?;
    let data = load_data(&config.data)?;
    if !data.dev.is_labelled() || !data.test.is_labelled() {
        return Err(CliError::Usage("dev and test corpora must be fully labelled".into()));
    }
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let config_hash = format!("{:016x}", config.hash());
    let manifest = Manifest {
        config_hash: config_hash.clone(),
        train_hash: format!("{:016x}", corpus_hash(&data.train)),
        train_sentences: data.train.len(),
        train_entities: data.train.entity_count(),
        config,
    };
    write_file(&out.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;

    // One mask per fraction, shared by every method and seed.
    let masks_dir = out.join("masks");
    let masks = config
        .fractions
        .iter()
        .map(|&f| cached_mask(&data.train, f, config.mask_seed, &masks_dir))
        .collect::<CliResult<Vec<_>>>()?;

    let cells: Vec<(MethodSpec, usize, u64)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.fractions.len()).flat_map(move |fi| config.seeds.iter().map(move |&s| (m, fi, s))))
        .collect();
    let total = cells.len();
    let threads = config.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(spec, fi, seed)| {
                let fraction = config.fractions[fi];
                let output = run_cell(spec, fraction, seed, &masks[fi], &data, config.bde_k, &config.stage);
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                let r = &output.record;
                let status = if r.ok() { format!("f1 {:.4}", r.f1.unwrap_or(0.0)) } else { format!("error: {}", r.error) };
                let _ = writeln!(std::io::stderr(), "[{n}/{total}] {} fraction {} seed {}: {status} ({} ms)", r.method, fraction, seed, r.wall_ms);
                output
            })
            .collect()
    });

    for output in &outputs {
        if let Some(lineage) = &output.lineage {
            let r = &output.record;
            write_file(&out.join("lineage").join(lineage_file_name(&r.method, r.fraction, r.seed)), lineage.to_csv())?;
        }
    }
    let records: Vec<RunRecord> = outputs.into_iter().map(|o| o.record).collect();
    write_results(&out.join(RESULTS_FILE), &records)?;
    write_file(&out.join(SUMMARY_FILE), render_summary(&records))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use partial_ner::corpus::SynthConfig;

    #[test]
    fn results_round_trip_through_csv() {
        let records = vec![
            RunRecord {
                method: "bde:guided_bond+supervised".into(),
                fraction: 0.05,
                seed: 3,
                precision: Some(0.1 + 0.2),
                recall: Some(1.0),
                f1: Some(1.0 / 3.0),
                val_f1: Some(0.0),
                kept_entities: 12,
                wall_ms: 17,
                error: String::new(),
            },
            RunRecord {
                method: "bond".into(),
                fraction: 1.0,
                seed: 0,
                precision: None,
                recall: None,
                f1: None,
                val_f1: None,
                kept_entities: 0,
                wall_ms: 1,
                error: "failed, with \"quotes\"".into(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&path, &records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("method,fraction,seed,precision,recall,f1,val_f1,kept_entities,wall_ms,error\n"));
        assert_eq!(read_results(&path).unwrap(), records);
    }

    #[test]
    fn mask_cache_is_reused() {
        let corpus = generate_synthetic(&SynthConfig::standard(50, 1), "t").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let first = cached_mask(&corpus, 0.3, 4, dir.path()).unwrap();
        let path = mask_cache_path(dir.path(), &corpus, 0.3, 4);
        assert!(path.exists());
        assert_eq!(cached_mask(&corpus, 0.3, 4, dir.path()).unwrap(), first);
        assert_eq!(first, mask_entities(&corpus, 0.3, 4).unwrap());
        assert_ne!(path, mask_cache_path(dir.path(), &corpus, 0.3, 5));
        // A damaged cache entry is regenerated.
        fs::write(&path, "garbage").unwrap();
        assert_eq!(cached_mask(&corpus, 0.3, 4, dir.path()).unwrap(), first);
    }

    #[test]
    fn lineage_names_are_path_safe() {
        assert_eq!(lineage_file_name("bde:guided_bond+supervised", 0.05, 2), "bde-guided_bond-supervised-f0.05-s2.csv");
    }
}
