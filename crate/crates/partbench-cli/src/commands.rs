//! Subcommand implementations; each loads inputs, delegates to the
//! library, and writes artifacts with an embedded provenance record.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use partbench::cooc::{train_cooccurrence, CoocConfig, CooccurrenceModel};
use partbench::dataset::{
    load_part_dataset, prune_rare_parts, split_dataset, write_native, DatasetFormat, DatasetStats,
    PartDataset, SplitSpec,
};
use partbench::embed::EmbeddingTable;
use partbench::gen::{generate_questions, GenConfig, GenError, QuestionType};
use partbench::gradcheck::run_suite;
use partbench::jsonl;
use partbench::losses::LossWeights;
use partbench::mask::{rle_decode, rle_encode, BinaryMask, MaskRle};
use partbench::metrics::{evaluate, ChoiceScoring, EvalOptions};
use partbench::ontology::Ontology;
use serde::{Deserialize, Serialize};

use crate::config::RunSettings;
use crate::CliError;

pub fn parse_format(s: &str) -> Result<DatasetFormat, CliError> {
    DatasetFormat::parse(s)
        .ok_or_else(|| CliError::Config(format!("unknown dataset format {s:?}")))
}

pub fn parse_types(spec: &str) -> Result<Vec<QuestionType>, CliError> {
    let mut types = Vec::new();
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let t = QuestionType::parse_code(item)
            .ok_or_else(|| CliError::Config(format!("unknown question type {item:?}")))?;
        if !types.contains(&t) {
            types.push(t);
        }
    }
    if types.is_empty() {
        return Err(CliError::Config("no question types enabled".to_string()));
    }
    Ok(types)
}

fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    ontology: Option<&Ontology>,
) -> Result<PartDataset, CliError> {
    let ds = load_part_dataset(path, format).map_err(|e| CliError::Parse(e.to_string()))?;
    match ontology {
        Some(onto) => ds
            .canonicalize(onto)
            .map_err(|e| CliError::Parse(e.to_string())),
        None => Ok(ds),
    }
}

fn load_ontology(path: &Path) -> Result<Ontology, CliError> {
    Ontology::from_path(path).map_err(|e| CliError::Parse(e.to_string()))
}

pub struct IngestArgs {
    pub input: PathBuf,
    pub format: DatasetFormat,
    pub ontology: Option<PathBuf>,
    pub prune_min: Option<usize>,
    pub out: PathBuf,
}

pub fn cmd_ingest(args: IngestArgs, seed: u64) -> Result<(), CliError> {
    let mut settings = RunSettings::new("ingest", seed);
    settings.record_path("input", &args.input);
    settings.record("format", format!("{:?}", args.format));

    let ontology = args
        .ontology
        .as_deref()
        .map(load_ontology)
        .transpose()?;
    if let Some(path) = &args.ontology {
        settings.record_path("ontology", path);
    }
    let mut ds = load_dataset(&args.input, args.format, ontology.as_ref())?;
    if let Some(m) = args.prune_min {
        settings.record("prune_min", m);
        ds = prune_rare_parts(&ds, m);
    }
    write_native(&args.out, &ds, Some(settings.provenance_value()))
        .map_err(|e| CliError::Parse(e.to_string()))?;
    log::info!(target: "ingest", "wrote {} images to {}", ds.image_count(), args.out.display());
    Ok(())
}

pub struct SplitArgs {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub ratio: f64,
    pub out_train: PathBuf,
    pub out_eval: PathBuf,
}

pub fn cmd_split(args: SplitArgs, seed: u64) -> Result<(), CliError> {
    let mut settings = RunSettings::new("split", seed);
    settings.record_path("dataset", &args.dataset);
    settings.record("ratio", args.ratio);

    let spec = SplitSpec::new(args.ratio, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let ds = load_dataset(&args.dataset, args.format, None)?;
    if ds.images.is_empty() {
        return Err(CliError::Parse("dataset has no images".to_string()));
    }
    let (train, eval) = split_dataset(&ds, spec);
    write_native(&args.out_train, &train, Some(settings.provenance_value()))
        .map_err(|e| CliError::Parse(e.to_string()))?;
    write_native(&args.out_eval, &eval, Some(settings.provenance_value()))
        .map_err(|e| CliError::Parse(e.to_string()))?;
    log::info!(
        target: "split",
        "{} train / {} eval images",
        train.image_count(),
        eval.image_count()
    );
    Ok(())
}

pub struct TrainCoocArgs {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub ontology: Option<PathBuf>,
    pub config: CoocConfig,
    pub out: PathBuf,
}

pub fn cmd_train_cooc(args: TrainCoocArgs) -> Result<(), CliError> {
    let mut settings = RunSettings::new("train-cooc", args.config.seed);
    settings.record_path("dataset", &args.dataset);
    settings.record("l2", args.config.l2);
    settings.record("learning_rate", args.config.learning_rate);
    settings.record("tolerance", args.config.tolerance);
    settings.record("max_iters", args.config.max_iters);

    let ontology = args.ontology.as_deref().map(load_ontology).transpose()?;
    let ds = load_dataset(&args.dataset, args.format, ontology.as_ref())?;
    let part_sets: Vec<BTreeSet<String>> = ds
        .images
        .iter()
        .flat_map(|img| &img.instances)
        .filter(|inst| !inst.parts.is_empty())
        .map(|inst| inst.parts.keys().cloned().collect())
        .collect();
    let (model, report) = train_cooccurrence(&part_sets, &args.config)
        .map_err(|e| CliError::Generation(e.to_string()))?;

    let mut value = serde_json::to_value(&model).expect("model serializes");
    value["provenance"] = settings.provenance_value();
    std::fs::write(
        &args.out,
        serde_json::to_string(&value).expect("model serializes"),
    )
    .map_err(|e| CliError::Parse(format!("cannot write {}: {e}", args.out.display())))?;

    let trained = report.per_part.iter().filter(|s| !s.degenerate).count();
    log::info!(
        target: "train-cooc",
        "trained {} regressors over {} observed sets ({} degenerate)",
        trained,
        part_sets.len(),
        model.degenerate_parts().len()
    );
    Ok(())
}

fn load_cooc_model(path: &Path) -> Result<CooccurrenceModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("bad co-occurrence model {}: {e}", path.display())))
}

pub struct GenerateArgs {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub ontology: PathBuf,
    pub cooc: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub config: GenConfig,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    // Validate the embedding requirement before any loading happens.
    let object_types: Vec<QuestionType> = args
        .config
        .types
        .iter()
        .copied()
        .filter(|t| t.has_object_half())
        .collect();
    if !object_types.is_empty() && args.embeddings.is_none() {
        return Err(CliError::Config(format!(
            "question types {:?} need --embeddings",
            object_types.iter().map(|t| t.code()).collect::<Vec<_>>()
        )));
    }

    let mut settings = RunSettings::new("generate", args.config.seed);
    settings.record_path("dataset", &args.dataset);
    settings.record_path("ontology", &args.ontology);
    settings.record_path("cooc", &args.cooc);
    if let Some(path) = &args.embeddings {
        settings.record_path("embeddings", path);
    }
    settings.record(
        "types",
        args.config
            .types
            .iter()
            .map(|t| t.code())
            .collect::<Vec<_>>()
            .join(","),
    );
    settings.record("top_k", args.config.top_k);
    settings.record("retry_budget", args.config.retry_budget);
    settings.record("max_mutations", args.config.max_mutations);

    let ontology = load_ontology(&args.ontology)?;
    let ds = load_dataset(&args.dataset, args.format, Some(&ontology))?;
    let model = load_cooc_model(&args.cooc)?;
    let table = args
        .embeddings
        .as_deref()
        .map(EmbeddingTable::from_jsonl_path)
        .transpose()
        .map_err(|e| CliError::Parse(e.to_string()))?;

    let run = || generate_questions(&ds, &ontology, &model, table.as_ref(), &args.config);
    let output = match args.jobs {
        None => run(),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?
            .install(run),
    }
    .map_err(|e| match e {
        GenError::MissingEmbeddings(_) => CliError::Config(e.to_string()),
        other => CliError::Generation(other.to_string()),
    })?;

    if output.questions.is_empty() {
        return Err(CliError::Generation(format!(
            "no questions could be generated ({} skips)",
            output.skips.len()
        )));
    }
    jsonl::write_questions(&args.out, &output.questions, Some(&settings.provenance()))
        .map_err(|e| CliError::Parse(e.to_string()))?;
    log::info!(
        target: "generate",
        "{} questions written to {} ({} skipped)",
        output.questions.len(),
        args.out.display(),
        output.skips.len()
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub questions: PathBuf,
    pub responses: PathBuf,
    pub out: Option<PathBuf>,
    pub sum_logprob: bool,
    pub seed: u64,
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut settings = RunSettings::new("evaluate", args.seed);
    settings.record_path("questions", &args.questions);
    settings.record_path("responses", &args.responses);
    settings.record("sum_logprob", args.sum_logprob);

    let (questions, _) =
        jsonl::read_questions(&args.questions).map_err(|e| CliError::Parse(e.to_string()))?;
    let (responses, _) =
        jsonl::read_responses(&args.responses).map_err(|e| CliError::Parse(e.to_string()))?;
    if questions.is_empty() {
        return Err(CliError::Parse("question file is empty".to_string()));
    }

    let scoring = if args.sum_logprob {
        ChoiceScoring::SumNll
    } else {
        ChoiceScoring::MeanNll
    };
    let report = evaluate(&questions, &responses, EvalOptions { scoring });

    let matched = questions.len() - report.per_type.values().map(|m| m.skipped).sum::<usize>();
    if !responses.is_empty() && matched == 0 {
        return Err(CliError::Evaluation(
            "no response matched any question id".to_string(),
        ));
    }

    print!("{}", report.render_text());
    if let Some(out) = &args.out {
        let mut value = serde_json::to_value(&report).expect("report serializes");
        value["provenance"] = settings.provenance_value();
        std::fs::write(out, serde_json::to_string_pretty(&value).expect("report serializes"))
            .map_err(|e| CliError::Parse(format!("cannot write {}: {e}", out.display())))?;
        log::info!(target: "evaluate", "report written to {}", out.display());
    }
    Ok(())
}

pub struct StatsArgs {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub ontology: Option<PathBuf>,
    pub json: bool,
}

pub fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let ontology = args.ontology.as_deref().map(load_ontology).transpose()?;
    let ds = load_dataset(&args.dataset, args.format, ontology.as_ref())?;
    let stats = DatasetStats::compute(&ds);
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&stats).expect("stats serialize")
        );
    } else {
        println!("{stats}");
    }
    Ok(())
}

pub struct GradcheckArgs {
    pub seeds: u64,
    pub tolerance: f64,
    pub weights: LossWeights,
}

pub fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    args.weights
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let cases = run_suite(&args.weights, args.seeds, args.tolerance);
    println!(
        "{:<22} {:>6} {:>14} {:>10} {:>6}",
        "loss", "seeds", "max_rel_err", "tolerance", "status"
    );
    let mut all_ok = true;
    for case in &cases {
        let ok = case.passed();
        all_ok &= ok;
        println!(
            "{:<22} {:>6} {:>14.3e} {:>10.1e} {:>6}",
            case.name,
            case.seeds,
            case.max_rel_err,
            case.tolerance,
            if ok { "pass" } else { "FAIL" }
        );
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::GradCheck(
            "one or more gradient checks failed".to_string(),
        ))
    }
}

/// Dense mask JSON used by the `rle` utility.
#[derive(Serialize, Deserialize)]
struct DenseMaskFile {
    height: u32,
    width: u32,
    data: Vec<u8>,
}

pub fn cmd_rle_encode(input: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", input.display())))?;
    let dense: DenseMaskFile =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    if let Some(bad) = dense.data.iter().find(|&&v| v > 1) {
        return Err(CliError::Parse(format!(
            "dense mask values must be 0 or 1, found {bad}"
        )));
    }
    let mask = BinaryMask::new(
        dense.height,
        dense.width,
        dense.data.iter().map(|&v| v == 1).collect(),
    )
    .map_err(|e| CliError::Parse(e.to_string()))?;
    let rle = rle_encode(&mask);
    std::fs::write(out, serde_json::to_string(&rle).expect("rle serializes"))
        .map_err(|e| CliError::Parse(format!("cannot write {}: {e}", out.display())))?;
    Ok(())
}

pub fn cmd_rle_decode(input: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", input.display())))?;
    let rle: MaskRle = serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    let mask = rle_decode(&rle);
    let dense = DenseMaskFile {
        height: mask.height(),
        width: mask.width(),
        data: mask.pixels().iter().map(|&b| b as u8).collect(),
    };
    std::fs::write(out, serde_json::to_string(&dense).expect("mask serializes"))
        .map_err(|e| CliError::Parse(format!("cannot write {}: {e}", out.display())))?;
    Ok(())
}
