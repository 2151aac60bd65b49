//! Implementations behind the CLI subcommands.

use crate::manifest::load_manifest;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use pictext::bench::{
    bleu_corpus, cider, d2i_corpus, description_stats, load_embedding_pairs, load_eval_corpus,
    load_pope_items, load_split_corpus, pope_score, readability, render_report_json,
    render_report_table, rouge_l_corpus, MetricReport, RESERVED_METRICS,
};
use pictext::gateway::{build_backends, FixtureStore};
use pictext::model::{
    load_config, read_records, to_jsonl_line, validate_record, BackendEndpoints, StageState,
};
use pictext::pipeline::{run_pipeline, RunOutcome};
use pictext::PipelineConfig;
use pictext_testkit::backends::recording_backends;
use pictext_testkit::scene::{generate_scene, write_manifest, write_scene_files};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// True when the error chain bottoms out in a closed pipe, as in
/// `pictext inspect | head`. Main treats that as a clean stop.
pub fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

#[derive(Args)]
pub struct TextualizeArgs {
    /// Image manifest, one {"id", "path", "width", "height"} object per line
    #[arg(long, value_name = "FILE")]
    pub images: PathBuf,
    /// Pipeline configuration (TOML); fixture:// endpoints resolve against its directory
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Output dataset (JSONL); a run summary JSON lands next to it
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Directory holding per-image stage caches
    #[arg(long, value_name = "DIR")]
    pub cache: PathBuf,
    /// Rerun over an existing output, reusing every cached stage
    #[arg(long)]
    pub resume: bool,
}

pub fn textualize(args: TextualizeArgs) -> Result<ExitCode> {
    if args.out.exists() && !args.resume {
        bail!(
            "output {} already exists; pass --resume to rerun over the warm cache",
            args.out.display()
        );
    }
    let images = load_manifest(&args.images)?;
    let config = load_config(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new(""));
    let backends = build_backends(&config, base)?;
    let outcome = run_pipeline(&images, &backends, &config, &args.cache, &args.out)?;
    print_run_summary(&outcome)?;
    Ok(if outcome.summary.complete == outcome.summary.total {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn print_run_summary(outcome: &RunOutcome) -> std::io::Result<()> {
    let s = &outcome.summary;
    let mut out = std::io::stdout().lock();
    writeln!(out, "dataset   {}", outcome.dataset_path.display())?;
    writeln!(out, "summary   {}", outcome.summary_path.display())?;
    writeln!(out, "images    {} total, {} complete", s.total, s.complete)?;
    writeln!(
        out,
        "failures  phase_a {}, phase_b {}, phase_c {}",
        s.failed_phase_a, s.failed_phase_b, s.failed_phase_c
    )?;
    writeln!(out, "cache     {} stage hits", s.cache_hits)?;
    writeln!(out, "backends  {} calls", s.backend_calls)?;
    Ok(())
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    /// Clipped n-gram precision with a brevity penalty, orders 1 through --max-n
    Bleu,
    /// Longest-common-subsequence F-measure (ROUGE-L)
    Rouge,
    /// Consensus tf-idf n-gram similarity (CIDEr-D)
    Cider,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::Bleu => "bleu",
            MetricKind::Rouge => "rouge",
            MetricKind::Cider => "cider",
        })
    }
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Candidate corpus (JSONL). Alone: {"id", "candidate", "references"} lines;
    /// with --refs: {"id", "candidate"} lines
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Reference corpus ({"id", "references"} lines) joined against --pred by id
    #[arg(long, value_name = "FILE")]
    pub refs: Option<PathBuf>,
    /// Metrics to compute
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "NAME",
        default_values_t = vec![MetricKind::Bleu, MetricKind::Rouge, MetricKind::Cider]
    )]
    pub metrics: Vec<MetricKind>,
    /// Largest BLEU n-gram order
    #[arg(long, value_name = "N", default_value_t = 4)]
    pub max_n: usize,
    /// Write <PREFIX>.json and <PREFIX>.txt reports
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    if !(1..=9).contains(&args.max_n) {
        bail!("--max-n must lie in 1..=9, got {}", args.max_n);
    }
    let pairs = match &args.refs {
        Some(refs) => load_split_corpus(&args.pred, refs)?,
        None => load_eval_corpus(&args.pred)?,
    };
    let mut reports = Vec::new();
    for kind in [MetricKind::Bleu, MetricKind::Rouge, MetricKind::Cider] {
        if !args.metrics.contains(&kind) {
            continue;
        }
        match kind {
            MetricKind::Bleu => reports.extend(bleu_corpus(&pairs, args.max_n)?),
            MetricKind::Rouge => reports.push(rouge_l_corpus(&pairs)?),
            MetricKind::Cider => reports.push(cider(&pairs)?),
        }
    }
    emit_reports(&reports, RESERVED_METRICS, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

/// Table to stdout; with a prefix, the JSON and table also land in files.
fn emit_reports(reports: &[MetricReport], reserved: &[&str], out: Option<&Path>) -> Result<()> {
    let table = render_report_table(reports, reserved);
    std::io::stdout().write_all(table.as_bytes())?;
    if let Some(prefix) = out {
        let json_path = PathBuf::from(format!("{}.json", prefix.display()));
        let txt_path = PathBuf::from(format!("{}.txt", prefix.display()));
        let mut json = render_report_json(reports, reserved);
        json.push('\n');
        std::fs::write(&json_path, json)
            .with_context(|| format!("cannot write {}", json_path.display()))?;
        std::fs::write(&txt_path, &table)
            .with_context(|| format!("cannot write {}", txt_path.display()))?;
        eprintln!("wrote {} and {}", json_path.display(), txt_path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct StatsArgs {
    /// Text file to analyze as one description
    #[arg(long, value_name = "FILE")]
    pub text: PathBuf,
    /// Write <PREFIX>.json and <PREFIX>.txt reports
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

pub fn stats(args: StatsArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.text)
        .with_context(|| format!("cannot read {}", args.text.display()))?;
    let mut reports = vec![description_stats(&text)];
    reports.extend(
        readability(&text).with_context(|| format!("scoring {}", args.text.display()))?,
    );
    emit_reports(&reports, &[], args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct PopeArgs {
    /// Probe items, one {"question_id", "split", "gt", "answer"} object per line
    #[arg(long, value_name = "FILE")]
    pub items: PathBuf,
    /// Write <PREFIX>.json and <PREFIX>.txt reports
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

pub fn pope(args: PopeArgs) -> Result<ExitCode> {
    let items = load_pope_items(&args.items)?;
    let reports = pope_score(&items)?;
    emit_reports(&reports, &[], args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct D2iArgs {
    /// Embedding pairs, one {"id", "original", "generated"} object per line
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Write <PREFIX>.json and <PREFIX>.txt reports
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

pub fn d2i(args: D2iArgs) -> Result<ExitCode> {
    let pairs = load_embedding_pairs(&args.pairs)?;
    let report = d2i_corpus(&pairs)?;
    emit_reports(&[report], &[], args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct FixturesArgs {
    /// Directory to create the scene set in
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of scenes to generate
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub scenes: u64,
    /// Object placements attempted per scene (an upper bound on objects)
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub objects: usize,
    /// Hallucinated phrases woven into each scene's description
    #[arg(long, value_name = "N", default_value_t = 2)]
    pub distractors: usize,
    /// Seed of the first scene; scene k uses seed + k
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
}

pub fn fixtures(args: FixturesArgs) -> Result<ExitCode> {
    if args.scenes == 0 {
        bail!("--scenes must be at least 1");
    }
    if args.objects == 0 {
        bail!("--objects must be at least 1");
    }
    let out = &args.out;
    if out.join("manifest.jsonl").exists() {
        bail!("{} already holds a scene set (manifest.jsonl exists)", out.display());
    }

    let scenes: Vec<_> = (args.seed..args.seed + args.scenes)
        .map(|s| generate_scene(s, args.objects, args.distractors))
        .collect();
    let images_dir = out.join("images");
    let mut files = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        files.push(
            write_scene_files(scene, &images_dir)
                .with_context(|| format!("writing scene files under {}", images_dir.display()))?,
        );
    }
    let manifest_path = write_manifest(&files, out)
        .with_context(|| format!("writing manifest under {}", out.display()))?;

    let config = PipelineConfig {
        backends: BackendEndpoints {
            chat_mllm: "fixture://fixtures".into(),
            chat_mllm_model: "mllm-fixture".into(),
            chat_llm: "fixture://fixtures".into(),
            chat_llm_model: "llm-fixture".into(),
            detector: "fixture://fixtures".into(),
            dense_captioner: "fixture://fixtures".into(),
            segmenter: "fixture://fixtures".into(),
            depth_estimator: "fixture://fixtures".into(),
            embedder: "fixture://fixtures".into(),
        },
        ..PipelineConfig::default()
    };
    let config_path = out.join("config.toml");
    write_fixture_config(&config_path, &config)?;

    let store = FixtureStore::open(out.join("fixtures"));
    let recorder = recording_backends(
        &scenes,
        &store,
        &config.backends.chat_mllm_model,
        &config.backends.chat_llm_model,
        config.backend_concurrency,
    );
    let run_images: Vec<_> = files.iter().map(|f| f.image.clone()).collect();
    let outcome = run_pipeline(
        &run_images,
        &recorder,
        &config,
        &out.join("cache"),
        &out.join("expected.jsonl"),
    )?;
    if outcome.summary.complete != outcome.summary.total {
        bail!(
            "recording run left {} of {} scenes incomplete",
            outcome.summary.total - outcome.summary.complete,
            outcome.summary.total
        );
    }
    let recorded = std::fs::read_dir(out.join("fixtures"))
        .map(|entries| entries.count())
        .unwrap_or(0);

    let mut w = std::io::stdout().lock();
    writeln!(w, "wrote {}  ({} images)", manifest_path.display(), files.len())?;
    writeln!(w, "wrote {}  (pixel data and ground-truth sidecars)", images_dir.display())?;
    writeln!(w, "wrote {}  ({recorded} recorded backend replies)", out.join("fixtures").display())?;
    writeln!(w, "wrote {}", config_path.display())?;
    writeln!(w, "wrote {}  (reference pipeline output)", outcome.dataset_path.display())?;
    writeln!(w, "wrote {}  (warm stage cache)", out.join("cache").display())?;
    writeln!(w)?;
    writeln!(w, "replay:")?;
    writeln!(
        w,
        "  pictext textualize --images {} --config {} --out <dir>/dataset.jsonl --cache <dir>/cache",
        manifest_path.display(),
        config_path.display()
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Emit the TOML by hand (only the [backends] table differs from defaults),
/// then prove the round trip: the file must load back to exactly `config`.
fn write_fixture_config(path: &Path, config: &PipelineConfig) -> Result<()> {
    let b = &config.backends;
    let text = format!(
        "# Pipeline configuration for this scene set. Endpoints replay recorded\n\
         # fixtures; every unlisted setting keeps its default.\n\
         \n\
         [backends]\n\
         chat_mllm = \"{}\"\n\
         chat_mllm_model = \"{}\"\n\
         chat_llm = \"{}\"\n\
         chat_llm_model = \"{}\"\n\
         detector = \"{}\"\n\
         dense_captioner = \"{}\"\n\
         segmenter = \"{}\"\n\
         depth_estimator = \"{}\"\n\
         embedder = \"{}\"\n",
        b.chat_mllm,
        b.chat_mllm_model,
        b.chat_llm,
        b.chat_llm_model,
        b.detector,
        b.dense_captioner,
        b.segmenter,
        b.depth_estimator,
        b.embedder,
    );
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    let loaded = load_config(path)?;
    if loaded != *config {
        bail!("emitted config {} does not round-trip", path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct InspectArgs {
    /// Pipeline dataset (JSONL of annotation records)
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// Print this record as pretty JSON instead of the listing
    #[arg(long, value_name = "IMAGE_ID")]
    pub id: Option<String>,
}

pub fn inspect(args: InspectArgs) -> Result<ExitCode> {
    let records = read_records(&args.dataset)
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    if let Some(id) = &args.id {
        let record = records
            .iter()
            .find(|r| r.image.id == *id)
            .ok_or_else(|| {
                anyhow!("no record with image id {:?} in {}", id, args.dataset.display())
            })?;
        let value: serde_json::Value = serde_json::from_str(&to_jsonl_line(record))?;
        let mut w = std::io::stdout().lock();
        writeln!(w, "{}", serde_json::to_string_pretty(&value)?)?;
        return Ok(ExitCode::SUCCESS);
    }

    let id_width = records.iter().map(|r| r.image.id.len()).max().unwrap_or(0);
    let mut violations = 0usize;
    let mut complete = 0usize;
    let mut w = std::io::stdout().lock();
    for record in &records {
        let status = &record.stage_status;
        if status.all_complete() {
            complete += 1;
        }
        writeln!(
            w,
            "{:<id_width$}  {:>4}x{:<4}  a={} b={} c={}  objects={} hallucinations={}",
            record.image.id,
            record.image.width,
            record.image.height,
            stage_mark(&status.phase_a),
            stage_mark(&status.phase_b),
            stage_mark(&status.phase_c),
            record.objects.len(),
            record.hallucinations.len(),
        )?;
        for violation in validate_record(record) {
            eprintln!("{}: invariant broken: {}", record.image.id, violation);
            violations += 1;
        }
    }
    writeln!(
        w,
        "{} records, {} complete, {} invariant violations",
        records.len(),
        complete,
        violations
    )?;
    Ok(if violations == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn stage_mark(state: &StageState) -> &'static str {
    match state {
        StageState::Pending => "pending",
        StageState::Complete => "ok",
        StageState::Failed(_) => "FAILED",
    }
}
