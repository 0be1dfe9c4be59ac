use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use inkrec::classifier::{
    merge_classes, ClassifierTraining, PipelineConfig, StrokeClassifier, TaggedFeatures,
};
use inkrec::features::{read_table, write_table, DeltaMethod, TableEntry};
use inkrec::hmm::TrainConfig;
use inkrec::ink::{load_dataset, save_dataset, split_by_session, Dataset, InkTrace, Sample};
use inkrec::preprocess::preprocess_pipeline;
use inkrec::recognizer::ScoredLabel;
use inkrec::rules::{alternatives_from_confusion, build_rules, expand_rules, RuleSet};
use inkrec::service::{parse_request, Engine};
use inkrec::{synth, Error};

#[derive(Parser)]
#[command(
    name = "inkrec",
    version,
    about = "Online handwritten stroke and akshara recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stroke (and optionally akshara) corpus.
    Synth(SynthArgs),
    /// Run ink records through the preprocessing pipeline.
    Preprocess(PreprocessArgs),
    /// Print feature sequences as text tables.
    Features(FeaturesArgs),
    /// Train one HMM per stroke class and write a bundle.
    Train(TrainArgs),
    /// Classify strokes from ink records or a feature table.
    Classify(ClassifyArgs),
    /// Confusion matrix and accuracy on labelled strokes.
    Eval(EvalArgs),
    /// Build or expand akshara rules.
    #[command(subcommand)]
    Rules(RulesCommand),
    /// Recognize aksharas from request lines on stdin.
    Recognize(RecognizeArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    families: usize,
    /// Samples per class, spread over every (writer, session).
    #[arg(long, default_value_t = 300)]
    per_class: usize,
    #[arg(long, default_value_t = 20)]
    writers: usize,
    #[arg(long, default_value_t = 2)]
    sessions: u32,
    /// Akshara samples per (writer, session) and akshara; 0 skips them.
    #[arg(long, default_value_t = 0)]
    aksharas: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    writer_variation: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[arg(long, default_value_t = 64)]
    resample: usize,
    #[arg(long, default_value_t = 3)]
    smooth_window: usize,
    #[arg(long, default_value_t = 3.0)]
    gap_threshold: f64,
    #[arg(long, default_value_t = 2)]
    delta_window: usize,
    #[arg(long, value_enum, default_value_t = Delta::Regression)]
    delta: Delta,
}

#[derive(Clone, Copy, ValueEnum)]
enum Delta {
    Regression,
    Central,
}

impl PipelineArgs {
    fn config(&self) -> inkrec::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        cfg.preprocess.resample_count = self.resample;
        cfg.preprocess.smooth_window = self.smooth_window;
        cfg.preprocess.gap_threshold = self.gap_threshold;
        cfg.features.window = self.delta_window;
        cfg.features.method = match self.delta {
            Delta::Regression => DeltaMethod::Regression,
            Delta::Central => DeltaMethod::CentralDifference,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PreprocessArgs {
    /// Ink file or directory.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    input: PathBuf,
    /// Use the pipeline stored in this bundle instead of the flags.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = inkrec::classifier::DEFAULT_STATES)]
    states: usize,
    #[arg(long, default_value_t = 20)]
    mixtures: usize,
    #[arg(long, default_value_t = 40)]
    iterations: usize,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated training sessions; the rest are held out.
    #[arg(long, value_delimiter = ',')]
    sessions: Option<Vec<u32>>,
    /// Merge classes confused at or above this percentage (needs held-out sessions).
    #[arg(long)]
    merge_threshold: Option<f64>,
    /// Write the held-out evaluation (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, env = "INKREC_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Ink file or directory.
    #[arg(
        long,
        conflicts_with = "features",
        required_unless_present = "features"
    )]
    input: Option<PathBuf>,
    /// Feature table from `inkrec features`.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated sessions to evaluate; default all.
    #[arg(long, value_delimiter = ',')]
    sessions: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Base rules from annotated akshara records.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = inkrec::rules::DEFAULT_WRITER_THRESHOLD)]
        writer_threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refined rules from base rules and a confusion report.
    Expand {
        #[arg(long)]
        rules: PathBuf,
        /// JSON report from `inkrec eval --format json`.
        #[arg(long)]
        confusion: PathBuf,
        #[arg(long, default_value_t = inkrec::rules::DEFAULT_RATE_THRESHOLD)]
        rate_threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RecognizeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    /// Default lattice depth for requests that carry no `k`.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn select_sessions(ds: &Dataset, sessions: &Option<Vec<u32>>) -> inkrec::Result<Dataset> {
    let Some(list) = sessions else {
        return Ok(ds.clone());
    };
    let picked = ds.filter_sessions(&list.iter().copied().collect());
    if picked.is_empty() {
        return Err(Error::EmptySplit(format!(
            "no samples in sessions {list:?}"
        )));
    }
    Ok(picked)
}

fn synth_cmd(a: SynthArgs) -> CliResult {
    let mut specs = synth::catalog(a.families);
    for s in &mut specs {
        if let Some(n) = a.noise {
            *s = s.clone().noise(n);
        }
        if let Some(v) = a.writer_variation {
            *s = s.clone().writer_variation(v);
        }
    }
    let aks = synth::akshara_catalog();
    if a.aksharas > 0
        && aks
            .iter()
            .flat_map(|ak| &ak.strokes)
            .any(|&s| s >= specs.len())
    {
        return Err("aksharas need --families 10 or more".into());
    }
    let cells = a.writers * a.sessions as usize;
    let n = a.per_class.div_ceil(cells.max(1)).max(1);
    fs::create_dir_all(&a.out)?;
    let strokes = synth::generate_all(&specs, n, a.writers, a.sessions, a.seed)?;
    save_dataset(&strokes, a.out.join("strokes.jsonl"))?;
    eprintln!("{} stroke samples, {} classes", strokes.len(), specs.len());
    if a.aksharas > 0 {
        let ds = synth::generate_aksharas(&specs, &aks, a.aksharas, a.writers, a.sessions, a.seed)?;
        save_dataset(&ds, a.out.join("aksharas.jsonl"))?;
        eprintln!("{} akshara samples", ds.len());
    }
    Ok(())
}

fn preprocess_cmd(a: PreprocessArgs) -> CliResult {
    let cfg = a.pipeline.config()?.preprocess;
    let ds = load_dataset(&a.input)?;
    let run = |t: &InkTrace| preprocess_pipeline(t, &cfg).map(|p| p.trace);
    let mut out = Vec::with_capacity(ds.len());
    for s in ds.samples {
        out.push(match s {
            Sample::Stroke(mut st) => {
                st.trace = run(&st.trace)?;
                Sample::Stroke(st)
            }
            Sample::Akshara(mut ak) => {
                ak.traces = ak.traces.iter().map(run).collect::<inkrec::Result<_>>()?;
                Sample::Akshara(ak)
            }
        });
    }
    let mut w = output(a.out.as_deref())?;
    Dataset::new(out).write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

fn features_cmd(a: FeaturesArgs) -> CliResult {
    let cfg = match &a.bundle {
        Some(b) => StrokeClassifier::load_bundle(b)?.classifier.pipeline,
        None => a.pipeline.config()?,
    };
    let ds = load_dataset(&a.input)?;
    let mut entries = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        let traces: Vec<&InkTrace> = match s {
            Sample::Stroke(st) => vec![&st.trace],
            Sample::Akshara(ak) => ak.traces.iter().collect(),
        };
        for (j, t) in traces.into_iter().enumerate() {
            entries.push(TableEntry {
                caption: format!(
                    "sample={i} stroke={j} label={} writer={} session={}",
                    s.label(),
                    s.writer(),
                    s.session()
                ),
                features: cfg.featurize(t)?.0,
            });
        }
    }
    let mut w = output(a.out.as_deref())?;
    write_table(&mut w, &cfg.hash(), &entries)?;
    w.flush()?;
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let pipeline = a.pipeline.config()?;
    let ds = load_dataset(&a.data)?;
    let (train, held_out) = match &a.sessions {
        Some(list) => {
            let set: BTreeSet<u32> = list.iter().copied().collect();
            let (tr, te) = split_by_session(&ds, &set)?;
            (tr, Some(te))
        }
        None => (ds, None),
    };
    let opts = ClassifierTraining {
        n_states: a.states,
        train: TrainConfig {
            max_iterations: a.iterations,
            target_mixtures: a.mixtures,
            ..TrainConfig::default()
        },
        jobs: a.jobs,
    };
    eprintln!(
        "training {} classes on {} strokes",
        train.stroke_labels().len(),
        train.strokes().count()
    );
    let mut classifier = StrokeClassifier::train_all(&train, &opts, pipeline)?;
    if let Some(test) = &held_out {
        let eval = classifier.evaluate(test)?;
        eprintln!("held-out accuracy {:.2}%", eval.accuracy);
        if let Some(thr) = a.merge_threshold {
            let map = merge_classes(&eval.matrix, thr)?;
            if !map.is_empty() {
                eprintln!("merging {} classes into their canonical labels", map.len());
                classifier = classifier.retrain_merged(&train, &map, &opts)?;
            }
        }
        if let Some(path) = &a.report {
            let eval = classifier.evaluate(test)?;
            fs::write(path, serde_json::to_string_pretty(&eval)?)?;
        }
    } else if a.merge_threshold.is_some() || a.report.is_some() {
        return Err("--merge-threshold and --report need --sessions to hold out test data".into());
    }
    let sha = classifier.save_bundle(&a.out)?;
    eprintln!(
        "bundle {} ({} models, manifest sha256 {sha})",
        a.out.display(),
        classifier.models.len()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct ClassifyLine<'a> {
    caption: &'a str,
    ranked: Vec<ScoredLabel>,
    degenerate: bool,
}

fn classify_cmd(a: ClassifyArgs) -> CliResult {
    if a.k == 0 {
        return Err("k must be at least 1".into());
    }
    let classifier = StrokeClassifier::load_bundle(&a.bundle)?.classifier;
    let mut items = Vec::new();
    if let Some(path) = &a.features {
        let (hash, entries) =
            read_table(&fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?)?;
        for e in entries {
            let c = classifier.classify_features(&TaggedFeatures {
                features: e.features,
                pipeline_hash: hash.clone(),
            })?;
            items.push((e.caption, c));
        }
    } else if let Some(path) = &a.input {
        for (i, s) in load_dataset(path)?.samples.iter().enumerate() {
            let traces: Vec<&InkTrace> = match s {
                Sample::Stroke(st) => vec![&st.trace],
                Sample::Akshara(ak) => ak.traces.iter().collect(),
            };
            for (j, t) in traces.into_iter().enumerate() {
                items.push((
                    format!("sample={i} stroke={j} label={}", s.label()),
                    classifier.classify(t)?,
                ));
            }
        }
    }
    let mut w = output(None)?;
    for (caption, c) in &items {
        let line = ClassifyLine {
            caption,
            ranked: c
                .ranked
                .iter()
                .take(a.k)
                .map(|(label, ll)| ScoredLabel {
                    label: label.clone(),
                    log_likelihood: *ll,
                })
                .collect(),
            degenerate: c.degenerate,
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    w.flush()?;
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let classifier = StrokeClassifier::load_bundle(&a.bundle)?.classifier;
    let ds = select_sessions(&load_dataset(&a.data)?, &a.sessions)?;
    let eval = classifier.evaluate(&ds)?;
    let mut w = output(a.out.as_deref())?;
    match a.format {
        Format::Text => write!(w, "{}", eval.matrix.to_text())?,
        Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&eval)?)?,
    }
    w.flush()?;
    Ok(())
}

fn rules_cmd(c: RulesCommand) -> CliResult {
    match c {
        RulesCommand::Build {
            data,
            writer_threshold,
            out,
        } => {
            let ds = load_dataset(&data)?;
            let mut samples = Vec::new();
            let mut labels = Vec::new();
            for ak in ds.aksharas() {
                let Some(l) = &ak.stroke_labels else {
                    return Err(
                        format!("{}: akshara record without stroke_labels", ak.label).into(),
                    );
                };
                samples.push(ak.clone());
                labels.push(l.clone());
            }
            let rules = build_rules(&samples, &labels, writer_threshold)?;
            rules.save(&out)?;
            eprintln!("{} base rules", rules.len());
        }
        RulesCommand::Expand {
            rules,
            confusion,
            rate_threshold,
            out,
        } => {
            let base = RuleSet::load(&rules)?;
            let text = fs::read_to_string(&confusion)
                .map_err(|e| format!("{}: {e}", confusion.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            // Either a full evaluation report or a bare matrix.
            let matrix = serde_json::from_value(value.get("matrix").cloned().unwrap_or(value))?;
            let alts = alternatives_from_confusion(&matrix, rate_threshold);
            let refined = expand_rules(&base, &alts, rate_threshold)?;
            refined.save(&out)?;
            eprintln!(
                "{} refined rules from {} base rules",
                refined.len(),
                base.len()
            );
        }
    }
    Ok(())
}

/// Each non-blank stdin line is one request (an ink record works too); one
/// result line is printed per request. Errors go to stderr in the service's
/// error envelope.
fn recognize_cmd(a: RecognizeArgs) -> CliResult {
    let engine = Engine::load(&a.bundle, &a.rules)?;
    let mut input = String::new();
    io::stdin().lock().read_to_string(&mut input)?;
    let mut w = output(None)?;
    let mut failed = 0;
    for line in input.lines().filter(|l| !l.trim().is_empty()) {
        let result = parse_request(line.as_bytes()).and_then(|mut req| {
            req.k = req.k.or(a.k);
            engine.recognize(&req)
        });
        match result {
            Ok(r) => writeln!(w, "{}", r.to_json())?,
            Err(e) => {
                failed += 1;
                eprintln!("{}", e.to_json());
            }
        }
    }
    w.flush()?;
    if failed > 0 {
        return Err(format!("{failed} request(s) failed").into());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Features(a) => features_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Rules(c) => rules_cmd(c),
        Command::Recognize(a) => recognize_cmd(a),
        Command::Serve(a) => inkrec::service::run(&a.bundle, &a.rules, a.port).map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
