//! Batch command-line surface: corpus generation, training, evaluation,
//! gradient checking, and comparison reports.
//!
//! Every command writes a JSON run manifest next to its primary outputs
//! with the fully resolved configuration — enough to re-run the command
//! exactly. Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or
//! validation error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};
use crate::eval::{evaluate, TaskSet};
use crate::fusion::FusionKind;
use crate::gradcheck::run_full_suite;
use crate::metrics::EvalReport;
use crate::model::{Modality, Model, ModelConfig};
use crate::synthdata::{generate, load_corpus, save_corpus, split_corpus, CorpusConfig};
use crate::train::train;

#[derive(Parser)]
#[command(
    name = "medfuse",
    about = "Multimodal fusion models on a synthetic planted-signal corpus",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and write train/val/test splits.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus a per-epoch loss CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint and append one row to a report CSV.
    Eval(EvalArgs),
    /// Verify every backward pass against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render a report CSV as a Markdown table and optional SVG chart.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Output directory for train.jsonl, val.jsonl, test.jsonl, manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of cases to generate.
    #[arg(long, default_value_t = 2000)]
    pub cases: usize,
    /// Image side length G (multiple of 4, at least 8).
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Mask grid side g (must divide G).
    #[arg(long = "mask-grid", default_value_t = 4)]
    pub mask_grid: usize,
    /// Background pixel noise standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Distractor tokens per report.
    #[arg(long, default_value_t = 5)]
    pub distractors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training corpus (one JSON record per line).
    #[arg(long)]
    pub data: PathBuf,
    /// Optional model config JSON; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// image | text | both
    #[arg(long)]
    pub modality: Option<String>,
    /// concat | elementwise | gated | bilinear | crossattn
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss CSV path (default: <out>.loss.csv).
    #[arg(long = "out-losses")]
    pub out_losses: Option<PathBuf>,
    /// Manifest path (default: <out>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Evaluation corpus.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma-separated tasks: classify,localize,generate.
    #[arg(long, default_value = "classify,localize,generate")]
    pub tasks: String,
    /// Report CSV to append to (header written when creating).
    #[arg(long)]
    pub out: PathBuf,
    /// Row label (default: <modality>-<fusion> from the checkpoint).
    #[arg(long)]
    pub name: Option<String>,
    /// Manifest path (default: <out>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Relative-error tolerance.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Number of seeds (1..=N).
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Input report CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Markdown output path.
    #[arg(long = "out-md")]
    pub out_md: PathBuf,
    /// Optional grouped-bar-chart SVG output path.
    #[arg(long = "out-svg")]
    pub out_svg: Option<PathBuf>,
    /// Manifest path (default: <out-md>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Everything needed to re-run a command exactly. `duration_ms` and
/// `created_unix_ms` are the only fields allowed to differ between
/// identical runs.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub corpus_paths: Vec<String>,
    pub checkpoint_path: Option<String>,
    pub output_paths: Vec<String>,
    pub duration_ms: u128,
    pub created_unix_ms: u128,
}

impl RunManifest {
    fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("manifest serialize: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn now_unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Report(args) => cmd_report(args),
    }
}

pub fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let started = Instant::now();
    if args.cases == 0 {
        return Err(Error::InvalidArgument("--cases must be at least 1".into()));
    }
    if args.grid < 8 || args.grid % 4 != 0 {
        return Err(Error::InvalidArgument(
            "--grid must be a multiple of 4 and at least 8".into(),
        ));
    }
    if args.mask_grid == 0 || args.grid % args.mask_grid != 0 {
        return Err(Error::InvalidArgument(
            "--mask-grid must divide --grid".into(),
        ));
    }
    if args.noise < 0.0 {
        return Err(Error::InvalidArgument("--noise must be non-negative".into()));
    }
    let config = CorpusConfig {
        num_cases: args.cases,
        image_side: args.grid,
        mask_side: args.mask_grid,
        noise_std: args.noise,
        distractor_tokens: args.distractors,
        seed: args.seed,
    };
    let records = generate(&config)?;
    let (train_set, val_set, test_set) = split_corpus(records);
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let paths = ["train.jsonl", "val.jsonl", "test.jsonl"].map(|n| args.out.join(n));
    save_corpus(&train_set, &paths[0])?;
    save_corpus(&val_set, &paths[1])?;
    save_corpus(&test_set, &paths[2])?;
    let manifest_path = args.out.join("manifest.json");
    RunManifest {
        command: "gen-data".into(),
        config: serde_json::to_value(&config).unwrap_or_default(),
        seed: args.seed,
        corpus_paths: paths.iter().map(|p| p.display().to_string()).collect(),
        checkpoint_path: None,
        output_paths: paths.iter().map(|p| p.display().to_string()).collect(),
        duration_ms: started.elapsed().as_millis(),
        created_unix_ms: now_unix_ms(),
    }
    .write(&manifest_path)?;
    println!(
        "wrote {} train / {} val / {} test cases under {}",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        args.out.display()
    );
    Ok(())
}

/// Resolve the model config: file values (if any) overridden by flags.
fn resolve_train_config(args: &TrainArgs) -> Result<ModelConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str::<ModelConfig>(&text).map_err(|e| {
                Error::InvalidArgument(format!("--config {}: {e}", path.display()))
            })?
        }
        None => ModelConfig::default(),
    };
    if let Some(m) = &args.modality {
        config.modality = Modality::parse(m)?;
    }
    if let Some(f) = &args.fusion {
        config.fusion = FusionKind::parse(f)?;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let config = resolve_train_config(&args)?;
    let corpus = load_corpus(&args.data)?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training corpus {} is empty",
            args.data.display()
        )));
    }
    let side = corpus[0].image.dims()[1];
    if side != config.image_side {
        return Err(Error::InvalidArgument(format!(
            "corpus image side {side} does not match configured image_side {}",
            config.image_side
        )));
    }
    let mask = corpus[0].mask.dims()[0];
    if mask != config.mask_grid {
        return Err(Error::InvalidArgument(format!(
            "corpus mask side {mask} does not match configured mask_grid {}",
            config.mask_grid
        )));
    }
    let mut model = Model::init(&config)?;
    let losses = train(&mut model, &corpus)?;
    save_checkpoint(&model, &args.out)?;

    let losses_path = args
        .out_losses
        .clone()
        .unwrap_or_else(|| suffixed(&args.out, ".loss.csv"));
    let mut csv = String::from("epoch,mean_loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(&losses_path, csv).map_err(|e| Error::io(losses_path.display().to_string(), e))?;

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| suffixed(&args.out, ".manifest.json"));
    RunManifest {
        command: "train".into(),
        config: serde_json::to_value(&config).unwrap_or_default(),
        seed: config.seed,
        corpus_paths: vec![args.data.display().to_string()],
        checkpoint_path: Some(args.out.display().to_string()),
        output_paths: vec![
            args.out.display().to_string(),
            losses_path.display().to_string(),
        ],
        duration_ms: started.elapsed().as_millis(),
        created_unix_ms: now_unix_ms(),
    }
    .write(&manifest_path)?;
    println!(
        "trained {} for {} epochs on {} cases; final mean loss {}",
        config.model_name(),
        config.epochs,
        corpus.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let started = Instant::now();
    let tasks = TaskSet::parse(&args.tasks)?;
    let model = load_checkpoint(&args.ckpt)?;
    let corpus = load_corpus(&args.data)?;
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| model.config.model_name());
    let (report, extras) = evaluate(&model, &corpus, &tasks, name)?;

    let is_new = !args.out.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    if is_new {
        writeln!(file, "{}", EvalReport::CSV_HEADER)
            .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    }
    writeln!(file, "{}", report.to_csv_row())
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| suffixed(&args.out, ".manifest.json"));
    RunManifest {
        command: "eval".into(),
        config: serde_json::to_value(&model.config).unwrap_or_default(),
        seed: model.config.seed,
        corpus_paths: vec![args.data.display().to_string()],
        checkpoint_path: Some(args.ckpt.display().to_string()),
        output_paths: vec![args.out.display().to_string()],
        duration_ms: started.elapsed().as_millis(),
        created_unix_ms: now_unix_ms(),
    }
    .write(&manifest_path)?;

    println!("{}", EvalReport::CSV_HEADER);
    println!("{}", report.to_csv_row());
    if let Some(dice) = extras.mean_mask_dice {
        println!("mean mask dice: {dice}");
    }
    Ok(())
}

pub fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    if args.eps <= 0.0 {
        return Err(Error::InvalidArgument("--eps must be positive".into()));
    }
    let seeds: Vec<u64> = (1..=args.seeds as u64).collect();
    let report = run_full_suite(args.tol, args.eps, &seeds)?;
    for group in &report.groups {
        println!(
            "{} {} {:e} entries {}",
            if group.passes(args.tol) { "PASS" } else { "FAIL" },
            group.name,
            group.worst_rel_err,
            group.entries_checked
        );
    }
    let failures = report.failures().len();
    println!(
        "{} parameter groups checked, {} failed (tol {:e}, eps {:e}, {} seeds)",
        report.groups.len(),
        failures,
        args.tol,
        args.eps,
        args.seeds
    );
    if failures > 0 {
        return Err(Error::Checkpoint(format!(
            "{failures} parameter groups exceeded the tolerance"
        )));
    }
    Ok(())
}

const METRIC_COLUMNS: [(&str, fn(&EvalReport) -> Option<f64>); 7] = [
    ("accuracy", |r| r.accuracy),
    ("recall_macro", |r| r.recall_macro),
    ("precision_macro", |r| r.precision_macro),
    ("f1_macro", |r| r.f1_macro),
    ("mean_iou", |r| r.mean_iou),
    ("bleu", |r| r.bleu),
    ("rouge_l", |r| r.rouge_l),
];

pub fn cmd_report(args: ReportArgs) -> Result<()> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Error::io(args.input.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == EvalReport::CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::ReportCsv {
                line: 1,
                message: format!("unexpected header '{header}'"),
            })
        }
        None => {
            return Err(Error::ReportCsv {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(EvalReport::from_csv_row(line, i + 1)?);
    }
    if rows.is_empty() {
        return Err(Error::ReportCsv {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let mut md = String::new();
    md.push_str("| Model | Accuracy | Recall (macro) | Precision (macro) | F1 (macro) | Mean IoU | BLEU | ROUGE-L |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    let cell = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "NA".into(),
    };
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.model_name,
            cell(r.accuracy),
            cell(r.recall_macro),
            cell(r.precision_macro),
            cell(r.f1_macro),
            cell(r.mean_iou),
            cell(r.bleu),
            cell(r.rouge_l),
        ));
    }
    std::fs::write(&args.out_md, md).map_err(|e| Error::io(args.out_md.display().to_string(), e))?;

    let mut output_paths = vec![args.out_md.display().to_string()];
    if let Some(svg_path) = &args.out_svg {
        let svg = render_svg_chart(&rows);
        std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path.display().to_string(), e))?;
        output_paths.push(svg_path.display().to_string());
    }

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| suffixed(&args.out_md, ".manifest.json"));
    RunManifest {
        command: "report".into(),
        config: serde_json::Value::Null,
        seed: 0,
        corpus_paths: vec![args.input.display().to_string()],
        checkpoint_path: None,
        output_paths,
        duration_ms: started.elapsed().as_millis(),
        created_unix_ms: now_unix_ms(),
    }
    .write(&manifest_path)?;
    println!("wrote {} ({} rows)", args.out_md.display(), rows.len());
    Ok(())
}

/// Grouped bar chart: one group per metric, one bar per model.
pub fn render_svg_chart(rows: &[EvalReport]) -> String {
    const PALETTE: [&str; 6] = ["#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c"];
    let n_models = rows.len();
    let bar_w = 16.0;
    let group_gap = 28.0;
    let group_w = n_models as f64 * bar_w + group_gap;
    let plot_h = 220.0;
    let left = 50.0;
    let top = 30.0;
    let legend_h = 18.0 * n_models as f64 + 10.0;
    let width = left + METRIC_COLUMNS.len() as f64 * group_w + 20.0;
    let height = top + plot_h + 60.0 + legend_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str("<style>text{font-family:sans-serif;font-size:11px;}</style>\n");
    // Axis and gridlines.
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = top + plot_h * (1.0 - v);
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            width - 15.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>\n",
            left - 6.0,
            y + 4.0
        ));
    }
    for (gi, (metric, get)) in METRIC_COLUMNS.iter().enumerate() {
        let gx = left + gi as f64 * group_w + group_gap / 2.0;
        svg.push_str(&format!("<g id=\"metric-{metric}\">\n"));
        for (mi, row) in rows.iter().enumerate() {
            if let Some(v) = get(row) {
                let h = plot_h * v.clamp(0.0, 1.0);
                let x = gx + mi as f64 * bar_w;
                let y = top + plot_h - h;
                svg.push_str(&format!(
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"/>\n",
                    bar_w - 2.0,
                    PALETTE[mi % PALETTE.len()]
                ));
            }
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{metric}</text>\n",
            gx + n_models as f64 * bar_w / 2.0,
            top + plot_h + 16.0
        ));
        svg.push_str("</g>\n");
    }
    // Legend.
    for (mi, row) in rows.iter().enumerate() {
        let y = top + plot_h + 40.0 + mi as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{left}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            y - 10.0,
            PALETTE[mi % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{y:.1}\">{}</text>\n",
            left + 18.0,
            row.model_name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn gen_args(out: PathBuf, cases: usize, seed: u64) -> GenDataArgs {
        GenDataArgs {
            out,
            cases,
            grid: 8,
            mask_grid: 2,
            noise: 0.0,
            distractors: 3,
            seed,
        }
    }

    #[test]
    fn gen_data_writes_split_files_deterministically() {
        let d = dir();
        let out_a = d.path().join("a");
        let out_b = d.path().join("b");
        cmd_gen_data(gen_args(out_a.clone(), 100, 42)).unwrap();
        cmd_gen_data(gen_args(out_b.clone(), 100, 42)).unwrap();
        for name in ["train.jsonl", "val.jsonl", "test.jsonl"] {
            let a = std::fs::read(out_a.join(name)).unwrap();
            let b = std::fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let train = std::fs::read_to_string(out_a.join("train.jsonl")).unwrap();
        assert_eq!(train.lines().count(), 70);
        assert_eq!(
            std::fs::read_to_string(out_a.join("val.jsonl")).unwrap().lines().count(),
            15
        );
        assert_eq!(
            std::fs::read_to_string(out_a.join("test.jsonl")).unwrap().lines().count(),
            15
        );
        assert!(out_a.join("manifest.json").exists());
    }

    #[test]
    fn gen_data_rejects_bad_flags() {
        let d = dir();
        let err = cmd_gen_data(gen_args(d.path().join("x"), 0, 1)).unwrap_err();
        assert!(err.to_string().contains("--cases"), "{err}");
        assert_eq!(err.exit_code(), 2);

        let mut args = gen_args(d.path().join("x"), 10, 1);
        args.grid = 9;
        let err = cmd_gen_data(args).unwrap_err();
        assert!(err.to_string().contains("--grid"), "{err}");

        let mut args = gen_args(d.path().join("x"), 10, 1);
        args.mask_grid = 3;
        let err = cmd_gen_data(args).unwrap_err();
        assert!(err.to_string().contains("--mask-grid"), "{err}");
    }

    fn train_args(data: PathBuf, out: PathBuf, epochs: usize) -> TrainArgs {
        TrainArgs {
            data,
            config: tiny_config_file(),
            modality: Some("both".into()),
            fusion: Some("gated".into()),
            epochs: Some(epochs),
            seed: Some(7),
            out,
            out_losses: None,
            manifest: None,
        }
    }

    /// Tiny config written once to a temp file shared by the tests.
    fn tiny_config_file() -> Option<PathBuf> {
        let path = std::env::temp_dir().join("medfuse-test-tiny-config.json");
        let cfg = crate::model::ModelConfig {
            vocab_size: crate::synthdata::Vocab::corpus_default().len(),
            ..crate::model::ModelConfig::tiny()
        };
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        Some(path)
    }

    #[test]
    fn train_and_eval_round_trip() {
        let d = dir();
        let data_dir = d.path().join("data");
        cmd_gen_data(gen_args(data_dir.clone(), 20, 3)).unwrap();
        let ckpt = d.path().join("model.ckpt.json");
        cmd_train(train_args(data_dir.join("train.jsonl"), ckpt.clone(), 2)).unwrap();
        assert!(ckpt.exists());
        let losses = std::fs::read_to_string(format!("{}.loss.csv", ckpt.display())).unwrap();
        let mut lines = losses.lines();
        assert_eq!(lines.next(), Some("epoch,mean_loss"));
        assert_eq!(lines.count(), 2);

        // Identical flags produce an identical loss CSV.
        let ckpt2 = d.path().join("model2.ckpt.json");
        cmd_train(train_args(data_dir.join("train.jsonl"), ckpt2.clone(), 2)).unwrap();
        assert_eq!(
            std::fs::read(format!("{}.loss.csv", ckpt.display())).unwrap(),
            std::fs::read(format!("{}.loss.csv", ckpt2.display())).unwrap()
        );

        let out_csv = d.path().join("report.csv");
        let eval_args = |tasks: &str| EvalArgs {
            data: data_dir.join("test.jsonl"),
            ckpt: ckpt.clone(),
            tasks: tasks.into(),
            out: out_csv.clone(),
            name: None,
            manifest: None,
        };
        cmd_eval(eval_args("classify,localize,generate")).unwrap();
        let text = std::fs::read_to_string(&out_csv).unwrap();
        assert_eq!(text.lines().count(), 2); // header + 1 row
        assert!(text.lines().nth(1).unwrap().starts_with("both-gated,"));

        // Appends exactly one row per invocation; partial tasks emit NA.
        cmd_eval(eval_args("classify")).unwrap();
        let text = std::fs::read_to_string(&out_csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with("NA,NA,NA"));

        // Unknown task is a usage error.
        let err = cmd_eval(eval_args("classify,nope")).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        // Report rendering.
        let md = d.path().join("table.md");
        let svg = d.path().join("chart.svg");
        cmd_report(ReportArgs {
            input: out_csv.clone(),
            out_md: md.clone(),
            out_svg: Some(svg.clone()),
            manifest: None,
        })
        .unwrap();
        let md_text = std::fs::read_to_string(&md).unwrap();
        assert_eq!(md_text.lines().count(), 4); // header + separator + 2 rows
        let svg_text = std::fs::read_to_string(&svg).unwrap();
        assert!(svg_text.starts_with("<svg"));
        assert_eq!(svg_text.matches("<g id=\"metric-").count(), 7);
    }

    #[test]
    fn train_rejects_unknown_fusion_and_missing_data() {
        let d = dir();
        let data_dir = d.path().join("data");
        cmd_gen_data(gen_args(data_dir.clone(), 10, 3)).unwrap();
        let mut args = train_args(data_dir.join("train.jsonl"), d.path().join("m.json"), 1);
        args.fusion = Some("nope".into());
        let err = cmd_train(args).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gated"), "{err}");

        let args = train_args(d.path().join("missing.jsonl"), d.path().join("m.json"), 1);
        let err = cmd_train(args).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn report_errors_name_line_numbers() {
        let d = dir();
        let input = d.path().join("in.csv");
        std::fs::write(&input, format!("{}\n", EvalReport::CSV_HEADER)).unwrap();
        let err = cmd_report(ReportArgs {
            input: input.clone(),
            out_md: d.path().join("out.md"),
            out_svg: None,
            manifest: None,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("no data rows"), "{err}");

        std::fs::write(&input, format!("{}\nbad,row\n", EvalReport::CSV_HEADER)).unwrap();
        let err = cmd_report(ReportArgs {
            input,
            out_md: d.path().join("out.md"),
            out_svg: None,
            manifest: None,
        })
        .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn gradcheck_impossible_tolerance_fails_with_runtime_code() {
        let err = cmd_gradcheck(GradcheckArgs {
            tol: 0.0,
            eps: 1e-5,
            seeds: 1,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
