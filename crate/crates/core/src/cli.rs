//! Command-line front end. Every command is a plain function returning a
//! [`Report`]; the `stcl` binary only prints it and maps errors to exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::Config;
use crate::data::{histogram, load_corpus, Checkpoint, Corpus, CorpusSource, Image, TrainingLog};
use crate::difficulty::{partition, scoring_payload, DifficultyManifest, Label, TeacherLadder};
use crate::error::{Error, Result};
use crate::knee::{scan_knee, write_difference_csv, KneeParams};
use crate::metrics::{self, MetricReport};
use crate::model::{ModelConfig, StegoNet};
use crate::schedule::{run_baseline, run_curriculum, run_subset, Pool};
use crate::steganalysis::{score_corpus, train_detector, Detector, DetectorConfig};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format v1)");

/// Exit status of `detect-knee` when the series has no knee.
pub const NO_KNEE_EXIT: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "stcl", version = VERSION, about = "Curriculum training for image steganography")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat JSON config; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model and training seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus generation and split seed (default 0).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Image directory, or `synthetic` / `synthetic:N` (default synthetic:200).
    #[arg(long, visible_alias = "covers")]
    pub corpus: Option<String>,
    /// Square image side in pixels (default 32).
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Payload bits per pixel (default 1).
    #[arg(long)]
    pub payload_depth: Option<usize>,
    /// Hidden conv width (default 32).
    #[arg(long)]
    pub hidden_channels: Option<usize>,
    /// Curriculum epoch budget (default 120).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stcl,
    Baseline,
    Subset,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the teacher ladder used for difficulty scoring.
    TrainTeachers {
        #[command(flatten)]
        common: Common,
        /// Output directory for teacher checkpoints and logs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the corpus with a teacher ladder and write the difficulty manifest.
    Partition {
        #[command(flatten)]
        common: Common,
        /// Directory written by train-teachers.
        #[arg(long)]
        teachers: PathBuf,
        /// Manifest CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a stego model: staged curriculum, plain baseline or one subset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "stcl")]
        mode: Mode,
        /// Subset for --mode subset: easy, medium, hard, easy+medium.
        #[arg(long)]
        subset: Option<String>,
        /// Difficulty manifest from `partition`; needed by stcl and subset modes.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Epochs for baseline and subset runs (default max_iter).
        #[arg(long)]
        epochs: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a checkpoint on the test split, overall and per label.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Adds per-label rows to the report.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report CSV; the histogram CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Detector scores of stego images produced by one or more checkpoints.
    Steganalyze {
        #[command(flatten)]
        common: Common,
        /// Trained detector checkpoint; one is trained when absent.
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Stego model checkpoints to score; repeatable.
        #[arg(long = "stego-model", required = true)]
        stego_models: Vec<PathBuf>,
        /// Model whose stegos train the detector (default: first --stego-model).
        #[arg(long)]
        train_model: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline knee detection on a saved training log column.
    DetectKnee {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "val_loss")]
        column: String,
        /// Restrict to one stage of the log.
        #[arg(long)]
        stage: Option<usize>,
        /// Knee parameters as inline JSON or a JSON file path.
        #[arg(long)]
        params: Option<String>,
        /// Difference-curve CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

/// What a command printed and how it wants to exit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
}

impl Report {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

#[derive(Debug, Serialize)]
struct RunDescriptor<'a> {
    command: &'a str,
    config_path: Option<&'a Path>,
    seed: u64,
    out: &'a Path,
    overrides: BTreeMap<&'static str, String>,
}

impl Common {
    fn overrides(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        let mut put = |k, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k, v);
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("data_seed", self.data_seed.map(|v| v.to_string()));
        put("corpus", self.corpus.clone());
        put("image_size", self.image_size.map(|v| v.to_string()));
        put("payload_depth", self.payload_depth.map(|v| v.to_string()));
        put("hidden_channels", self.hidden_channels.map(|v| v.to_string()));
        put("max_iter", self.max_iter.map(|v| v.to_string()));
        m
    }

    /// Config file with flags applied on top.
    pub fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.data_seed {
            cfg.data_seed = v;
        }
        if let Some(spec) = &self.corpus {
            match parse_corpus(spec, cfg.synthetic_images)? {
                CorpusSource::Directory(d) => cfg.corpus_dir = Some(d),
                CorpusSource::Synthetic { n } => {
                    cfg.corpus_dir = None;
                    cfg.synthetic_images = n;
                }
            }
        }
        if let Some(v) = self.image_size {
            cfg.image_height = v;
            cfg.image_width = v;
        }
        if let Some(v) = self.payload_depth {
            cfg.payload_depth = v;
        }
        if let Some(v) = self.hidden_channels {
            cfg.hidden_channels = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn descriptor<'a>(&'a self, command: &'a str, cfg: &Config, out: &'a Path) -> RunDescriptor<'a> {
        RunDescriptor {
            command,
            config_path: self.config.as_deref(),
            seed: cfg.seed,
            out,
            overrides: self.overrides(),
        }
    }
}

fn parse_corpus(spec: &str, default_n: usize) -> Result<CorpusSource> {
    if spec == "synthetic" {
        return Ok(CorpusSource::Synthetic { n: default_n });
    }
    if let Some(n) = spec.strip_prefix("synthetic:") {
        let n = n
            .parse()
            .map_err(|_| Error::Invalid(format!("bad synthetic corpus size in {spec:?}")))?;
        return Ok(CorpusSource::Synthetic { n });
    }
    Ok(CorpusSource::Directory(PathBuf::from(spec)))
}

fn corpus_for(cfg: &Config) -> Result<Corpus> {
    load_corpus(&cfg.corpus_source(), (cfg.image_height, cfg.image_width), cfg.data_seed)
}

/// Creates `dir`, refusing a non-empty existing one unless forced.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::Invalid(format!(
                "{} already exists and is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn prepare_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Invalid(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_run_files(dir: &Path, cfg: &Config, desc: &RunDescriptor) -> Result<()> {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("run.json"), desc)
}

fn load_model(path: &Path, seed: u64) -> Result<StegoNet<f32>> {
    let ck = Checkpoint::load(path)?;
    let config = ModelConfig::from_echo(&ck.config_echo, seed)?;
    StegoNet::from_checkpoint(&ck, &config).map_err(|e| match e {
        Error::Checkpoint { source, .. } => Error::Checkpoint {
            path: path.to_path_buf(),
            source,
        },
        e => e,
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(cli: Cli) -> Result<Report> {
    match cli.command {
        Command::TrainTeachers { common, out } => train_teachers_cmd(&common, &out),
        Command::Partition { common, teachers, out } => partition_cmd(&common, &teachers, &out),
        Command::Train {
            common,
            mode,
            subset,
            manifest,
            epochs,
            out,
        } => train_cmd(&common, mode, subset.as_deref(), manifest.as_deref(), epochs, &out),
        Command::Evaluate {
            common,
            checkpoint,
            manifest,
            out,
        } => evaluate_cmd(&common, &checkpoint, manifest.as_deref(), &out),
        Command::Steganalyze {
            common,
            detector,
            stego_models,
            train_model,
            out,
        } => steganalyze_cmd(&common, detector.as_deref(), &stego_models, train_model.as_deref(), &out),
        Command::DetectKnee {
            log,
            column,
            stage,
            params,
            out,
            force,
        } => detect_knee_cmd(&log, &column, stage, params.as_deref(), out.as_deref(), force),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, S>(args: I) -> Result<Report>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Invalid(e.to_string()))?;
    run(cli)
}

fn train_teachers_cmd(common: &Common, out: &Path) -> Result<Report> {
    let cfg = common.resolve()?;
    prepare_dir(out, common.force)?;
    let corpus = corpus_for(&cfg)?;
    let ladder = TeacherLadder::train(
        &corpus,
        &cfg.model(),
        &cfg.train(),
        &cfg.teacher_budgets,
        cfg.convergence_budget,
    )?;
    ladder.save(out)?;
    for (j, log) in ladder.logs.iter().enumerate() {
        log.write(&out.join(format!("teacher_{}_log.csv", j + 1)))?;
    }
    write_run_files(out, &cfg, &common.descriptor("train-teachers", &cfg, out))?;
    let mut r = Report::default();
    for (j, (t, b)) in ladder.teachers.iter().zip(&ladder.budgets).enumerate() {
        r.line(format!("teacher {} ({b} epochs): {}", j + 1, t.fingerprint()));
    }
    r.line(format!("ladder fingerprint {}", ladder.fingerprint()));
    Ok(r)
}

fn partition_cmd(common: &Common, teachers: &Path, out: &Path) -> Result<Report> {
    let cfg = common.resolve()?;
    prepare_file(out, common.force)?;
    let corpus = corpus_for(&cfg)?;
    let ladder = TeacherLadder::load(teachers, &cfg.model())?;
    let manifest = partition(
        &corpus,
        &ladder.teachers,
        &ladder.fingerprint(),
        &cfg.thresholds(),
        cfg.scoring_seed,
        cfg.payload_depth,
    )?;
    manifest.write(out)?;
    let mut r = Report::default();
    r.line(format!("subset sizes: {}", manifest.sizes()));
    let mut by_family: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for (s, e) in corpus.samples.iter().zip(&manifest.entries) {
        if let Some(f) = s.family {
            by_family.entry(f.name()).or_default()[e.label as usize] += 1;
        }
    }
    for (family, [easy, medium, hard]) in by_family {
        r.line(format!("  {family}: easy={easy} medium={medium} hard={hard}"));
    }
    r.line(format!("manifest fingerprint {}", manifest.fingerprint()?));
    Ok(r)
}

fn train_cmd(
    common: &Common,
    mode: Mode,
    subset: Option<&str>,
    manifest_path: Option<&Path>,
    epochs: Option<usize>,
    out: &Path,
) -> Result<Report> {
    let cfg = common.resolve()?;
    let mut r = Report::default();
    let manifest = match (mode, manifest_path) {
        (Mode::Baseline, Some(_)) => {
            r.warnings.push("--manifest is ignored in baseline mode".into());
            None
        }
        (Mode::Baseline, None) => None,
        (_, Some(p)) => Some(DifficultyManifest::read(p)?),
        (_, None) => {
            return Err(Error::Invalid(format!(
                "--mode {} needs --manifest",
                if mode == Mode::Stcl { "stcl" } else { "subset" }
            )))
        }
    };
    let pool = match (mode, subset) {
        (Mode::Subset, Some(s)) => Some(Pool::parse(s)?),
        (Mode::Subset, None) => return Err(Error::Invalid("--mode subset needs --subset".into())),
        (_, Some(_)) => {
            r.warnings.push("--subset only applies to --mode subset".into());
            None
        }
        _ => None,
    };
    prepare_dir(out, common.force)?;
    let corpus = corpus_for(&cfg)?;
    let (model, train) = (cfg.model(), cfg.train());
    let budget = epochs.unwrap_or(cfg.max_iter);

    let (net, log) = match mode {
        Mode::Stcl => {
            let manifest = manifest.as_ref().expect("checked above");
            let run = run_curriculum(&corpus, manifest, &cfg.plan(), &model, &train)?;
            for (k, (ck, rep)) in run.stage_checkpoints.iter().zip(&run.reports).enumerate() {
                let stage = k + 1;
                ck.save(&out.join(format!("stage{stage}.ckpt")))?;
                rep.write_summary(&out.join(format!("stage{stage}_knee.csv")))?;
                rep.write_curve(&out.join(format!("stage{stage}_difference.csv")))?;
                let knee = rep.knee_epoch.map_or("none".to_string(), |k| k.to_string());
                let trig = rep.triggered_by.map_or("-".to_string(), |t| t.to_string());
                r.line(format!(
                    "stage {stage}: {} epochs, stopped by {trig}, knee index {knee}",
                    rep.epochs
                ));
            }
            (run.net, run.log)
        }
        Mode::Baseline => {
            let run = run_baseline(&corpus, &model, &train, budget)?;
            (run.net, run.log)
        }
        Mode::Subset => {
            let manifest = manifest.as_ref().expect("checked above");
            let run = run_subset(&corpus, manifest, pool.as_ref().expect("checked above"), &model, &train, budget)?;
            (run.net, run.log)
        }
    };
    net.to_checkpoint().save(&out.join("final.ckpt"))?;
    log.write(&out.join("log.csv"))?;
    write_run_files(out, &cfg, &common.descriptor("train", &cfg, out))?;
    if let Some(last) = log.last() {
        r.line(format!(
            "{} epochs; final val ssim {:.4} psnr {:.2} accuracy {:.4}",
            log.rows.len(),
            last.ssim,
            last.psnr,
            last.accuracy
        ));
    }
    r.line(format!("final fingerprint {}", net.fingerprint()));
    Ok(r)
}

fn fmt_report(name: &str, count: usize, m: Option<&MetricReport>) -> String {
    match m {
        Some(m) => format!(
            "{name},{count},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m.ssim, m.msssim, m.psnr, m.rmse, m.accuracy
        ),
        None => format!("{name},{count},,,,,"),
    }
}

/// Per-sample metrics of `net` on `indices` with the fixed scoring payloads.
pub fn evaluate_split(net: &StegoNet<f32>, corpus: &Corpus, indices: &[usize], scoring_seed: u64) -> Result<Vec<(MetricReport, Image)>> {
    let (h, w) = corpus.image_size;
    indices
        .iter()
        .map(|&i| {
            let cover = &corpus.samples[i].image;
            let payload = scoring_payload(scoring_seed, i, net.config.payload_depth, h, w);
            let stego = net.encode(cover, &payload)?;
            let probs = net.decode(&stego)?;
            Ok((metrics::report(cover, &stego, &probs, &payload.bits)?, stego))
        })
        .collect()
}

fn evaluate_cmd(common: &Common, checkpoint: &Path, manifest_path: Option<&Path>, out: &Path) -> Result<Report> {
    let cfg = common.resolve()?;
    let hist_path = sibling(out, "_histogram.csv");
    prepare_file(out, common.force)?;
    prepare_file(&hist_path, common.force)?;
    let net = load_model(checkpoint, cfg.seed)?;
    if net.config.image_size != (cfg.image_height, cfg.image_width) {
        return Err(Error::Invalid(format!(
            "checkpoint expects {:?} images, config gives {}x{}",
            net.config.image_size, cfg.image_height, cfg.image_width
        )));
    }
    let corpus = corpus_for(&cfg)?;
    let manifest = manifest_path.map(DifficultyManifest::read).transpose()?;
    let test = &corpus.split.test;
    let results = evaluate_split(&net, &corpus, test, cfg.scoring_seed)?;

    let mut csv = String::from("subset,count,ssim,msssim,psnr,rmse,accuracy\n");
    let all: Vec<MetricReport> = results.iter().map(|r| r.0).collect();
    let overall = MetricReport::mean(&all);
    csv += &fmt_report("overall", all.len(), Some(&overall));
    csv.push('\n');
    let mut r = Report::default();
    r.line(format!(
        "overall ({} images): ssim {:.4} msssim {:.4} psnr {:.2} rmse {:.4} accuracy {:.4}",
        all.len(),
        overall.ssim,
        overall.msssim,
        overall.psnr,
        overall.rmse,
        overall.accuracy
    ));
    if let Some(m) = &manifest {
        for label in Label::ALL {
            let picked: Vec<MetricReport> = test
                .iter()
                .zip(&results)
                .filter(|(&i, _)| m.label_of(&corpus.samples[i].id) == Some(label))
                .map(|(_, r)| r.0)
                .collect();
            let mean = (!picked.is_empty()).then(|| MetricReport::mean(&picked));
            csv += &fmt_report(label.as_str(), picked.len(), mean.as_ref());
            csv.push('\n');
            if let Some(mean) = mean {
                r.line(format!(
                    "{label} ({} images): ssim {:.4} psnr {:.2} accuracy {:.4}",
                    picked.len(),
                    mean.ssim,
                    mean.psnr,
                    mean.accuracy
                ));
            }
        }
    }
    std::fs::write(out, csv).map_err(|e| Error::io(out, e))?;

    let mut hist = String::from("set,channel,bin,count\n");
    let covers = corpus.images(test);
    let stegos: Vec<&Image> = results.iter().map(|r| &r.1).collect();
    for (name, set) in [("cover", &covers), ("stego", &stegos)] {
        let mut total = vec![[0u64; 256]; 3];
        for img in set.iter() {
            for (c, bins) in histogram(img).into_iter().enumerate() {
                for (t, b) in total[c].iter_mut().zip(bins) {
                    *t += b;
                }
            }
        }
        for (c, bins) in total.iter().enumerate() {
            for (b, n) in bins.iter().enumerate() {
                hist += &format!("{name},{c},{b},{n}\n");
            }
        }
    }
    std::fs::write(&hist_path, hist).map_err(|e| Error::io(&hist_path, e))?;
    Ok(r)
}

fn steganalyze_cmd(
    common: &Common,
    detector_path: Option<&Path>,
    stego_models: &[PathBuf],
    train_model: Option<&Path>,
    out: &Path,
) -> Result<Report> {
    let cfg = common.resolve()?;
    prepare_dir(out, common.force)?;
    let corpus = corpus_for(&cfg)?;
    let (h, w) = corpus.image_size;
    let embed_all = |net: &StegoNet<f32>, indices: &[usize]| -> Result<Vec<Image>> {
        indices
            .iter()
            .map(|&i| {
                let payload = scoring_payload(cfg.scoring_seed, i, net.config.payload_depth, h, w);
                net.encode(&corpus.samples[i].image, &payload)
            })
            .collect()
    };
    let mut r = Report::default();
    let detector = match detector_path {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let dc = DetectorConfig::from_echo(&ck.config_echo, &cfg.detector())?;
            Detector::from_checkpoint(&ck, &dc)?
        }
        None => {
            let source = train_model.unwrap_or(&stego_models[0]);
            let net = load_model(source, cfg.seed)?;
            let train = &corpus.split.train;
            let stegos = embed_all(&net, train)?;
            let trained = train_detector(
                &corpus.images(train),
                &stegos.iter().collect::<Vec<_>>(),
                &cfg.detector(),
            )?;
            trained.detector.to_checkpoint().save(&out.join("detector.ckpt"))?;
            r.line(format!(
                "trained detector on {} covers + stegos from {}; held-out accuracy {:.4}",
                train.len(),
                source.display(),
                trained.holdout_accuracy
            ));
            trained.detector
        }
    };
    let test = &corpus.split.test;
    let ids: Vec<String> = test.iter().map(|&i| corpus.samples[i].id.clone()).collect();
    let mut summary = String::from("set,mean_score\n");
    let covers = score_corpus(&detector, &ids, &corpus.images(test))?;
    covers.write(&out.join("scores_cover.csv"))?;
    summary += &format!("cover,{:.6}\n", covers.mean);
    r.line(format!("cover: mean score {:.4}", covers.mean));
    let mut names = BTreeMap::new();
    for path in stego_models {
        let net = load_model(path, cfg.seed)?;
        let stegos = embed_all(&net, test)?;
        let report = score_corpus(&detector, &ids, &stegos.iter().collect::<Vec<_>>())?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let n = names.entry(stem.clone()).or_insert(0usize);
        *n += 1;
        let name = if *n == 1 { stem } else { format!("{stem}_{n}") };
        report.write(&out.join(format!("scores_{name}.csv")))?;
        summary += &format!("{name},{:.6}\n", report.mean);
        r.line(format!("{name} ({}): mean score {:.4}", path.display(), report.mean));
    }
    let path = out.join("summary.csv");
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    Ok(r)
}

fn knee_params(spec: Option<&str>) -> Result<KneeParams> {
    let Some(spec) = spec else {
        return Ok(KneeParams::default());
    };
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec).map_err(|e| Error::io(Path::new(spec), e))?
    };
    let p: KneeParams = serde_json::from_str(&text)?;
    p.validate()?;
    Ok(p)
}

fn detect_knee_cmd(
    log: &Path,
    column: &str,
    stage: Option<usize>,
    params: Option<&str>,
    out: Option<&Path>,
    force: bool,
) -> Result<Report> {
    let params = knee_params(params)?;
    if let Some(out) = out {
        prepare_file(out, force)?;
    }
    let log = TrainingLog::read(log)?;
    let series = log.column(column, stage)?;
    let epochs = log.column("epoch", stage)?;
    let scan = scan_knee(&series, &params)?;
    if let Some(out) = out {
        write_difference_csv(out, &scan.smoothed, &scan.difference)?;
    }
    let mut r = Report::default();
    match scan.knee {
        Some(k) => r.line(format!("knee at index {k} (epoch {})", epochs[k])),
        None => {
            r.line(format!("no knee in {} values of {column}", series.len()));
            r.exit_code = NO_KNEE_EXIT;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CHECKPOINT_VERSION;

    #[test]
    fn version_names_checkpoint_format() {
        assert!(VERSION.ends_with(&format!("(checkpoint format v{CHECKPOINT_VERSION})")));
    }

    #[test]
    fn corpus_specs() {
        assert_eq!(parse_corpus("synthetic", 40).unwrap(), CorpusSource::Synthetic { n: 40 });
        assert_eq!(parse_corpus("synthetic:12", 40).unwrap(), CorpusSource::Synthetic { n: 12 });
        assert!(parse_corpus("synthetic:x", 40).is_err());
        assert_eq!(
            parse_corpus("imgs/", 40).unwrap(),
            CorpusSource::Directory("imgs/".into())
        );
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 4, "hidden_channels": 8}"#).unwrap();
        let common = Common {
            config: Some(path),
            seed: Some(9),
            data_seed: None,
            corpus: Some("synthetic:20".into()),
            image_size: None,
            payload_depth: None,
            hidden_channels: None,
            max_iter: None,
            force: false,
        };
        let cfg = common.resolve().unwrap();
        assert_eq!((cfg.seed, cfg.hidden_channels, cfg.synthetic_images), (9, 8, 20));
    }

    #[test]
    fn out_dir_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "1").unwrap();
        assert!(matches!(prepare_dir(dir.path(), false), Err(Error::Invalid(_))));
        prepare_dir(dir.path(), true).unwrap();
    }
}
