//! Teacher ladder, per-sample difficulty scores and the Easy/Medium/Hard
//! partition of a corpus.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{gen_payload, Checkpoint, Corpus, Image, LogRow, Payload, TrainingLog};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{train_epoch, validation_payloads, ModelConfig, StegoNet, TrainConfig};
use crate::nn::mix_seed;
use crate::tensor::AdamState;

/// SSIM and PSNR cutoffs for labelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// SSIM at or above which a teacher counts as doing well.
    pub alpha1: f64,
    /// SSIM at or below which a teacher counts as struggling.
    pub alpha2: f64,
    /// PSNR (dB) at or above which a teacher counts as doing well.
    pub mu1: f64,
    /// PSNR (dB) at or below which a teacher counts as struggling.
    pub mu2: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            alpha1: 0.9,
            alpha2: 0.8,
            mu1: 20.0,
            mu2: 12.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.mu1, self.mu2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("thresholds must be finite: {all:?}")));
        }
        if self.alpha1 <= self.alpha2 {
            return Err(Error::Invalid(format!(
                "alpha1 ({}) must be greater than alpha2 ({})",
                self.alpha1, self.alpha2
            )));
        }
        if self.mu1 <= self.mu2 {
            return Err(Error::Invalid(format!(
                "mu1 ({}) must be greater than mu2 ({})",
                self.mu1, self.mu2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Easy,
    Medium,
    Hard,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Easy, Label::Medium, Label::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Easy => "easy",
            Label::Medium => "medium",
            Label::Hard => "hard",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Label::Easy),
            "medium" => Ok(Label::Medium),
            "hard" => Ok(Label::Hard),
            other => Err(Error::Data(format!(
                "unknown difficulty label {other:?} (expected easy, medium or hard)"
            ))),
        }
    }
}

/// One SSIM and one PSNR score per teacher.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleScores {
    pub ssim: Vec<f64>,
    pub psnr: Vec<f64>,
}

impl SampleScores {
    pub fn new(ssim: Vec<f64>, psnr: Vec<f64>) -> Result<Self> {
        if ssim.len() != psnr.len() || ssim.is_empty() {
            return Err(Error::Invalid(format!(
                "need one SSIM and one PSNR per teacher, got {} and {}",
                ssim.len(),
                psnr.len()
            )));
        }
        if ssim.iter().chain(&psnr).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("difficulty score is not finite".into()));
        }
        Ok(SampleScores { ssim, psnr })
    }

    pub fn teachers(&self) -> usize {
        self.ssim.len()
    }
}

/// Easy when every teacher clears both high cutoffs, Hard when any teacher
/// falls to a low cutoff, Medium otherwise.
pub fn classify(scores: &SampleScores, t: &Thresholds) -> Label {
    let pairs = || scores.ssim.iter().zip(&scores.psnr);
    if pairs().any(|(&s, &p)| s <= t.alpha2 || p <= t.mu2) {
        Label::Hard
    } else if pairs().all(|(&s, &p)| s >= t.alpha1 && p >= t.mu1) {
        Label::Easy
    } else {
        Label::Medium
    }
}

/// Anything that turns a cover and a payload into a stego image.
pub trait Embedder {
    fn embed(&self, cover: &Image, payload: &Payload) -> Result<Image>;
}

impl Embedder for StegoNet<f32> {
    fn embed(&self, cover: &Image, payload: &Payload) -> Result<Image> {
        self.encode(cover, payload)
    }
}

/// Scores one cover under every teacher with the same payload.
pub fn score_sample<E: Embedder>(cover: &Image, teachers: &[E], payload: &Payload) -> Result<SampleScores> {
    let mut ssim = Vec::with_capacity(teachers.len());
    let mut psnr = Vec::with_capacity(teachers.len());
    for t in teachers {
        let stego = t.embed(cover, payload)?;
        ssim.push(metrics::ssim(cover, &stego)?);
        psnr.push(metrics::psnr(cover, &stego)?);
    }
    SampleScores::new(ssim, psnr)
}

/// Teachers trained for increasing epoch budgets.
#[derive(Debug, Clone)]
pub struct TeacherLadder {
    pub teachers: Vec<StegoNet<f32>>,
    pub budgets: Vec<usize>,
    /// Training logs, one per teacher; empty for a loaded ladder.
    pub logs: Vec<TrainingLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LadderIndex {
    budgets: Vec<usize>,
    fingerprints: Vec<String>,
}

pub const DEFAULT_TEACHER_BUDGETS: [usize; 3] = [5, 15, 30];
pub const DEFAULT_CONVERGENCE_BUDGET: usize = 60;

/// Budgets must be positive, strictly increasing and below the convergence
/// budget.
pub fn validate_budgets(budgets: &[usize], convergence: usize) -> Result<()> {
    if budgets.is_empty() {
        return Err(Error::Invalid("teacher ladder needs at least one budget".into()));
    }
    if budgets[0] == 0 {
        return Err(Error::Invalid("teacher budgets must be positive".into()));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(format!(
            "teacher budgets must be strictly increasing, got {budgets:?}"
        )));
    }
    let last = *budgets.last().expect("non-empty");
    if last >= convergence {
        return Err(Error::Invalid(format!(
            "teacher budget {last} must be below the convergence budget {convergence}"
        )));
    }
    Ok(())
}

impl TeacherLadder {
    /// Trains one teacher per budget, each from its own seeded
    /// initialization, on the training split of `corpus`.
    pub fn train(
        corpus: &Corpus,
        model: &ModelConfig,
        train: &TrainConfig,
        budgets: &[usize],
        convergence: usize,
    ) -> Result<TeacherLadder> {
        validate_budgets(budgets, convergence)?;
        if corpus.split.train.is_empty() || corpus.split.val.is_empty() {
            return Err(Error::Data("corpus has an empty training or validation split".into()));
        }
        let val = validation_payloads(&corpus.split.val, model, train.seed);
        let mut teachers = Vec::with_capacity(budgets.len());
        let mut logs = Vec::with_capacity(budgets.len());
        for (j, &budget) in budgets.iter().enumerate() {
            let mut log = TrainingLog::default();
            let seed = mix_seed(model.seed, 0x7EAC_4E00 + j as u64);
            let cfg = ModelConfig { seed, ..model.clone() };
            let tc = TrainConfig { seed, ..train.clone() };
            let mut net = StegoNet::new(&cfg)?;
            let mut adam = AdamState::new();
            for epoch in 0..budget {
                let out = train_epoch(
                    &mut net,
                    &mut adam,
                    corpus,
                    &corpus.split.train,
                    (&corpus.split.val, &val),
                    &tc,
                    epoch as u64,
                )?;
                log.push(LogRow {
                    epoch: epoch + 1,
                    stage: 0,
                    train_loss: out.train_loss,
                    val_loss: out.val_loss,
                    ssim: out.report.ssim,
                    msssim: out.report.msssim,
                    psnr: out.report.psnr,
                    rmse: out.report.rmse,
                    accuracy: out.report.accuracy,
                });
                log::info!(
                    "teacher {} epoch {}/{budget}: val_loss {:.4} psnr {:.2}",
                    j + 1,
                    epoch + 1,
                    out.val_loss,
                    out.report.psnr
                );
            }
            // seed is not part of the architecture echo, so drop it back to the shared one
            net.config.seed = model.seed;
            teachers.push(net);
            logs.push(log);
        }
        Ok(TeacherLadder {
            teachers,
            budgets: budgets.to_vec(),
            logs,
        })
    }

    pub fn fingerprint(&self) -> String {
        let mut h = crc32fast::Hasher::new();
        for t in &self.teachers {
            h.update(t.fingerprint().as_bytes());
        }
        format!("{:08x}", h.finalize())
    }

    /// Writes `teacher_<j>.ckpt` files and a `ladder.json` index into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (j, t) in self.teachers.iter().enumerate() {
            t.to_checkpoint().save(&dir.join(format!("teacher_{}.ckpt", j + 1)))?;
        }
        let index = LadderIndex {
            budgets: self.budgets.clone(),
            fingerprints: self.teachers.iter().map(|t| t.fingerprint()).collect(),
        };
        let path = dir.join("ladder.json");
        let text = serde_json::to_string_pretty(&index)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, model: &ModelConfig) -> Result<TeacherLadder> {
        let path = dir.join("ladder.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: LadderIndex = serde_json::from_str(&text)?;
        let mut teachers = Vec::with_capacity(index.budgets.len());
        for j in 0..index.budgets.len() {
            let ck_path = dir.join(format!("teacher_{}.ckpt", j + 1));
            let ck = Checkpoint::load(&ck_path)?;
            let net = StegoNet::from_checkpoint(&ck, model).map_err(|e| match e {
                Error::Checkpoint { source, .. } => Error::Checkpoint {
                    path: ck_path.clone(),
                    source,
                },
                e => e,
            })?;
            if index.fingerprints.get(j) != Some(&net.fingerprint()) {
                return Err(Error::Data(format!(
                    "{} does not match the fingerprint recorded in ladder.json",
                    ck_path.display()
                )));
            }
            teachers.push(net);
        }
        Ok(TeacherLadder {
            teachers,
            budgets: index.budgets,
            logs: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: Label,
    pub scores: SampleScores,
}

/// Number of samples per label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SubsetSizes {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl fmt::Display for SubsetSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "easy={} medium={} hard={}", self.easy, self.medium, self.hard)
    }
}

/// Labelled scores for a whole corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyManifest {
    pub entries: Vec<ManifestEntry>,
    pub thresholds: Thresholds,
    pub ladder_fingerprint: String,
    pub payload_seed: u64,
}

/// Per-sample scoring payload.
pub fn scoring_payload(payload_seed: u64, sample: usize, depth: usize, h: usize, w: usize) -> Payload {
    gen_payload(mix_seed(payload_seed, 0x5C0E_0000 + sample as u64), depth, h, w)
}

/// Scores and labels every sample of `corpus`. Fails when no sample is Easy.
pub fn partition<E: Embedder>(
    corpus: &Corpus,
    teachers: &[E],
    ladder_fingerprint: &str,
    thresholds: &Thresholds,
    payload_seed: u64,
    payload_depth: usize,
) -> Result<DifficultyManifest> {
    thresholds.validate()?;
    if corpus.is_empty() {
        return Err(Error::Data("cannot partition an empty corpus".into()));
    }
    if teachers.is_empty() {
        return Err(Error::Invalid("no teachers to score with".into()));
    }
    let (h, w) = corpus.image_size;
    let entries = corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let payload = scoring_payload(payload_seed, i, payload_depth, h, w);
            let scores = score_sample(&s.image, teachers, &payload)?;
            Ok(ManifestEntry {
                id: s.id.clone(),
                path: s.path.clone(),
                label: classify(&scores, thresholds),
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DifficultyManifest {
        entries,
        thresholds: *thresholds,
        ladder_fingerprint: ladder_fingerprint.to_string(),
        payload_seed,
    };
    if manifest.sizes().easy == 0 {
        return Err(Error::Invalid(format!(
            "no sample is Easy under alpha1={} mu1={} ({}); lower alpha1 or mu1, or train the teachers longer",
            thresholds.alpha1,
            thresholds.mu1,
            manifest.sizes()
        )));
    }
    Ok(manifest)
}

impl DifficultyManifest {
    /// Relabels existing scores under new thresholds.
    pub fn relabel(&self, thresholds: &Thresholds) -> Result<DifficultyManifest> {
        thresholds.validate()?;
        let mut out = self.clone();
        out.thresholds = *thresholds;
        for e in &mut out.entries {
            e.label = classify(&e.scores, thresholds);
        }
        Ok(out)
    }

    pub fn sizes(&self) -> SubsetSizes {
        let mut s = SubsetSizes::default();
        for e in &self.entries {
            match e.label {
                Label::Easy => s.easy += 1,
                Label::Medium => s.medium += 1,
                Label::Hard => s.hard += 1,
            }
        }
        s
    }

    pub fn label_of(&self, id: &str) -> Option<Label> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.label)
    }

    /// `id,path,label,s1,p1,...` with scores at six decimals.
    pub fn to_csv(&self) -> Result<String> {
        let teachers = self.entries.first().map_or(0, |e| e.scores.teachers());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "path".into(), "label".into()];
        for j in 1..=teachers {
            header.push(format!("s{j}"));
            header.push(format!("p{j}"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for e in &self.entries {
            if e.scores.teachers() != teachers {
                return Err(Error::Invalid(format!(
                    "sample {} has {} teacher scores, expected {teachers}",
                    e.id,
                    e.scores.teachers()
                )));
            }
            let mut row = vec![e.id.clone(), e.path.clone(), e.label.to_string()];
            for (s, p) in e.scores.ssim.iter().zip(&e.scores.psnr) {
                row.push(format!("{s:.6}"));
                row.push(format!("{p:.6}"));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Hash over the manifest rows and everything that produced them.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = crc32fast::Hasher::new();
        h.update(self.to_csv()?.as_bytes());
        let t = &self.thresholds;
        for v in [t.alpha1, t.alpha2, t.mu1, t.mu2] {
            h.update(&v.to_le_bytes());
        }
        h.update(self.ladder_fingerprint.as_bytes());
        h.update(&self.payload_seed.to_le_bytes());
        Ok(format!("{:08x}", h.finalize()))
    }

    /// Writes the CSV and a `<name>.meta.json` sidecar with the thresholds,
    /// ladder fingerprint and payload seed.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))?;
        let meta = ManifestMeta {
            thresholds: self.thresholds,
            ladder_fingerprint: self.ladder_fingerprint.clone(),
            payload_seed: self.payload_seed,
            fingerprint: self.fingerprint()?,
        };
        let meta_path = meta_path(path);
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    /// Reads a manifest CSV; the sidecar is used when present.
    pub fn read(path: &Path) -> Result<DifficultyManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = Self::parse_csv(&text)?;
        let meta_path = meta_path(path);
        if meta_path.exists() {
            let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let meta: ManifestMeta = serde_json::from_str(&text)?;
            manifest.thresholds = meta.thresholds;
            manifest.ladder_fingerprint = meta.ladder_fingerprint;
            manifest.payload_seed = meta.payload_seed;
        }
        Ok(manifest)
    }

    pub fn parse_csv(text: &str) -> Result<DifficultyManifest> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 5 || cols[..3] != ["id", "path", "label"] || cols.len() % 2 == 0 {
            return Err(Error::Data(format!(
                "manifest header must be id,path,label,s1,p1,..., got {}",
                cols.join(",")
            )));
        }
        let teachers = (cols.len() - 3) / 2;
        for j in 0..teachers {
            if cols[3 + 2 * j] != format!("s{}", j + 1) || cols[4 + 2 * j] != format!("p{}", j + 1) {
                return Err(Error::Data(format!("unexpected manifest column {}", cols[3 + 2 * j])));
            }
        }
        let mut entries = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|_| {
                    Error::Data(format!("manifest row {}: bad number {:?}", line + 2, &rec[k]))
                })
            };
            let mut ssim = Vec::with_capacity(teachers);
            let mut psnr = Vec::with_capacity(teachers);
            for j in 0..teachers {
                ssim.push(num(3 + 2 * j)?);
                psnr.push(num(4 + 2 * j)?);
            }
            entries.push(ManifestEntry {
                id: rec[0].to_string(),
                path: rec[1].to_string(),
                label: rec[2].parse()?,
                scores: SampleScores::new(ssim, psnr)?,
            });
        }
        Ok(DifficultyManifest {
            entries,
            thresholds: Thresholds::default(),
            ladder_fingerprint: String::new(),
            payload_seed: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestMeta {
    thresholds: Thresholds,
    ladder_fingerprint: String,
    payload_seed: u64,
    fingerprint: String,
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}
