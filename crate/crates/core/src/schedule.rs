//! Staged curriculum training and the single-pool baselines it is compared
//! against.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{Checkpoint, Corpus, LogRow, TrainingLog};
use crate::difficulty::{DifficultyManifest, Label};
use crate::error::{Error, Result};
use crate::knee::{scan_knee, KneeParams, KneeReport, StopTrigger};
use crate::model::{train_epoch, validation_payloads, EpochOutcome, ModelConfig, StegoNet, TrainConfig};
use crate::tensor::AdamState;

/// Which training samples a stage draws from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Easy,
    EasyMedium,
    /// The whole training split, labelled or not.
    Full,
    Labels(BTreeSet<Label>),
}

impl Pool {
    pub fn labels(&self) -> BTreeSet<Label> {
        match self {
            Pool::Easy => [Label::Easy].into(),
            Pool::EasyMedium => [Label::Easy, Label::Medium].into(),
            Pool::Full => Label::ALL.into(),
            Pool::Labels(set) => set.clone(),
        }
    }

    /// Parses `easy`, `medium`, `hard`, `easy+medium`, `full`, ...
    pub fn parse(s: &str) -> Result<Pool> {
        match s.trim() {
            "full" | "all" => return Ok(Pool::Full),
            "easy" => return Ok(Pool::Easy),
            "easy+medium" => return Ok(Pool::EasyMedium),
            _ => {}
        }
        let set = s
            .split('+')
            .map(|p| p.parse::<Label>())
            .collect::<Result<BTreeSet<_>>>()
            .map_err(|_| Error::Invalid(format!("unknown subset {s:?}")))?;
        Ok(Pool::Labels(set))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Knee(KneeParams),
    Converge { patience: usize, min_delta: f64 },
}

impl StopRule {
    pub fn converge_default() -> StopRule {
        StopRule::Converge {
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicy {
    pub pool: Pool,
    pub stop_rule: StopRule,
    pub epoch_cap: usize,
}

impl StagePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_cap == 0 {
            return Err(Error::Invalid("stage epoch cap must be positive".into()));
        }
        match self.stop_rule {
            StopRule::Knee(p) => {
                p.validate()?;
                if p.min_epochs >= self.epoch_cap {
                    return Err(Error::Invalid(format!(
                        "knee min_epochs ({}) must be below the stage cap ({})",
                        p.min_epochs, self.epoch_cap
                    )));
                }
            }
            StopRule::Converge { patience, min_delta } => {
                if patience == 0 || !(min_delta >= 0.0) {
                    return Err(Error::Invalid(format!(
                        "converge rule needs patience > 0 and min_delta >= 0, got {patience} and {min_delta}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub stages: Vec<StagePolicy>,
    pub total_budget: usize,
}

impl Default for CurriculumPlan {
    fn default() -> Self {
        CurriculumPlan::three_stage(KneeParams::default(), [40, 40, 40], StopRule::converge_default(), 120)
    }
}

impl CurriculumPlan {
    /// Easy to knee, Easy+Medium to knee, then the full split under `last`.
    pub fn three_stage(knee: KneeParams, caps: [usize; 3], last: StopRule, total_budget: usize) -> Self {
        CurriculumPlan {
            stages: vec![
                StagePolicy {
                    pool: Pool::Easy,
                    stop_rule: StopRule::Knee(knee),
                    epoch_cap: caps[0],
                },
                StagePolicy {
                    pool: Pool::EasyMedium,
                    stop_rule: StopRule::Knee(knee),
                    epoch_cap: caps[1],
                },
                StagePolicy {
                    pool: Pool::Full,
                    stop_rule: last,
                    epoch_cap: caps[2],
                },
            ],
            total_budget,
        }
    }

    /// Same plan with every knee-stopped stage switched to `rule`.
    pub fn with_knees_replaced(&self, rule: StopRule) -> Self {
        let mut plan = self.clone();
        for s in &mut plan.stages {
            if matches!(s.stop_rule, StopRule::Knee(_)) {
                s.stop_rule = rule;
            }
        }
        plan
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Invalid("curriculum has no stages".into()));
        }
        for s in &self.stages {
            s.validate()?;
        }
        for w in self.stages.windows(2) {
            if !w[0].pool.labels().is_subset(&w[1].pool.labels()) {
                return Err(Error::Invalid(format!(
                    "stage pools must grow: {:?} is not contained in {:?}",
                    w[0].pool, w[1].pool
                )));
            }
        }
        let caps: usize = self.stages.iter().map(|s| s.epoch_cap).sum();
        if caps > self.total_budget {
            return Err(Error::Invalid(format!(
                "stage caps add up to {caps}, more than the total budget {}",
                self.total_budget
            )));
        }
        Ok(())
    }
}

/// Whether a stage should end after the epochs in `val_losses`.
#[derive(Debug, Clone, PartialEq)]
pub struct StopDecision {
    pub stop: bool,
    pub report: KneeReport,
}

/// Applies a stage's stop rule to the validation losses seen so far in that
/// stage.
pub fn should_stop_stage(val_losses: &[f64], policy: &StagePolicy) -> Result<StopDecision> {
    let epochs = val_losses.len();
    let mut report = KneeReport {
        epochs,
        smoothed: val_losses.to_vec(),
        ..KneeReport::default()
    };
    match policy.stop_rule {
        StopRule::Knee(params) => {
            let scan = scan_knee(val_losses, &params)?;
            report.knee_epoch = scan.knee;
            report.smoothed = scan.smoothed;
            report.difference_curve = scan.difference;
            if scan.knee.is_some() {
                report.triggered_by = Some(StopTrigger::Knee);
            }
        }
        StopRule::Converge { patience, min_delta } => {
            if let Some(bad) = val_losses.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("validation loss is {bad}")));
            }
            let mut best = f64::INFINITY;
            let mut stale = 0;
            for &v in val_losses {
                if v < best - min_delta {
                    best = v;
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
            if stale >= patience {
                report.triggered_by = Some(StopTrigger::Converge);
            }
        }
    }
    if report.triggered_by.is_none() && epochs >= policy.epoch_cap {
        report.triggered_by = Some(StopTrigger::Cap);
    }
    Ok(StopDecision {
        stop: report.triggered_by.is_some(),
        report,
    })
}

/// Training split indices whose label belongs to `pool`.
pub fn resolve_pool(corpus: &Corpus, manifest: Option<&DifficultyManifest>, pool: &Pool) -> Result<Vec<usize>> {
    if *pool == Pool::Full {
        return Ok(corpus.split.train.clone());
    }
    let manifest = manifest.ok_or_else(|| {
        Error::Invalid(format!("pool {pool:?} needs a difficulty manifest"))
    })?;
    let labels: HashMap<&str, Label> = manifest.entries.iter().map(|e| (e.id.as_str(), e.label)).collect();
    let wanted = pool.labels();
    let mut out = Vec::new();
    for &i in &corpus.split.train {
        let id = corpus.samples[i].id.as_str();
        let label = labels
            .get(id)
            .ok_or_else(|| Error::Data(format!("sample {id} is missing from the manifest")))?;
        if wanted.contains(label) {
            out.push(i);
        }
    }
    Ok(out)
}

/// Final network, full log and one report and checkpoint per stage.
#[derive(Debug, Clone)]
pub struct CurriculumRun {
    pub net: StegoNet<f32>,
    pub log: TrainingLog,
    pub reports: Vec<KneeReport>,
    pub stage_checkpoints: Vec<Checkpoint>,
}

impl CurriculumRun {
    pub fn epochs(&self) -> usize {
        self.log.rows.len()
    }
}

fn log_row(epoch: usize, stage: usize, out: &EpochOutcome) -> LogRow {
    LogRow {
        epoch,
        stage,
        train_loss: out.train_loss,
        val_loss: out.val_loss,
        ssim: out.report.ssim,
        msssim: out.report.msssim,
        psnr: out.report.psnr,
        rmse: out.report.rmse,
        accuracy: out.report.accuracy,
    }
}

/// Runs every stage of `plan` in order. Parameters carry over between
/// stages; the optimizer state does not.
pub fn run_curriculum(
    corpus: &Corpus,
    manifest: &DifficultyManifest,
    plan: &CurriculumPlan,
    model: &ModelConfig,
    train: &TrainConfig,
) -> Result<CurriculumRun> {
    plan.validate()?;
    let pools = plan
        .stages
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let pool = resolve_pool(corpus, Some(manifest), &s.pool)?;
            if pool.is_empty() {
                return Err(Error::Invalid(format!(
                    "stage {} pool {:?} has no training samples",
                    k + 1,
                    s.pool
                )));
            }
            Ok(pool)
        })
        .collect::<Result<Vec<_>>>()?;
    if corpus.split.val.is_empty() {
        return Err(Error::Data("corpus has an empty validation split".into()));
    }
    let val = validation_payloads(&corpus.split.val, model, train.seed);
    let mut net = StegoNet::new(model)?;
    let mut log = TrainingLog::default();
    let mut reports = Vec::new();
    let mut stage_checkpoints = Vec::new();

    for (k, (policy, pool)) in plan.stages.iter().zip(&pools).enumerate() {
        let stage = k + 1;
        log::info!("stage {stage}: {} training samples, cap {} epochs", pool.len(), policy.epoch_cap);
        let mut adam = AdamState::new();
        let mut losses = Vec::new();
        loop {
            let epoch = log.rows.len();
            if epoch >= plan.total_budget {
                break;
            }
            let out = train_epoch(&mut net, &mut adam, corpus, pool, (&corpus.split.val, &val), train, epoch as u64)?;
            log::info!(
                "stage {stage} epoch {}: train {:.4} val {:.4} psnr {:.2} acc {:.4}",
                losses.len() + 1,
                out.train_loss,
                out.val_loss,
                out.report.psnr,
                out.report.accuracy
            );
            log.push(log_row(epoch + 1, stage, &out));
            losses.push(out.val_loss);
            let decision = should_stop_stage(&losses, policy)?;
            if decision.stop {
                break;
            }
        }
        let mut report = should_stop_stage(&losses, policy)?.report;
        report.stage = stage;
        if report.triggered_by.is_none() {
            report.triggered_by = Some(StopTrigger::Cap);
        }
        reports.push(report);
        stage_checkpoints.push(net.to_checkpoint());
    }
    Ok(CurriculumRun {
        net,
        log,
        reports,
        stage_checkpoints,
    })
}

/// Final network and log of a single-pool run.
#[derive(Debug, Clone)]
pub struct PoolRun {
    pub net: StegoNet<f32>,
    pub log: TrainingLog,
}

/// Trains on one fixed set of indices for exactly `epochs` epochs.
pub fn run_pool(
    corpus: &Corpus,
    pool: &[usize],
    model: &ModelConfig,
    train: &TrainConfig,
    epochs: usize,
) -> Result<PoolRun> {
    if pool.is_empty() {
        return Err(Error::Invalid("training pool is empty".into()));
    }
    if corpus.split.val.is_empty() {
        return Err(Error::Data("corpus has an empty validation split".into()));
    }
    let val = validation_payloads(&corpus.split.val, model, train.seed);
    let mut net = StegoNet::new(model)?;
    let mut adam = AdamState::new();
    let mut log = TrainingLog::default();
    for epoch in 0..epochs {
        let out = train_epoch(&mut net, &mut adam, corpus, pool, (&corpus.split.val, &val), train, epoch as u64)?;
        log::info!(
            "epoch {}/{epochs}: train {:.4} val {:.4} psnr {:.2} acc {:.4}",
            epoch + 1,
            out.train_loss,
            out.val_loss,
            out.report.psnr,
            out.report.accuracy
        );
        log.push(log_row(epoch + 1, 0, &out));
    }
    Ok(PoolRun { net, log })
}

/// Shuffled training on the whole training split for `budget` epochs.
pub fn run_baseline(corpus: &Corpus, model: &ModelConfig, train: &TrainConfig, budget: usize) -> Result<PoolRun> {
    if corpus.is_empty() {
        return Err(Error::Data("corpus is empty".into()));
    }
    run_pool(corpus, &corpus.split.train, model, train, budget)
}

/// Trains on one difficulty subset only.
pub fn run_subset(
    corpus: &Corpus,
    manifest: &DifficultyManifest,
    pool: &Pool,
    model: &ModelConfig,
    train: &TrainConfig,
    budget: usize,
) -> Result<PoolRun> {
    let indices = resolve_pool(corpus, Some(manifest), pool)?;
    if indices.is_empty() {
        return Err(Error::Invalid(format!("subset {pool:?} has no training samples")));
    }
    run_pool(corpus, &indices, model, train, budget)
}
