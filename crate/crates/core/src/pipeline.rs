//! Stage orchestration. Every stage persists its artifacts under the output
//! directory so the report step can run on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapter::{
    belief_embedding, ft_shortcut_metrics, phase1_text, phase1_train, phase2_train, split_keys,
    BeliefAdapter, Checkpoint, CheckpointBody, EmbeddingTable, Perturbation, Phase1Example,
    Phase1Outcome, Phase2Example, Phase2Outcome, ProbeQuestion, ShortcutMetrics,
};
use crate::analysis::{nmf_topics, topic_demographic_gaps, TopicGap};
use crate::belief_store::{read_taxonomy, shipped_taxonomy, BeliefStore};
use crate::cohort::{Claim, Cohort, DatasetKind};
use crate::config::{RunConfig, SplitUnit};
use crate::counterfactual::{
    complementarity_panel, shortcut_panel, utility_panel, PanelConfig, PanelResult,
};
use crate::demographics::{Axis, Group};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, MockBackend, PredictionRecord, ResponseCache};
use crate::prompt::{ConditionSpec, Setting};
use crate::sim::{run_sweep, FailureEntry, SweepOutcome, SweepPlan};

/// Loaded configuration plus the inputs it points at.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: RunConfig,
    pub store: BeliefStore,
    pub datasets: Vec<Cohort>,
}

impl Workspace {
    /// Validates `config` and loads the survey store and every cohort.
    pub fn load(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let questions = match &config.survey.taxonomy {
            Some(p) => read_taxonomy(p)?,
            None => shipped_taxonomy(),
        };
        let store = BeliefStore::load_distributions(questions, &config.survey.distributions)?;
        let datasets = config
            .datasets
            .iter()
            .map(|d| Cohort::load(&d.cohort, d.kind))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            store,
            datasets,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config.output_dir)
    }

    pub fn cohort(&self, kind: DatasetKind) -> Option<&Cohort> {
        self.datasets.iter().find(|c| c.kind() == kind)
    }

    /// Configured axes, or all four when none are listed.
    pub fn axes(&self) -> Vec<Axis> {
        if self.config.grid.axes.is_empty() {
            Axis::ALL.to_vec()
        } else {
            self.config.grid.axes.clone()
        }
    }

    fn cohort_axes(&self, cohort: &Cohort) -> Vec<Axis> {
        self.axes()
            .into_iter()
            .filter(|a| cohort.available_axes().contains(a))
            .collect()
    }
}

pub fn dataset_tag(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Pandora => "pandora",
        DatasetKind::Mist1 => "mist1",
        DatasetKind::Mist2 => "mist2",
    }
}

/// File names of every persisted artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn records(&self, kind: DatasetKind) -> PathBuf {
        self.root.join("sweep").join(format!("{}.records.ndjson", dataset_tag(kind)))
    }

    pub fn failures(&self, kind: DatasetKind) -> PathBuf {
        self.root.join("sweep").join(format!("{}.failures.json", dataset_tag(kind)))
    }

    pub fn panels(&self, kind: DatasetKind) -> PathBuf {
        self.root.join("counterfactual").join(format!("{}.json", dataset_tag(kind)))
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("adapter").join("embeddings.bin")
    }

    pub fn phase1_checkpoint(&self) -> PathBuf {
        self.root.join("adapter").join("phase1.ckpt.json")
    }

    pub fn phase1_summary(&self) -> PathBuf {
        self.root.join("adapter").join("phase1.summary.json")
    }

    pub fn head_checkpoint(&self, kind: DatasetKind, axis: Axis) -> PathBuf {
        self.root
            .join("adapter")
            .join(format!("{}.{}.head.ckpt.json", dataset_tag(kind), axis))
    }

    pub fn ft(&self, kind: DatasetKind) -> PathBuf {
        self.root.join("adapter").join(format!("{}.ft.json", dataset_tag(kind)))
    }

    pub fn thematic(&self, kind: DatasetKind) -> PathBuf {
        self.root.join("thematic").join(format!("{}.json", dataset_tag(kind)))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, "document", e))
}

pub fn write_records(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    ensure_parent(path)?;
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<PredictionRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, format!("line {}", i + 1), e))?,
        );
    }
    Ok(out)
}

/// Deterministic stand-in backend used by `--mock`: verdicts hash the full
/// prompt, seeded per model.
pub fn mock_backend(model_name: &str) -> MockBackend {
    let d = Sha256::digest(model_name.as_bytes());
    let salt = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    MockBackend::hashing(salt)
}

fn cache_file_name(model_name: &str) -> String {
    let safe: String = model_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}.ndjson")
}

/// One gateway per configured endpoint, each with its own on-disk cache.
pub fn gateways(config: &RunConfig, mock: bool) -> Result<Vec<Gateway>> {
    std::fs::create_dir_all(&config.cache_dir).map_err(|e| Error::io(&config.cache_dir, e))?;
    config
        .endpoints
        .iter()
        .map(|e| {
            let cache = ResponseCache::open(&config.cache_dir.join(cache_file_name(&e.model_name)))?;
            let gw = if mock {
                Gateway::new(e.clone(), Arc::new(mock_backend(&e.model_name)))?
            } else {
                Gateway::http(e.clone())?
            };
            Ok(gw.with_cache(Arc::new(cache)))
        })
        .collect()
}

/// Every distinct condition used by `settings`, in first-seen order.
pub fn grid_conditions(settings: &[Setting]) -> Vec<ConditionSpec> {
    let mut seen = BTreeSet::new();
    settings
        .iter()
        .flat_map(|s| &s.runs)
        .filter(|c| seen.insert(c.fingerprint()))
        .cloned()
        .collect()
}

pub fn sweep_plan(ws: &Workspace) -> Result<SweepPlan> {
    let g = &ws.config.grid;
    Ok(SweepPlan {
        conditions: grid_conditions(&ws.config.settings()?),
        axes: ws.axes(),
        runs: g.runs,
        base_seed: ws.config.seeds.sweep,
        temperature: g.temperature,
        workers: g.workers,
        limit: g.limit,
        probe_confidence: g.probe_confidence,
        done: BTreeSet::new(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepStage {
    pub kind: DatasetKind,
    pub outcome: SweepOutcome,
    /// Records carried over from an earlier run.
    pub resumed: usize,
}

pub fn sort_records(records: &mut [PredictionRecord]) {
    records.sort_by_cached_key(PredictionRecord::key);
}

/// Sweeps every dataset. With `resume`, records already on disk are kept and
/// their work items skipped.
pub fn run_sweep_stage(ws: &Workspace, gateways: &[Gateway], resume: bool) -> Result<Vec<SweepStage>> {
    let layout = ws.layout();
    let mut out = Vec::new();
    for cohort in &ws.datasets {
        let kind = cohort.kind();
        let path = layout.records(kind);
        let mut plan = sweep_plan(ws)?;
        let prior = if resume && path.exists() {
            read_records(&path)?
        } else {
            Vec::new()
        };
        plan.done = prior.iter().map(PredictionRecord::key).collect();
        let mut outcome = run_sweep(&ws.store, cohort, gateways, &plan)?;
        let resumed = prior.len();
        let mut records = prior;
        records.append(&mut outcome.records);
        sort_records(&mut records);
        outcome.records = records;
        write_records(&path, &outcome.records)?;
        write_json(&layout.failures(kind), &outcome.failures)?;
        log::info!(
            "{}: {} records ({} resumed, {} failures)",
            dataset_tag(kind),
            outcome.records.len(),
            resumed,
            outcome.failures.len()
        );
        out.push(SweepStage {
            kind,
            outcome,
            resumed,
        });
    }
    Ok(out)
}

pub fn panel_config(config: &RunConfig) -> PanelConfig {
    PanelConfig {
        runs: config.grid.runs,
        base_seed: config.seeds.sweep,
        temperature: config.grid.temperature,
        workers: config.grid.workers,
        epsilon: config.panels.epsilon,
        min_n: config.panels.min_n,
        shortcut_swaps_beliefs: false,
        dropout: config.panels.dropout,
        dropout_seed: config.seeds.dropout,
    }
}

/// Runs the enabled counterfactual panels for every model and axis.
pub fn run_counterfactual_stage(
    ws: &Workspace,
    gateways: &[Gateway],
) -> Result<Vec<(DatasetKind, Vec<PanelResult>)>> {
    let toggles = ws.config.panels;
    let cfg = panel_config(&ws.config);
    let mut out = Vec::new();
    for cohort in &ws.datasets {
        let mut results = Vec::new();
        for gw in gateways {
            for axis in ws.cohort_axes(cohort) {
                if toggles.utility {
                    let demo = ConditionSpec::demo_only();
                    results.push(utility_panel(&ws.store, cohort, axis, gw, &demo, &cfg)?);
                }
                if toggles.shortcut {
                    results.push(shortcut_panel(&ws.store, cohort, axis, gw, &cfg)?);
                }
                if toggles.complementarity {
                    results.push(complementarity_panel(&ws.store, cohort, axis, gw, &cfg)?.panel);
                }
            }
        }
        write_json(&ws.layout().panels(cohort.kind()), &results)?;
        out.push((cohort.kind(), results));
    }
    Ok(out)
}

/// Embedding lookups backed by a table, falling back to a gateway for
/// texts the table lacks.
pub struct Embedder<'a> {
    table: EmbeddingTable,
    gateway: Option<&'a Gateway>,
    source: String,
}

const EMBED_BATCH: usize = 64;

impl<'a> Embedder<'a> {
    pub fn new(table: EmbeddingTable, gateway: Option<&'a Gateway>, source: impl Into<String>) -> Self {
        Self {
            table,
            gateway,
            source: source.into(),
        }
    }

    /// Uses the configured table if any, else the first gateway, reusing
    /// vectors saved by an earlier run.
    pub fn for_workspace(ws: &Workspace, gateways: &'a [Gateway]) -> Result<Self> {
        if let Some(p) = &ws.config.adapter.embeddings {
            return Ok(Self::new(EmbeddingTable::read(p)?, None, p.display().to_string()));
        }
        let gw = gateways
            .first()
            .ok_or_else(|| Error::Config("no endpoint available for embeddings".into()))?;
        let saved = ws.layout().embeddings();
        let table = if saved.exists() {
            EmbeddingTable::read(&saved)?
        } else {
            EmbeddingTable::new(0)
        };
        Ok(Self::new(table, Some(gw), gw.endpoint().model_name.clone()))
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    /// Vectors for `texts`, fetching missing ones in batches.
    pub fn embed(&mut self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let missing: Vec<String> = texts
            .iter()
            .filter(|t| self.table.get(t).is_none())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if !missing.is_empty() {
            let gw = self.gateway.ok_or_else(|| {
                Error::Validation(format!(
                    "{} texts missing from embedding table {}",
                    missing.len(),
                    self.source
                ))
            })?;
            for chunk in missing.chunks(EMBED_BATCH) {
                let vs = gw.embed(chunk)?;
                for (t, v) in chunk.iter().zip(vs) {
                    if self.table.is_empty() && self.table.dim() != v.len() {
                        self.table = EmbeddingTable::new(v.len());
                    }
                    self.table.insert(t, v)?;
                }
            }
        }
        texts.iter().map(|t| self.table.get_f64(t)).collect()
    }
}

/// Phase-1 examples keyed by question id, one per (question, group) with a
/// stored distribution.
pub fn phase1_examples(
    store: &BeliefStore,
    embedder: &mut Embedder<'_>,
) -> Result<Vec<(String, Phase1Example)>> {
    let mut keys = Vec::new();
    let mut texts = Vec::new();
    for q in store.questions_sorted() {
        for group in Group::ALL {
            if let Some(d) = store.distribution(&q.qid, group) {
                keys.push((q.qid.clone(), d.probs.clone()));
                texts.push(phase1_text(group, &q.text));
            }
        }
    }
    let embs = embedder.embed(&texts)?;
    keys.into_iter()
        .zip(embs)
        .map(|((qid, probs), e)| Ok((qid, Phase1Example::new(e, probs)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Summary {
    pub embed_source: String,
    pub n_train_questions: usize,
    pub n_val_questions: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    pub steps: u64,
}

impl Phase1Summary {
    pub fn final_val_kl(&self) -> Option<f64> {
        self.val_curve.last().copied()
    }
}

/// Trains and freezes the belief adapter with questions split 80/20.
pub fn run_adapter_stage(ws: &Workspace, embedder: &mut Embedder<'_>) -> Result<(Phase1Outcome, Phase1Summary)> {
    let a = &ws.config.adapter;
    let seed = ws.config.seeds.training;
    let examples = phase1_examples(&ws.store, embedder)?;
    let (train_q, val_q) = split_keys(examples.iter().map(|(q, _)| q.clone()), a.train_fraction, seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (q, ex) in examples {
        if train_q.contains(&q) {
            train.push(ex);
        } else {
            val.push(ex);
        }
    }
    let outcome = phase1_train(&train, &val, &a.phase1.train_config(seed))?;
    let summary = Phase1Summary {
        embed_source: embedder.source().to_string(),
        n_train_questions: train_q.len(),
        n_val_questions: val_q.len(),
        n_train: train.len(),
        n_val: val.len(),
        train_curve: outcome.train_curve.clone(),
        val_curve: outcome.val_curve.clone(),
        steps: outcome.steps,
    };
    let layout = ws.layout();
    Checkpoint::adapter(&outcome.adapter, &outcome.config).save(&{
        let p = layout.phase1_checkpoint();
        ensure_parent(&p)?;
        p
    })?;
    write_json(&layout.phase1_summary(), &summary)?;
    if embedder.gateway.is_some() {
        embedder.table.write(&layout.embeddings())?;
    }
    Ok((outcome, summary))
}

pub fn load_adapter(path: &Path) -> Result<BeliefAdapter> {
    match Checkpoint::load(path)?.body {
        CheckpointBody::BeliefAdapter(a) if a.frozen => Ok(a),
        CheckpointBody::BeliefAdapter(_) => {
            Err(Error::Training(format!("{}: adapter is not frozen", path.display())))
        }
        CheckpointBody::SusceptibilityHead(_) => Err(Error::Validation(format!(
            "{}: expected a belief adapter checkpoint",
            path.display()
        ))),
    }
}

/// Input text for the claim representation: up to two of the participant's
/// observed judgments, then the claim.
pub fn phase2_text(cohort: &Cohort, pid: &str, claim: &Claim) -> String {
    let prior: Vec<String> = cohort
        .participant(pid)
        .map(|p| {
            p.observed_beliefs
                .iter()
                .take(2)
                .filter_map(|ob| {
                    let c = cohort.claim(&ob.claim_id)?;
                    Some(format!("Claim \"{}\": judged {}", c.text, ob.judged_label))
                })
                .collect()
        })
        .unwrap_or_default();
    if prior.is_empty() {
        format!("Claim: {}", claim.text)
    } else {
        format!("Past judgments: {}. Claim: {}", prior.join("; "), claim.text)
    }
}

/// z_bel for every group the store covers.
pub fn group_belief_vectors(
    store: &BeliefStore,
    adapter: &BeliefAdapter,
    embedder: &mut Embedder<'_>,
) -> Result<BTreeMap<Group, Vec<f64>>> {
    let mut out = BTreeMap::new();
    let questions = store.questions_sorted();
    for group in Group::ALL {
        if !store.has_group(group) {
            continue;
        }
        let texts: Vec<String> = questions.iter().map(|q| phase1_text(group, &q.text)).collect();
        let embs = embedder.embed(&texts)?;
        let probes: Vec<ProbeQuestion> = questions
            .iter()
            .zip(embs)
            .map(|(q, e)| ProbeQuestion {
                qid: q.qid.clone(),
                dimension: q.dimension,
                k: q.scale_size,
                embedding: e,
            })
            .collect();
        let (z, warnings) = belief_embedding(adapter, &probes)?;
        for w in warnings {
            log::warn!("{group}: {w}");
        }
        out.insert(group, z);
    }
    Ok(out)
}

/// Paraphrases keyed by the original claim text.
pub fn read_paraphrases(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    #[derive(Deserialize)]
    struct Row {
        text: String,
        paraphrase: String,
    }
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}", i + 1), e))?;
        out.entry(row.text).or_default().push(row.paraphrase);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtShortcut {
    pub flip_rate: f64,
    pub prob_delta: f64,
    pub acc_drop: f64,
}

impl From<&ShortcutMetrics> for FtShortcut {
    fn from(m: &ShortcutMetrics) -> Self {
        Self {
            flip_rate: m.flip_rate,
            prob_delta: m.prob_delta,
            acc_drop: m.acc_drop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtRow {
    pub axis: Axis,
    pub embed_source: String,
    pub n_train: usize,
    pub n_val: usize,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub zero_out: Option<FtShortcut>,
    pub swap: Option<FtShortcut>,
    pub skipped: Option<String>,
}

impl FtRow {
    fn skipped(axis: Axis, source: &str, n: (usize, usize), why: String) -> Self {
        Self {
            axis,
            embed_source: source.to_string(),
            n_train: n.0,
            n_val: n.1,
            train_accuracy: None,
            val_accuracy: None,
            val_macro_f1: None,
            zero_out: None,
            swap: None,
            skipped: Some(why),
        }
    }
}

/// Phase-2 examples for one axis, split into (train, validation).
pub fn phase2_examples(
    ws: &Workspace,
    cohort: &Cohort,
    axis: Axis,
    z_bel: &BTreeMap<Group, Vec<f64>>,
    paraphrases: &BTreeMap<String, Vec<String>>,
    embedder: &mut Embedder<'_>,
) -> Result<(Vec<Phase2Example>, Vec<Phase2Example>)> {
    let a = &ws.config.adapter;
    let seed = ws.config.seeds.training;
    let mut rows = Vec::new();
    for j in cohort.evaluation() {
        let Some(&group) = cohort.participant(&j.pid).and_then(|p| p.profiles.get(&axis)) else {
            continue;
        };
        let Some(z) = z_bel.get(&group) else { continue };
        let claim = cohort
            .claim(&j.claim_id)
            .ok_or_else(|| Error::unknown("claim", &j.claim_id))?;
        rows.push((j, group, z, claim));
    }
    let key = |pid: &str, claim: &str| match a.split_unit {
        SplitUnit::Participant => pid.to_string(),
        SplitUnit::Judgment => format!("{pid}\u{1f}{claim}"),
    };
    let (train_keys, _) = split_keys(
        rows.iter().map(|(j, ..)| key(&j.pid, &j.claim_id)),
        a.train_fraction,
        seed,
    );
    let mut texts = Vec::new();
    let mut meta = Vec::new();
    for (j, group, z, claim) in &rows {
        let is_train = train_keys.contains(&key(&j.pid, &j.claim_id));
        texts.push(phase2_text(cohort, &j.pid, claim));
        meta.push((*j, *group, *z, is_train));
        if is_train {
            for alt in paraphrases.get(&claim.text).into_iter().flatten() {
                let alt_claim = Claim {
                    text: alt.clone(),
                    ..(*claim).clone()
                };
                texts.push(phase2_text(cohort, &j.pid, &alt_claim));
                meta.push((*j, *group, *z, true));
            }
        }
    }
    let embs = embedder.embed(&texts)?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for ((j, group, z, is_train), h) in meta.into_iter().zip(embs) {
        let ex = Phase2Example {
            h,
            z_bel: z.clone(),
            label: j.participant_choice,
            group: Some(group),
        };
        if is_train {
            train.push(ex);
        } else {
            val.push(ex);
        }
    }
    Ok((train, val))
}

/// Trains one susceptibility head per dataset and axis on top of the frozen
/// adapter and measures shortcut reliance on the validation split.
pub fn run_head_stage(
    ws: &Workspace,
    adapter: &BeliefAdapter,
    embedder: &mut Embedder<'_>,
) -> Result<Vec<(DatasetKind, Vec<FtRow>)>> {
    let paraphrases = match &ws.config.adapter.paraphrases {
        Some(p) => read_paraphrases(p)?,
        None => BTreeMap::new(),
    };
    let z_bel = group_belief_vectors(&ws.store, adapter, embedder)?;
    let cfg = ws.config.adapter.phase2.train_config(ws.config.seeds.training);
    let layout = ws.layout();
    let source = embedder.source().to_string();
    let mut out = Vec::new();
    for cohort in &ws.datasets {
        let mut rows = Vec::new();
        for axis in ws.cohort_axes(cohort) {
            let (train, val) = phase2_examples(ws, cohort, axis, &z_bel, &paraphrases, embedder)?;
            let n = (train.len(), val.len());
            if val.is_empty() {
                rows.push(FtRow::skipped(axis, &source, n, "empty validation split".into()));
                continue;
            }
            let outcome: Phase2Outcome = match phase2_train(adapter, &train, &val, &cfg) {
                Ok(o) => o,
                Err(e @ (Error::Training(_) | Error::Empty(_))) => {
                    rows.push(FtRow::skipped(axis, &source, n, e.to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let path = layout.head_checkpoint(cohort.kind(), axis);
            ensure_parent(&path)?;
            Checkpoint::head(&outcome.head, &outcome.config).save(&path)?;
            let zero = ft_shortcut_metrics(&outcome.head, &val, &Perturbation::ZeroOut)?;
            let swap = ft_shortcut_metrics(&outcome.head, &val, &Perturbation::Swap(z_bel.clone()))?;
            let last = outcome.epochs.last();
            rows.push(FtRow {
                axis,
                embed_source: source.clone(),
                n_train: n.0,
                n_val: n.1,
                train_accuracy: last.map(|e| e.train_accuracy),
                val_accuracy: last.and_then(|e| e.val_accuracy),
                val_macro_f1: last.and_then(|e| e.val_macro_f1),
                zero_out: Some((&zero).into()),
                swap: Some((&swap).into()),
                skipped: None,
            });
        }
        write_json(&layout.ft(cohort.kind()), &rows)?;
        out.push((cohort.kind(), rows));
    }
    if embedder.gateway.is_some() {
        embedder.table.write(&layout.embeddings())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub top_terms: Vec<(String, f64)>,
    pub claims: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub model_name: String,
    pub setting: String,
    pub gap: TopicGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThematicArtifact {
    pub k: usize,
    pub iterations: usize,
    pub final_error: f64,
    pub topics: Vec<TopicSummary>,
    pub gaps: Vec<GapRow>,
}

/// Topic model over the claims plus per-topic gaps for every single-run
/// setting in `records`.
pub fn thematic_analysis(
    ws: &Workspace,
    cohort: &Cohort,
    records: &[PredictionRecord],
) -> Result<ThematicArtifact> {
    let t = ws.config.thematic;
    let claims: Vec<&Claim> = cohort.claims().collect();
    let model = nmf_topics(&claims, t.topics, t.iterations, ws.config.seeds.topics)?;
    let topics = (0..model.k)
        .map(|k| TopicSummary {
            topic: k,
            top_terms: model
                .top_terms(k, 8)
                .into_iter()
                .map(|(w, s)| (w.to_string(), s))
                .collect(),
            claims: model
                .claim_ids
                .iter()
                .zip(&model.assignments)
                .filter(|(_, a)| **a == k)
                .map(|(c, _)| c.clone())
                .collect(),
        })
        .collect();
    let by_fp: BTreeMap<String, String> = ws
        .config
        .settings()?
        .into_iter()
        .filter(|s| !s.best_of)
        .map(|s| (s.runs[0].fingerprint(), s.name))
        .collect();
    let mut groups: BTreeMap<(String, String), Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        if let Some(name) = by_fp.get(&r.condition_fingerprint) {
            groups
                .entry((r.model_name.clone(), name.clone()))
                .or_default()
                .push(r.clone());
        }
    }
    let axes = ws.cohort_axes(cohort);
    let mut gaps = Vec::new();
    for ((model_name, setting), rs) in groups {
        for gap in topic_demographic_gaps(&model, &rs, cohort, &axes)? {
            gaps.push(GapRow {
                model_name: model_name.clone(),
                setting: setting.clone(),
                gap,
            });
        }
    }
    Ok(ThematicArtifact {
        k: model.k,
        iterations: model.errors.len() - 1,
        final_error: model.final_error(),
        topics,
        gaps,
    })
}

/// Thematic analysis for every dataset, reading sweep records from disk.
pub fn run_thematic_stage(ws: &Workspace) -> Result<Vec<(DatasetKind, ThematicArtifact)>> {
    let layout = ws.layout();
    let mut out = Vec::new();
    for cohort in &ws.datasets {
        let path = layout.records(cohort.kind());
        let records = if path.exists() { read_records(&path)? } else { Vec::new() };
        let art = thematic_analysis(ws, cohort, &records)?;
        write_json(&layout.thematic(cohort.kind()), &art)?;
        out.push((cohort.kind(), art));
    }
    Ok(out)
}

/// Everything persisted for one dataset, as read back by the report step.
#[derive(Debug, Clone, Default)]
pub struct DatasetArtifacts {
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<FailureEntry>,
    pub panels: Option<Vec<PanelResult>>,
    pub ft: Option<Vec<FtRow>>,
    pub thematic: Option<ThematicArtifact>,
}

fn read_optional<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.exists() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn load_artifacts(ws: &Workspace) -> Result<(Vec<(DatasetKind, DatasetArtifacts)>, Option<Phase1Summary>)> {
    let layout = ws.layout();
    let mut out = Vec::new();
    for cohort in &ws.datasets {
        let kind = cohort.kind();
        let records_path = layout.records(kind);
        out.push((
            kind,
            DatasetArtifacts {
                records: if records_path.exists() {
                    read_records(&records_path)?
                } else {
                    Vec::new()
                },
                failures: read_optional(&layout.failures(kind))?.unwrap_or_default(),
                panels: read_optional(&layout.panels(kind))?,
                ft: read_optional(&layout.ft(kind))?,
                thematic: read_optional(&layout.thematic(kind))?,
            },
        ));
    }
    Ok((out, read_optional(&layout.phase1_summary())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub resume: bool,
}

/// Runs every stage the configuration enables, then the report.
pub fn run_all(ws: &Workspace, gateways: &[Gateway], opts: RunOptions) -> Result<crate::report::ReportManifest> {
    run_sweep_stage(ws, gateways, opts.resume)?;
    let p = ws.config.panels;
    if p.utility || p.shortcut || p.complementarity {
        run_counterfactual_stage(ws, gateways)?;
    }
    if ws.config.adapter.enabled {
        let mut embedder = Embedder::for_workspace(ws, gateways)?;
        let (outcome, _) = run_adapter_stage(ws, &mut embedder)?;
        run_head_stage(ws, &outcome.adapter, &mut embedder)?;
    }
    run_thematic_stage(ws)?;
    crate::report::emit_from_disk(ws)
}
