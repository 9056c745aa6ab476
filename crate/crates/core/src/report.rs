//! CSV tables, a Markdown summary and a run manifest.
//!
//! Output depends only on the inputs: no timestamps, no absolute paths, and
//! numbers are printed at fixed precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{paired_t_test, two_proportion_z_test, TestOutcome};
use crate::belief_store::BeliefDimension;
use crate::cohort::{Cohort, EntropyBin};
use crate::config::RunConfig;
use crate::demographics::Axis;
use crate::error::{Error, Result};
use crate::gateway::PredictionRecord;
use crate::pipeline::{dataset_tag, load_artifacts, DatasetArtifacts, Phase1Summary, Workspace};
use crate::prompt::{DimensionSelection, Setting};
use crate::sim::{
    accuracy_by_entropy_bin, aggregate_groups, confidence_alignment_correlation, group_alignment,
    susceptibility_alignment, veracity_accuracy, AlignmentResult,
};

pub const REPORT_VERSION: u32 = 1;

/// Fixed six-decimal rendering; empty for missing values.
pub fn fmt_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => {
            let s = format!("{v:.6}");
            if s == "-0.000000" {
                "0.000000".into()
            } else {
                s
            }
        }
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// Score of one setting for one (model, axis). Best-of settings carry the
/// winning dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingScore {
    pub setting: String,
    pub model_name: String,
    pub axis: Axis,
    pub condition_fingerprint: String,
    pub chosen_dimension: Option<String>,
    pub result: AlignmentResult,
    pub veracity: Option<f64>,
    pub weighted: Option<f64>,
    pub unweighted: Option<f64>,
    pub seeds: Vec<u64>,
    pub n_cache_keys: usize,
    pub cache_key_digest: String,
}

fn key_digest(records: &[&PredictionRecord]) -> (usize, String) {
    let keys: BTreeSet<&str> = records.iter().map(|r| r.request_key.as_str()).collect();
    let mut h = Sha256::new();
    for k in &keys {
        h.update(k.as_bytes());
        h.update(b"\n");
    }
    (keys.len(), hex::encode(&h.finalize()[..8]))
}

fn single_dimension(sel: &DimensionSelection) -> Option<BeliefDimension> {
    match sel {
        DimensionSelection::Only(set) if set.len() == 1 => set.iter().next().copied(),
        _ => None,
    }
}

type Index<'a> = BTreeMap<(&'a str, &'a str, Axis), Vec<&'a PredictionRecord>>;

fn index(records: &[PredictionRecord]) -> Index<'_> {
    let mut m: Index<'_> = BTreeMap::new();
    for r in records {
        m.entry((r.model_name.as_str(), r.condition_fingerprint.as_str(), r.axis))
            .or_default()
            .push(r);
    }
    m
}

fn score_one(
    cohort: &Cohort,
    setting: &str,
    model: &str,
    axis: Axis,
    fp: String,
    recs: &[&PredictionRecord],
) -> Result<SettingScore> {
    let mut result = susceptibility_alignment(recs.iter().copied(), cohort)?;
    result.axis = Some(axis);
    let groups = group_alignment(recs.iter().copied(), cohort, axis)?;
    let agg = aggregate_groups(&groups);
    let seeds: BTreeSet<u64> = recs.iter().map(|r| r.seed).collect();
    let (n_cache_keys, cache_key_digest) = key_digest(recs);
    Ok(SettingScore {
        setting: setting.to_string(),
        model_name: model.to_string(),
        axis,
        condition_fingerprint: fp,
        chosen_dimension: None,
        veracity: veracity_accuracy(recs.iter().copied(), cohort)?,
        weighted: agg.map(|a| a.weighted),
        unweighted: agg.map(|a| a.unweighted),
        result,
        seeds: seeds.into_iter().collect(),
        n_cache_keys,
        cache_key_digest,
    })
}

/// One score per setting × model × axis, in that nesting order. Best-of
/// settings keep the dimension with the highest alignment (first on ties).
pub fn score_settings(
    cohort: &Cohort,
    records: &[PredictionRecord],
    settings: &[Setting],
    models: &[String],
    axes: &[Axis],
) -> Result<Vec<SettingScore>> {
    let idx = index(records);
    let empty = Vec::new();
    let mut out = Vec::new();
    for s in settings {
        for m in models {
            for &axis in axes {
                let mut best: Option<SettingScore> = None;
                for spec in &s.runs {
                    let fp = spec.fingerprint();
                    let recs = idx.get(&(m.as_str(), fp.as_str(), axis)).unwrap_or(&empty);
                    let mut sc = score_one(cohort, &s.name, m, axis, fp.clone(), recs)?;
                    if s.best_of {
                        sc.chosen_dimension =
                            single_dimension(&spec.dimensions).map(|d| d.label().to_string());
                    }
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            sc.result.accuracy.unwrap_or(f64::NEG_INFINITY)
                                > b.result.accuracy.unwrap_or(f64::NEG_INFINITY)
                        }
                    };
                    if better {
                        best = Some(sc);
                    }
                }
                out.push(best.expect("every setting has at least one run"));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub table: String,
    pub dataset: String,
    pub setting: String,
    pub model_name: String,
    pub axis: Option<Axis>,
    pub condition_fingerprint: String,
    pub seeds: Vec<u64>,
    pub n_cache_keys: usize,
    pub cache_key_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub n_participants: usize,
    pub n_claims: usize,
    pub n_evaluation: usize,
    pub n_records: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub version: u32,
    pub config_digest: String,
    pub seeds: crate::config::Seeds,
    pub runs: u32,
    pub temperature: f64,
    pub settings: Vec<String>,
    pub models: Vec<String>,
    pub axes: Vec<Axis>,
    pub datasets: Vec<DatasetManifest>,
    pub entries: Vec<ManifestEntry>,
    pub files: Vec<FileDigest>,
}

/// SHA-256 of the configuration with locations reduced to file names, so
/// the same run in another directory gets the same digest.
pub fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    let strip = |p: &mut PathBuf| {
        *p = p.file_name().map(PathBuf::from).unwrap_or_default();
    };
    c.output_dir = PathBuf::new();
    c.cache_dir = PathBuf::new();
    strip(&mut c.survey.distributions);
    if let Some(t) = &mut c.survey.taxonomy {
        strip(t);
    }
    for d in &mut c.datasets {
        strip(&mut d.cohort);
    }
    for p in [&mut c.adapter.embeddings, &mut c.adapter.paraphrases]
        .into_iter()
        .flatten()
    {
        strip(p);
    }
    hex::encode(Sha256::digest(c.to_toml().as_bytes()))
}

struct Table {
    name: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<FileDigest>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.push(FileDigest {
        name: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
    });
    Ok(())
}

fn test_row(kind: &str, ds: &str, model: &str, axis: Axis, a: &str, b: &str, t: &TestOutcome, n: usize) -> Vec<String> {
    vec![
        kind.into(),
        ds.into(),
        model.into(),
        axis.to_string(),
        a.into(),
        b.into(),
        fmt_num(Some(t.statistic)),
        fmt_num(Some(t.p_value)),
        t.degenerate
            .map(|d| serde_json::to_value(d).expect("enum").as_str().unwrap_or("").to_string())
            .unwrap_or_default(),
        n.to_string(),
    ]
}

fn per_participant(recs: &[&PredictionRecord], cohort: &Cohort) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in recs {
        let (Some(p), Some(j)) = (r.predicted_label.label(), cohort.judgment(&r.pid, &r.claim_id)) else {
            continue;
        };
        let e = m.entry(r.pid.clone()).or_default();
        e.0 += usize::from(p == j.participant_choice);
        e.1 += 1;
    }
    m.into_iter().map(|(k, (h, n))| (k, h as f64 / n as f64)).collect()
}

/// Everything the report needs about one dataset.
pub struct DatasetInput<'a> {
    pub cohort: &'a Cohort,
    pub artifacts: &'a DatasetArtifacts,
}

/// Writes every table, `summary.md` and `manifest.json` into `out_dir`.
pub fn emit_report(
    config: &RunConfig,
    settings: &[Setting],
    axes: &[Axis],
    datasets: &[DatasetInput<'_>],
    phase1: Option<&Phase1Summary>,
    out_dir: &Path,
) -> Result<ReportManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let models: Vec<String> = config.endpoints.iter().map(|e| e.model_name.clone()).collect();
    let tags: Vec<&str> = datasets.iter().map(|d| dataset_tag(d.cohort.kind())).collect();

    let mut scores: Vec<Vec<SettingScore>> = Vec::new();
    for d in datasets {
        let ds_axes: Vec<Axis> = axes
            .iter()
            .copied()
            .filter(|a| d.cohort.available_axes().contains(a))
            .collect();
        scores.push(score_settings(d.cohort, &d.artifacts.records, settings, &models, &ds_axes)?);
    }
    let lookup = |di: usize, s: &str, m: &str, a: Axis| {
        scores[di]
            .iter()
            .find(|x| x.setting == s && x.model_name == m && x.axis == a)
    };

    let mut header = vec!["setting", "model", "axis"];
    header.extend(tags.iter().copied());
    let mut matrix = Table::new("settings_matrix.csv", &header);
    for s in settings {
        for m in &models {
            for &a in axes {
                let mut row = vec![s.name.clone(), m.clone(), a.to_string()];
                for di in 0..datasets.len() {
                    row.push(fmt_num(lookup(di, &s.name, m, a).and_then(|x| x.result.accuracy)));
                }
                matrix.rows.push(row);
            }
        }
    }

    let mut long = Table::new(
        "settings_long.csv",
        &[
            "dataset", "setting", "model", "axis", "chosen_dimension", "condition_fingerprint",
            "n_requested", "n_evaluated", "unparseable_rate", "accuracy", "macro_f1", "run_mean",
            "run_std", "group_weighted", "group_unweighted", "veracity_accuracy",
        ],
    );
    let mut entries = Vec::new();
    for (di, sc) in scores.iter().enumerate() {
        for x in sc {
            let r = &x.result;
            long.rows.push(vec![
                tags[di].into(),
                x.setting.clone(),
                x.model_name.clone(),
                x.axis.to_string(),
                x.chosen_dimension.clone().unwrap_or_default(),
                x.condition_fingerprint.clone(),
                r.n_requested.to_string(),
                r.n_evaluated.to_string(),
                fmt_num(Some(r.unparseable_rate)),
                fmt_num(r.accuracy),
                fmt_num(r.macro_f1),
                fmt_num(r.run_mean),
                fmt_num(r.run_std),
                fmt_num(x.weighted),
                fmt_num(x.unweighted),
                fmt_num(x.veracity),
            ]);
            entries.push(ManifestEntry {
                table: "settings".into(),
                dataset: tags[di].into(),
                setting: x.setting.clone(),
                model_name: x.model_name.clone(),
                axis: Some(x.axis),
                condition_fingerprint: x.condition_fingerprint.clone(),
                seeds: x.seeds.clone(),
                n_cache_keys: x.n_cache_keys,
                cache_key_digest: x.cache_key_digest.clone(),
            });
        }
    }

    let mut panels = Table::new(
        "panels.csv",
        &["dataset", "model", "axis", "panel", "flip_rate_pct", "accuracy_delta", "n_pairs", "n_excluded", "skipped"],
    );
    for (di, d) in datasets.iter().enumerate() {
        for p in d.artifacts.panels.iter().flatten() {
            panels.rows.push(vec![
                tags[di].into(),
                p.model_name.clone(),
                p.axis.to_string(),
                p.panel.to_string(),
                fmt_num(p.flip_rate),
                fmt_num(p.accuracy_delta),
                p.n_pairs.to_string(),
                p.n_excluded.to_string(),
                p.skipped.clone().unwrap_or_default(),
            ]);
            let recs: Vec<&PredictionRecord> =
                p.pairs.iter().flat_map(|x| [&x.base, &x.swapped]).collect();
            let fps: BTreeSet<&str> = recs.iter().map(|r| r.condition_fingerprint.as_str()).collect();
            let seeds: BTreeSet<u64> = recs.iter().map(|r| r.seed).collect();
            let (n_cache_keys, cache_key_digest) = key_digest(&recs);
            entries.push(ManifestEntry {
                table: "panels".into(),
                dataset: tags[di].into(),
                setting: p.panel.to_string(),
                model_name: p.model_name.clone(),
                axis: Some(p.axis),
                condition_fingerprint: fps.into_iter().collect::<Vec<_>>().join("+"),
                seeds: seeds.into_iter().collect(),
                n_cache_keys,
                cache_key_digest,
            });
        }
    }

    let mut bins = Table::new("entropy_bins.csv", &["dataset", "setting", "model", "bin", "n", "accuracy"]);
    let mut conf = Table::new("confidence.csv", &["dataset", "setting", "model", "n", "spearman_rho"]);
    for (di, d) in datasets.iter().enumerate() {
        let idx = index(&d.artifacts.records);
        for s in settings {
            for m in &models {
                let recs: Vec<&PredictionRecord> = scores[di]
                    .iter()
                    .filter(|x| x.setting == s.name && &x.model_name == m)
                    .flat_map(|x| {
                        idx.get(&(m.as_str(), x.condition_fingerprint.as_str(), x.axis))
                            .into_iter()
                            .flatten()
                            .copied()
                    })
                    .collect();
                let by_bin = accuracy_by_entropy_bin(recs.iter().copied(), d.cohort)?;
                for b in EntropyBin::ALL {
                    let v = by_bin.get(&b);
                    bins.rows.push(vec![
                        tags[di].into(),
                        s.name.clone(),
                        m.clone(),
                        b.to_string(),
                        v.map_or(0, |v| v.n).to_string(),
                        fmt_num(v.map(|v| v.accuracy)),
                    ]);
                }
                if recs.iter().any(|r| r.confidence.is_some()) {
                    let c = confidence_alignment_correlation(recs.iter().copied(), d.cohort)?;
                    conf.rows.push(vec![
                        tags[di].into(),
                        s.name.clone(),
                        m.clone(),
                        c.n.to_string(),
                        fmt_num(c.rho),
                    ]);
                }
            }
        }
    }

    let mut ft = Table::new(
        "ft.csv",
        &[
            "dataset", "axis", "embed_source", "phase1_val_kl", "n_train", "n_val", "val_accuracy",
            "val_macro_f1", "zero_out_flip_rate", "zero_out_prob_delta", "zero_out_acc_drop",
            "swap_flip_rate", "swap_prob_delta", "swap_acc_drop", "skipped",
        ],
    );
    let kl = phase1.and_then(Phase1Summary::final_val_kl);
    for (di, d) in datasets.iter().enumerate() {
        for r in d.artifacts.ft.iter().flatten() {
            let z = r.zero_out.as_ref();
            let s = r.swap.as_ref();
            ft.rows.push(vec![
                tags[di].into(),
                r.axis.to_string(),
                r.embed_source.clone(),
                fmt_num(kl),
                r.n_train.to_string(),
                r.n_val.to_string(),
                fmt_num(r.val_accuracy),
                fmt_num(r.val_macro_f1),
                fmt_num(z.map(|m| m.flip_rate)),
                fmt_num(z.map(|m| m.prob_delta)),
                fmt_num(z.map(|m| m.acc_drop)),
                fmt_num(s.map(|m| m.flip_rate)),
                fmt_num(s.map(|m| m.prob_delta)),
                fmt_num(s.map(|m| m.acc_drop)),
                r.skipped.clone().unwrap_or_default(),
            ]);
        }
    }

    let mut topics = Table::new("topics.csv", &["dataset", "topic", "n_claims", "top_terms"]);
    let mut gaps = Table::new(
        "topic_gaps.csv",
        &[
            "dataset", "model", "setting", "topic", "axis", "group_a", "group_b", "n_a", "n_b",
            "accuracy_a", "accuracy_b", "gap_ppts", "low_support",
        ],
    );
    for (di, d) in datasets.iter().enumerate() {
        let Some(t) = &d.artifacts.thematic else { continue };
        for topic in &t.topics {
            let terms: Vec<&str> = topic.top_terms.iter().map(|(w, _)| w.as_str()).collect();
            topics.rows.push(vec![
                tags[di].into(),
                topic.topic.to_string(),
                topic.claims.len().to_string(),
                terms.join(" "),
            ]);
        }
        for g in &t.gaps {
            let x = &g.gap;
            gaps.rows.push(vec![
                tags[di].into(),
                g.model_name.clone(),
                g.setting.clone(),
                x.topic.to_string(),
                x.axis.to_string(),
                x.groups[0].to_string(),
                x.groups[1].to_string(),
                x.n[0].to_string(),
                x.n[1].to_string(),
                fmt_num(x.accuracy[0]),
                fmt_num(x.accuracy[1]),
                fmt_num(x.gap_ppts),
                x.low_support.to_string(),
            ]);
        }
    }

    let mut sig = Table::new(
        "significance.csv",
        &["test", "dataset", "model", "axis", "a", "b", "statistic", "p_value", "degenerate", "n"],
    );
    for (di, d) in datasets.iter().enumerate() {
        let idx = index(&d.artifacts.records);
        for x in &scores[di] {
            let Some(base) = scores[di].iter().find(|b| {
                b.setting == "zero_shot" && b.model_name == x.model_name && b.axis == x.axis
            }) else {
                continue;
            };
            if x.setting == "zero_shot" {
                continue;
            }
            let counts = |s: &SettingScore| {
                let n = s.result.n_evaluated as u64;
                (s.result.accuracy.map_or(0, |a| (a * n as f64).round() as u64), n)
            };
            let ((k1, n1), (k2, n2)) = (counts(x), counts(base));
            if n1 == 0 || n2 == 0 {
                continue;
            }
            let t = two_proportion_z_test(k1, n1, k2, n2)?;
            sig.rows.push(test_row("two_proportion_z", tags[di], &x.model_name, x.axis, &x.setting, "zero_shot", &t, (n1 + n2) as usize));
        }
        for s in settings.iter().filter(|s| s.best_of) {
            for x in scores[di].iter().filter(|x| x.setting == s.name) {
                let get = |fp: &str| idx.get(&(x.model_name.as_str(), fp, x.axis)).cloned().unwrap_or_default();
                let best = per_participant(&get(&x.condition_fingerprint), d.cohort);
                for spec in &s.runs {
                    let fp = spec.fingerprint();
                    if fp == x.condition_fingerprint {
                        continue;
                    }
                    let other = per_participant(&get(&fp), d.cohort);
                    let (a, b): (Vec<f64>, Vec<f64>) = best
                        .iter()
                        .filter_map(|(pid, v)| other.get(pid).map(|o| (*v, *o)))
                        .unzip();
                    if a.len() < 2 {
                        continue;
                    }
                    let t = paired_t_test(&a, &b)?;
                    let dim = single_dimension(&spec.dimensions).map(|d| d.label().to_string()).unwrap_or_default();
                    let label = format!("{}[{}]", s.name, x.chosen_dimension.clone().unwrap_or_default());
                    sig.rows.push(test_row("paired_t", tags[di], &x.model_name, x.axis, &label, &format!("{}[{dim}]", s.name), &t, a.len()));
                }
            }
        }
    }

    let tables = [matrix, long, panels, bins, conf, ft, topics, gaps, sig];
    let mut files = Vec::new();
    for t in &tables {
        write_file(out_dir, t.name, &t.to_bytes(), &mut files)?;
    }

    let dataset_manifests: Vec<DatasetManifest> = datasets
        .iter()
        .map(|d| DatasetManifest {
            dataset: dataset_tag(d.cohort.kind()).into(),
            n_participants: d.cohort.n_participants(),
            n_claims: d.cohort.n_claims(),
            n_evaluation: d.cohort.evaluation().len(),
            n_records: d.artifacts.records.len(),
            n_failures: d.artifacts.failures.len(),
        })
        .collect();

    let summary = summary_markdown(config, &tables, &dataset_manifests, phase1);
    write_file(out_dir, "summary.md", summary.as_bytes(), &mut files)?;

    let manifest = ReportManifest {
        version: REPORT_VERSION,
        config_digest: config_digest(config),
        seeds: config.seeds,
        runs: config.grid.runs,
        temperature: config.grid.temperature,
        settings: settings.iter().map(|s| s.name.clone()).collect(),
        models,
        axes: axes.to_vec(),
        datasets: dataset_manifests,
        entries,
        files,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn has_values(t: &Table, first_value_col: usize) -> bool {
    t.rows
        .iter()
        .any(|r| r[first_value_col..].iter().any(|c| !c.is_empty()))
}

fn markdown_table(t: &Table, out: &mut String) {
    let _ = writeln!(out, "| {} |", t.header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(t.header.len()));
    for r in &t.rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
}

fn summary_markdown(
    config: &RunConfig,
    tables: &[Table],
    datasets: &[DatasetManifest],
    phase1: Option<&Phase1Summary>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Run summary\n");
    let _ = writeln!(s, "- config digest: `{}`", config_digest(config));
    let sd = config.seeds;
    let _ = writeln!(
        s,
        "- seeds: sweep {}, dropout {}, training {}, topics {}",
        sd.sweep, sd.dropout, sd.training, sd.topics
    );
    let _ = writeln!(s, "- runs per condition: {}, temperature {}", config.grid.runs, config.grid.temperature);
    for d in datasets {
        let _ = writeln!(
            s,
            "- {}: {} participants, {} claims, {} evaluation judgments, {} records, {} failures",
            d.dataset, d.n_participants, d.n_claims, d.n_evaluation, d.n_records, d.n_failures
        );
    }
    if let Some(p) = phase1 {
        let _ = writeln!(
            s,
            "- belief adapter: {} train / {} validation pairs, final validation KL {}",
            p.n_train,
            p.n_val,
            fmt_num(p.final_val_kl())
        );
    }
    let sections: [(&str, usize, usize); 9] = [
        ("Settings matrix (susceptibility alignment)", 0, 3),
        ("Per-setting detail", 1, 9),
        ("Counterfactual panels", 2, 4),
        ("Accuracy by claim-entropy bin", 3, 5),
        ("Confidence vs alignment", 4, 4),
        ("Fine-tuned heads", 5, 6),
        ("Topics", 6, 2),
        ("Topic demographic gaps", 7, 9),
        ("Significance tests", 8, 6),
    ];
    for (title, ti, col) in sections {
        let t = &tables[ti];
        let _ = writeln!(s, "\n## {title}\n");
        if has_values(t, col) {
            if t.rows.len() > 60 {
                let _ = writeln!(s, "{} rows; see `{}`.", t.rows.len(), t.name);
            } else {
                markdown_table(t, &mut s);
            }
        } else {
            let _ = writeln!(s, "no data");
        }
    }
    s
}

/// Loads persisted artifacts for `ws` and writes the report under
/// `<output_dir>/report`.
pub fn emit_from_disk(ws: &Workspace) -> Result<ReportManifest> {
    let (artifacts, phase1) = load_artifacts(ws)?;
    let inputs: Vec<DatasetInput<'_>> = artifacts
        .iter()
        .map(|(kind, a)| DatasetInput {
            cohort: ws.cohort(*kind).expect("artifacts follow the workspace datasets"),
            artifacts: a,
        })
        .collect();
    emit_report(
        &ws.config,
        &ws.config.settings()?,
        &ws.axes(),
        &inputs,
        phase1.as_ref(),
        &ws.layout().report_dir(),
    )
}
