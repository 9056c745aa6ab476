//! Belief taxonomy, survey questions, and per-group response distributions.
//!
//! A [`BeliefStore`] is loaded from two files: a taxonomy CSV
//! (`qid,text,scale_size,scale_kind,dimension`) and a newline-delimited JSON
//! file holding one distribution record per (question, group). Records carry
//! either normalized `probs` or raw `counts`; counts are normalized at load and
//! their total is kept as `n`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demographics::{Axis, DemographicProfile, Group};
use crate::divergence::js_divergence_bits;
use crate::error::{Error, Result};

/// Tolerance on the sum of an ingested probability vector.
pub const INGEST_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeliefDimension {
    WorldviewIdentity,
    EpistemicTrust,
    CognitiveStyle,
    ConspiracyMentality,
    MoralsValues,
    EmotionRelated,
    Heuristics,
}

impl BeliefDimension {
    pub const ALL: [BeliefDimension; 7] = [
        BeliefDimension::WorldviewIdentity,
        BeliefDimension::EpistemicTrust,
        BeliefDimension::CognitiveStyle,
        BeliefDimension::ConspiracyMentality,
        BeliefDimension::MoralsValues,
        BeliefDimension::EmotionRelated,
        BeliefDimension::Heuristics,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            BeliefDimension::WorldviewIdentity => "Worldview & Identity",
            BeliefDimension::EpistemicTrust => "Epistemic Trust",
            BeliefDimension::CognitiveStyle => "Cognitive Style",
            BeliefDimension::ConspiracyMentality => "Conspiracy Mentality",
            BeliefDimension::MoralsValues => "Morals & Values",
            BeliefDimension::EmotionRelated => "Emotion-Related",
            BeliefDimension::Heuristics => "Heuristics",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            BeliefDimension::WorldviewIdentity => {
                "religious, political and national identity; group attachment"
            }
            BeliefDimension::EpistemicTrust => {
                "trust in people, institutions, and science as sources of knowledge"
            }
            BeliefDimension::CognitiveStyle => "priorities and comfort with moral ambiguity",
            BeliefDimension::ConspiracyMentality => "perceived corruption and hidden wrongdoing",
            BeliefDimension::MoralsValues => "justifiability of contested behaviours",
            BeliefDimension::EmotionRelated => "happiness, security, and worry",
            BeliefDimension::Heuristics => {
                "media habits, memberships, and social attitudes used as shortcuts"
            }
        }
    }
}

impl fmt::Display for BeliefDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for BeliefDimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let dim = match key.as_str() {
            "worldviewidentity" | "worldviewandidentity" | "worldview" => {
                BeliefDimension::WorldviewIdentity
            }
            "epistemictrust" | "epistemicandtrustbeliefs" | "epistemictrustbeliefs" => {
                BeliefDimension::EpistemicTrust
            }
            "cognitivestyle" | "cognitivestylebeliefs" => BeliefDimension::CognitiveStyle,
            "conspiracymentality" | "conspiracymindset" => BeliefDimension::ConspiracyMentality,
            "moralsvalues" | "moralandvaluebeliefs" | "moralsandvalues" => {
                BeliefDimension::MoralsValues
            }
            "emotionrelated" => BeliefDimension::EmotionRelated,
            "heuristics" | "heuristic" => BeliefDimension::Heuristics,
            _ => {
                return Err(Error::Validation(format!("unknown belief dimension '{s}'")));
            }
        };
        Ok(dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleKind {
    Likert,
    Binary,
    Categorical,
}

impl FromStr for ScaleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "likert" => Ok(ScaleKind::Likert),
            "binary" => Ok(ScaleKind::Binary),
            "categorical" => Ok(ScaleKind::Categorical),
            _ => Err(Error::Validation(format!("unknown scale kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestion {
    pub qid: String,
    pub text: String,
    pub scale_size: usize,
    pub scale_kind: ScaleKind,
    pub dimension: BeliefDimension,
}

/// Orders qids like `Q4 < Q6 < Q10`, falling back to the raw string.
pub fn qid_order_key(qid: &str) -> (String, u64, String) {
    let prefix: String = qid.chars().take_while(|c| !c.is_ascii_digit()).collect();
    let rest = &qid[prefix.len()..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let num = digits.parse().unwrap_or(0);
    (prefix, num, rest[digits.len()..].to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDistribution {
    pub qid: String,
    pub demographic: DemographicProfile,
    pub probs: Vec<f64>,
    /// Number of respondents behind the distribution, when known.
    pub n: u64,
}

impl ResponseDistribution {
    /// Validates and renormalizes `probs` so the stored sum is 1 to rounding.
    pub fn new(
        qid: impl Into<String>,
        demographic: DemographicProfile,
        probs: Vec<f64>,
        n: u64,
    ) -> Result<Self> {
        let qid = qid.into();
        validate_probs(&qid, &probs)?;
        let total: f64 = probs.iter().sum();
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self {
            qid,
            demographic,
            probs,
            n,
        })
    }

    pub fn from_counts(
        qid: impl Into<String>,
        demographic: DemographicProfile,
        counts: &[f64],
    ) -> Result<Self> {
        let qid = qid.into();
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Validation(format!("{qid}: counts must be finite and >= 0")));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::Validation(format!("{qid}: counts sum to zero")));
        }
        let probs = counts.iter().map(|c| c / total).collect();
        Ok(Self {
            qid,
            demographic,
            probs,
            n: total.round() as u64,
        })
    }

    pub fn scale_size(&self) -> usize {
        self.probs.len()
    }

    /// 1-based most frequent bin; see [`modal_bin`].
    pub fn modal_response(&self) -> usize {
        modal_bin(&self.probs)
    }
}

fn validate_probs(qid: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Validation(format!("{qid}: empty probability vector")));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Validation(format!(
            "{qid}: probabilities must be finite and non-negative"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > INGEST_SUM_TOLERANCE {
        return Err(Error::Validation(format!(
            "{qid}: probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// 1-based index of the largest entry. Ties go to the lowest bin.
pub fn modal_bin(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best + 1
}

/// Average divergence between the two groups of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisDivergence {
    pub axis: Axis,
    pub n_questions: usize,
    /// Mean JS divergence (bits) between the full group distributions.
    pub mean_js_bits: f64,
    /// Percentage of questions whose modal bins differ between groups.
    pub modal_disagreement: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BeliefStore {
    questions: Vec<SurveyQuestion>,
    index: HashMap<String, usize>,
    distributions: BTreeMap<(usize, Group), ResponseDistribution>,
}

#[derive(Debug, Deserialize)]
struct TaxonomyRow {
    qid: String,
    text: String,
    scale_size: String,
    scale_kind: String,
    dimension: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct DistributionRecord {
    qid: String,
    axis: String,
    group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<f64>>,
    #[serde(default)]
    n: Option<u64>,
}

impl BeliefStore {
    /// Loads the taxonomy CSV and the distribution records.
    pub fn load(taxonomy_file: &Path, distributions_file: &Path) -> Result<Self> {
        Self::load_distributions(read_taxonomy(taxonomy_file)?, distributions_file)
    }

    /// Builds a store over `questions` and fills it from a distributions file.
    pub fn load_distributions(
        questions: Vec<SurveyQuestion>,
        distributions_file: &Path,
    ) -> Result<Self> {
        let mut store = Self::from_questions(questions)?;
        let file = std::fs::File::open(distributions_file)
            .map_err(|e| Error::io(distributions_file, e))?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(distributions_file, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record_id = format!("line {}", lineno + 1);
            let rec: DistributionRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(distributions_file, &record_id, e))?;
            let axis: Axis = rec
                .axis
                .parse()
                .map_err(|e| Error::parse(distributions_file, &record_id, e))?;
            let group = Group::parse_for_axis(axis, &rec.group)
                .map_err(|e| Error::parse(distributions_file, &record_id, e))?
                .ok_or_else(|| {
                    Error::parse(distributions_file, &record_id, "group is not a named group")
                })?;
            let profile = DemographicProfile::new(axis, group)?;
            let dist = match (rec.probs, rec.counts) {
                (Some(probs), None) => {
                    ResponseDistribution::new(rec.qid, profile, probs, rec.n.unwrap_or(0))?
                }
                (None, Some(counts)) => {
                    ResponseDistribution::from_counts(rec.qid, profile, &counts)?
                }
                _ => {
                    return Err(Error::parse(
                        distributions_file,
                        &record_id,
                        "exactly one of `probs` or `counts` is required",
                    ))
                }
            };
            store.insert_distribution(dist)?;
        }
        Ok(store)
    }

    pub fn from_questions(questions: Vec<SurveyQuestion>) -> Result<Self> {
        let mut store = BeliefStore::default();
        for q in questions {
            if !(2..=10).contains(&q.scale_size) {
                return Err(Error::Validation(format!(
                    "{}: scale_size {} outside 2..=10",
                    q.qid, q.scale_size
                )));
            }
            if store.index.contains_key(&q.qid) {
                return Err(Error::Validation(format!("duplicate qid {}", q.qid)));
            }
            store.index.insert(q.qid.clone(), store.questions.len());
            store.questions.push(q);
        }
        Ok(store)
    }

    pub fn insert_distribution(&mut self, dist: ResponseDistribution) -> Result<()> {
        let &qi = self
            .index
            .get(&dist.qid)
            .ok_or_else(|| Error::Validation(format!("distribution for unknown qid {}", dist.qid)))?;
        let k = self.questions[qi].scale_size;
        if dist.probs.len() != k {
            return Err(Error::Validation(format!(
                "{}: {} probabilities for a {}-bin question",
                dist.qid,
                dist.probs.len(),
                k
            )));
        }
        let key = (qi, dist.demographic.group());
        if self.distributions.contains_key(&key) {
            return Err(Error::Validation(format!(
                "duplicate distribution for ({}, {})",
                dist.qid, dist.demographic
            )));
        }
        self.distributions.insert(key, dist);
        Ok(())
    }

    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn n_distributions(&self) -> usize {
        self.distributions.len()
    }

    pub fn dimensions(&self) -> Vec<BeliefDimension> {
        let mut dims: Vec<_> = self.questions.iter().map(|q| q.dimension).collect();
        dims.sort();
        dims.dedup();
        dims
    }

    /// Questions in taxonomy file order.
    pub fn questions(&self) -> &[SurveyQuestion] {
        &self.questions
    }

    /// Questions sorted by qid (numeric-aware).
    pub fn questions_sorted(&self) -> Vec<&SurveyQuestion> {
        let mut qs: Vec<_> = self.questions.iter().collect();
        qs.sort_by_key(|q| qid_order_key(&q.qid));
        qs
    }

    pub fn question(&self, qid: &str) -> Option<&SurveyQuestion> {
        self.index.get(qid).map(|&i| &self.questions[i])
    }

    pub fn distribution(&self, qid: &str, group: Group) -> Option<&ResponseDistribution> {
        let &qi = self.index.get(qid)?;
        self.distributions.get(&(qi, group))
    }

    pub fn distributions(&self) -> impl Iterator<Item = &ResponseDistribution> {
        self.distributions.values()
    }

    pub fn has_group(&self, group: Group) -> bool {
        self.distributions.keys().any(|(_, g)| *g == group)
    }

    fn paired(&self, axis: Axis) -> Result<Vec<(&ResponseDistribution, &ResponseDistribution)>> {
        let [g1, g2] = axis.groups();
        self.questions
            .iter()
            .map(|q| {
                let a = self.distribution(&q.qid, g1);
                let b = self.distribution(&q.qid, g2);
                match (a, b) {
                    (Some(a), Some(b)) => Ok((a, b)),
                    _ => Err(Error::Validation(format!(
                        "question {} lacks a distribution for {} or {}",
                        q.qid, g1, g2
                    ))),
                }
            })
            .collect()
    }

    /// Percentage of questions whose two group modal bins differ.
    pub fn modal_disagreement(&self, axis: Axis) -> Result<f64> {
        let pairs = self.paired(axis)?;
        if pairs.is_empty() {
            return Err(Error::Empty("belief store has no questions".into()));
        }
        let differing = pairs
            .iter()
            .filter(|(a, b)| a.modal_response() != b.modal_response())
            .count();
        Ok(100.0 * differing as f64 / pairs.len() as f64)
    }

    pub fn axis_divergence(&self, axis: Axis) -> Result<AxisDivergence> {
        let pairs = self.paired(axis)?;
        if pairs.is_empty() {
            return Err(Error::Empty("belief store has no questions".into()));
        }
        let mut js_sum = 0.0;
        for (a, b) in &pairs {
            js_sum += js_divergence_bits(&a.probs, &b.probs)?;
        }
        Ok(AxisDivergence {
            axis,
            n_questions: pairs.len(),
            mean_js_bits: js_sum / pairs.len() as f64,
            modal_disagreement: self.modal_disagreement(axis)?,
        })
    }

    /// Writes the distributions as newline-delimited records, sorted by qid then group.
    pub fn write_distributions(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let mut dists: Vec<_> = self.distributions.values().collect();
        dists.sort_by_key(|d| (qid_order_key(&d.qid), d.demographic.group()));
        for d in dists {
            let rec = DistributionRecord {
                qid: d.qid.clone(),
                axis: d.demographic.axis().to_string(),
                group: d.demographic.group().to_string(),
                probs: Some(d.probs.clone()),
                counts: None,
                n: Some(d.n),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn read_taxonomy(path: &Path) -> Result<Vec<SurveyQuestion>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_taxonomy(file, path)
}

/// The taxonomy file bundled with the crate.
pub const SHIPPED_TAXONOMY: &str = include_str!("../data/wvs_taxonomy.csv");

pub fn shipped_taxonomy() -> Vec<SurveyQuestion> {
    parse_taxonomy(SHIPPED_TAXONOMY.as_bytes(), Path::new("wvs_taxonomy.csv"))
        .expect("bundled taxonomy parses")
}

/// Parses taxonomy CSV from any reader; `path` only labels errors.
pub fn parse_taxonomy(input: impl std::io::Read, path: &Path) -> Result<Vec<SurveyQuestion>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<TaxonomyRow>().enumerate() {
        let record_id = format!("row {}", i + 1);
        let row = row.map_err(|e| Error::parse(path, &record_id, e))?;
        let scale_size: usize = row.scale_size.trim().parse().map_err(|_| {
            Error::parse(path, &row.qid, format!("scale_size '{}' is not an integer", row.scale_size))
        })?;
        out.push(SurveyQuestion {
            qid: row.qid.trim().to_string(),
            text: row.text,
            scale_size,
            scale_kind: row.scale_kind.parse()?,
            dimension: row.dimension.parse()?,
        });
    }
    Ok(out)
}
