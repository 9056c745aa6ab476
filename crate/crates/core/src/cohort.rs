//! Participant cohorts: claims, judgments, held-out observed beliefs, and
//! demographic slices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief_store::qid_order_key;
use crate::demographics::{Axis, DemographicProfile, Group};
use crate::divergence::entropy_bits;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    True,
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::True => "true",
            Label::Fake => "fake",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::True => Label::Fake,
            Label::Fake => Label::True,
        }
    }

    /// Accepted source spellings for each canonical label.
    pub const ALIASES: [(&'static str, Label); 10] = [
        ("true", Label::True),
        ("real", Label::True),
        ("t", Label::True),
        ("1", Label::True),
        ("fake", Label::Fake),
        ("false", Label::Fake),
        ("f", Label::Fake),
        ("0", Label::Fake),
        ("misinformation", Label::Fake),
        ("misinfo", Label::Fake),
    ];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        Label::ALIASES
            .iter()
            .find(|(alias, _)| *alias == norm)
            .map(|(_, l)| *l)
            .ok_or_else(|| Error::Validation(format!("unknown label '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "PANDORA")]
    Pandora,
    #[serde(rename = "MIST1")]
    Mist1,
    #[serde(rename = "MIST2")]
    Mist2,
}

impl DatasetKind {
    pub fn expected_axes(self) -> &'static [Axis] {
        match self {
            DatasetKind::Pandora => &Axis::ALL,
            // no living-area annotations in MIST
            DatasetKind::Mist1 | DatasetKind::Mist2 => &[Axis::Gender, Axis::Age, Axis::Education],
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "PANDORA" | "PROLIFIC" => Ok(DatasetKind::Pandora),
            "MIST1" | "MIST" => Ok(DatasetKind::Mist1),
            "MIST2" | "MIST2B" => Ok(DatasetKind::Mist2),
            _ => Err(Error::unknown("dataset kind", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub text: String,
    pub gold_label: Label,
    pub source_dataset: DatasetKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedBelief {
    pub claim_id: String,
    pub judged_label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub pid: String,
    pub profiles: BTreeMap<Axis, Group>,
    pub observed_beliefs: Vec<ObservedBelief>,
}

impl Participant {
    pub fn profile(&self, axis: Axis) -> Option<DemographicProfile> {
        self.profiles.get(&axis).map(|&g| DemographicProfile::of(g))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimJudgment {
    pub pid: String,
    pub claim_id: String,
    pub participant_choice: Label,
    pub gold_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    /// Judgments per participant moved into observed beliefs.
    pub held_out_per_participant: usize,
    /// Cap on evaluation judgments kept per participant (after hold-out).
    pub max_evaluation_per_participant: Option<usize>,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            held_out_per_participant: 2,
            max_evaluation_per_participant: None,
        }
    }
}

/// Counts and warnings produced while building a cohort.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub raw_judgments: usize,
    pub evaluation_judgments: usize,
    pub observed_entries: usize,
    pub dropped_by_cap: usize,
    /// Participants whose numeric age fell in the excluded 36..=59 band.
    pub age_middle_band_excluded: usize,
    pub missing_axis_values: BTreeMap<Axis, usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntropyBin {
    Low,
    Mid,
    High,
}

impl EntropyBin {
    pub const ALL: [EntropyBin; 3] = [EntropyBin::Low, EntropyBin::Mid, EntropyBin::High];
}

impl fmt::Display for EntropyBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    kind: DatasetKind,
    claims: BTreeMap<String, Claim>,
    participants: BTreeMap<String, Participant>,
    /// Every judgment, sorted by (pid, claim order).
    judgments: Vec<ClaimJudgment>,
    /// Judgments remaining after hold-out; the evaluation targets.
    evaluation: Vec<ClaimJudgment>,
    available_axes: BTreeSet<Axis>,
    report: IngestReport,
    jindex: HashMap<(String, String), usize>,
}

fn index_judgments(js: &[ClaimJudgment]) -> HashMap<(String, String), usize> {
    js.iter()
        .enumerate()
        .map(|(i, j)| ((j.pid.clone(), j.claim_id.clone()), i))
        .collect()
}

/// A participant's raw demographic cells, before axis availability is decided.
#[derive(Debug, Clone, Default)]
pub struct RawDemographics {
    pub cells: BTreeMap<Axis, Option<Group>>,
    pub age_excluded: bool,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    pid: String,
    claim_id: String,
    claim_text: String,
    gold_label: String,
    participant_choice: String,
    #[serde(default)]
    gender: Option<String>,
    #[serde(default)]
    age: Option<String>,
    #[serde(default)]
    education: Option<String>,
    #[serde(default)]
    living_area: Option<String>,
}

impl Cohort {
    /// Loads a dataset CSV with the default hold-out rule.
    pub fn load(path: &Path, kind: DatasetKind) -> Result<Self> {
        Self::load_with(path, kind, &CohortConfig::default())
    }

    pub fn load_with(path: &Path, kind: DatasetKind, config: &CohortConfig) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, "header", format!("{other:?}")),
        })?;
        let mut claims: BTreeMap<String, Claim> = BTreeMap::new();
        let mut demos: BTreeMap<String, RawDemographics> = BTreeMap::new();
        let mut judgments = Vec::new();
        for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
            let rec = format!("row {}", i + 1);
            let row: CsvRow = row.map_err(|e| Error::parse(path, &rec, e))?;
            let gold: Label = row.gold_label.parse().map_err(|e| Error::parse(path, &rec, e))?;
            let choice: Label = row
                .participant_choice
                .parse()
                .map_err(|e| Error::parse(path, &rec, e))?;
            if row.claim_text.trim().is_empty() {
                return Err(Error::parse(path, &rec, "empty claim_text"));
            }
            match claims.get(&row.claim_id) {
                Some(c) if c.text != row.claim_text || c.gold_label != gold => {
                    return Err(Error::parse(
                        path,
                        &rec,
                        format!("claim {} redefined with different text or label", row.claim_id),
                    ));
                }
                Some(_) => {}
                None => {
                    claims.insert(
                        row.claim_id.clone(),
                        Claim {
                            claim_id: row.claim_id.clone(),
                            text: row.claim_text.clone(),
                            gold_label: gold,
                            source_dataset: kind,
                        },
                    );
                }
            }
            let mut raw = RawDemographics::default();
            for (axis, cell) in [
                (Axis::Gender, &row.gender),
                (Axis::Age, &row.age),
                (Axis::Education, &row.education),
                (Axis::LivingArea, &row.living_area),
            ] {
                let cell = cell.as_deref().map(str::trim).filter(|c| !c.is_empty());
                let group = match cell {
                    None => None,
                    Some(c) => {
                        let g = Group::parse_for_axis(axis, c)
                            .map_err(|e| Error::parse(path, &rec, e))?;
                        if g.is_none() {
                            raw.age_excluded = true;
                        }
                        g
                    }
                };
                raw.cells.insert(axis, group);
            }
            match demos.get(&row.pid) {
                Some(prev) if prev.cells != raw.cells || prev.age_excluded != raw.age_excluded => {
                    return Err(Error::parse(
                        path,
                        &rec,
                        format!("participant {} has inconsistent demographics", row.pid),
                    ));
                }
                Some(_) => {}
                None => {
                    demos.insert(row.pid.clone(), raw);
                }
            }
            judgments.push(ClaimJudgment {
                pid: row.pid,
                claim_id: row.claim_id,
                participant_choice: choice,
                gold_label: gold,
            });
        }
        Self::build(kind, claims.into_values().collect(), demos, judgments, config)
    }

    /// Assembles a cohort, validating references and applying the hold-out rule.
    pub fn build(
        kind: DatasetKind,
        claims: Vec<Claim>,
        demographics: BTreeMap<String, RawDemographics>,
        judgments: Vec<ClaimJudgment>,
        config: &CohortConfig,
    ) -> Result<Self> {
        let mut claim_map = BTreeMap::new();
        for c in claims {
            if c.text.trim().is_empty() {
                return Err(Error::Validation(format!("claim {} has empty text", c.claim_id)));
            }
            if claim_map.insert(c.claim_id.clone(), c).is_some() {
                return Err(Error::Validation("duplicate claim_id".into()));
            }
        }

        let mut report = IngestReport {
            raw_judgments: judgments.len(),
            ..Default::default()
        };

        let mut available_axes = BTreeSet::new();
        for &axis in kind.expected_axes() {
            let present = demographics
                .values()
                .filter(|d| d.cells.get(&axis).copied().flatten().is_some())
                .count();
            let excluded = if axis == Axis::Age {
                demographics.values().filter(|d| d.age_excluded).count()
            } else {
                0
            };
            if present == 0 {
                report
                    .warnings
                    .push(format!("axis {axis} has no values; marked unavailable"));
                continue;
            }
            available_axes.insert(axis);
            let missing = demographics.len() - present - excluded;
            if missing > 0 {
                report.missing_axis_values.insert(axis, missing);
                report
                    .warnings
                    .push(format!("{missing} participants lack a value for axis {axis}"));
            }
        }
        report.age_middle_band_excluded =
            demographics.values().filter(|d| d.age_excluded).count();
        if report.age_middle_band_excluded > 0 {
            report.warnings.push(format!(
                "{} participants aged 36-59 excluded from the age axis",
                report.age_middle_band_excluded
            ));
        }

        let mut by_pid: BTreeMap<String, Vec<ClaimJudgment>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for j in judgments {
            if !demographics.contains_key(&j.pid) {
                return Err(Error::Validation(format!(
                    "judgment references unknown participant {}",
                    j.pid
                )));
            }
            let Some(claim) = claim_map.get(&j.claim_id) else {
                return Err(Error::Validation(format!(
                    "judgment references unknown claim {}",
                    j.claim_id
                )));
            };
            if claim.gold_label != j.gold_label {
                return Err(Error::Validation(format!(
                    "judgment ({}, {}) disagrees with the claim's gold label",
                    j.pid, j.claim_id
                )));
            }
            if !seen.insert((j.pid.clone(), j.claim_id.clone())) {
                return Err(Error::Validation(format!(
                    "duplicate judgment ({}, {})",
                    j.pid, j.claim_id
                )));
            }
            by_pid.entry(j.pid.clone()).or_default().push(j);
        }

        let mut participants = BTreeMap::new();
        let mut all = Vec::new();
        let mut evaluation = Vec::new();
        for (pid, raw) in &demographics {
            let mut js = by_pid.remove(pid).unwrap_or_default();
            js.sort_by_key(|j| qid_order_key(&j.claim_id));
            let held = config.held_out_per_participant.min(js.len());
            let observed: Vec<ObservedBelief> = js[..held]
                .iter()
                .map(|j| ObservedBelief {
                    claim_id: j.claim_id.clone(),
                    judged_label: j.participant_choice,
                })
                .collect();
            let mut eval: Vec<ClaimJudgment> = js[held..].to_vec();
            if let Some(cap) = config.max_evaluation_per_participant {
                if eval.len() > cap {
                    report.dropped_by_cap += eval.len() - cap;
                    eval.truncate(cap);
                }
            }
            report.observed_entries += observed.len();
            let profiles = raw
                .cells
                .iter()
                .filter(|(axis, _)| available_axes.contains(axis))
                .filter_map(|(&axis, g)| g.map(|g| (axis, g)))
                .collect();
            participants.insert(
                pid.clone(),
                Participant {
                    pid: pid.clone(),
                    profiles,
                    observed_beliefs: observed,
                },
            );
            evaluation.extend(eval);
            all.extend(js);
        }
        report.evaluation_judgments = evaluation.len();

        Ok(Self {
            kind,
            claims: claim_map,
            participants,
            jindex: index_judgments(&all),
            judgments: all,
            evaluation,
            available_axes,
            report,
        })
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn available_axes(&self) -> &BTreeSet<Axis> {
        &self.available_axes
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_claims(&self) -> usize {
        self.claims.len()
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.claims.values()
    }

    pub fn claim(&self, claim_id: &str) -> Option<&Claim> {
        self.claims.get(claim_id)
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    pub fn participant(&self, pid: &str) -> Option<&Participant> {
        self.participants.get(pid)
    }

    /// All judgments including held-out ones.
    pub fn judgments(&self) -> &[ClaimJudgment] {
        &self.judgments
    }

    /// Evaluation targets (judgments not held out as observed beliefs).
    pub fn evaluation(&self) -> &[ClaimJudgment] {
        &self.evaluation
    }

    pub fn judgment(&self, pid: &str, claim_id: &str) -> Option<&ClaimJudgment> {
        self.jindex
            .get(&(pid.to_string(), claim_id.to_string()))
            .map(|&i| &self.judgments[i])
    }

    /// Shannon entropy (bits) of participant choices on one claim.
    pub fn claim_entropy(&self, claim_id: &str) -> Result<f64> {
        if !self.claims.contains_key(claim_id) {
            return Err(Error::unknown("claim", claim_id));
        }
        let (mut t, mut f) = (0usize, 0usize);
        for j in self.judgments.iter().filter(|j| j.claim_id == claim_id) {
            match j.participant_choice {
                Label::True => t += 1,
                Label::Fake => f += 1,
            }
        }
        let n = t + f;
        if n == 0 {
            return Err(Error::Empty(format!("claim {claim_id} has no judgments")));
        }
        Ok(entropy_bits(&[t as f64 / n as f64, f as f64 / n as f64]))
    }

    /// Entropy of every claim with at least one judgment.
    pub fn claim_entropies(&self) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for j in &self.judgments {
            let e = counts.entry(j.claim_id.as_str()).or_default();
            match j.participant_choice {
                Label::True => e.0 += 1,
                Label::Fake => e.1 += 1,
            }
        }
        counts
            .into_iter()
            .map(|(id, (t, f))| {
                let n = (t + f) as f64;
                (id.to_string(), entropy_bits(&[t as f64 / n, f as f64 / n]))
            })
            .collect()
    }

    /// Tertile assignment of claims by entropy.
    pub fn entropy_bins(&self) -> BTreeMap<String, EntropyBin> {
        tertile_bins(&self.claim_entropies())
    }

    /// Participants whose group on `profile.axis()` matches, with their judgments.
    pub fn demographic_slice(&self, profile: DemographicProfile) -> Result<Cohort> {
        let axis = profile.axis();
        if !self.available_axes.contains(&axis) {
            return Err(Error::AxisUnavailable(axis));
        }
        let keep: BTreeSet<&str> = self
            .participants
            .values()
            .filter(|p| p.profiles.get(&axis) == Some(&profile.group()))
            .map(|p| p.pid.as_str())
            .collect();
        let participants: BTreeMap<String, Participant> = self
            .participants
            .iter()
            .filter(|(pid, _)| keep.contains(pid.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let judgments: Vec<ClaimJudgment> = self
            .judgments
            .iter()
            .filter(|j| keep.contains(j.pid.as_str()))
            .cloned()
            .collect();
        let evaluation: Vec<ClaimJudgment> = self
            .evaluation
            .iter()
            .filter(|j| keep.contains(j.pid.as_str()))
            .cloned()
            .collect();
        let referenced: BTreeSet<&str> = judgments.iter().map(|j| j.claim_id.as_str()).collect();
        let claims = self
            .claims
            .iter()
            .filter(|(id, _)| referenced.contains(id.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let report = IngestReport {
            raw_judgments: judgments.len(),
            evaluation_judgments: evaluation.len(),
            observed_entries: participants.values().map(|p| p.observed_beliefs.len()).sum(),
            ..Default::default()
        };
        Ok(Cohort {
            kind: self.kind,
            claims,
            participants,
            jindex: index_judgments(&judgments),
            judgments,
            evaluation,
            available_axes: self.available_axes.clone(),
            report,
        })
    }

    /// Newline-delimited canonical form: claims, then participants, then judgments.
    pub fn to_canonical_ndjson(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Rec<'a> {
            Claim(&'a Claim),
            Participant(&'a Participant),
            Judgment {
                #[serde(flatten)]
                judgment: &'a ClaimJudgment,
                evaluation: bool,
            },
        }
        let eval: BTreeSet<(&str, &str)> = self
            .evaluation
            .iter()
            .map(|j| (j.pid.as_str(), j.claim_id.as_str()))
            .collect();
        let mut out = String::new();
        let mut push = |r: Rec| {
            out.push_str(&serde_json::to_string(&r).expect("canonical record serializes"));
            out.push('\n');
        };
        for c in self.claims.values() {
            push(Rec::Claim(c));
        }
        for p in self.participants.values() {
            push(Rec::Participant(p));
        }
        for j in &self.judgments {
            push(Rec::Judgment {
                judgment: j,
                evaluation: eval.contains(&(j.pid.as_str(), j.claim_id.as_str())),
            });
        }
        out
    }

    /// Writes the cohort back out in the dataset CSV layout.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Validation(e.to_string()))?;
        let res = (|| -> std::result::Result<(), csv::Error> {
            w.write_record([
                "pid",
                "claim_id",
                "claim_text",
                "gold_label",
                "participant_choice",
                "gender",
                "age",
                "education",
                "living_area",
            ])?;
            for j in &self.judgments {
                let p = &self.participants[&j.pid];
                let c = &self.claims[&j.claim_id];
                let cell = |a: Axis| p.profiles.get(&a).map(|g| g.as_str()).unwrap_or("");
                w.write_record([
                    j.pid.as_str(),
                    j.claim_id.as_str(),
                    c.text.as_str(),
                    j.gold_label.as_str(),
                    j.participant_choice.as_str(),
                    cell(Axis::Gender),
                    cell(Axis::Age),
                    cell(Axis::Education),
                    cell(Axis::LivingArea),
                ])?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }
}

/// Splits claims at the 1/3 and 2/3 lower empirical quantiles of entropy.
///
/// Boundary `j` is the `ceil(j * n / 3)`-th order statistic; a claim falls in
/// the first bin whose boundary it does not exceed. Fewer than three claims
/// puts everything in `Low`.
pub fn tertile_bins(entropies: &BTreeMap<String, f64>) -> BTreeMap<String, EntropyBin> {
    let n = entropies.len();
    if n < 3 {
        return entropies.keys().map(|k| (k.clone(), EntropyBin::Low)).collect();
    }
    let mut sorted: Vec<f64> = entropies.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let boundary = |j: usize| sorted[(j * n).div_ceil(3) - 1];
    let (b1, b2) = (boundary(1), boundary(2));
    entropies
        .iter()
        .map(|(k, &e)| {
            let bin = if e <= b1 {
                EntropyBin::Low
            } else if e <= b2 {
                EntropyBin::Mid
            } else {
                EntropyBin::High
            };
            (k.clone(), bin)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    const FIXTURE: &str = "\
pid,claim_id,claim_text,gold_label,participant_choice,gender,age,education,living_area
p1,c1,Claim one,fake,fake,female,25,completed_hs,rural
p1,c2,Claim two,true,true,female,25,completed_hs,rural
p1,c3,Claim three,fake,true,female,25,completed_hs,rural
p2,c1,Claim one,fake,fake,male,70,not_completed_hs,urban
p2,c2,Claim two,true,fake,male,70,not_completed_hs,urban
p2,c3,Claim three,fake,fake,male,70,not_completed_hs,urban
p3,c1,Claim one,false,real,male,45,completed_hs,urban
p3,c2,Claim two,real,true,male,45,completed_hs,urban
p3,c3,Claim three,fake,fake,male,45,completed_hs,urban
";

    fn load(body: &str, kind: DatasetKind) -> Result<Cohort> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        Cohort::load(&p, kind)
    }

    #[test]
    fn counts_under_hold_out_rule() {
        let c = load(FIXTURE, DatasetKind::Pandora).unwrap();
        assert_eq!(c.n_participants(), 3);
        assert_eq!(c.judgments().len(), 9);
        assert_eq!(c.report().observed_entries, 6);
        assert_eq!(c.evaluation().len(), 3);
        for p in c.participants() {
            let eval: BTreeSet<_> = c
                .evaluation()
                .iter()
                .filter(|j| j.pid == p.pid)
                .map(|j| j.claim_id.clone())
                .collect();
            assert!(p.observed_beliefs.len() <= 2);
            assert!(p.observed_beliefs.iter().all(|o| !eval.contains(&o.claim_id)));
        }
        // labels normalized via the alias table
        assert_eq!(c.judgment("p3", "c1").unwrap().participant_choice, Label::True);
        assert_eq!(c.report().age_middle_band_excluded, 1);
        assert!(c.participant("p3").unwrap().profile(Axis::Age).is_none());
    }

    #[test]
    fn duplicate_judgment_rejected() {
        let body = format!("{FIXTURE}p1,c1,Claim one,fake,true,female,25,completed_hs,rural\n");
        assert!(matches!(
            load(&body, DatasetKind::Pandora),
            Err(Error::Validation(_)) | Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unknown_references_rejected() {
        let claims = vec![Claim {
            claim_id: "c1".into(),
            text: "x".into(),
            gold_label: Label::Fake,
            source_dataset: DatasetKind::Pandora,
        }];
        let mut demos = BTreeMap::new();
        demos.insert("p1".to_string(), RawDemographics::default());
        let bad_claim = vec![ClaimJudgment {
            pid: "p1".into(),
            claim_id: "zz".into(),
            participant_choice: Label::Fake,
            gold_label: Label::Fake,
        }];
        let cfg = CohortConfig::default();
        assert!(Cohort::build(DatasetKind::Pandora, claims.clone(), demos.clone(), bad_claim, &cfg).is_err());
        let bad_pid = vec![ClaimJudgment {
            pid: "nobody".into(),
            claim_id: "c1".into(),
            participant_choice: Label::Fake,
            gold_label: Label::Fake,
        }];
        assert!(Cohort::build(DatasetKind::Pandora, claims, demos, bad_pid, &cfg).is_err());
    }

    #[test]
    fn missing_axis_marked_unavailable() {
        let body = FIXTURE
            .lines()
            .map(|l| {
                let mut cols: Vec<&str> = l.split(',').collect();
                if cols[0] != "pid" {
                    cols[8] = "";
                }
                cols.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n");
        let c = load(&body, DatasetKind::Pandora).unwrap();
        assert!(!c.available_axes().contains(&Axis::LivingArea));
        assert!(c.report().warnings.iter().any(|w| w.contains("living_area")));
        assert!(matches!(
            c.demographic_slice(DemographicProfile::of(Group::Rural)),
            Err(Error::AxisUnavailable(Axis::LivingArea))
        ));
    }

    #[test]
    fn mist_ignores_living_area() {
        let c = load(FIXTURE, DatasetKind::Mist1).unwrap();
        assert!(!c.available_axes().contains(&Axis::LivingArea));
    }

    #[test]
    fn entropy_cases() {
        let c = load(FIXTURE, DatasetKind::Pandora).unwrap();
        // c1: fake, fake, true -> H(1/3)
        let h = -(1.0f64 / 3.0) * (1.0f64 / 3.0).log2() - (2.0f64 / 3.0) * (2.0f64 / 3.0).log2();
        assert_abs_diff_eq!(c.claim_entropy("c1").unwrap(), h, epsilon = 1e-12);
        assert!(c.claim_entropy("missing").is_err());
    }

    #[test]
    fn tertiles_on_nine_distinct() {
        let e: BTreeMap<String, f64> = (0..9).map(|i| (format!("c{i}"), i as f64 / 10.0)).collect();
        let bins = tertile_bins(&e);
        for b in EntropyBin::ALL {
            assert_eq!(bins.values().filter(|&&x| x == b).count(), 3);
        }
    }

    #[test]
    fn tertiles_degenerate() {
        let e: BTreeMap<String, f64> = (0..5).map(|i| (format!("c{i}"), 0.0)).collect();
        assert!(tertile_bins(&e).values().all(|&b| b == EntropyBin::Low));
        let e: BTreeMap<String, f64> = (0..2).map(|i| (format!("c{i}"), i as f64)).collect();
        assert!(tertile_bins(&e).values().all(|&b| b == EntropyBin::Low));
    }

    #[test]
    fn tertile_boundaries_match_sort_and_split() {
        let values = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let e: BTreeMap<String, f64> =
            values.iter().enumerate().map(|(i, &v)| (format!("c{i}"), v)).collect();
        let bins = tertile_bins(&e);
        // independent: sort, boundaries at the 2nd and 4th order statistics
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let (b1, b2) = (s[1], s[3]);
        for (k, v) in &e {
            let expect = if *v <= b1 {
                EntropyBin::Low
            } else if *v <= b2 {
                EntropyBin::Mid
            } else {
                EntropyBin::High
            };
            assert_eq!(bins[k], expect);
        }
    }

    #[test]
    fn slices_partition() {
        let c = load(FIXTURE, DatasetKind::Pandora).unwrap();
        let f = c.demographic_slice(DemographicProfile::of(Group::Female)).unwrap();
        let m = c.demographic_slice(DemographicProfile::of(Group::Male)).unwrap();
        assert_eq!(f.n_participants() + m.n_participants(), c.n_participants());
        assert_eq!(f.judgments().len() + m.judgments().len(), c.judgments().len());
        let rural = c.demographic_slice(DemographicProfile::of(Group::Rural)).unwrap();
        assert_eq!(rural.n_participants(), 1);
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let a = load(FIXTURE, DatasetKind::Pandora).unwrap().to_canonical_ndjson();
        let b = load(FIXTURE, DatasetKind::Pandora).unwrap().to_canonical_ndjson();
        assert_eq!(a, b);
    }
}
