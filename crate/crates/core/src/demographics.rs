//! The four binary demographic axes and their groups.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Gender,
    Age,
    Education,
    LivingArea,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Gender, Axis::Age, Axis::Education, Axis::LivingArea];

    /// The two groups of this axis, in canonical order.
    pub fn groups(self) -> [Group; 2] {
        match self {
            Axis::Gender => [Group::Female, Group::Male],
            Axis::Age => [Group::Younger, Group::Older],
            Axis::Education => [Group::CompletedHs, Group::NotCompletedHs],
            Axis::LivingArea => [Group::Rural, Group::Urban],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Gender => "gender",
            Axis::Age => "age",
            Axis::Education => "education",
            Axis::LivingArea => "living_area",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "gender" => Ok(Axis::Gender),
            "age" => Ok(Axis::Age),
            "education" => Ok(Axis::Education),
            "living_area" | "livingarea" | "area" | "rural_urban" => Ok(Axis::LivingArea),
            _ => Err(Error::unknown("axis", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Female,
    Male,
    /// Age 35 or under.
    Younger,
    /// Age 60 or over.
    Older,
    CompletedHs,
    NotCompletedHs,
    Rural,
    Urban,
}

impl Group {
    pub const ALL: [Group; 8] = [
        Group::Female,
        Group::Male,
        Group::Younger,
        Group::Older,
        Group::CompletedHs,
        Group::NotCompletedHs,
        Group::Rural,
        Group::Urban,
    ];

    pub fn axis(self) -> Axis {
        match self {
            Group::Female | Group::Male => Axis::Gender,
            Group::Younger | Group::Older => Axis::Age,
            Group::CompletedHs | Group::NotCompletedHs => Axis::Education,
            Group::Rural | Group::Urban => Axis::LivingArea,
        }
    }

    /// The other group on the same axis.
    pub fn swapped(self) -> Group {
        let [a, b] = self.axis().groups();
        if self == a {
            b
        } else {
            a
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Female => "female",
            Group::Male => "male",
            Group::Younger => "younger",
            Group::Older => "older",
            Group::CompletedHs => "completed_hs",
            Group::NotCompletedHs => "not_completed_hs",
            Group::Rural => "rural",
            Group::Urban => "urban",
        }
    }

    /// Natural-language phrase substituted for the persona attribute slot.
    pub fn phrase(self) -> &'static str {
        match self {
            Group::Female => "female",
            Group::Male => "male",
            Group::Younger => "younger (age 35 or under)",
            Group::Older => "older (age 60 or over)",
            Group::CompletedHs => "completed high school",
            Group::NotCompletedHs => "not completed high school",
            Group::Rural => "living in a rural area",
            Group::Urban => "living in an urban area",
        }
    }

    /// Parses a raw dataset cell for the given axis. Ages may be numeric.
    ///
    /// Returns `Ok(None)` for a numeric age in the excluded 36..=59 band.
    pub fn parse_for_axis(axis: Axis, raw: &str) -> Result<Option<Group>> {
        let norm = raw.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        if axis == Axis::Age {
            if let Ok(years) = norm.parse::<f64>() {
                return Ok(if years <= 35.0 {
                    Some(Group::Younger)
                } else if years >= 60.0 {
                    Some(Group::Older)
                } else {
                    None
                });
            }
        }
        let group = match (axis, norm.as_str()) {
            (Axis::Gender, "female" | "f" | "woman") => Group::Female,
            (Axis::Gender, "male" | "m" | "man") => Group::Male,
            (Axis::Age, "younger" | "young" | "<=35") => Group::Younger,
            (Axis::Age, "older" | "old" | ">=60" | "60+") => Group::Older,
            (
                Axis::Education,
                "completed_hs" | "completed" | "completed_high_school" | "hs_completed",
            ) => Group::CompletedHs,
            (
                Axis::Education,
                "not_completed_hs" | "not_completed" | "not_completed_high_school",
            ) => Group::NotCompletedHs,
            (Axis::LivingArea, "rural") => Group::Rural,
            (Axis::LivingArea, "urban") => Group::Urban,
            _ => {
                return Err(Error::Validation(format!(
                    "'{raw}' is not a legal group for axis {axis}"
                )))
            }
        };
        Ok(Some(group))
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An (axis, group) pair whose group is legal for its axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct DemographicProfile {
    axis: Axis,
    group: Group,
}

impl DemographicProfile {
    pub fn new(axis: Axis, group: Group) -> Result<Self> {
        if group.axis() != axis {
            return Err(Error::Validation(format!(
                "group {group} is not legal for axis {axis}"
            )));
        }
        Ok(Self { axis, group })
    }

    pub fn of(group: Group) -> Self {
        Self {
            axis: group.axis(),
            group,
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn swapped(&self) -> Self {
        Self::of(self.group.swapped())
    }
}

impl fmt::Display for DemographicProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.axis, self.group)
    }
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    axis: Axis,
    group: Group,
}

impl TryFrom<RawProfile> for DemographicProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        DemographicProfile::new(raw.axis, raw.group)
    }
}

impl From<DemographicProfile> for RawProfile {
    fn from(p: DemographicProfile) -> Self {
        RawProfile {
            axis: p.axis,
            group: p.group,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn illegal_group_rejected() {
        assert!(DemographicProfile::new(Axis::Gender, Group::Rural).is_err());
        assert!(DemographicProfile::new(Axis::LivingArea, Group::Rural).is_ok());
    }

    #[test]
    fn swap_is_an_involution() {
        for axis in Axis::ALL {
            for g in axis.groups() {
                assert_ne!(g.swapped(), g);
                assert_eq!(g.swapped().swapped(), g);
                assert_eq!(g.swapped().axis(), axis);
            }
        }
    }

    #[test]
    fn numeric_ages_band() {
        assert_eq!(Group::parse_for_axis(Axis::Age, "35").unwrap(), Some(Group::Younger));
        assert_eq!(Group::parse_for_axis(Axis::Age, "60").unwrap(), Some(Group::Older));
        assert_eq!(Group::parse_for_axis(Axis::Age, "47").unwrap(), None);
        assert!(Group::parse_for_axis(Axis::Gender, "rural").is_err());
    }

    #[test]
    fn profile_serde_validates() {
        let ok: DemographicProfile =
            serde_json::from_str(r#"{"axis":"gender","group":"female"}"#).unwrap();
        assert_eq!(ok.group(), Group::Female);
        let bad = serde_json::from_str::<DemographicProfile>(r#"{"axis":"gender","group":"urban"}"#);
        assert!(bad.is_err());
    }
}
