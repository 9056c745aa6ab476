use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cohort::Label;

/// A parsed model reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    Fake,
    Unparseable,
}

impl Verdict {
    pub fn label(self) -> Option<Label> {
        match self {
            Verdict::True => Some(Label::True),
            Verdict::Fake => Some(Label::Fake),
            Verdict::Unparseable => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::Fake => "fake",
            Verdict::Unparseable => "unparseable",
        }
    }
}

impl From<Label> for Verdict {
    fn from(l: Label) -> Self {
        match l {
            Label::True => Verdict::True,
            Label::Fake => Verdict::Fake,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(true|fake)\b").expect("static regex"))
}

/// First whole-word `true` or `fake`, case-insensitive.
pub fn parse_verdict(reply: &str) -> Verdict {
    match verdict_re().find(reply) {
        Some(m) if m.as_str().eq_ignore_ascii_case("true") => Verdict::True,
        Some(_) => Verdict::Fake,
        None => Verdict::Unparseable,
    }
}
