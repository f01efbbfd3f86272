use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of one condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails {
        /// Direction at which the condition is violated.
        witness: Vec<f64>,
        /// Branch mask, when the failure is branch-specific.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        branch: Option<u32>,
        detail: String,
    },
    NotApplicable {
        reason: String,
    },
    Unverifiable {
        reason: String,
    },
}

impl Verdict {
    pub fn fails(witness: Vec<f64>, detail: impl Into<String>) -> Self {
        Verdict::Fails {
            witness,
            branch: None,
            detail: detail.into(),
        }
    }

    pub fn not_applicable(reason: impl Into<String>) -> Self {
        Verdict::NotApplicable { reason: reason.into() }
    }

    pub fn unverifiable(reason: impl Into<String>) -> Self {
        Verdict::Unverifiable { reason: reason.into() }
    }

    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Verdict::Fails { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails { .. } => "fails",
            Verdict::NotApplicable { .. } => "not-applicable",
            Verdict::Unverifiable { .. } => "unverifiable",
        }
    }

    /// Conjunction: the first failure wins, then the first unverifiable.
    pub fn all<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Verdict {
        let mut unverifiable = None;
        let mut any = false;
        for v in verdicts {
            any = true;
            match v {
                Verdict::Fails { .. } => return v.clone(),
                Verdict::Unverifiable { .. } | Verdict::NotApplicable { .. } if unverifiable.is_none() => {
                    unverifiable = Some(v.clone())
                }
                _ => {}
            }
        }
        match (any, unverifiable) {
            (false, _) => Verdict::not_applicable("nothing to check"),
            (true, Some(v)) => v,
            (true, None) => Verdict::Holds,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => write!(f, "holds"),
            Verdict::Fails {
                witness,
                branch,
                detail,
            } => {
                write!(f, "fails at {witness:?}")?;
                if let Some(b) = branch {
                    write!(f, " (branch {b:#b})")?;
                }
                if !detail.is_empty() {
                    write!(f, ": {detail}")?;
                }
                Ok(())
            }
            Verdict::NotApplicable { reason } => write!(f, "not applicable: {reason}"),
            Verdict::Unverifiable { reason } => write!(f, "unverifiable: {reason}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjunction_order() {
        let f = Verdict::fails(vec![1.0], "x");
        let u = Verdict::unverifiable("u");
        assert_eq!(Verdict::all([&Verdict::Holds, &u, &f]), f);
        assert_eq!(Verdict::all([&Verdict::Holds, &u]), u);
        assert_eq!(Verdict::all([&Verdict::Holds]), Verdict::Holds);
    }

    #[test]
    fn json_tags() {
        let s = serde_json::to_string(&Verdict::not_applicable("r")).unwrap();
        assert_eq!(s, r#"{"status":"not-applicable","reason":"r"}"#);
        let back: Verdict = serde_json::from_str(&s).unwrap();
        assert_eq!(back, Verdict::not_applicable("r"));
    }
}
