//! JSON certificates: a proof tree with assertions and commands in concrete
//! syntax, so a proof can be re-checked without searching again.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HoareTriple, ProofTree, RuleData, RuleKind};
use crate::assertions::{parse_assertion, Assertion, AssertionParseError};
use crate::lang::{parse, ParseError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub rule: RuleKind,
    pub pre: String,
    pub post: String,
    pub cmd: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_data: Option<CertRuleData>,
    #[serde(default)]
    pub premises: Vec<Certificate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, rename_all = "camelCase")]
pub enum CertRuleData {
    #[serde(rename_all = "camelCase")]
    Frame { frame: String },
    #[serde(rename_all = "camelCase")]
    ViewShift { inner_pre: String, inner_post: String },
    #[serde(rename_all = "camelCase")]
    Fork { child_obligations: u64, child_credits: u64 },
}

#[derive(Debug, Error)]
pub enum CertError {
    #[error("malformed certificate JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad command `{text}`: {source}")]
    Command { text: String, source: ParseError },
    #[error("bad assertion `{text}`: {source}")]
    Assertion { text: String, source: AssertionParseError },
}

fn assertion(text: &str) -> Result<Assertion, CertError> {
    parse_assertion(text).map_err(|source| CertError::Assertion {
        text: text.to_string(),
        source,
    })
}

impl Certificate {
    pub fn from_tree(t: &ProofTree) -> Certificate {
        let rule_data = match &t.data {
            RuleData::None => None,
            RuleData::Frame { frame } => Some(CertRuleData::Frame { frame: frame.to_string() }),
            RuleData::ViewShift { inner_pre, inner_post } => Some(CertRuleData::ViewShift {
                inner_pre: inner_pre.to_string(),
                inner_post: inner_post.to_string(),
            }),
            RuleData::Fork {
                child_obligations,
                child_credits,
            } => Some(CertRuleData::Fork {
                child_obligations: *child_obligations,
                child_credits: *child_credits,
            }),
        };
        Certificate {
            rule: t.rule,
            pre: t.conclusion.pre.to_string(),
            post: t.conclusion.post.to_string(),
            cmd: t.conclusion.cmd.to_string(),
            rule_data,
            premises: t.premises.iter().map(Certificate::from_tree).collect(),
        }
    }

    /// Rebuilds the tree. Commands are re-parsed, so sequences come back
    /// right-associated.
    pub fn to_tree(&self) -> Result<ProofTree, CertError> {
        let cmd = parse(&self.cmd).map_err(|source| CertError::Command {
            text: self.cmd.clone(),
            source,
        })?;
        let data = match &self.rule_data {
            None => RuleData::None,
            Some(CertRuleData::Frame { frame }) => RuleData::Frame {
                frame: assertion(frame)?,
            },
            Some(CertRuleData::ViewShift { inner_pre, inner_post }) => RuleData::ViewShift {
                inner_pre: assertion(inner_pre)?,
                inner_post: assertion(inner_post)?,
            },
            Some(CertRuleData::Fork {
                child_obligations,
                child_credits,
            }) => RuleData::Fork {
                child_obligations: *child_obligations,
                child_credits: *child_credits,
            },
        };
        Ok(ProofTree {
            conclusion: HoareTriple::new(assertion(&self.pre)?, cmd, assertion(&self.post)?),
            rule: self.rule,
            premises: self.premises.iter().map(Certificate::to_tree).collect::<Result<_, _>>()?,
            data,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificates always serialize")
    }

    pub fn from_json(text: &str) -> Result<Certificate, CertError> {
        Ok(serde_json::from_str(text)?)
    }
}
