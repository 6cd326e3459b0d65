//! Event log shared by the ledger and the off-chain actors.
//!
//! Serialized as one JSON object per line. All maps are ordered, so identical
//! runs produce byte-identical output.

use serde::{Deserialize, Serialize};

use super::{Address, Receipt};
use crate::crypto::Tag;
use crate::money::Money;

/// A message exchanged outside the ledger (file upload, proof, link, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffChain {
    pub tau: u64,
    pub from: Address,
    pub to: Address,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contract: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tag: Option<Tag>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub req: Option<u64>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum TraceEntry {
    Account { address: Address, initial: Money, label: String },
    Deploy { tau: u64, deployer: Address, contract: Address, kind: String, cost: Money },
    Tx(Box<Receipt>),
    Advance { from: u64, to: u64 },
    OffChain(OffChain),
}

impl TraceEntry {
    pub fn tau(&self) -> Option<u64> {
        match self {
            TraceEntry::Account { .. } => None,
            TraceEntry::Deploy { tau, .. } => Some(*tau),
            TraceEntry::Tx(r) => Some(r.tau),
            TraceEntry::Advance { to, .. } => Some(*to),
            TraceEntry::OffChain(o) => Some(o.tau),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn push(&mut self, e: TraceEntry) {
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn receipts(&self) -> impl Iterator<Item = &Receipt> {
        self.entries.iter().filter_map(|e| match e {
            TraceEntry::Tx(r) => Some(r.as_ref()),
            _ => None,
        })
    }

    pub fn off_chain(&self) -> impl Iterator<Item = &OffChain> {
        self.entries.iter().filter_map(|e| match e {
            TraceEntry::OffChain(o) => Some(o),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("trace entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Trace { entries })
    }
}
