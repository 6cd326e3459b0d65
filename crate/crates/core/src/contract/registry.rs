//! Root registry shared by providers for cross-provider dedup.
//!
//! Providers register their dedup contract once. Contracts publish tags they
//! store and look up tags they do not.

use im::OrdMap;
use serde::{Deserialize, Serialize};

use super::{Call, ContractState, Event, Reply};
use crate::crypto::Tag;
use crate::ledger::{Address, Env, TxError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub csp: Address,
    pub dedu_contract: Address,
    pub info: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagIndexEntry {
    pub tag: Tag,
    pub dedu_contract: Address,
    pub csp: Address,
    pub info: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    by_csp: OrdMap<Address, RegistryEntry>,
    by_contract: OrdMap<Address, Address>,
    tags: OrdMap<Tag, TagIndexEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.by_csp.values()
    }

    pub fn lookup(&self, tag: &Tag) -> Option<&TagIndexEntry> {
        self.tags.get(tag)
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }

    /// Provider that registered `contract`.
    pub fn csp_of(&self, contract: Address) -> Option<Address> {
        self.by_contract.get(&contract).copied()
    }

    fn entry_for_contract(&self, contract: Address) -> Option<&RegistryEntry> {
        self.by_contract.get(&contract).and_then(|csp| self.by_csp.get(csp))
    }

    pub(crate) fn handle(&mut self, env: &mut Env<'_>, call: Call) -> Result<Reply, TxError> {
        let sender = env.sender();
        match call {
            Call::Register { contract, info } => {
                if self.by_csp.contains_key(&sender) {
                    return Err(TxError::AlreadyRegistered(sender));
                }
                if self.by_contract.contains_key(&contract) {
                    return Err(TxError::AlreadyRegistered(contract));
                }
                let owned = matches!(env.peek(contract), Some(ContractState::Dedu(d)) if d.owner() == sender);
                if !owned {
                    return Err(TxError::NotContractOwner { contract, csp: sender });
                }
                self.by_csp.insert(sender, RegistryEntry { csp: sender, dedu_contract: contract, info });
                self.by_contract.insert(contract, sender);
                env.emit(Event::Registered { csp: sender, contract });
                Ok(Reply::None)
            }
            Call::SetTag { tag } => {
                let entry = self.entry_for_contract(sender).cloned().ok_or(TxError::NotRegistered(sender))?;
                if self.tags.contains_key(&tag) {
                    return Err(TxError::DuplicateTag);
                }
                self.tags.insert(
                    tag,
                    TagIndexEntry { tag, dedu_contract: sender, csp: entry.csp, info: entry.info },
                );
                env.emit(Event::TagIndexed { tag, contract: sender, csp: entry.csp });
                Ok(Reply::None)
            }
            Call::GetTag { tag } => {
                if self.entry_for_contract(sender).is_none() {
                    return Err(TxError::NotRegistered(sender));
                }
                Ok(match self.tags.get(&tag) {
                    Some(e) => Reply::TagFound { contract: e.dedu_contract, csp: e.csp, info: e.info.clone() },
                    None => Reply::NotFound,
                })
            }
            other => Err(TxError::UnknownFunction { target: env.this(), function: other.name().into() }),
        }
    }
}
