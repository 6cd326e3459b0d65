//! Contract state machines mounted on the [`Ledger`](crate::ledger::Ledger).

pub mod cross;
pub mod dedu;
pub mod registry;

use serde::{Deserialize, Serialize};

use crate::crypto::Tag;
use crate::ledger::{Address, Env, TxError};
use crate::money::Money;

pub use cross::{cross_requests, CrossRequest, CrossStatus};
pub use dedu::{DeduContract, DeduSettings, RequestRecord, RequestState, Route};
pub use registry::Registry;

/// Functionalities, named as they appear on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "camelCase")]
pub enum Call {
    Create { sf: Money, ef: Money, interval: u64 },
    Request { tag: Tag, size: u64 },
    Pay { tag: Tag, req: u64 },
    CspConf { tag: Tag, req: u64 },
    UsrConf { tag: Tag, req: u64 },
    Refund { tag: Tag, req: u64 },
    Claim { tag: Tag, req: u64 },
    DeLink { tag: Tag, req: u64 },
    FundAccessFees,
    Register { contract: Address, info: String },
    SetTag { tag: Tag },
    GetTag { tag: Tag },
    RemoteRequest { tag: Tag, size: u64, user: Address, origin_req: u64 },
    RemotePay { tag: Tag, req: u64 },
    RemoteCspConf { tag: Tag, req: u64 },
    RemoteUsrConf { tag: Tag, req: u64 },
    RemoteRefund { tag: Tag, req: u64 },
    RemoteClaim { tag: Tag, req: u64 },
    RemoteDeLink { tag: Tag, req: u64 },
}

impl Call {
    pub fn name(&self) -> &'static str {
        match self {
            Call::Create { .. } => "create",
            Call::Request { .. } => "request",
            Call::Pay { .. } => "pay",
            Call::CspConf { .. } => "cspConf",
            Call::UsrConf { .. } => "usrConf",
            Call::Refund { .. } => "refund",
            Call::Claim { .. } => "claim",
            Call::DeLink { .. } => "deLink",
            Call::FundAccessFees => "fundAccessFees",
            Call::Register { .. } => "register",
            Call::SetTag { .. } => "setTag",
            Call::GetTag { .. } => "getTag",
            Call::RemoteRequest { .. } => "remoteRequest",
            Call::RemotePay { .. } => "remotePay",
            Call::RemoteCspConf { .. } => "remoteCspConf",
            Call::RemoteUsrConf { .. } => "remoteUsrConf",
            Call::RemoteRefund { .. } => "remoteRefund",
            Call::RemoteClaim { .. } => "remoteClaim",
            Call::RemoteDeLink { .. } => "remoteDeLink",
        }
    }
}

/// What a user learns from a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub tag: Tag,
    pub req: u64,
    pub pay: Money,
    pub sf: Money,
    /// True when no active holder exists, so the file itself must be sent.
    pub full_price: bool,
    pub tau_p: u64,
    pub tau_c1: u64,
    pub tau_c2: u64,
    /// Provider that stores the file and must confirm.
    pub storer: Address,
    /// Contract where the storer confirms and claims.
    pub storer_contract: Address,
    pub storer_req: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    #[default]
    None,
    Quote(Quote),
    TagFound { contract: Address, csp: Address, info: String },
    NotFound,
}

impl Reply {
    pub fn quote(&self) -> Option<&Quote> {
        match self {
            Reply::Quote(q) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Configured { sf: Money, ef: Money, interval: u64 },
    Requested { tag: Tag, req: u64, user: Address, pay: Money, full_price: bool, route: Route },
    Paid { tag: Tag, req: u64, amount: Money },
    CspConfirmed { tag: Tag, req: u64 },
    Activated { tag: Tag, req: u64, to_csp: Money, shares: Vec<(Address, Money)> },
    Refunded { tag: Tag, req: u64, amount: Money },
    Claimed { tag: Tag, req: u64, amount: Money },
    Delinked { tag: Tag, req: u64 },
    FloatFunded { amount: Money },
    AccessFee { tag: Tag, req: u64, from: Address, to: Address, amount: Money },
    Registered { csp: Address, contract: Address },
    TagIndexed { tag: Tag, contract: Address, csp: Address },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emitted {
    pub contract: Address,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq)]
// Nearly every deployed contract is a dedup contract.
#[allow(clippy::large_enum_variant)]
pub enum ContractState {
    Dedu(DeduContract),
    Registry(Registry),
}

impl ContractState {
    pub fn kind(&self) -> &'static str {
        match self {
            ContractState::Dedu(_) => "dedu",
            ContractState::Registry(_) => "registry",
        }
    }

    pub fn as_dedu(&self) -> Option<&DeduContract> {
        match self {
            ContractState::Dedu(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_registry(&self) -> Option<&Registry> {
        match self {
            ContractState::Registry(r) => Some(r),
            _ => None,
        }
    }

    pub(crate) fn handle(&mut self, env: &mut Env<'_>, call: Call) -> Result<Reply, TxError> {
        match self {
            ContractState::Dedu(d) => d.handle(env, call),
            ContractState::Registry(r) => r.handle(env, call),
        }
    }
}
