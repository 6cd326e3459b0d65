//! Off-chain drivers for users and providers, and the fairness check over a
//! finished trace.
//!
//! A [`Market`] owns one ledger, an optional registry, the provider actors and
//! the user actors. The harness calls its methods one after another; every
//! off-chain message is written into the ledger trace next to the receipts.
//!
//! Providers keep one ciphertext per tag and hand out revocable links. An
//! object is deleted when no link to it is active and the storing contract
//! has no active or pending request for its tag.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{Call, ContractState, DeduContract, DeduSettings, Event, Quote, Registry, RequestRecord, RequestState, Route};
use crate::crypto::{ce_decrypt, ce_pipeline, ce_tag, pop_prove, ChallengeBook, Ciphertext, ConvergentKey, CryptoError, FileObject, Tag};
use crate::economics::FeeBasis;
use crate::ledger::{Address, CostSchedule, Ledger, Message, OffChain, Receipt, Trace, TraceEntry, TxError};
use crate::money::Money;

#[derive(Debug, Error, PartialEq)]
pub enum ActorError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("setup failed: {0}")]
    Setup(TxError),
    #[error("no user with index {0}")]
    UnknownUser(usize),
    #[error("no provider with index {0}")]
    UnknownCsp(usize),
    #[error("{0} is not a provider in this market")]
    NotAProvider(Address),
    #[error("user holds no active copy of tag {0}")]
    NotHolding(Tag),
}

/// One deviation per leaf of the fairness case tree, plus the honest run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorPolicy {
    #[default]
    Honest,
    /// User never pays after the quote.
    AbortAfterQuote,
    /// User uploads a ciphertext that does not match the tag.
    SendWrongFile,
    /// User answers the ownership challenge with a bad proof.
    SendWrongPop,
    /// User pays but uploads nothing.
    SendNothing,
    /// Provider receives the file but never confirms.
    NoCspConf,
    /// Provider confirms but never sends the link.
    NoLink,
    /// User receives the link but never confirms and later refunds.
    NoUsrConf,
    /// User downloads through the link, then withholds confirmation and refunds.
    NoUsrConfAfterLink,
    /// Provider disables the link after collecting the fee. Breaks fairness.
    DisableLinkAfterFee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Csp,
}

impl BehaviorPolicy {
    pub const ALL: [BehaviorPolicy; 10] = [
        BehaviorPolicy::Honest,
        BehaviorPolicy::AbortAfterQuote,
        BehaviorPolicy::SendWrongFile,
        BehaviorPolicy::SendWrongPop,
        BehaviorPolicy::SendNothing,
        BehaviorPolicy::NoCspConf,
        BehaviorPolicy::NoLink,
        BehaviorPolicy::NoUsrConf,
        BehaviorPolicy::NoUsrConfAfterLink,
        BehaviorPolicy::DisableLinkAfterFee,
    ];

    /// Leaf of the case tree this policy produces.
    pub fn case(&self) -> &'static str {
        match self {
            BehaviorPolicy::Honest => "1.1.1.1.1",
            BehaviorPolicy::AbortAfterQuote => "2",
            BehaviorPolicy::SendWrongFile => "1.2",
            BehaviorPolicy::SendWrongPop => "1.4",
            BehaviorPolicy::SendNothing => "1.5",
            BehaviorPolicy::NoCspConf => "1.1.2",
            BehaviorPolicy::NoLink => "1.1.1.2",
            BehaviorPolicy::NoUsrConf => "1.1.1.1.2",
            BehaviorPolicy::NoUsrConfAfterLink => "5",
            BehaviorPolicy::DisableLinkAfterFee => "limitation",
        }
    }

    /// Which party deviates. Honest belongs to both.
    pub fn side(&self) -> Option<Side> {
        match self {
            BehaviorPolicy::Honest => None,
            BehaviorPolicy::NoCspConf | BehaviorPolicy::NoLink | BehaviorPolicy::DisableLinkAfterFee => Some(Side::Csp),
            _ => Some(Side::User),
        }
    }

    fn corrupts_upload(&self) -> bool {
        matches!(self, BehaviorPolicy::SendWrongFile | BehaviorPolicy::SendWrongPop)
    }
}

/// Revocable handle to a stored ciphertext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLink {
    pub id: u64,
    pub tag: Tag,
    pub contract: Address,
    pub req: u64,
    pub user: Address,
    pub active: bool,
}

#[derive(Debug, Clone)]
pub struct StoredObject {
    pub ciphertext: Ciphertext,
    pub owners: BTreeSet<Address>,
}

#[derive(Debug, Clone)]
pub struct CspActor {
    pub address: Address,
    pub contract: Address,
    pub policy: BehaviorPolicy,
    pub objects: BTreeMap<Tag, StoredObject>,
    pub links: BTreeMap<u64, FileLink>,
    challenges: ChallengeBook,
}

impl CspActor {
    pub fn object(&self, tag: &Tag) -> Option<&StoredObject> {
        self.objects.get(tag)
    }

    /// Returns the ciphertext iff the link is active and belongs to `requester`.
    pub fn resolve(&self, link: u64, requester: Address) -> Option<&Ciphertext> {
        let l = self.links.get(&link)?;
        if !l.active || l.user != requester {
            return None;
        }
        self.objects.get(&l.tag).map(|o| &o.ciphertext)
    }
}

/// A user's copy of a stored file.
#[derive(Debug, Clone)]
pub struct Holding {
    pub key: ConvergentKey,
    pub home_contract: Address,
    pub home_req: u64,
    pub storer: Address,
    pub served_contract: Address,
    pub served_req: u64,
    pub link: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct UserActor {
    pub address: Address,
    pub policy: BehaviorPolicy,
    /// Index of the provider this user talks to.
    pub home: usize,
    pub funded: Money,
    pub holdings: BTreeMap<Tag, Holding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreOutcome {
    Stored,
    Refunded,
    DepositLost,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct StoreResult {
    pub outcome: StoreOutcome,
    pub tag: Tag,
    pub quote: Option<Quote>,
    /// Ledger messages sent after the quote, by either party.
    pub dispatches_after_quote: u32,
    pub rejection: Option<String>,
}

/// Shared contract configuration for every provider in a market.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub costs: CostSchedule,
    pub step: u64,
    pub sf: Money,
    pub ef: Money,
    pub interval: u64,
    pub deposit: Money,
    pub access_fee: Money,
    pub extra_fee_basis: FeeBasis,
    pub share_quantum: Option<Money>,
    /// Deploy a registry and cross-provider routing.
    pub inter: bool,
    /// Access-fee float each provider deposits in its contract.
    pub float: Money,
    pub seed: u64,
    /// Bytes per priced size unit; `None` prices every file as one unit.
    pub size_unit: Option<u64>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            costs: CostSchedule::default(),
            step: 1,
            sf: "0.165".parse().expect("literal"),
            ef: "0.0165".parse().expect("literal"),
            interval: 10,
            deposit: "0.01".parse().expect("literal"),
            access_fee: Money::zero(),
            extra_fee_basis: FeeBasis::PerRequest,
            share_quantum: None,
            inter: false,
            float: Money::zero(),
            seed: 7,
            size_unit: None,
        }
    }
}

pub struct Market {
    pub ledger: Ledger,
    pub registry: Option<Address>,
    pub config: MarketConfig,
    pub csps: Vec<CspActor>,
    pub users: Vec<UserActor>,
    next_link: u64,
    dispatches: u32,
}

enum Upload {
    File(Ciphertext),
    Proof(crate::crypto::PopChallenge, crate::crypto::PopProof),
}

impl Market {
    pub fn new(config: MarketConfig) -> Result<Self, ActorError> {
        let mut ledger = Ledger::new(config.costs.clone()).with_step(config.step);
        let registry = if config.inter {
            let admin = ledger.create_labelled(config.costs.deploy.clone(), "registry-admin");
            Some(ledger.deploy(admin, ContractState::Registry(Registry::new())).map_err(ActorError::Setup)?)
        } else {
            None
        };
        Ok(Market { ledger, registry, config, csps: Vec::new(), users: Vec::new(), next_link: 0, dispatches: 0 })
    }

    /// Deploys, prices, registers and funds a provider. `funds` is on top of
    /// what setup itself needs.
    pub fn add_csp(&mut self, funds: Money, policy: BehaviorPolicy) -> Result<usize, ActorError> {
        let (sf, ef) = (self.config.sf.clone(), self.config.ef.clone());
        self.add_csp_priced(funds, policy, sf, ef)
    }

    /// Like [`Market::add_csp`] with prices other than the shared ones.
    pub fn add_csp_priced(&mut self, funds: Money, policy: BehaviorPolicy, sf: Money, ef: Money) -> Result<usize, ActorError> {
        let idx = self.csps.len();
        let c = &self.config;
        let setup = c.costs.deploy.clone()
            + c.costs.call_cost("create")
            + c.float.clone()
            + if c.inter { c.costs.call_cost("register") + c.costs.call_cost("fundAccessFees") } else { Money::zero() };
        let address = self.ledger.create_labelled(funds + setup, &format!("csp-{idx}"));
        let settings = DeduSettings {
            deposit: c.deposit.clone(),
            access_fee: c.access_fee.clone(),
            registry: self.registry,
            extra_fee_basis: c.extra_fee_basis,
            share_quantum: c.share_quantum.clone(),
        };
        let contract = self
            .ledger
            .deploy(address, ContractState::Dedu(DeduContract::new(address, settings)))
            .map_err(ActorError::Setup)?;
        let create = Call::Create { sf, ef, interval: c.interval };
        let float = c.float.clone();
        self.setup_call(Message::new(address, contract, create))?;
        if let Some(reg) = self.registry {
            self.setup_call(Message::new(address, reg, Call::Register { contract, info: format!("csp-{idx}") }))?;
            self.setup_call(Message::new(address, contract, Call::FundAccessFees).with_value(float))?;
        }
        let seed = self.config.seed.wrapping_mul(1_000_003).wrapping_add(idx as u64);
        self.csps.push(CspActor {
            address,
            contract,
            policy,
            objects: BTreeMap::new(),
            links: BTreeMap::new(),
            challenges: ChallengeBook::new(seed),
        });
        Ok(idx)
    }

    fn setup_call(&mut self, msg: Message) -> Result<(), ActorError> {
        let r = self.ledger.dispatch(msg);
        match r.error {
            Some(e) => Err(ActorError::Setup(e)),
            None => Ok(()),
        }
    }

    pub fn add_user(&mut self, funds: Money, policy: BehaviorPolicy, home: usize) -> Result<usize, ActorError> {
        if home >= self.csps.len() {
            return Err(ActorError::UnknownCsp(home));
        }
        let idx = self.users.len();
        let address = self.ledger.create_labelled(funds.clone(), &format!("user-{idx}"));
        self.users.push(UserActor { address, policy, home, funded: funds, holdings: BTreeMap::new() });
        Ok(idx)
    }

    pub fn csp_index(&self, addr: Address) -> Result<usize, ActorError> {
        self.csps.iter().position(|c| c.address == addr).ok_or(ActorError::NotAProvider(addr))
    }

    fn dedu(&self, contract: Address) -> &DeduContract {
        self.ledger.contract(contract).and_then(ContractState::as_dedu).expect("dedup contract")
    }

    pub fn record_at(&self, contract: Address, tag: &Tag, req: u64) -> Option<&RequestRecord> {
        self.ledger.contract(contract).and_then(ContractState::as_dedu).and_then(|d| d.record(tag, req))
    }

    fn send(&mut self, msg: Message) -> Receipt {
        self.dispatches += 1;
        self.ledger.dispatch(msg)
    }

    fn off(&mut self, from: Address, to: Address, kind: &str, served: Option<(Address, Tag, u64)>, detail: String) {
        let entry = OffChain {
            tau: self.ledger.now(),
            from,
            to,
            kind: kind.to_string(),
            contract: served.map(|s| s.0),
            tag: served.map(|s| s.1),
            req: served.map(|s| s.2),
            detail,
        };
        self.ledger.record(entry);
    }

    /// Runs one storage request for `d` to a terminal state, following the
    /// user's policy and every provider's policy.
    pub fn user_store(&mut self, u: usize, d: &FileObject) -> Result<StoreResult, ActorError> {
        let size = match self.config.size_unit {
            Some(unit) => (d.bytes().len() as u64).div_ceil(unit.max(1)),
            None => 1,
        };
        self.user_store_sized(u, d, size)
    }

    /// Like [`Market::user_store`] with an explicit priced size.
    pub fn user_store_sized(&mut self, u: usize, d: &FileObject, size: u64) -> Result<StoreResult, ActorError> {
        let user = self.users.get(u).ok_or(ActorError::UnknownUser(u))?.clone();
        let (key, c, tag) = ce_pipeline(d)?;
        let home = &self.csps[user.home];
        let (home_addr, home_contract) = (home.address, home.contract);

        self.off(user.address, home_addr, "request", None, format!("tag {} size {size}", tag.short()));
        let r = self.send(
            Message::new(user.address, home_contract, Call::Request { tag, size }).with_value(self.config.deposit.clone()),
        );
        let Some(q) = r.reply.quote().cloned() else {
            return Ok(StoreResult {
                outcome: StoreOutcome::Aborted,
                tag,
                quote: None,
                dispatches_after_quote: 0,
                rejection: r.error.map(|e| e.to_string()),
            });
        };
        let start = self.dispatches;
        let served = (q.storer_contract, tag, q.storer_req);
        let storer = self.csp_index(q.storer)?;
        let mut result = StoreResult { outcome: StoreOutcome::Aborted, tag, quote: Some(q.clone()), dispatches_after_quote: 0, rejection: None };

        let paid = user.policy != BehaviorPolicy::AbortAfterQuote && {
            let r = self.send(Message::new(user.address, home_contract, Call::Pay { tag, req: q.req }).with_value(q.pay.clone()));
            result.rejection = r.error.map(|e| e.to_string());
            result.rejection.is_none()
        };
        if !paid {
            self.ledger.advance_past(q.tau_p);
            self.tick_all();
            return Ok(self.finish(result, home_contract, q.req, start));
        }

        let upload = if user.policy == BehaviorPolicy::SendNothing {
            None
        } else {
            let sent = if user.policy.corrupts_upload() {
                let (_, wrong, _) = ce_pipeline(&FileObject::new([d.bytes(), b"~forged"].concat()))?;
                wrong
            } else {
                c.clone()
            };
            Some(if q.full_price {
                Upload::File(sent)
            } else {
                let ch = self.csps[storer].challenges.pop_challenge();
                self.off(q.storer, user.address, "challenge", Some(served), format!("{ch:?}"));
                Upload::Proof(ch, pop_prove(&ch, &sent))
            })
        };
        let link = match upload {
            Some(up) => self.csp_accept(storer, user.address, served, up),
            None => None,
        };

        let mut confirmed = false;
        if let Some(id) = link {
            if user.policy != BehaviorPolicy::NoUsrConf && self.verify_link(user.address, storer, id, &tag, &key) {
                self.users[u].holdings.insert(
                    tag,
                    Holding {
                        key,
                        home_contract,
                        home_req: q.req,
                        storer: q.storer,
                        served_contract: q.storer_contract,
                        served_req: q.storer_req,
                        link: Some(id),
                    },
                );
                if user.policy != BehaviorPolicy::NoUsrConfAfterLink {
                    let r = self.send(Message::new(user.address, home_contract, Call::UsrConf { tag, req: q.req }));
                    result.rejection = r.error.map(|e| e.to_string());
                    confirmed = result.rejection.is_none();
                }
            }
        }
        if confirmed {
            if self.csps[storer].policy == BehaviorPolicy::DisableLinkAfterFee {
                self.tick(storer);
            }
        } else {
            self.users[u].holdings.remove(&tag);
            self.user_refund(user.address, home_contract, tag, q.req, &mut result);
            if let Some(id) = link {
                // a late resolution attempt after the refund
                let denied = self.csps[storer].resolve(id, user.address).is_none();
                self.off(user.address, q.storer, if denied { "resolve_denied" } else { "resolved" }, Some(served), format!("link {id}"));
            }
        }
        Ok(self.finish(result, home_contract, q.req, start))
    }

    fn user_refund(&mut self, user: Address, contract: Address, tag: Tag, req: u64, result: &mut StoreResult) {
        let rec = self.record_at(contract, &tag, req).cloned().expect("own request");
        let deadline = match rec.state {
            RequestState::WaitForCspConf => rec.tau_c1,
            RequestState::WaitForCliConf => rec.tau_c2,
            _ => return,
        };
        self.ledger.advance_past(deadline);
        self.tick_all();
        let r = self.send(Message::new(user, contract, Call::Refund { tag, req }));
        if let Some(e) = r.error {
            result.rejection = Some(e.to_string());
        }
        self.tick_all();
    }

    fn finish(&mut self, mut result: StoreResult, contract: Address, req: u64, start: u32) -> StoreResult {
        result.dispatches_after_quote = self.dispatches - start;
        let state = self.record_at(contract, &result.tag, req).map(|r| r.state);
        result.outcome = match state {
            Some(RequestState::Active) => StoreOutcome::Stored,
            Some(RequestState::Refunded) => StoreOutcome::Refunded,
            Some(RequestState::Claimed) => StoreOutcome::DepositLost,
            _ => StoreOutcome::Aborted,
        };
        result
    }

    /// The storing provider checks payment on the contract and the upload,
    /// then confirms and issues a link according to its policy.
    fn csp_accept(&mut self, i: usize, user: Address, served: (Address, Tag, u64), up: Upload) -> Option<u64> {
        let (contract, tag, req) = served;
        let csp = self.csps[i].address;
        let paid = self
            .record_at(contract, &tag, req)
            .is_some_and(|r| r.state == RequestState::WaitForCspConf && r.paid == r.pay && r.user == user);
        let (valid, incoming) = match up {
            Upload::File(ct) => {
                self.off(user, csp, "file", Some(served), format!("{} bytes", ct.bytes().len()));
                (ce_tag(&ct) == tag, Some(ct))
            }
            Upload::Proof(ch, proof) => {
                self.off(user, csp, "proof", Some(served), String::new());
                let ok = match self.csps[i].objects.get(&tag) {
                    Some(o) => {
                        let stored = o.ciphertext.clone();
                        self.csps[i].challenges.pop_verify(&ch, &proof, &stored)
                    }
                    None => false,
                };
                (ok, None)
            }
        };
        if !paid || !valid {
            self.off(csp, user, "discard", Some(served), if paid { "invalid upload" } else { "unpaid" }.into());
            return None;
        }
        let policy = self.csps[i].policy;
        if policy == BehaviorPolicy::NoCspConf {
            self.off(csp, user, "ignore", Some(served), String::new());
            return None;
        }
        let r = self.send(Message::new(csp, contract, Call::CspConf { tag, req }));
        if !r.accepted() {
            return None;
        }
        if let Some(ct) = incoming {
            self.csps[i].objects.entry(tag).or_insert(StoredObject { ciphertext: ct, owners: BTreeSet::new() });
        }
        if policy == BehaviorPolicy::NoLink {
            return None;
        }
        let id = self.next_link;
        self.next_link += 1;
        self.csps[i].links.insert(id, FileLink { id, tag, contract, req, user, active: true });
        if let Some(o) = self.csps[i].objects.get_mut(&tag) {
            o.owners.insert(user);
        }
        self.off(csp, user, "link", Some(served), format!("link {id}"));
        Some(id)
    }

    /// Resolves the link and checks the ciphertext against the tag and key.
    fn verify_link(&mut self, user: Address, storer: usize, id: u64, tag: &Tag, key: &ConvergentKey) -> bool {
        let Some(ct) = self.csps[storer].resolve(id, user).cloned() else {
            return false;
        };
        let link = self.csps[storer].links[&id].clone();
        let served = Some((link.contract, link.tag, link.req));
        let to = self.csps[storer].address;
        self.off(user, to, "download", served, format!("link {id}"));
        let ok = ce_tag(&ct) == *tag && ce_decrypt(key, &ct).is_ok();
        if ok {
            self.off(user, to, "verified", served, format!("link {id}"));
        }
        ok
    }

    /// Provider housekeeping at the current time: claim forfeited deposits,
    /// disable links whose requests were refunded, drop orphaned objects.
    pub fn tick_all(&mut self) {
        for i in 0..self.csps.len() {
            self.tick(i);
        }
    }

    fn tick(&mut self, i: usize) {
        let (csp, contract, policy) = (self.csps[i].address, self.csps[i].contract, self.csps[i].policy);
        let now = self.ledger.now();
        let step = self.config.step;
        let claimable: Vec<(Tag, u64)> = self
            .dedu(contract)
            .records()
            .filter(|(_, _, r)| {
                r.state == RequestState::WaitForPay && now + step > r.tau_p && !matches!(r.route, Route::Remote { .. })
            })
            .map(|(t, q, _)| (t, q))
            .collect();
        for (tag, req) in claimable {
            self.send(Message::new(csp, contract, Call::Claim { tag, req }));
        }
        let links: Vec<FileLink> = self.csps[i].links.values().filter(|l| l.active).cloned().collect();
        for l in links {
            let state = self.record_at(l.contract, &l.tag, l.req).map(|r| r.state);
            let reason = match state {
                Some(RequestState::Refunded) => Some("refunded"),
                Some(RequestState::Inactive) => Some("delinked"),
                Some(RequestState::Active) if policy == BehaviorPolicy::DisableLinkAfterFee => Some("after fee"),
                _ => None,
            };
            if let Some(reason) = reason {
                self.disable_link(i, l.id, reason);
            }
        }
        self.collect_garbage(i);
    }

    fn disable_link(&mut self, i: usize, id: u64, reason: &str) {
        let csp = self.csps[i].address;
        let Some(l) = self.csps[i].links.get_mut(&id) else { return };
        l.active = false;
        let l = l.clone();
        let still_linked = self.csps[i].links.values().any(|o| o.active && o.user == l.user && o.tag == l.tag);
        if !still_linked {
            if let Some(o) = self.csps[i].objects.get_mut(&l.tag) {
                o.owners.remove(&l.user);
            }
        }
        self.off(csp, l.user, "disable", Some((l.contract, l.tag, l.req)), format!("link {id}: {reason}"));
    }

    fn collect_garbage(&mut self, i: usize) {
        let (csp, contract) = (self.csps[i].address, self.csps[i].contract);
        let tags: Vec<Tag> = self.csps[i].objects.keys().copied().collect();
        for tag in tags {
            let referenced = self.dedu(contract).row(&tag).is_some_and(|row| {
                row.requests.values().any(|r| {
                    !matches!(r.route, Route::Remote { .. })
                        && (r.state == RequestState::Active
                            || matches!(r.state, RequestState::WaitForCspConf | RequestState::WaitForCliConf))
                })
            });
            let owned = self.csps[i].objects.get(&tag).is_some_and(|o| !o.owners.is_empty());
            if !referenced && !owned {
                self.csps[i].objects.remove(&tag);
                self.off(csp, csp, "delete", None, format!("tag {}", tag.short()));
            }
        }
    }

    /// Deletes the user's link to `tag`: contract first, then the provider
    /// disables the link and drops the object if nobody else holds it.
    pub fn user_delink(&mut self, u: usize, tag: &Tag) -> Result<Receipt, ActorError> {
        let user = self.users.get(u).ok_or(ActorError::UnknownUser(u))?;
        let address = user.address;
        let h = user.holdings.get(tag).cloned().ok_or(ActorError::NotHolding(*tag))?;
        let r = self.send(Message::new(address, h.home_contract, Call::DeLink { tag: *tag, req: h.home_req }));
        if r.accepted() {
            self.users[u].holdings.remove(tag);
            self.off(address, h.storer, "delink", Some((h.served_contract, *tag, h.served_req)), String::new());
            let i = self.csp_index(h.storer)?;
            self.tick(i);
        }
        Ok(r)
    }

    /// Link resolution by a user, recorded in the trace.
    pub fn user_resolve(&mut self, u: usize, storer: usize, link: u64) -> Option<Ciphertext> {
        let user = self.users[u].address;
        let out = self.csps[storer].resolve(link, user).cloned();
        let l = self.csps[storer].links.get(&link).cloned();
        let served = l.map(|l| (l.contract, l.tag, l.req));
        let kind = if out.is_some() { "resolved" } else { "resolve_denied" };
        let to = self.csps[storer].address;
        self.off(user, to, kind, served, format!("link {link}"));
        out
    }

    pub fn trace(&self) -> &Trace {
        self.ledger.trace()
    }
}

/// One request, identified by where it is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RequestKey {
    pub contract: Address,
    pub tag: Tag,
    pub req: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestVerdict {
    pub key: RequestKey,
    pub user: Address,
    /// The provider side collected the fee.
    pub settled: bool,
    /// The user verified a link before settlement and kept it until they
    /// chose to delink.
    pub link_held: bool,
    /// Some link for the request is still active at the end.
    pub link_active_at_end: bool,
    pub fair: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FairnessReport {
    pub requests: Vec<RequestVerdict>,
}

impl FairnessReport {
    pub fn holds(&self) -> bool {
        self.requests.iter().all(|r| r.fair)
    }

    pub fn violations(&self) -> impl Iterator<Item = &RequestVerdict> {
        self.requests.iter().filter(|r| !r.fair)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FairnessError {
    #[error("request {req} of tag {tag} at {contract} has not terminated")]
    NonTerminal { contract: Address, tag: Tag, req: u64 },
}

#[derive(Default)]
struct Timeline {
    user: Option<Address>,
    settled: Option<usize>,
    terminal: bool,
    delinked: Option<usize>,
    linked: bool,
    verified: Option<usize>,
    disabled: Vec<usize>,
}

/// Fee settled to the provider side iff the user verified a link before
/// settlement and that link was never disabled except after the user's own
/// delink. An unsettled request must leave no active link behind.
pub fn fairness_predicate(trace: &Trace) -> Result<FairnessReport, FairnessError> {
    let mut lines: BTreeMap<RequestKey, Timeline> = BTreeMap::new();
    for (pos, entry) in trace.entries().iter().enumerate() {
        match entry {
            TraceEntry::Tx(r) if r.accepted() => {
                for e in &r.events {
                    let (tag, req) = match &e.event {
                        Event::Requested { tag, req, route, user, .. } => {
                            if matches!(route, Route::Remote { .. }) {
                                continue;
                            }
                            let key = RequestKey { contract: e.contract, tag: *tag, req: *req };
                            lines.entry(key).or_default().user = Some(*user);
                            continue;
                        }
                        Event::Activated { tag, req, .. }
                        | Event::Refunded { tag, req, .. }
                        | Event::Claimed { tag, req, .. }
                        | Event::Delinked { tag, req } => (*tag, *req),
                        _ => continue,
                    };
                    let key = RequestKey { contract: e.contract, tag, req };
                    let Some(t) = lines.get_mut(&key) else { continue };
                    match e.event {
                        Event::Activated { .. } => {
                            t.settled = Some(pos);
                            t.terminal = true;
                        }
                        Event::Delinked { .. } => t.delinked = Some(pos),
                        _ => t.terminal = true,
                    }
                }
            }
            TraceEntry::OffChain(o) => {
                let (Some(contract), Some(tag), Some(req)) = (o.contract, o.tag, o.req) else { continue };
                let Some(t) = lines.get_mut(&RequestKey { contract, tag, req }) else { continue };
                match o.kind.as_str() {
                    "link" => t.linked = true,
                    "verified" => {
                        t.verified.get_or_insert(pos);
                    }
                    "disable" => t.disabled.push(pos),
                    _ => {}
                }
            }
            _ => {}
        }
    }
    let mut requests = Vec::new();
    for (key, t) in lines {
        if !t.terminal {
            return Err(FairnessError::NonTerminal { contract: key.contract, tag: key.tag, req: key.req });
        }
        let link_active_at_end = t.linked && t.disabled.is_empty();
        let revoked_early = t.disabled.iter().any(|&d| t.delinked.is_none_or(|x| d < x));
        let link_held = match t.settled {
            Some(s) => t.verified.is_some_and(|v| v < s) && !revoked_early,
            None => false,
        };
        let fair = match t.settled {
            Some(_) => link_held,
            None => !link_active_at_end,
        };
        requests.push(RequestVerdict {
            key,
            user: t.user.expect("set on request"),
            settled: t.settled.is_some(),
            link_held,
            link_active_at_end,
            fair,
        });
    }
    Ok(FairnessReport { requests })
}
