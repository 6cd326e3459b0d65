//! Single-threaded deterministic executor standing in for a blockchain.
//!
//! Every account and contract has a nonnegative [`Money`] balance. Dispatching
//! a message advances the logical clock, charges the interaction cost to the
//! miner sink, escrows the attached value into the target contract and runs
//! the transition. A rejected transition is rolled back to the snapshot taken
//! before it started. Snapshots are persistent maps, so taking one is O(1).
//!
//! Contracts may call other contracts synchronously. A contract that is
//! currently executing is taken out of the contract table, so calling back into
//! it is reported as reentrancy instead of aliasing its state.

pub mod trace;

use std::collections::BTreeMap;
use std::fmt;

use im::ordmap::DiffItem;
use im::OrdMap;
use serde::{Deserialize, Serialize};

use crate::contract::{Call, ContractState, Emitted, Event, Reply};
use crate::money::{Amount, Money};
pub use trace::{OffChain, Trace, TraceEntry};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(u32);

impl Address {
    pub fn index(&self) -> u32 {
        self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl std::str::FromStr for Address {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.strip_prefix('#')
            .and_then(|n| n.parse().ok())
            .map(Address)
            .ok_or_else(|| format!("bad address {s:?}"))
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Why a message or sub-call was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("unknown sender {0}")]
    UnknownSender(Address),
    #[error("unknown target {0}")]
    UnknownTarget(Address),
    #[error("{function} is not a functionality of {target}")]
    UnknownFunction { target: Address, function: String },
    #[error("insufficient funds: {account} holds {balance}, needs {needed}")]
    InsufficientFunds { account: Address, balance: Money, needed: Money },
    #[error("reentrant call into {0}")]
    Reentrant(Address),
    #[error("injected fault")]
    InjectedFault,
    #[error("contract not configured")]
    NotConfigured,
    #[error("interval must be at least 1")]
    InvalidInterval,
    #[error("{0} must be a multiple of the share quantum")]
    OffQuantum(&'static str),
    #[error("sender {sender} is not {expected}")]
    WrongSender { sender: Address, expected: Address },
    #[error("unknown tag")]
    UnknownTag,
    #[error("unknown request {0}")]
    UnknownRequest(u64),
    #[error("request is {found}, expected {expected}")]
    WrongState { found: String, expected: String },
    #[error("deadline {deadline} passed at {now}")]
    DeadlinePassed { deadline: u64, now: u64 },
    #[error("too early: {now} is not after {deadline}")]
    TooEarly { deadline: u64, now: u64 },
    #[error("attached {got}, quoted {quoted}")]
    WrongAmount { got: Money, quoted: Money },
    #[error("attached deposit {got} below required {required}")]
    InsufficientDeposit { got: Money, required: Money },
    #[error("size must be positive")]
    ZeroSize,
    #[error("access-fee float {float} below {needed}")]
    InsufficientFloat { float: Money, needed: Money },
    #[error("request is served by another contract")]
    WrongRoute,
    #[error("{0} already registered")]
    AlreadyRegistered(Address),
    #[error("{0} is not registered")]
    NotRegistered(Address),
    #[error("{contract} is not a dedup contract owned by {csp}")]
    NotContractOwner { contract: Address, csp: Address },
    #[error("tag already indexed")]
    DuplicateTag,
    #[error("unexpected reply from {0}")]
    BadReply(Address),
    #[error("remote contract {contract} rejected: {reason}")]
    Remote { contract: Address, reason: Box<TxError> },
}

/// Interaction costs, paid by the sender of each top-level message.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSchedule {
    #[serde(default)]
    pub deploy: Money,
    #[serde(default)]
    pub calls: BTreeMap<String, Money>,
}

impl CostSchedule {
    pub const USER_CALLS: [&'static str; 5] = ["request", "pay", "usrConf", "refund", "deLink"];
    pub const CSP_CALLS: [&'static str; 5] = ["create", "cspConf", "claim", "register", "fundAccessFees"];

    /// `i_u` for every user functionality, `i_c` for every provider one.
    pub fn uniform(i_u: Money, i_c: Money, deploy: Money) -> Self {
        let mut calls = BTreeMap::new();
        for f in Self::USER_CALLS {
            calls.insert(f.to_string(), i_u.clone());
        }
        for f in Self::CSP_CALLS {
            calls.insert(f.to_string(), i_c.clone());
        }
        CostSchedule { deploy, calls }
    }

    pub fn call_cost(&self, function: &str) -> Money {
        self.calls.get(function).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: Address,
    pub target: Address,
    pub call: Call,
    #[serde(default)]
    pub value: Money,
}

impl Message {
    pub fn new(sender: Address, target: Address, call: Call) -> Self {
        Message { sender, target, call, value: Money::zero() }
    }

    pub fn with_value(mut self, value: Money) -> Self {
        self.value = value;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Outcome {
    Accepted,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tau: u64,
    pub sender: Address,
    pub target: Address,
    pub function: String,
    pub value: Money,
    pub outcome: Outcome,
    pub events: Vec<Emitted>,
    pub deltas: BTreeMap<Address, Amount>,
    pub reply: Reply,
    #[serde(skip)]
    pub error: Option<TxError>,
}

impl Receipt {
    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }

    pub fn delta(&self, who: Address) -> Amount {
        self.deltas.get(&who).cloned().unwrap_or_default()
    }
}

/// Balances plus contract states; cloning is cheap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    balances: OrdMap<Address, Money>,
    // `None` marks a contract that is currently executing.
    contracts: OrdMap<Address, Option<ContractState>>,
}

impl World {
    fn balance(&self, a: Address) -> Money {
        self.balances.get(&a).cloned().unwrap_or_default()
    }

    fn transfer(&mut self, fault: &mut Option<u32>, from: Address, to: Address, amount: &Money) -> Result<(), TxError> {
        if let Some(left) = fault {
            if *left == 0 {
                *fault = None;
                return Err(TxError::InjectedFault);
            }
            *left -= 1;
        }
        if amount.is_zero() {
            return Ok(());
        }
        let have = self.balance(from);
        let rest = have.checked_sub(amount).ok_or_else(|| TxError::InsufficientFunds {
            account: from,
            balance: have.clone(),
            needed: amount.clone(),
        })?;
        self.balances.insert(from, rest);
        let to_bal = self.balance(to) + amount;
        self.balances.insert(to, to_bal);
        Ok(())
    }
}

struct Aux {
    fault: Option<u32>,
    events: Vec<Emitted>,
}

/// Execution context handed to a contract transition.
pub struct Env<'a> {
    world: &'a mut World,
    aux: &'a mut Aux,
    this: Address,
    sender: Address,
    value: Money,
    tau: u64,
}

impl Env<'_> {
    pub fn this(&self) -> Address {
        self.this
    }
    pub fn sender(&self) -> Address {
        self.sender
    }
    pub fn value(&self) -> &Money {
        &self.value
    }
    pub fn now(&self) -> u64 {
        self.tau
    }

    pub fn balance(&self) -> Money {
        self.world.balance(self.this)
    }

    /// Pays `amount` out of this contract's escrow.
    pub fn transfer(&mut self, to: Address, amount: &Money) -> Result<(), TxError> {
        self.world.transfer(&mut self.aux.fault, self.this, to, amount)
    }

    pub fn emit(&mut self, event: Event) {
        self.aux.events.push(Emitted { contract: self.this, event });
    }

    /// Read-only view of another contract; `None` if absent or executing.
    pub fn peek(&self, addr: Address) -> Option<&ContractState> {
        self.world.contracts.get(&addr).and_then(Option::as_ref)
    }

    /// Synchronous sub-call with this contract as sender. A rejected sub-call
    /// leaves no trace; the caller decides whether to propagate it.
    pub fn call(&mut self, target: Address, call: Call, value: Money) -> Result<Reply, TxError> {
        invoke(self.world, self.aux, self.this, target, call, value, self.tau)
    }
}

fn invoke(
    world: &mut World,
    aux: &mut Aux,
    sender: Address,
    target: Address,
    call: Call,
    value: Money,
    tau: u64,
) -> Result<Reply, TxError> {
    let snapshot = world.clone();
    let events_before = aux.events.len();
    let mut contract = match world.contracts.get(&target) {
        None => return Err(TxError::UnknownTarget(target)),
        Some(None) => return Err(TxError::Reentrant(target)),
        Some(Some(c)) => c.clone(),
    };
    world.contracts.insert(target, None);
    let result = world.transfer(&mut aux.fault, sender, target, &value).and_then(|_| {
        let mut env = Env { world, aux, this: target, sender, value, tau };
        contract.handle(&mut env, call)
    });
    match result {
        Ok(reply) => {
            world.contracts.insert(target, Some(contract));
            Ok(reply)
        }
        Err(e) => {
            *world = snapshot;
            aux.events.truncate(events_before);
            Err(e)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    world: World,
    tau: u64,
    step: u64,
    next: u32,
    sink: Address,
    minted: Money,
    costs: CostSchedule,
    fault: Option<u32>,
    audit: bool,
    trace: Trace,
}

impl Default for Ledger {
    fn default() -> Self {
        Ledger::new(CostSchedule::default())
    }
}

impl Ledger {
    pub fn new(costs: CostSchedule) -> Self {
        let sink = Address(0);
        let mut balances = OrdMap::new();
        balances.insert(sink, Money::zero());
        let mut trace = Trace::default();
        trace.push(TraceEntry::Account { address: sink, initial: Money::zero(), label: "miner".into() });
        Ledger {
            world: World { balances, contracts: OrdMap::new() },
            tau: 0,
            step: 1,
            next: 1,
            sink,
            minted: Money::zero(),
            costs,
            fault: None,
            audit: true,
            trace,
        }
    }

    /// Clock advance per dispatched message (default 1).
    pub fn with_step(mut self, step: u64) -> Self {
        self.step = step.max(1);
        self
    }

    /// Per-dispatch conservation audit; on by default.
    pub fn set_audit(&mut self, on: bool) {
        self.audit = on;
    }

    pub fn sink(&self) -> Address {
        self.sink
    }

    pub fn costs(&self) -> &CostSchedule {
        &self.costs
    }

    pub fn create_account(&mut self, initial: Money) -> Address {
        self.create_labelled(initial, "")
    }

    pub fn create_labelled(&mut self, initial: Money, label: &str) -> Address {
        let a = Address(self.next);
        self.next += 1;
        self.minted += &initial;
        self.world.balances.insert(a, initial.clone());
        self.trace.push(TraceEntry::Account { address: a, initial, label: label.to_string() });
        a
    }

    pub fn deploy(&mut self, deployer: Address, contract: ContractState) -> Result<Address, TxError> {
        if !self.world.balances.contains_key(&deployer) {
            return Err(TxError::UnknownSender(deployer));
        }
        let cost = self.costs.deploy.clone();
        self.world.transfer(&mut None, deployer, self.sink, &cost)?;
        let a = Address(self.next);
        self.next += 1;
        self.world.balances.insert(a, Money::zero());
        let kind = contract.kind().to_string();
        self.world.contracts.insert(a, Some(contract));
        self.trace.push(TraceEntry::Deploy { tau: self.tau, deployer, contract: a, kind, cost });
        Ok(a)
    }

    pub fn now(&self) -> u64 {
        self.tau
    }

    /// Moves the clock without dispatching anything.
    pub fn advance(&mut self, steps: u64) {
        if steps == 0 {
            return;
        }
        let from = self.tau;
        self.tau += steps;
        self.trace.push(TraceEntry::Advance { from, to: self.tau });
    }

    /// Advances so that the clock is strictly past `deadline`, leaving room
    /// for one more dispatch.
    pub fn advance_past(&mut self, deadline: u64) {
        if self.tau + self.step <= deadline {
            self.advance(deadline + 1 - self.tau - self.step);
        }
    }

    /// Makes the `n`-th transfer of the next dispatch fail (0 = the first).
    pub fn arm_fault(&mut self, n: u32) {
        self.fault = Some(n);
    }

    pub fn dispatch(&mut self, msg: Message) -> Receipt {
        self.tau += self.step;
        let before = self.world.balances.clone();
        let function = msg.call.name().to_string();
        let mut aux = Aux { fault: self.fault.take(), events: Vec::new() };
        let result = self.run(&msg, &function, &mut aux);
        let deltas = diff(&before, &self.world.balances);
        let (outcome, reply, error) = match result {
            Ok(r) => (Outcome::Accepted, r, None),
            Err(e) => (Outcome::Rejected(e.to_string()), Reply::None, Some(e)),
        };
        let receipt = Receipt {
            tau: self.tau,
            sender: msg.sender,
            target: msg.target,
            function,
            value: msg.value,
            outcome,
            events: aux.events,
            deltas,
            reply,
            error,
        };
        self.trace.push(TraceEntry::Tx(Box::new(receipt.clone())));
        if self.audit {
            let total = self.total_supply();
            assert_eq!(total, self.minted, "conservation violated at tau {}", self.tau);
        }
        receipt
    }

    fn run(&mut self, msg: &Message, function: &str, aux: &mut Aux) -> Result<Reply, TxError> {
        if !self.world.balances.contains_key(&msg.sender) {
            return Err(TxError::UnknownSender(msg.sender));
        }
        let cost = self.costs.call_cost(function);
        let needed = cost.clone() + &msg.value;
        let have = self.world.balance(msg.sender);
        if have < needed {
            return Err(TxError::InsufficientFunds { account: msg.sender, balance: have, needed });
        }
        self.world.transfer(&mut None, msg.sender, self.sink, &cost)?;
        invoke(&mut self.world, aux, msg.sender, msg.target, msg.call.clone(), msg.value.clone(), self.tau)
    }

    pub fn balance(&self, a: Address) -> Money {
        self.world.balance(a)
    }

    pub fn exists(&self, a: Address) -> bool {
        self.world.balances.contains_key(&a)
    }

    pub fn contract(&self, a: Address) -> Option<&ContractState> {
        self.world.contracts.get(&a).and_then(Option::as_ref)
    }

    pub fn contracts(&self) -> impl Iterator<Item = (Address, &ContractState)> {
        self.world.contracts.iter().filter_map(|(a, c)| c.as_ref().map(|c| (*a, c)))
    }

    /// Σ balances, including contract escrows and the miner sink.
    pub fn total_supply(&self) -> Money {
        self.world.balances.values().sum()
    }

    pub fn minted(&self) -> &Money {
        &self.minted
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn record(&mut self, entry: OffChain) {
        self.trace.push(TraceEntry::OffChain(entry));
    }
}

fn diff(before: &OrdMap<Address, Money>, after: &OrdMap<Address, Money>) -> BTreeMap<Address, Amount> {
    let mut out = BTreeMap::new();
    for item in before.diff(after) {
        let (a, old, new) = match item {
            DiffItem::Add(a, v) => (*a, Money::zero(), v.clone()),
            DiffItem::Update { old: (a, o), new: (_, n) } => (*a, o.clone(), n.clone()),
            DiffItem::Remove(a, v) => (*a, v.clone(), Money::zero()),
        };
        if old != new {
            out.insert(a, new.to_amount() - old.to_amount());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::dedu::{DeduContract, DeduSettings};
    use crate::contract::ContractState;
    use crate::crypto::Tag;

    fn m(s: &str) -> Money {
        s.parse().unwrap()
    }

    fn setup(costs: CostSchedule) -> (Ledger, Address, Address, Address) {
        let mut l = Ledger::new(costs);
        let csp = l.create_account(m("1"));
        let user = l.create_account(m("2.165"));
        let c = l
            .deploy(csp, ContractState::Dedu(DeduContract::new(csp, DeduSettings::with_deposit(m("0.01")))))
            .unwrap();
        let r = l.dispatch(Message::new(csp, c, Call::Create { sf: m("0.165"), ef: m("0.0165"), interval: 10 }));
        assert!(r.accepted());
        (l, csp, user, c)
    }

    #[test]
    fn accounts_are_distinct_and_funded() {
        let mut l = Ledger::default();
        let a = l.create_account(Money::zero());
        let b = l.create_account(m("2.165"));
        assert_ne!(a, b);
        assert_eq!(l.balance(a), Money::zero());
        assert_eq!(l.balance(b).to_string(), "2.165");
    }

    #[test]
    fn deploy_charges_cost_to_sink() {
        let mut l = Ledger::new(CostSchedule { deploy: m("0.01"), ..Default::default() });
        let csp = l.create_account(m("1"));
        let c1 = l.deploy(csp, ContractState::Dedu(DeduContract::new(csp, DeduSettings::default()))).unwrap();
        let c2 = l.deploy(csp, ContractState::Dedu(DeduContract::new(csp, DeduSettings::default()))).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(l.balance(csp), m("0.98"));
        assert_eq!(l.balance(l.sink()), m("0.02"));
        let mut poor = Ledger::new(CostSchedule { deploy: m("1"), ..Default::default() });
        let p = poor.create_account(m("0.5"));
        assert!(matches!(
            poor.deploy(p, ContractState::Dedu(DeduContract::new(p, DeduSettings::default()))),
            Err(TxError::InsufficientFunds { .. })
        ));
        let mut free = Ledger::default();
        let f = free.create_account(m("1"));
        free.deploy(f, ContractState::Dedu(DeduContract::new(f, DeduSettings::default()))).unwrap();
        assert_eq!(free.balance(f), m("1"));
    }

    #[test]
    fn unknown_target_costs_only_the_interaction_fee() {
        let costs = CostSchedule::uniform(m("0.001"), m("0.002"), Money::zero());
        let (mut l, _, user, _) = setup(costs);
        let before = l.balance(user);
        let r = l.dispatch(Message::new(user, Address(999), Call::Pay { tag: Tag::from_bytes([1; 32]), req: 0 }).with_value(m("0.5")));
        assert!(!r.accepted());
        assert_eq!(l.balance(user), before.checked_sub(&m("0.001")).unwrap());
    }

    #[test]
    fn deadlines_follow_dispatch_clock() {
        let (mut l, _, user, c) = setup(CostSchedule::default());
        l.advance(100 - l.now());
        assert_eq!(l.now(), 100);
        let tag = Tag::from_bytes([7; 32]);
        let r = l.dispatch(Message::new(user, c, Call::Request { tag, size: 1 }).with_value(m("0.01")));
        let q = r.reply.quote().unwrap().clone();
        assert_eq!((r.tau, q.tau_p, q.tau_c1, q.tau_c2), (101, 111, 121, 131));
        assert_eq!(q.pay, m("0.1815"));
    }

    #[test]
    fn advance_past_deadline_blocks_pay() {
        let (mut l, _, user, c) = setup(CostSchedule::default());
        let tag = Tag::from_bytes([8; 32]);
        let r = l.dispatch(Message::new(user, c, Call::Request { tag, size: 1 }).with_value(m("0.01")));
        let q = r.reply.quote().unwrap().clone();
        l.advance(0);
        l.advance(11);
        let r = l.dispatch(Message::new(user, c, Call::Pay { tag, req: 0 }).with_value(q.pay));
        assert!(matches!(r.error, Some(TxError::DeadlinePassed { .. })));
    }

    #[test]
    fn time_is_monotone_in_trace() {
        let (mut l, _, user, c) = setup(CostSchedule::default());
        for i in 0..5u8 {
            l.dispatch(Message::new(user, c, Call::Request { tag: Tag::from_bytes([i; 32]), size: 1 }).with_value(m("0.01")));
            l.advance(u64::from(i));
        }
        let taus: Vec<u64> = l.trace().entries().iter().filter_map(|e| e.tau()).collect();
        assert!(taus.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn injected_fault_rolls_back_everything_but_the_fee() {
        let (mut l, _, user, c) = setup(CostSchedule::default());
        let tag = Tag::from_bytes([9; 32]);
        let before = l.world().clone();
        l.arm_fault(1);
        let r = l.dispatch(Message::new(user, c, Call::Request { tag, size: 1 }).with_value(m("0.01")));
        // the only transfer is the deposit escrow, so index 1 never fires
        assert!(r.accepted());
        let r = l.dispatch(Message::new(user, c, Call::Pay { tag, req: 0 }).with_value(m("0.1815")));
        assert!(r.accepted());
        let mid = l.world().clone();
        assert_ne!(before, mid);
        l.arm_fault(0);
        let r = l.dispatch(Message::new(user, c, Call::Request { tag, size: 1 }).with_value(m("0.01")));
        assert_eq!(r.error, Some(TxError::InjectedFault));
        assert_eq!(l.world(), &mid);
        assert!(r.deltas.is_empty());
    }
}
