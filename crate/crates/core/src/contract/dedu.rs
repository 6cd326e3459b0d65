//! Per-provider dedup contract.
//!
//! A user requests storage for a tag and gets a quote: the full price
//! `SF·|d| + EF` when nobody holds the file, otherwise the discounted `cPay`.
//! The fee is escrowed on payment, released once the provider and then the
//! user confirm, and refunded if either side misses its deadline. When a later
//! uploader confirms, the storage part of their fee is split among the earlier
//! active holders, so every holder ends up paying the same.
//!
//! With a registry configured, a request for a tag stored by another provider
//! is forwarded there. This contract then keeps a mirror record and acts as
//! the user's entry point, while the storing contract runs the redistribution.

use im::OrdMap;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{Call, ContractState, Event, Quote, Reply};
use crate::crypto::Tag;
use crate::economics::FeeBasis;
use crate::ledger::{Address, Env, TxError};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestState {
    WaitForPay,
    WaitForCspConf,
    WaitForCliConf,
    Active,
    Inactive,
    Refunded,
    Claimed,
}

impl RequestState {
    pub const ALL: [RequestState; 7] = [
        RequestState::WaitForPay,
        RequestState::WaitForCspConf,
        RequestState::WaitForCliConf,
        RequestState::Active,
        RequestState::Inactive,
        RequestState::Refunded,
        RequestState::Claimed,
    ];

    pub fn is_pending(&self) -> bool {
        matches!(self, RequestState::WaitForPay | RequestState::WaitForCspConf | RequestState::WaitForCliConf)
    }

    pub fn name(&self) -> &'static str {
        match self {
            RequestState::WaitForPay => "waitForPay",
            RequestState::WaitForCspConf => "waitForCSPConf",
            RequestState::WaitForCliConf => "waitForCliConf",
            RequestState::Active => "active",
            RequestState::Inactive => "inActive",
            RequestState::Refunded => "refunded",
            RequestState::Claimed => "claimed",
        }
    }
}

/// Where a request is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum Route {
    Local,
    /// Mirror of a request served by `contract`, owned by provider `csp`.
    Remote { contract: Address, csp: Address, req: u64 },
    /// Served here on behalf of `contract`, whose provider `csp` faces the user.
    Origin { contract: Address, csp: Address, req: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub user: Address,
    pub tau_sub: u64,
    pub tau_p: u64,
    pub tau_c1: u64,
    pub tau_c2: u64,
    pub state: RequestState,
    pub pay: Money,
    pub paid: Money,
    pub deposit: Money,
    pub extra_fee: Money,
    pub size: u64,
    pub full_price: bool,
    pub route: Route,
    /// Redistribution shares received from later uploaders.
    pub received: Money,
}

impl RequestRecord {
    /// Money this record keeps in this contract's escrow.
    pub fn escrowed(&self) -> Money {
        match (self.state, self.route) {
            (RequestState::WaitForPay, Route::Origin { .. }) => Money::zero(),
            (RequestState::WaitForPay, _) => self.deposit.clone(),
            (RequestState::WaitForCspConf | RequestState::WaitForCliConf, Route::Remote { .. }) => Money::zero(),
            (RequestState::WaitForCspConf | RequestState::WaitForCliConf, _) => self.paid.clone(),
            _ => Money::zero(),
        }
    }

    fn holds(&self) -> bool {
        self.state == RequestState::Active && !matches!(self.route, Route::Remote { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRow {
    pub num_req: u64,
    pub c_pay: Money,
    pub requests: OrdMap<u64, RequestRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeduSettings {
    #[serde(default)]
    pub deposit: Money,
    #[serde(default)]
    pub access_fee: Money,
    #[serde(default)]
    pub registry: Option<Address>,
    #[serde(default)]
    pub extra_fee_basis: FeeBasis,
    /// Integer-unit mode: all amounts are multiples of this quantum.
    #[serde(default)]
    pub share_quantum: Option<Money>,
}

impl DeduSettings {
    pub fn with_deposit(deposit: Money) -> Self {
        DeduSettings { deposit, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pricing {
    pub sf: Money,
    pub ef: Money,
    pub k: u64,
}

/// Stored versus live discounted quote for a tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CpayAudit {
    pub stored: Money,
    pub live: Money,
    pub active_holders: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeduContract {
    owner: Address,
    settings: DeduSettings,
    pricing: Option<Pricing>,
    utab: OrdMap<Tag, TagRow>,
    float: Money,
    reserved: Money,
}

fn expect_sender(actual: Address, expected: Address) -> Result<(), TxError> {
    if actual == expected {
        Ok(())
    } else {
        Err(TxError::WrongSender { sender: actual, expected })
    }
}

fn expect_state(rec: &RequestRecord, s: RequestState) -> Result<(), TxError> {
    if rec.state == s {
        Ok(())
    } else {
        Err(TxError::WrongState { found: rec.state.name().into(), expected: s.name().into() })
    }
}

fn within(now: u64, deadline: u64) -> Result<(), TxError> {
    if now <= deadline {
        Ok(())
    } else {
        Err(TxError::DeadlinePassed { deadline, now })
    }
}

fn after(now: u64, deadline: u64) -> Result<(), TxError> {
    if now > deadline {
        Ok(())
    } else {
        Err(TxError::TooEarly { deadline, now })
    }
}

fn remote(contract: Address) -> impl FnOnce(TxError) -> TxError {
    move |e| TxError::Remote { contract, reason: Box::new(e) }
}

fn refund_open(rec: &RequestRecord, now: u64) -> Result<(), TxError> {
    match rec.state {
        RequestState::WaitForCspConf => after(now, rec.tau_c1),
        RequestState::WaitForCliConf => after(now, rec.tau_c2),
        _ => Err(TxError::WrongState {
            found: rec.state.name().into(),
            expected: "waitForCSPConf or waitForCliConf".into(),
        }),
    }
}

/// Integer-mode payouts: lower the highest prior net payments towards a
/// common level, never below one unit under the newcomer's payment, using at
/// most `budget`. Returns the payouts and the unspent remainder.
fn level_payouts(nets: &[BigInt], budget: &BigInt) -> (Vec<BigInt>, BigInt) {
    let zero = BigInt::zero();
    let floor = std::cmp::max(budget - 1, zero.clone());
    let need = |w: &BigInt| -> BigInt { nets.iter().filter(|n| *n > w).map(|n| n - w).sum() };
    let level = if need(&floor) <= *budget {
        floor.clone()
    } else {
        let mut lo = floor.clone();
        let mut hi = nets.iter().max().cloned().unwrap_or_default();
        while &hi - &lo > BigInt::from(1) {
            let mid: BigInt = (&lo + &hi) / 2;
            if need(&mid) <= *budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let mut pay: Vec<BigInt> = nets.iter().map(|n| if n > &level { n - &level } else { zero.clone() }).collect();
    let mut left = budget - pay.iter().sum::<BigInt>();
    if level > floor {
        let mut order: Vec<usize> = (0..nets.len()).collect();
        order.sort_by(|&a, &b| nets[b].cmp(&nets[a]).then(a.cmp(&b)));
        for i in order {
            if !left.is_positive() {
                break;
            }
            if &nets[i] - &pay[i] == level {
                pay[i] += 1;
                left -= 1;
            }
        }
    }
    (pay, left)
}

impl DeduContract {
    pub fn new(owner: Address, settings: DeduSettings) -> Self {
        DeduContract {
            owner,
            settings,
            pricing: None,
            utab: OrdMap::new(),
            float: Money::zero(),
            reserved: Money::zero(),
        }
    }

    pub fn owner(&self) -> Address {
        self.owner
    }

    pub fn settings(&self) -> &DeduSettings {
        &self.settings
    }

    pub fn pricing(&self) -> Option<&Pricing> {
        self.pricing.as_ref()
    }

    pub fn row(&self, tag: &Tag) -> Option<&TagRow> {
        self.utab.get(tag)
    }

    pub fn record(&self, tag: &Tag, req: u64) -> Option<&RequestRecord> {
        self.utab.get(tag).and_then(|r| r.requests.get(&req))
    }

    pub fn records(&self) -> impl Iterator<Item = (Tag, u64, &RequestRecord)> {
        self.utab.iter().flat_map(|(t, row)| row.requests.iter().map(move |(i, r)| (*t, *i, r)))
    }

    pub fn float(&self) -> &Money {
        &self.float
    }

    pub fn reserved(&self) -> &Money {
        &self.reserved
    }

    /// What the contract balance must equal at every quiescent point.
    pub fn expected_escrow(&self) -> Money {
        let held: Money = self.records().map(|(_, _, r)| r.escrowed()).sum();
        held + &self.float + &self.reserved
    }

    pub fn active_holders(&self, tag: &Tag) -> u64 {
        self.utab.get(tag).map_or(0, |row| row.requests.values().filter(|r| r.holds()).count() as u64)
    }

    /// Compares the stored `cPay` with the quote implied by the live holder
    /// count. They differ after delinks.
    pub fn cpay_audit(&self, tag: &Tag) -> Option<CpayAudit> {
        let pricing = self.pricing.as_ref()?;
        let row = self.utab.get(tag)?;
        let size = row.requests.values().next_back()?.size;
        let holders = self.active_holders(tag);
        let ef = self.extra_fee(pricing, size);
        let live = pricing.sf.mul_int(size).div_int(holders + 1) + ef;
        Some(CpayAudit { stored: row.c_pay.clone(), live, active_holders: holders })
    }

    fn extra_fee(&self, p: &Pricing, size: u64) -> Money {
        match self.settings.extra_fee_basis {
            FeeBasis::PerRequest => p.ef.clone(),
            FeeBasis::PerUnit => p.ef.mul_int(size),
        }
    }

    fn configured(&self) -> Result<Pricing, TxError> {
        self.pricing.clone().ok_or(TxError::NotConfigured)
    }

    fn get(&self, tag: &Tag, req: u64) -> Result<RequestRecord, TxError> {
        let row = self.utab.get(tag).ok_or(TxError::UnknownTag)?;
        row.requests.get(&req).cloned().ok_or(TxError::UnknownRequest(req))
    }

    fn put(&mut self, tag: &Tag, req: u64, rec: RequestRecord) {
        let row = self.utab.get_mut(tag).expect("row exists");
        row.requests.insert(req, rec);
    }

    pub(crate) fn handle(&mut self, env: &mut Env<'_>, call: Call) -> Result<Reply, TxError> {
        match call {
            Call::Create { sf, ef, interval } => self.create(env, sf, ef, interval),
            Call::Request { tag, size } => self.request(env, tag, size),
            Call::Pay { tag, req } => self.pay(env, tag, req),
            Call::CspConf { tag, req } => self.csp_conf(env, tag, req),
            Call::UsrConf { tag, req } => self.usr_conf(env, tag, req),
            Call::Refund { tag, req } => self.refund(env, tag, req),
            Call::Claim { tag, req } => self.claim(env, tag, req),
            Call::DeLink { tag, req } => self.de_link(env, tag, req),
            Call::FundAccessFees => {
                expect_sender(env.sender(), self.owner)?;
                self.float += env.value();
                env.emit(Event::FloatFunded { amount: env.value().clone() });
                Ok(Reply::None)
            }
            Call::RemoteRequest { tag, size, user, origin_req } => self.remote_request(env, tag, size, user, origin_req),
            Call::RemotePay { tag, req } => self.remote_pay(env, tag, req),
            Call::RemoteCspConf { tag, req } => self.remote_csp_conf(env, tag, req),
            Call::RemoteUsrConf { tag, req } => self.remote_usr_conf(env, tag, req),
            Call::RemoteRefund { tag, req } => self.remote_refund(env, tag, req),
            Call::RemoteClaim { tag, req } => self.remote_claim(env, tag, req),
            Call::RemoteDeLink { tag, req } => self.remote_de_link(env, tag, req),
            other => Err(TxError::UnknownFunction { target: env.this(), function: other.name().into() }),
        }
    }

    fn create(&mut self, env: &mut Env<'_>, sf: Money, ef: Money, interval: u64) -> Result<Reply, TxError> {
        expect_sender(env.sender(), self.owner)?;
        if interval == 0 {
            return Err(TxError::InvalidInterval);
        }
        if let Some(q) = &self.settings.share_quantum {
            if !sf.is_multiple_of(q) {
                return Err(TxError::OffQuantum("storage fee"));
            }
            if !ef.is_multiple_of(q) {
                return Err(TxError::OffQuantum("extra fee"));
            }
        }
        env.emit(Event::Configured { sf: sf.clone(), ef: ef.clone(), interval });
        self.pricing = Some(Pricing { sf, ef, k: interval });
        Ok(Reply::None)
    }

    /// Quote for a request served here: `cPay` if someone holds the file,
    /// full price otherwise.
    fn local_quote(&self, p: &Pricing, tag: &Tag, size: u64) -> (Money, bool) {
        match self.utab.get(tag) {
            Some(row) if self.active_holders(tag) > 0 => (row.c_pay.clone(), false),
            _ => (p.sf.mul_int(size) + self.extra_fee(p, size), true),
        }
    }

    fn append(&mut self, tag: Tag, rec: RequestRecord) -> u64 {
        let row = self.utab.entry(tag).or_insert_with(|| TagRow {
            num_req: 0,
            c_pay: Money::zero(),
            requests: OrdMap::new(),
        });
        let req = row.num_req;
        row.c_pay = rec.pay.clone();
        row.requests.insert(req, rec);
        row.num_req += 1;
        req
    }

    fn next_req(&self, tag: &Tag) -> u64 {
        self.utab.get(tag).map_or(0, |r| r.num_req)
    }

    fn request(&mut self, env: &mut Env<'_>, tag: Tag, size: u64) -> Result<Reply, TxError> {
        let p = self.configured()?;
        if size == 0 {
            return Err(TxError::ZeroSize);
        }
        let deposit = env.value().clone();
        if deposit < self.settings.deposit {
            return Err(TxError::InsufficientDeposit { got: deposit, required: self.settings.deposit.clone() });
        }
        let user = env.sender();
        let now = env.now();
        let req = self.next_req(&tag);
        let extra_fee = self.extra_fee(&p, size);

        let remote_home = if self.active_holders(&tag) == 0 { self.lookup_remote(env, tag)? } else { None };
        let mut rec = RequestRecord {
            user,
            tau_sub: now,
            tau_p: now + p.k,
            tau_c1: now + 2 * p.k,
            tau_c2: now + 3 * p.k,
            state: RequestState::WaitForPay,
            pay: Money::zero(),
            paid: Money::zero(),
            deposit,
            extra_fee,
            size,
            full_price: true,
            route: Route::Local,
            received: Money::zero(),
        };
        let quote = match remote_home {
            Some((contract, csp)) => {
                let af = self.settings.access_fee.clone();
                if self.float < af {
                    return Err(TxError::InsufficientFloat { float: self.float.clone(), needed: af });
                }
                let reply = env
                    .call(contract, Call::RemoteRequest { tag, size, user, origin_req: req }, Money::zero())
                    .map_err(remote(contract))?;
                let rq = reply.quote().cloned().ok_or(TxError::BadReply(contract))?;
                self.float = self.float.checked_sub(&af).expect("checked above");
                self.reserved += &af;
                rec.pay = rq.pay.clone();
                rec.full_price = rq.full_price;
                rec.tau_p = rq.tau_p;
                rec.tau_c1 = rq.tau_c1;
                rec.tau_c2 = rq.tau_c2;
                rec.route = Route::Remote { contract, csp, req: rq.req };
                Quote { req, ..rq }
            }
            None => {
                let (pay, full_price) = self.local_quote(&p, &tag, size);
                rec.pay = pay.clone();
                rec.full_price = full_price;
                Quote {
                    tag,
                    req,
                    pay,
                    sf: p.sf.clone(),
                    full_price,
                    tau_p: rec.tau_p,
                    tau_c1: rec.tau_c1,
                    tau_c2: rec.tau_c2,
                    storer: self.owner,
                    storer_contract: env.this(),
                    storer_req: req,
                }
            }
        };
        env.emit(Event::Requested {
            tag,
            req,
            user,
            pay: rec.pay.clone(),
            full_price: rec.full_price,
            route: rec.route,
        });
        let got = self.append(tag, rec);
        debug_assert_eq!(got, req);
        Ok(Reply::Quote(quote))
    }

    /// Asks the registry whether another contract stores `tag`.
    fn lookup_remote(&self, env: &mut Env<'_>, tag: Tag) -> Result<Option<(Address, Address)>, TxError> {
        let Some(registry) = self.settings.registry else {
            return Ok(None);
        };
        match env.call(registry, Call::GetTag { tag }, Money::zero()) {
            Ok(Reply::TagFound { contract, csp, .. }) if contract != env.this() => Ok(Some((contract, csp))),
            Ok(_) | Err(TxError::NotRegistered(_)) => Ok(None),
            Err(e) => Err(remote(registry)(e)),
        }
    }

    fn remote_request(
        &mut self,
        env: &mut Env<'_>,
        tag: Tag,
        size: u64,
        user: Address,
        origin_req: u64,
    ) -> Result<Reply, TxError> {
        let p = self.configured()?;
        if size == 0 {
            return Err(TxError::ZeroSize);
        }
        let origin = env.sender();
        // the calling contract is mid-execution, so its provider is read from the registry
        let origin_csp = self
            .settings
            .registry
            .and_then(|r| env.peek(r))
            .and_then(ContractState::as_registry)
            .and_then(|r| r.csp_of(origin))
            .ok_or(TxError::NotRegistered(origin))?;
        let now = env.now();
        let req = self.next_req(&tag);
        let (pay, full_price) = self.local_quote(&p, &tag, size);
        let rec = RequestRecord {
            user,
            tau_sub: now,
            tau_p: now + p.k,
            tau_c1: now + 2 * p.k,
            tau_c2: now + 3 * p.k,
            state: RequestState::WaitForPay,
            pay: pay.clone(),
            paid: Money::zero(),
            deposit: Money::zero(),
            extra_fee: self.extra_fee(&p, size),
            size,
            full_price,
            route: Route::Origin { contract: origin, csp: origin_csp, req: origin_req },
            received: Money::zero(),
        };
        let quote = Quote {
            tag,
            req,
            pay,
            sf: p.sf.clone(),
            full_price,
            tau_p: rec.tau_p,
            tau_c1: rec.tau_c1,
            tau_c2: rec.tau_c2,
            storer: self.owner,
            storer_contract: env.this(),
            storer_req: req,
        };
        env.emit(Event::Requested { tag, req, user, pay: rec.pay.clone(), full_price, route: rec.route });
        self.append(tag, rec);
        Ok(Reply::Quote(quote))
    }

    fn pay(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.get(&tag, req)?;
        expect_sender(env.sender(), rec.user)?;
        within(env.now(), rec.tau_p)?;
        expect_state(&rec, RequestState::WaitForPay)?;
        let value = env.value().clone();
        if value != rec.pay {
            return Err(TxError::WrongAmount { got: value, quoted: rec.pay.clone() });
        }
        match rec.route {
            Route::Local => {}
            Route::Remote { contract, req: rreq, .. } => {
                env.call(contract, Call::RemotePay { tag, req: rreq }, value.clone()).map_err(remote(contract))?;
            }
            Route::Origin { .. } => return Err(TxError::WrongRoute),
        }
        env.transfer(rec.user, &rec.deposit)?;
        rec.paid = value.clone();
        rec.state = RequestState::WaitForCspConf;
        self.put(&tag, req, rec);
        env.emit(Event::Paid { tag, req, amount: value });
        Ok(Reply::None)
    }

    fn origin_record(&self, env: &Env<'_>, tag: &Tag, req: u64) -> Result<RequestRecord, TxError> {
        let rec = self.get(tag, req)?;
        match rec.route {
            Route::Origin { contract, .. } => expect_sender(env.sender(), contract)?,
            _ => return Err(TxError::WrongRoute),
        }
        Ok(rec)
    }

    fn mirror_record(&self, env: &Env<'_>, tag: &Tag, req: u64) -> Result<RequestRecord, TxError> {
        let rec = self.get(tag, req)?;
        match rec.route {
            Route::Remote { contract, .. } => expect_sender(env.sender(), contract)?,
            _ => return Err(TxError::WrongRoute),
        }
        Ok(rec)
    }

    fn remote_pay(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.origin_record(env, &tag, req)?;
        within(env.now(), rec.tau_p)?;
        expect_state(&rec, RequestState::WaitForPay)?;
        let value = env.value().clone();
        if value != rec.pay {
            return Err(TxError::WrongAmount { got: value, quoted: rec.pay.clone() });
        }
        rec.paid = value.clone();
        rec.state = RequestState::WaitForCspConf;
        self.put(&tag, req, rec);
        env.emit(Event::Paid { tag, req, amount: value });
        Ok(Reply::None)
    }

    fn csp_conf(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        expect_sender(env.sender(), self.owner)?;
        let mut rec = self.get(&tag, req)?;
        within(env.now(), rec.tau_c1)?;
        expect_state(&rec, RequestState::WaitForCspConf)?;
        match rec.route {
            Route::Local => {}
            Route::Origin { contract, req: oreq, .. } => {
                env.call(contract, Call::RemoteCspConf { tag, req: oreq }, Money::zero()).map_err(remote(contract))?;
            }
            Route::Remote { .. } => return Err(TxError::WrongRoute),
        }
        rec.state = RequestState::WaitForCliConf;
        self.put(&tag, req, rec);
        env.emit(Event::CspConfirmed { tag, req });
        Ok(Reply::None)
    }

    fn remote_csp_conf(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.mirror_record(env, &tag, req)?;
        within(env.now(), rec.tau_c1)?;
        expect_state(&rec, RequestState::WaitForCspConf)?;
        rec.state = RequestState::WaitForCliConf;
        self.put(&tag, req, rec);
        env.emit(Event::CspConfirmed { tag, req });
        Ok(Reply::None)
    }

    fn usr_conf(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.get(&tag, req)?;
        expect_sender(env.sender(), rec.user)?;
        within(env.now(), rec.tau_c2)?;
        expect_state(&rec, RequestState::WaitForCliConf)?;
        match rec.route {
            Route::Local => {
                let priors = self.settle(env, tag, req)?;
                if priors == 0 {
                    self.publish(env, tag);
                }
            }
            Route::Remote { contract, csp, req: rreq } => {
                env.call(contract, Call::RemoteUsrConf { tag, req: rreq }, Money::zero()).map_err(remote(contract))?;
                let af = self.settings.access_fee.clone();
                self.reserved = self.reserved.checked_sub(&af).expect("reservation held");
                env.transfer(csp, &af)?;
                env.emit(Event::AccessFee { tag, req, from: self.owner, to: csp, amount: af });
                rec.state = RequestState::Active;
                self.put(&tag, req, rec);
            }
            Route::Origin { .. } => return Err(TxError::WrongRoute),
        }
        Ok(Reply::None)
    }

    fn remote_usr_conf(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let rec = self.origin_record(env, &tag, req)?;
        within(env.now(), rec.tau_c2)?;
        expect_state(&rec, RequestState::WaitForCliConf)?;
        self.settle(env, tag, req)?;
        Ok(Reply::None)
    }

    /// Publishes a freshly stored tag; a tag already indexed elsewhere is fine.
    fn publish(&self, env: &mut Env<'_>, tag: Tag) {
        if let Some(registry) = self.settings.registry {
            let _ = env.call(registry, Call::SetTag { tag }, Money::zero());
        }
    }

    /// Releases the fee of a confirmed request and activates it. Returns the
    /// number of earlier active holders.
    fn settle(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<u64, TxError> {
        let p = self.configured()?;
        let mut rec = self.get(&tag, req)?;
        let row = self.utab.get(&tag).ok_or(TxError::UnknownTag)?;
        let priors: Vec<(u64, RequestRecord)> =
            row.requests.range(..req).filter(|(_, r)| r.holds()).map(|(i, r)| (*i, r.clone())).collect();
        let active = priors.len() as u64;
        let ef_to = match rec.route {
            Route::Origin { csp, .. } => csp,
            _ => self.owner,
        };
        let storage = rec.paid.checked_sub(&rec.extra_fee).unwrap_or_default();
        let fee_part = rec.paid.checked_sub(&storage).expect("storage part bounded by paid");

        let mut shares: Vec<(u64, Address, Money)> = Vec::new();
        let to_owner = if active == 0 {
            storage
        } else if let Some(q) = self.settings.share_quantum.clone() {
            let nets: Vec<BigInt> = priors
                .iter()
                .map(|(_, r)| {
                    let gross = r.paid.checked_sub(&r.extra_fee).unwrap_or_default();
                    gross.checked_sub(&r.received).unwrap_or_default().units(&q)
                })
                .collect();
            let (payouts, left) = level_payouts(&nets, &storage.units(&q));
            for ((i, r), x) in priors.iter().zip(payouts) {
                shares.push((*i, r.user, Money::from_units(&x, &q)));
            }
            Money::from_units(&left, &q)
        } else {
            let each = storage.div_int(active);
            for (i, r) in &priors {
                shares.push((*i, r.user, each.clone()));
            }
            Money::zero()
        };

        env.transfer(self.owner, &to_owner)?;
        env.transfer(ef_to, &fee_part)?;
        for (i, user, amount) in &shares {
            env.transfer(*user, amount)?;
            let mut prior = self.get(&tag, *i)?;
            prior.received += amount;
            self.put(&tag, *i, prior);
        }

        let discounted = p.sf.mul_int(rec.size).div_int(active + 2);
        let discounted = match &self.settings.share_quantum {
            Some(q) => discounted.ceil_to(q),
            None => discounted,
        };
        let row = self.utab.get_mut(&tag).expect("row exists");
        row.c_pay = discounted + &rec.extra_fee;
        rec.state = RequestState::Active;
        self.put(&tag, req, rec);
        env.emit(Event::Activated {
            tag,
            req,
            to_csp: to_owner,
            shares: shares.into_iter().map(|(_, u, m)| (u, m)).collect(),
        });
        Ok(active)
    }

    fn refund(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.get(&tag, req)?;
        expect_sender(env.sender(), rec.user)?;
        refund_open(&rec, env.now())?;
        match rec.route {
            Route::Local => env.transfer(rec.user, &rec.paid)?,
            Route::Remote { contract, req: rreq, .. } => {
                env.call(contract, Call::RemoteRefund { tag, req: rreq }, Money::zero()).map_err(remote(contract))?;
                self.release_reservation();
            }
            Route::Origin { .. } => return Err(TxError::WrongRoute),
        }
        rec.state = RequestState::Refunded;
        let amount = rec.paid.clone();
        self.put(&tag, req, rec);
        env.emit(Event::Refunded { tag, req, amount });
        Ok(Reply::None)
    }

    fn remote_refund(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.origin_record(env, &tag, req)?;
        refund_open(&rec, env.now())?;
        env.transfer(rec.user, &rec.paid)?;
        rec.state = RequestState::Refunded;
        let amount = rec.paid.clone();
        self.put(&tag, req, rec);
        env.emit(Event::Refunded { tag, req, amount });
        Ok(Reply::None)
    }

    fn release_reservation(&mut self) {
        let af = self.settings.access_fee.clone();
        self.reserved = self.reserved.checked_sub(&af).expect("reservation held");
        self.float += &af;
    }

    fn claim(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        expect_sender(env.sender(), self.owner)?;
        let mut rec = self.get(&tag, req)?;
        after(env.now(), rec.tau_p)?;
        expect_state(&rec, RequestState::WaitForPay)?;
        match rec.route {
            Route::Local => env.transfer(self.owner, &rec.deposit)?,
            Route::Origin { contract, req: oreq, .. } => {
                env.call(contract, Call::RemoteClaim { tag, req: oreq }, Money::zero()).map_err(remote(contract))?;
            }
            Route::Remote { .. } => return Err(TxError::WrongRoute),
        }
        rec.state = RequestState::Claimed;
        let amount = rec.deposit.clone();
        self.put(&tag, req, rec);
        env.emit(Event::Claimed { tag, req, amount });
        Ok(Reply::None)
    }

    fn remote_claim(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.mirror_record(env, &tag, req)?;
        after(env.now(), rec.tau_p)?;
        expect_state(&rec, RequestState::WaitForPay)?;
        let Route::Remote { csp, .. } = rec.route else { unreachable!("checked by mirror_record") };
        env.transfer(csp, &rec.deposit)?;
        self.release_reservation();
        rec.state = RequestState::Claimed;
        let amount = rec.deposit.clone();
        self.put(&tag, req, rec);
        env.emit(Event::Claimed { tag, req, amount });
        Ok(Reply::None)
    }

    fn de_link(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.get(&tag, req)?;
        expect_sender(env.sender(), rec.user)?;
        expect_state(&rec, RequestState::Active)?;
        match rec.route {
            Route::Local => {}
            Route::Remote { contract, req: rreq, .. } => {
                env.call(contract, Call::RemoteDeLink { tag, req: rreq }, Money::zero()).map_err(remote(contract))?;
            }
            Route::Origin { .. } => return Err(TxError::WrongRoute),
        }
        rec.state = RequestState::Inactive;
        self.put(&tag, req, rec);
        env.emit(Event::Delinked { tag, req });
        Ok(Reply::None)
    }

    fn remote_de_link(&mut self, env: &mut Env<'_>, tag: Tag, req: u64) -> Result<Reply, TxError> {
        let mut rec = self.origin_record(env, &tag, req)?;
        expect_state(&rec, RequestState::Active)?;
        rec.state = RequestState::Inactive;
        self.put(&tag, req, rec);
        env.emit(Event::Delinked { tag, req });
        Ok(Reply::None)
    }
}
