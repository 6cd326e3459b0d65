use ledgerdedup::contract::{
    cross_requests, Call, ContractState, CrossStatus, DeduContract, DeduSettings, Quote, Registry, RequestState,
};
use ledgerdedup::crypto::Tag;
use ledgerdedup::ledger::{Address, Ledger, Message, Receipt, TxError};
use ledgerdedup::money::Money;

fn m(s: &str) -> Money {
    s.parse().unwrap()
}

fn tag(b: u8) -> Tag {
    Tag::from_bytes([b; 32])
}

struct Market {
    l: Ledger,
    registry: Address,
    csps: Vec<Address>,
    contracts: Vec<Address>,
}

impl Market {
    fn new(n: usize) -> Self {
        let mut l = Ledger::default();
        let admin = l.create_account(Money::zero());
        let registry = l.deploy(admin, ContractState::Registry(Registry::new())).unwrap();
        let mut csps = Vec::new();
        let mut contracts = Vec::new();
        for i in 0..n {
            let csp = l.create_account(m("10"));
            let settings = DeduSettings {
                deposit: m("0.01"),
                access_fee: m("0.1"),
                registry: Some(registry),
                ..Default::default()
            };
            let c = l.deploy(csp, ContractState::Dedu(DeduContract::new(csp, settings))).unwrap();
            assert!(l.dispatch(Message::new(csp, c, Call::Create { sf: m("0.165"), ef: m("0.0165"), interval: 10 })).accepted());
            let r = l.dispatch(Message::new(csp, registry, Call::Register { contract: c, info: format!("csp-{i}") }));
            assert!(r.accepted(), "{:?}", r.outcome);
            assert!(l.dispatch(Message::new(csp, c, Call::FundAccessFees).with_value(m("1"))).accepted());
            csps.push(csp);
            contracts.push(c);
        }
        Market { l, registry, csps, contracts }
    }

    fn send(&mut self, from: Address, to: Address, call: Call, value: Money) -> Receipt {
        self.l.dispatch(Message::new(from, to, call).with_value(value))
    }

    fn request(&mut self, u: Address, at: usize, t: Tag) -> Quote {
        let c = self.contracts[at];
        let r = self.send(u, c, Call::Request { tag: t, size: 1 }, m("0.01"));
        r.reply.quote().cloned().unwrap_or_else(|| panic!("{:?}", r.outcome))
    }

    /// Full honest run through the user's own provider. Returns the quote.
    fn upload(&mut self, u: Address, at: usize, t: Tag) -> Quote {
        let q = self.request(u, at, t);
        let c = self.contracts[at];
        assert!(self.send(u, c, Call::Pay { tag: t, req: q.req }, q.pay.clone()).accepted());
        let r = self.send(q.storer, q.storer_contract, Call::CspConf { tag: t, req: q.storer_req }, Money::zero());
        assert!(r.accepted(), "{:?}", r.outcome);
        let r = self.send(u, c, Call::UsrConf { tag: t, req: q.req }, Money::zero());
        assert!(r.accepted(), "{:?}", r.outcome);
        q
    }

    fn check_escrows(&self) {
        for &c in &self.contracts {
            let d = self.l.contract(c).unwrap().as_dedu().unwrap();
            assert_eq!(self.l.balance(c), d.expected_escrow(), "escrow of {c}");
        }
        assert_eq!(&self.l.total_supply(), self.l.minted());
    }
}

#[test]
fn registration_guards() {
    let mut mk = Market::new(2);
    let (c0, c1) = (mk.csps[0], mk.csps[1]);
    let reg = mk.registry;
    let k1 = mk.contracts[1];
    assert!(matches!(
        mk.send(c0, reg, Call::Register { contract: k1, info: String::new() }, Money::zero()).error,
        Some(TxError::AlreadyRegistered(_))
    ));
    let stranger = mk.l.create_account(m("1"));
    let r = mk.send(stranger, reg, Call::Register { contract: k1, info: String::new() }, Money::zero());
    assert!(matches!(r.error, Some(TxError::AlreadyRegistered(_))));
    let other = DeduContract::new(c1, DeduSettings::default());
    let k = mk.l.deploy(c1, ContractState::Dedu(other)).unwrap();
    let r = mk.send(stranger, reg, Call::Register { contract: k, info: String::new() }, Money::zero());
    assert!(matches!(r.error, Some(TxError::NotContractOwner { .. })));
    // a contract not in the registry cannot query it
    let r = mk.send(stranger, reg, Call::GetTag { tag: tag(1) }, Money::zero());
    assert!(matches!(r.error, Some(TxError::NotRegistered(_))));
}

#[test]
fn first_upload_publishes_tag_and_duplicate_is_tolerated() {
    let mut mk = Market::new(2);
    let u = mk.l.create_account(m("5"));
    mk.upload(u, 0, tag(1));
    let reg = mk.l.contract(mk.registry).unwrap().as_registry().unwrap();
    let e = reg.lookup(&tag(1)).unwrap();
    assert_eq!((e.dedu_contract, e.csp, e.info.as_str()), (mk.contracts[0], mk.csps[0], "csp-0"));
    assert_eq!(reg.tag_count(), 1);
}

#[test]
fn cross_request_matches_local_second_uploader() {
    let mut mk = Market::new(2);
    let (a, b) = (mk.l.create_account(m("5")), mk.l.create_account(m("5")));
    mk.upload(a, 1, tag(7));
    let c0 = mk.csps[0];
    let c1 = mk.csps[1];
    let before0 = mk.l.balance(c0);
    let before1 = mk.l.balance(c1);
    let before_a = mk.l.balance(a);
    let q = mk.upload(b, 0, tag(7));
    assert_eq!(q.pay, m("0.099"));
    assert!(!q.full_price);
    assert_eq!((q.storer, q.storer_contract), (c1, mk.contracts[1]));
    // c0 forwards EF and pays AF; c1 gets AF; a gets the storage part back
    assert_eq!(mk.l.balance(a), before_a + m("0.0825"));
    assert_eq!(mk.l.balance(c0).to_amount(), before0.to_amount() + m("0.0165").to_amount());
    assert_eq!(mk.l.balance(c1), before1 + m("0.1"));
    let cross = cross_requests(&mk.l);
    assert_eq!(cross.len(), 1);
    assert_eq!(cross[0].status, CrossStatus::Terminated);
    assert!(cross[0].synchronized());
    assert_eq!(cross[0].origin_state, RequestState::Active);
    mk.check_escrows();
}

#[test]
fn user_abort_forfeits_deposit_to_storer() {
    let mut mk = Market::new(2);
    let (a, b) = (mk.l.create_account(m("5")), mk.l.create_account(m("5")));
    mk.upload(a, 1, tag(2));
    let q = mk.request(b, 0, tag(2));
    let c1 = mk.csps[1];
    let k1 = mk.contracts[1];
    let before = mk.l.balance(c1);
    mk.l.advance_past(q.tau_p);
    let r = mk.send(c1, k1, Call::Claim { tag: tag(2), req: q.storer_req }, Money::zero());
    assert!(r.accepted(), "{:?}", r.outcome);
    assert_eq!(mk.l.balance(c1), before + m("0.01"));
    let cross = cross_requests(&mk.l);
    assert_eq!((cross[0].origin_state, cross[0].remote_state), (RequestState::Claimed, RequestState::Claimed));
    let d0 = mk.l.contract(mk.contracts[0]).unwrap().as_dedu().unwrap();
    assert_eq!(d0.float(), &m("1"));
    mk.check_escrows();
}

#[test]
fn missed_confirmations_refund_without_access_fee() {
    for stage in 0..2 {
        let mut mk = Market::new(2);
        let (a, b) = (mk.l.create_account(m("5")), mk.l.create_account(m("5")));
        mk.upload(a, 1, tag(3));
        let q = mk.request(b, 0, tag(3));
        let k0 = mk.contracts[0];
        let k1 = mk.contracts[1];
        let c1 = mk.csps[1];
        assert!(mk.send(b, k0, Call::Pay { tag: tag(3), req: q.req }, q.pay.clone()).accepted());
        let deadline = if stage == 0 {
            q.tau_c1
        } else {
            assert!(mk.send(c1, k1, Call::CspConf { tag: tag(3), req: q.storer_req }, Money::zero()).accepted());
            q.tau_c2
        };
        let before = mk.l.balance(b);
        let c1_before = mk.l.balance(c1);
        mk.l.advance_past(deadline);
        let r = mk.send(b, k0, Call::Refund { tag: tag(3), req: q.req }, Money::zero());
        assert!(r.accepted(), "{:?}", r.outcome);
        assert_eq!(mk.l.balance(b), before + q.pay.clone());
        assert_eq!(mk.l.balance(c1), c1_before);
        let cross = cross_requests(&mk.l);
        assert!(cross[0].synchronized());
        assert_eq!(cross[0].origin_state, RequestState::Refunded);
        mk.check_escrows();
    }
}

#[test]
fn remote_calls_only_accept_the_paired_contract() {
    let mut mk = Market::new(3);
    let (a, b) = (mk.l.create_account(m("5")), mk.l.create_account(m("5")));
    mk.upload(a, 1, tag(4));
    let q = mk.request(b, 0, tag(4));
    let k1 = mk.contracts[1];
    // a user cannot impersonate the origin contract
    let r = mk.send(b, k1, Call::RemotePay { tag: tag(4), req: q.storer_req }, q.pay.clone());
    assert!(matches!(r.error, Some(TxError::WrongSender { .. })));
    // a user cannot confirm at the storing contract directly
    let r = mk.send(b, k1, Call::UsrConf { tag: tag(4), req: q.storer_req }, Money::zero());
    assert!(r.error.is_some());
}

#[test]
fn fully_delinked_tag_requotes_full_price_remotely() {
    let mut mk = Market::new(2);
    let (a, b) = (mk.l.create_account(m("5")), mk.l.create_account(m("5")));
    mk.upload(a, 1, tag(5));
    let k1 = mk.contracts[1];
    assert!(mk.send(a, k1, Call::DeLink { tag: tag(5), req: 0 }, Money::zero()).accepted());
    let q = mk.request(b, 0, tag(5));
    assert!(q.full_price);
    assert_eq!(q.pay, m("0.1815"));
    assert_eq!(q.storer_contract, k1);
}

#[test]
fn empty_float_blocks_cross_request() {
    let mut l = Ledger::default();
    let admin = l.create_account(Money::zero());
    let registry = l.deploy(admin, ContractState::Registry(Registry::new())).unwrap();
    let mut ks = Vec::new();
    for _ in 0..2 {
        let csp = l.create_account(m("1"));
        let s = DeduSettings { access_fee: m("0.1"), registry: Some(registry), ..Default::default() };
        let k = l.deploy(csp, ContractState::Dedu(DeduContract::new(csp, s))).unwrap();
        l.dispatch(Message::new(csp, k, Call::Create { sf: m("0.165"), ef: m("0.0165"), interval: 5 }));
        l.dispatch(Message::new(csp, registry, Call::Register { contract: k, info: String::new() }));
        ks.push((csp, k));
    }
    let u = l.create_account(m("1"));
    let q = l.dispatch(Message::new(u, ks[1].1, Call::Request { tag: tag(9), size: 1 })).reply.quote().cloned().unwrap();
    l.dispatch(Message::new(u, ks[1].1, Call::Pay { tag: tag(9), req: 0 }).with_value(q.pay));
    l.dispatch(Message::new(ks[1].0, ks[1].1, Call::CspConf { tag: tag(9), req: 0 }));
    assert!(l.dispatch(Message::new(u, ks[1].1, Call::UsrConf { tag: tag(9), req: 0 })).accepted());
    let v = l.create_account(m("1"));
    let r = l.dispatch(Message::new(v, ks[0].1, Call::Request { tag: tag(9), size: 1 }));
    assert!(matches!(r.error, Some(TxError::InsufficientFloat { .. })));
}
