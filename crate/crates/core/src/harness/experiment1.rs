//! Single-provider sweep: average user utility and provider utility as the
//! population grows, for several extra-fee levels and dedup rates.
//!
//! The grid is evaluated in closed form. [`ledger_cross_check`] replays one
//! grid point through the actor market and compares balances.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::actors::{BehaviorPolicy, Market, MarketConfig, StoreOutcome};
use crate::crypto::FileObject;
use crate::economics::{
    average_user_utility, utility_csp_dedup, utility_csp_no_dedup, utility_user_no_dedup, EconParams,
    PopulationState,
};
use crate::money::{Amount, Money};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment1Config {
    pub params: EconParams,
    /// Extra fee as a fraction of the storage fee.
    pub ef_fractions: Vec<Money>,
    /// Share of the users that opt for dedup.
    pub n_fractions: Vec<Money>,
    pub users: Vec<u64>,
    /// Extra fees are floored to this grid. `None` keeps them exact.
    pub fee_quantum: Option<Money>,
}

fn m(s: &str) -> Money {
    s.parse().expect("literal")
}

impl Default for Experiment1Config {
    fn default() -> Self {
        Experiment1Config {
            params: EconParams::experiment_defaults(),
            ef_fractions: ["0.1", "0.2", "0.3", "0.4", "0.5"].into_iter().map(m).collect(),
            n_fractions: ["0.1", "0.5", "0.9", "1"].into_iter().map(m).collect(),
            users: (1..=10).map(|k| k * 10).collect(),
            fee_quantum: Some(m("0.001")),
        }
    }
}

impl Experiment1Config {
    pub fn extra_fee(&self, fraction: &Money) -> Money {
        let ef = self.params.storage_fee().scale(fraction);
        match &self.fee_quantum {
            Some(q) => ef.floor_to(q),
            None => ef,
        }
    }
}

/// `round(fraction · users)`, halves rounded up, at least 1.
pub fn dedup_count(fraction: &Money, users: u64) -> u64 {
    let one = Money::from_integer(1);
    let rounded = (fraction.mul_int(users) + Money::ratio(1, 2)).floor_to(&one);
    let n: u64 = rounded.units(&one).try_into().unwrap_or(u64::MAX);
    n.clamp(1, users.max(1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Experiment1Row {
    pub ef_fraction: Money,
    pub n_fraction: Money,
    pub users: u64,
    pub n: u64,
    pub extra_fee: Money,
    pub u_user0: Amount,
    pub u_user1: Amount,
    pub u_csp0: Amount,
    pub u_csp1: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<Experiment1Row>,
}

pub fn run_experiment1(cfg: &Experiment1Config) -> Result<ExperimentResult, HarnessError> {
    let mut rows = Vec::new();
    for frac in &cfg.ef_fractions {
        let ef = cfg.extra_fee(frac);
        let p = cfg.params.clone().with_extra_fee(ef.clone());
        for nf in &cfg.n_fractions {
            for &big_n in &cfg.users {
                let n = dedup_count(nf, big_n);
                let state = PopulationState::new(big_n, n)?;
                rows.push(Experiment1Row {
                    ef_fraction: frac.clone(),
                    n_fraction: nf.clone(),
                    users: big_n,
                    n,
                    extra_fee: ef.clone(),
                    u_user0: utility_user_no_dedup(&p),
                    u_user1: average_user_utility(&p, state),
                    u_csp0: utility_csp_no_dedup(&p, &[(big_n, Money::from_integer(1))])?,
                    u_csp1: utility_csp_dedup(&p, &[state]),
                });
            }
        }
    }
    Ok(ExperimentResult { rows })
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ef_fraction,n_fraction,users,u_user0,u_user1,u_csp0,u_csp1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.ef_fraction,
                r.n_fraction,
                r.users,
                r.u_user0.to_decimal(6),
                r.u_user1.to_decimal(6),
                r.u_csp0.to_decimal(6),
                r.u_csp1.to_decimal(6)
            ));
        }
        out
    }

    fn find(&self, ef: &Money, n_fraction: Option<&Money>, users: u64) -> Option<&Experiment1Row> {
        self.rows.iter().find(|r| {
            &r.ef_fraction == ef && r.users == users && n_fraction.is_none_or(|nf| &r.n_fraction == nf)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Users,
    Csp,
}

/// One plotted coordinate. Series `u0` is the no-dedup curve, `nX` the
/// dedup curve with X percent of users opting in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenPoint {
    pub ef_fraction: Money,
    pub series: String,
    pub users: u64,
    pub value: f64,
}

pub const GOLDEN_USERS: &str = include_str!("../../data/golden/users.csv");
pub const GOLDEN_CSP: &str = include_str!("../../data/golden/csp.csv");

pub fn golden(figure: Figure) -> Vec<GoldenPoint> {
    let text = match figure {
        Figure::Users => GOLDEN_USERS,
        Figure::Csp => GOLDEN_CSP,
    };
    parse_golden(text).expect("bundled golden data parses")
}

pub fn parse_golden(text: &str) -> Result<Vec<GoldenPoint>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("ef_fraction") {
            continue;
        }
        let bad = |reason: String| HarnessError::Parse { what: format!("golden line {}", i + 1), reason };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", f.len())));
        }
        out.push(GoldenPoint {
            ef_fraction: f[0].parse().map_err(|_| bad(format!("ef_fraction {}", f[0])))?,
            series: f[1].to_string(),
            users: f[2].parse().map_err(|_| bad(format!("users {}", f[2])))?,
            value: f[3].parse().map_err(|_| bad(format!("value {}", f[3])))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDelta {
    pub point: GoldenPoint,
    pub computed: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenComparison {
    pub figure: Figure,
    pub tolerance: f64,
    pub compared: usize,
    pub worst: Option<PointDelta>,
    pub outside: Vec<PointDelta>,
}

impl GoldenComparison {
    pub fn passed(&self) -> bool {
        self.outside.is_empty() && self.compared > 0
    }

    pub fn max_delta(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.delta)
    }
}

fn series_fraction(series: &str) -> Result<Option<Money>, HarnessError> {
    if series == "u0" {
        return Ok(None);
    }
    let pct: u64 = series
        .strip_prefix('n')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::Parse { what: "golden series".into(), reason: series.to_string() })?;
    Ok(Some(Money::ratio(pct, 100)))
}

pub fn compare_golden(
    result: &ExperimentResult,
    figure: Figure,
    points: &[GoldenPoint],
    tolerance: f64,
) -> Result<GoldenComparison, HarnessError> {
    let mut cmp = GoldenComparison { figure, tolerance, compared: 0, worst: None, outside: Vec::new() };
    for pt in points {
        let nf = series_fraction(&pt.series)?;
        let row = result.find(&pt.ef_fraction, nf.as_ref(), pt.users).ok_or_else(|| {
            HarnessError::Script(format!("no computed row for {} {} {}", pt.ef_fraction, pt.series, pt.users))
        })?;
        let v = match (figure, nf.is_some()) {
            (Figure::Users, false) => &row.u_user0,
            (Figure::Users, true) => &row.u_user1,
            (Figure::Csp, false) => &row.u_csp0,
            (Figure::Csp, true) => &row.u_csp1,
        };
        let computed = v.to_f64();
        let d = PointDelta { point: pt.clone(), computed, delta: (computed - pt.value).abs() };
        cmp.compared += 1;
        // float noise from decimal parsing must not flip a boundary point
        if d.delta > tolerance + 1e-9 {
            cmp.outside.push(d.clone());
        }
        if cmp.worst.as_ref().is_none_or(|w| d.delta > w.delta) {
            cmp.worst = Some(d);
        }
    }
    Ok(cmp)
}

/// Utilities measured on the ledger for one grid point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerPoint {
    pub users: u64,
    pub n: u64,
    pub u_user1: Amount,
    pub u_csp1: Amount,
    pub analytic_user: Amount,
    pub analytic_csp: Amount,
}

impl LedgerPoint {
    pub fn matches(&self) -> bool {
        self.u_user1 == self.analytic_user && self.u_csp1 == self.analytic_csp
    }
}

/// Runs one grid point through the market: `n` users upload the same file
/// through a dedup contract, the other `N − n` upload distinct files through
/// a plain contract of the same provider that charges no extra fee.
/// Interaction costs are zero, so utilities are profit minus net spend for
/// users and receipts minus storage cost for the provider.
pub fn ledger_cross_check(
    cfg: &Experiment1Config,
    ef_fraction: &Money,
    n_fraction: &Money,
    users: u64,
) -> Result<LedgerPoint, HarnessError> {
    let p = cfg.params.clone().with_extra_fee(cfg.extra_fee(ef_fraction));
    let n = dedup_count(n_fraction, users);
    let state = PopulationState::new(users, n)?;
    let mc = MarketConfig { sf: p.storage_fee().clone(), ef: p.extra_fee().clone(), ..MarketConfig::default() };
    let mut market = Market::new(mc)?;
    let dedup = market.add_csp(Money::zero(), BehaviorPolicy::Honest)?;
    let plain = market.add_csp_priced(Money::zero(), BehaviorPolicy::Honest, p.storage_fee().clone(), Money::zero())?;
    let provider = [market.csps[dedup].address, market.csps[plain].address];
    let start: Amount = provider.iter().map(|a| market.ledger.balance(*a).to_amount()).sum();
    let funds = Money::from_integer(1);
    let shared = FileObject::new(b"experiment one shared file".to_vec());
    let mut accounts = Vec::new();
    for i in 0..users {
        let (home, file) = if i < n {
            (dedup, shared.clone())
        } else {
            (plain, FileObject::new(format!("experiment one private file {i}").into_bytes()))
        };
        let u = market.add_user(funds.clone(), BehaviorPolicy::Honest, home)?;
        let r = market.user_store(u, &file)?;
        if r.outcome != StoreOutcome::Stored {
            return Err(HarnessError::Script(format!("user {i} ended {:?}: {:?}", r.outcome, r.rejection)));
        }
        accounts.push(market.users[u].address);
    }
    let spent: Amount = accounts.iter().map(|a| funds.to_amount() - market.ledger.balance(*a).to_amount()).sum();
    let u_user1 = (p.profit().to_amount().mul_int(users) - spent).div_int(users);
    let end: Amount = provider.iter().map(|a| market.ledger.balance(*a).to_amount()).sum();
    let stored: u64 = market.csps.iter().map(|c| c.objects.len() as u64).sum();
    let u_csp1 = end - start - p.storage_cost().mul_int(stored).to_amount();
    Ok(LedgerPoint {
        users,
        n,
        u_user1,
        u_csp1,
        analytic_user: average_user_utility(&p, state),
        analytic_csp: utility_csp_dedup(&p, &[state]),
    })
}
