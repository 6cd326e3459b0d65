//! Every owner of a file ends up paying the same net fee.
//!
//! For each `m`, `m` honest users store the same file through the full
//! actor flow, and each user's net spend is compared with `SF/m + EF`.

use serde::Serialize;

use super::HarnessError;
use crate::actors::{BehaviorPolicy, Market, MarketConfig, StoreOutcome};
use crate::crypto::FileObject;
use crate::money::{Amount, Money};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniformRow {
    pub m: u64,
    pub expected: Amount,
    /// Largest |spend − expected| over the owners.
    pub max_deviation: Amount,
    pub worst_owner: usize,
    /// What the provider kept beyond `SF + m·EF`.
    pub csp_remainder: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniformReport {
    pub rows: Vec<UniformRow>,
    pub tolerance: Amount,
}

impl UniformReport {
    pub fn first_failure(&self) -> Option<&UniformRow> {
        self.rows.iter().find(|r| r.max_deviation > self.tolerance || r.csp_remainder.is_negative())
    }

    pub fn passed(&self) -> bool {
        self.first_failure().is_none()
    }
}

/// Runs `m = 1..=m_max`. With `config.share_quantum` set, the tolerance is
/// one quantum; otherwise it is zero.
pub fn uniform_payments_sweep(config: &MarketConfig, m_max: u64) -> Result<UniformReport, HarnessError> {
    let tolerance = config.share_quantum.as_ref().map(Money::to_amount).unwrap_or_else(Amount::zero);
    let file = FileObject::new(b"uniform payments sweep".to_vec());
    let mut rows = Vec::new();
    for m in 1..=m_max {
        let mut market = Market::new(config.clone())?;
        market.ledger.set_audit(false);
        market.add_csp(Money::zero(), BehaviorPolicy::Honest)?;
        let csp = market.csps[0].address;
        let csp_start = market.ledger.balance(csp);
        let funds = config.sf.mul_int(2) + config.ef.mul_int(2) + config.deposit.clone();
        let mut users = Vec::new();
        for _ in 0..m {
            let u = market.add_user(funds.clone(), BehaviorPolicy::Honest, 0)?;
            let r = market.user_store(u, &file)?;
            if r.outcome != StoreOutcome::Stored {
                return Err(HarnessError::Script(format!("m={m}: upload ended {:?}: {:?}", r.outcome, r.rejection)));
            }
            users.push(market.users[u].address);
        }
        let expected = config.sf.div_int(m).to_amount() + config.ef.to_amount();
        let mut max_deviation = Amount::zero();
        let mut worst_owner = 0;
        for (i, a) in users.iter().enumerate() {
            let spent = funds.to_amount() - market.ledger.balance(*a).to_amount();
            let dev = (spent - expected.clone()).abs();
            if dev > max_deviation {
                max_deviation = dev;
                worst_owner = i;
            }
        }
        let gained = market.ledger.balance(csp).to_amount() - csp_start.to_amount();
        let csp_remainder = gained - config.sf.to_amount() - config.ef.mul_int(m).to_amount();
        rows.push(UniformRow { m, expected, max_deviation, worst_owner, csp_remainder });
    }
    Ok(UniformReport { rows, tolerance })
}
