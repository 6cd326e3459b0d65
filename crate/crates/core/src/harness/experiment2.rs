//! Multi-provider run over a popularity dataset.
//!
//! Every installation is one storage request. Requests are dealt to the
//! providers and each provider's utility is computed three ways: without
//! dedup (`u0`), with dedup inside each provider only (`u1`), and with
//! cross-provider dedup where a package is stored once, at the provider that
//! saw its first request, and other providers pay the access fee (`u2`).
//!
//! Package prices scale linearly with size, normalized so a package of
//! median size pays the base storage fee.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::popcon::PopconRecord;
use super::HarnessError;
use crate::actors::{BehaviorPolicy, Market, MarketConfig, StoreOutcome};
use crate::contract::cross_requests;
use crate::crypto::FileObject;
use crate::economics::{utility_csp_inter, EconParams, FeeBasis};
use crate::money::{Amount, Money};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Assignment {
    /// Request `k` in dataset order goes to provider `k mod C`.
    #[default]
    RoundRobin,
    Seeded { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment2Config {
    pub params: EconParams,
    pub csps: usize,
    pub ef_fraction: Money,
    pub assignment: Assignment,
}

impl Default for Experiment2Config {
    fn default() -> Self {
        Experiment2Config {
            params: EconParams::experiment_defaults(),
            csps: 5,
            ef_fraction: Money::ratio(2, 5),
            assignment: Assignment::RoundRobin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CspRow {
    pub csp: usize,
    pub u0: Amount,
    pub u1: Amount,
    pub u2: Amount,
    pub af_in: Money,
    pub af_out: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Experiment2Result {
    pub rows: Vec<CspRow>,
    pub requests: u64,
    pub packages: usize,
    /// Interaction costs summed over the run; zero when costs are zero.
    pub interaction_costs: Money,
}

impl Experiment2Result {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("csp,u0,u1,u2,af_in,af_out\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.csp,
                r.u0.to_decimal(6),
                r.u1.to_decimal(6),
                r.u2.to_decimal(6),
                r.af_in.to_decimal(6),
                r.af_out.to_decimal(6)
            ));
        }
        out
    }

    /// Providers for which `u2 ≥ u1 ≥ u0 − costs` does not hold.
    pub fn ordering_violations(&self) -> Vec<&CspRow> {
        let slack = self.interaction_costs.to_amount();
        self.rows.iter().filter(|r| r.u2 < r.u1 || r.u1 < r.u0.clone() - slack.clone()).collect()
    }

    pub fn ordering_holds(&self) -> bool {
        self.ordering_violations().is_empty()
    }

    pub fn af_balanced(&self) -> bool {
        let i: Money = self.rows.iter().map(|r| &r.af_in).sum();
        let o: Money = self.rows.iter().map(|r| &r.af_out).sum();
        i == o
    }
}

/// Per-package prices: `w = size / median`, `SF_d = SF·w`, `SC_d = SC·w`,
/// `EF_d = fraction·SF_d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackagePrice {
    pub weight: Money,
    pub sf: Money,
    pub sc: Money,
    pub ef: Money,
}

pub fn median_size(data: &[PopconRecord]) -> Result<Money, HarnessError> {
    let mut sizes: Vec<u64> = data.iter().map(|r| r.size_bytes).collect();
    if sizes.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    sizes.sort_unstable();
    let k = sizes.len();
    Ok(if k % 2 == 1 {
        Money::from_integer(sizes[k / 2])
    } else {
        Money::from_integer(sizes[k / 2 - 1] + sizes[k / 2]).div_int(2)
    })
}

fn prices(cfg: &Experiment2Config, data: &[PopconRecord]) -> Result<Vec<PackagePrice>, HarnessError> {
    let median = median_size(data)?;
    let p = &cfg.params;
    data.iter()
        .map(|r| {
            let weight = Money::from_integer(r.size_bytes).checked_div(&median).map_err(|e| HarnessError::Script(e.to_string()))?;
            let sf = p.storage_fee().scale(&weight);
            Ok(PackagePrice { sc: p.storage_cost().scale(&weight), ef: sf.scale(&cfg.ef_fraction), sf, weight })
        })
        .collect()
}

/// Provider of every request, package by package in dataset order.
pub fn assign(cfg: &Experiment2Config, data: &[PopconRecord]) -> Vec<Vec<usize>> {
    let c = cfg.csps;
    let mut rng = match cfg.assignment {
        Assignment::Seeded { seed } => Some(ChaCha20Rng::seed_from_u64(seed)),
        Assignment::RoundRobin => None,
    };
    let mut k = 0usize;
    data.iter()
        .map(|r| {
            (0..r.inst)
                .map(|_| {
                    let at = match rng.as_mut() {
                        Some(g) => g.gen_range(0..c),
                        None => k % c,
                    };
                    k += 1;
                    at
                })
                .collect()
        })
        .collect()
}

fn validate(cfg: &Experiment2Config, data: &[PopconRecord]) -> Result<(), HarnessError> {
    if cfg.csps == 0 {
        return Err(HarnessError::NoCsps);
    }
    if data.is_empty() || data.iter().all(|r| r.inst == 0) {
        return Err(HarnessError::EmptyDataset);
    }
    Ok(())
}

/// Closed-form evaluation; cheap at any scale.
pub fn run_experiment2(cfg: &Experiment2Config, data: &[PopconRecord]) -> Result<Experiment2Result, HarnessError> {
    validate(cfg, data)?;
    let c = cfg.csps;
    let price = prices(cfg, data)?;
    let af = cfg.params.access_fee();
    let mut u0 = vec![Amount::zero(); c];
    let mut u1 = vec![Amount::zero(); c];
    let mut base2 = vec![Amount::zero(); c];
    let mut af_in = vec![Money::zero(); c];
    let mut af_out = vec![Money::zero(); c];
    let mut requests = 0u64;
    for (pp, at) in price.iter().zip(assign(cfg, data)) {
        let margin = pp.sf.to_amount() - pp.sc.to_amount();
        let mut per = vec![0u64; c];
        for &i in &at {
            per[i] += 1;
        }
        requests += at.len() as u64;
        for (i, &n) in per.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let ef = pp.ef.mul_int(n).to_amount();
            u0[i] += &margin.mul_int(n);
            u1[i] += &(margin.clone() + ef.clone());
            base2[i] += &ef;
        }
        let Some(&storer) = at.first() else { continue };
        base2[storer] += &margin;
        for (i, &n) in per.iter().enumerate() {
            if i != storer && n > 0 {
                af_out[i] += &af.mul_int(n);
                af_in[storer] += &af.mul_int(n);
            }
        }
    }
    let rows = (0..c)
        .map(|i| CspRow {
            csp: i,
            u0: u0[i].clone(),
            u1: u1[i].clone(),
            u2: utility_csp_inter(&base2[i], &af_in[i], &af_out[i]),
            af_in: af_in[i].clone(),
            af_out: af_out[i].clone(),
        })
        .collect();
    Ok(Experiment2Result { rows, requests, packages: data.len(), interaction_costs: Money::zero() })
}

/// What each provider gained on the ledger in one mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerRun {
    pub utilities: Vec<Amount>,
    pub af_in: Vec<Money>,
    pub af_out: Vec<Money>,
}

/// Replays the dataset through the actor market. With `inter` set the
/// providers share a registry and access-fee floats; otherwise each one
/// dedups alone. Prices are per byte so each package pays its scaled fee.
pub fn ledger_run(cfg: &Experiment2Config, data: &[PopconRecord], inter: bool) -> Result<LedgerRun, HarnessError> {
    validate(cfg, data)?;
    let median = median_size(data)?;
    let price = prices(cfg, data)?;
    let p = &cfg.params;
    let total: u64 = data.iter().map(|r| r.inst).sum();
    let per_byte = |m: &Money| m.checked_div(&median).map_err(|e| HarnessError::Script(e.to_string()));
    let mc = MarketConfig {
        sf: per_byte(p.storage_fee())?,
        ef: per_byte(&p.storage_fee().scale(&cfg.ef_fraction))?,
        extra_fee_basis: FeeBasis::PerUnit,
        access_fee: if inter { p.access_fee().clone() } else { Money::zero() },
        inter,
        float: if inter { p.access_fee().mul_int(total) } else { Money::zero() },
        ..MarketConfig::default()
    };
    let mut market = Market::new(mc.clone())?;
    market.ledger.set_audit(false);
    for _ in 0..cfg.csps {
        market.add_csp(Money::zero(), BehaviorPolicy::Honest)?;
    }
    let start: Vec<Money> = market.csps.iter().map(|c| market.ledger.balance(c.address)).collect();
    for ((rec, pp), at) in data.iter().zip(&price).zip(assign(cfg, data)) {
        let file = FileObject::new(format!("package {}", rec.package).into_bytes());
        let funds = pp.sf.clone() + pp.ef.clone() + mc.deposit.clone() + Money::from_integer(1);
        for home in at {
            let u = market.add_user(funds.clone(), BehaviorPolicy::Honest, home)?;
            let r = market.user_store_sized(u, &file, rec.size_bytes)?;
            if r.outcome != StoreOutcome::Stored {
                return Err(HarnessError::Script(format!("{}: {:?} {:?}", rec.package, r.outcome, r.rejection)));
            }
        }
    }
    let sc_of = |tag| {
        data.iter().zip(&price).find_map(|(rec, pp)| {
            let (_, _, t) = crate::crypto::ce_pipeline(&FileObject::new(format!("package {}", rec.package).into_bytes())).ok()?;
            (t == tag).then(|| pp.sc.clone())
        })
    };
    let mut utilities = Vec::new();
    for (i, c) in market.csps.iter().enumerate() {
        let d = market.ledger.contract(c.contract).and_then(|s| s.as_dedu()).expect("deployed");
        let held = market.ledger.balance(c.address).to_amount() + d.float().to_amount() + d.reserved().to_amount();
        let mut u = held - start[i].to_amount() - mc.float.to_amount();
        for tag in c.objects.keys() {
            let sc = sc_of(*tag).ok_or_else(|| HarnessError::Script(format!("object {} is no package", tag.short())))?;
            u -= &sc.to_amount();
        }
        utilities.push(u);
    }
    let mut af_in = vec![Money::zero(); cfg.csps];
    let mut af_out = vec![Money::zero(); cfg.csps];
    for x in cross_requests(&market.ledger) {
        let origin = market.csps.iter().position(|c| c.contract == x.origin).expect("known origin");
        let remote = market.csps.iter().position(|c| c.contract == x.remote).expect("known remote");
        af_out[origin] += &x.access_fee;
        af_in[remote] += &x.access_fee;
    }
    Ok(LedgerRun { utilities, af_in, af_out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::generate;

    fn rec(name: &str, inst: u64, size: u64) -> PopconRecord {
        PopconRecord { rank: 0, package: name.into(), inst, vote: 0, old: 0, recent: 0, no_files: 0, size_bytes: size }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median_size(&[rec("a", 1, 3), rec("b", 1, 1), rec("c", 1, 2)]).unwrap(), Money::from_integer(2));
        assert_eq!(median_size(&[rec("a", 1, 3), rec("b", 1, 2)]).unwrap(), "2.5".parse().unwrap());
        assert!(median_size(&[]).is_err());
    }

    #[test]
    fn round_robin_follows_global_index() {
        let cfg = Experiment2Config { csps: 3, ..Default::default() };
        assert_eq!(assign(&cfg, &[rec("a", 2, 1), rec("b", 4, 1)]), vec![vec![0, 1], vec![2, 0, 1, 2]]);
        let seeded = Experiment2Config { assignment: Assignment::Seeded { seed: 3 }, ..cfg };
        let a = assign(&seeded, &[rec("a", 50, 1)]);
        assert_eq!(a, assign(&seeded, &[rec("a", 50, 1)]));
        assert!(a[0].iter().all(|&i| i < 3));
    }

    #[test]
    fn hand_computed_two_providers() {
        // one median-size package, 3 requests on 2 providers: 0,1,0
        let cfg = Experiment2Config { csps: 2, ..Default::default() };
        let r = run_experiment2(&cfg, &[rec("a", 3, 10)]).unwrap();
        let a = |s: &str| s.parse::<Amount>().unwrap();
        // margin 0.065, EF 0.066, AF 0.1
        assert_eq!(r.rows[0].u0, a("0.13"));
        assert_eq!(r.rows[0].u1, a("0.197"));
        assert_eq!(r.rows[0].u2, a("0.297"));
        assert_eq!(r.rows[1].u1, a("0.131"));
        assert_eq!(r.rows[1].u2, a("-0.034"));
        assert_eq!((r.rows[0].af_in.clone(), r.rows[1].af_out.clone()), ("0.1".parse().unwrap(), "0.1".parse().unwrap()));
        assert!(r.af_balanced());
    }

    #[test]
    fn single_provider_has_no_access_fees() {
        let data = generate(20, 500, 4).unwrap();
        let r = run_experiment2(&Experiment2Config { csps: 1, ..Default::default() }, &data).unwrap();
        assert_eq!(r.rows[0].u2, r.rows[0].u1);
        assert!(r.rows[0].af_in.is_zero() && r.rows[0].af_out.is_zero());
    }

    #[test]
    fn rejects_empty_inputs() {
        let cfg = Experiment2Config::default();
        assert!(matches!(run_experiment2(&cfg, &[]), Err(HarnessError::EmptyDataset)));
        let none = Experiment2Config { csps: 0, ..Default::default() };
        assert!(matches!(run_experiment2(&none, &[rec("a", 1, 1)]), Err(HarnessError::NoCsps)));
    }

    #[test]
    fn csv_header_and_rows() {
        let r = run_experiment2(&Experiment2Config::default(), &generate(10, 100, 1).unwrap()).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("csp,u0,u1,u2,af_in,af_out\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn ledger_agrees_with_closed_form() {
        let data = generate(12, 200, 5).unwrap();
        for csps in [1, 3] {
            let cfg = Experiment2Config { csps, ..Default::default() };
            let closed = run_experiment2(&cfg, &data).unwrap();
            let single = ledger_run(&cfg, &data, false).unwrap();
            let inter = ledger_run(&cfg, &data, true).unwrap();
            for (i, row) in closed.rows.iter().enumerate() {
                assert_eq!(single.utilities[i], row.u1, "u1 of csp {i}");
                assert_eq!(inter.utilities[i], row.u2, "u2 of csp {i}");
                assert_eq!(inter.af_in[i], row.af_in);
                assert_eq!(inter.af_out[i], row.af_out);
            }
        }
    }
}
