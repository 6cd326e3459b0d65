//! Utility functions for users and providers, the extra-fee interval and the
//! IR/IC predicates.
//!
//! All functions are closed-form over exact rationals. `N` is the number of
//! users holding a file, `n` the number of them that opted for dedup.

use serde::{Deserialize, Serialize};

use crate::money::{Amount, Money};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EconError {
    #[error("storage fee {sf} must exceed storage cost {sc}")]
    IrrationalProvider { sf: Money, sc: Money },
    #[error("dedup rate must be at least 1")]
    ZeroDedupRate,
    #[error("dedup rate {n} exceeds holder count {total}")]
    RateAboveHolders { n: u64, total: u64 },
}

/// How the extra fee relates to the file size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeeBasis {
    /// One flat extra fee per request.
    #[default]
    PerRequest,
    /// Extra fee charged per size unit, like the storage fee.
    PerUnit,
}

/// Whether bounds account for interaction and deployment costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    #[default]
    CostFree,
    CostAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Csp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct EconParams {
    profit: Money,
    storage_fee: Money,
    extra_fee: Money,
    storage_cost: Money,
    access_fee: Money,
    cost_user: Money,
    cost_csp: Money,
    cost_deploy: Money,
    extra_fee_basis: FeeBasis,
    waive_first_uploader_ef: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    profit: Money,
    storage_fee: Money,
    storage_cost: Money,
    #[serde(default)]
    extra_fee: Money,
    #[serde(default)]
    access_fee: Money,
    #[serde(default)]
    cost_user: Money,
    #[serde(default)]
    cost_csp: Money,
    #[serde(default)]
    cost_deploy: Money,
    #[serde(default)]
    extra_fee_basis: FeeBasis,
    #[serde(default)]
    waive_first_uploader_ef: bool,
}

impl TryFrom<RawParams> for EconParams {
    type Error = EconError;

    fn try_from(r: RawParams) -> Result<Self, EconError> {
        Ok(EconParams::new(r.profit, r.storage_fee, r.storage_cost)?
            .with_extra_fee(r.extra_fee)
            .with_access_fee(r.access_fee)
            .with_costs(r.cost_user, r.cost_csp, r.cost_deploy)
            .with_extra_fee_basis(r.extra_fee_basis)
            .with_waiver(r.waive_first_uploader_ef))
    }
}

impl From<EconParams> for RawParams {
    fn from(p: EconParams) -> Self {
        RawParams {
            profit: p.profit,
            storage_fee: p.storage_fee,
            storage_cost: p.storage_cost,
            extra_fee: p.extra_fee,
            access_fee: p.access_fee,
            cost_user: p.cost_user,
            cost_csp: p.cost_csp,
            cost_deploy: p.cost_deploy,
            extra_fee_basis: p.extra_fee_basis,
            waive_first_uploader_ef: p.waive_first_uploader_ef,
        }
    }
}

impl EconParams {
    /// Validated constructor; rejects `sf <= sc`. Other fields default to zero.
    pub fn new(profit: Money, sf: Money, sc: Money) -> Result<Self, EconError> {
        if sf <= sc {
            return Err(EconError::IrrationalProvider { sf, sc });
        }
        Ok(Self::new_unchecked(profit, sf, sc))
    }

    /// Skips the `sf > sc` check, for analysing markets no rational provider
    /// would enter.
    pub fn new_unchecked(profit: Money, sf: Money, sc: Money) -> Self {
        EconParams {
            profit,
            storage_fee: sf,
            extra_fee: Money::zero(),
            storage_cost: sc,
            access_fee: Money::zero(),
            cost_user: Money::zero(),
            cost_csp: Money::zero(),
            cost_deploy: Money::zero(),
            extra_fee_basis: FeeBasis::PerRequest,
            waive_first_uploader_ef: false,
        }
    }

    /// The experiment settings table: P=2.165, SF=0.165, SC=0.1, AF=0.1.
    pub fn experiment_defaults() -> Self {
        EconParams::new(Money::ratio(2165, 1000), Money::ratio(165, 1000), Money::ratio(1, 10))
            .expect("defaults are valid")
            .with_access_fee(Money::ratio(1, 10))
    }

    pub fn with_extra_fee(mut self, ef: Money) -> Self {
        self.extra_fee = ef;
        self
    }

    pub fn with_access_fee(mut self, af: Money) -> Self {
        self.access_fee = af;
        self
    }

    pub fn with_costs(mut self, user: Money, csp: Money, deploy: Money) -> Self {
        self.cost_user = user;
        self.cost_csp = csp;
        self.cost_deploy = deploy;
        self
    }

    pub fn with_extra_fee_basis(mut self, basis: FeeBasis) -> Self {
        self.extra_fee_basis = basis;
        self
    }

    pub fn with_waiver(mut self, on: bool) -> Self {
        self.waive_first_uploader_ef = on;
        self
    }

    pub fn profit(&self) -> &Money {
        &self.profit
    }
    pub fn storage_fee(&self) -> &Money {
        &self.storage_fee
    }
    pub fn extra_fee(&self) -> &Money {
        &self.extra_fee
    }
    pub fn storage_cost(&self) -> &Money {
        &self.storage_cost
    }
    pub fn access_fee(&self) -> &Money {
        &self.access_fee
    }
    pub fn cost_user(&self) -> &Money {
        &self.cost_user
    }
    pub fn cost_csp(&self) -> &Money {
        &self.cost_csp
    }
    pub fn cost_deploy(&self) -> &Money {
        &self.cost_deploy
    }
    pub fn extra_fee_basis(&self) -> FeeBasis {
        self.extra_fee_basis
    }
    pub fn waiver(&self) -> bool {
        self.waive_first_uploader_ef
    }

    /// Extra fee for one request on a file of `size` units.
    pub fn extra_fee_for(&self, size: &Money) -> Money {
        match self.extra_fee_basis {
            FeeBasis::PerRequest => self.extra_fee.clone(),
            FeeBasis::PerUnit => self.extra_fee.scale(size),
        }
    }

    /// Per-file margin `(SF − SC)·|d|`, signed so unchecked params work too.
    fn margin(&self, size: &Money) -> Amount {
        (self.storage_fee.to_amount() - self.storage_cost.to_amount()) * size.to_amount()
    }
}

/// Linear price `p(|d|) = fee × |d|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricingFunction {
    pub per_unit_fee: Money,
}

impl PricingFunction {
    pub fn price(&self, size: &Money) -> Money {
        self.per_unit_fee.scale(size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopulationState {
    total_holders: u64,
    dedup_rate: u64,
}

impl PopulationState {
    pub fn new(total_holders: u64, dedup_rate: u64) -> Result<Self, EconError> {
        if dedup_rate == 0 {
            return Err(EconError::ZeroDedupRate);
        }
        if dedup_rate > total_holders {
            return Err(EconError::RateAboveHolders { n: dedup_rate, total: total_holders });
        }
        Ok(PopulationState { total_holders, dedup_rate })
    }

    pub fn total_holders(&self) -> u64 {
        self.total_holders
    }

    pub fn dedup_rate(&self) -> u64 {
        self.dedup_rate
    }
}

/// A file's population at one provider together with its size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileLoad {
    pub state: PopulationState,
    pub size: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub u_user_no_dedup: Amount,
    pub u_user_dedup: Amount,
    pub u_csp_no_dedup: Amount,
    pub u_csp_dedup: Amount,
    pub u_csp_inter: Amount,
}

impl UtilityReport {
    /// Single-file report for `state`, with the given access-fee flows.
    pub fn compute(
        p: &EconParams,
        state: PopulationState,
        af_in: &Money,
        af_out: &Money,
    ) -> Result<Self, EconError> {
        let u_csp_dedup = utility_csp_dedup(p, &[state]);
        Ok(UtilityReport {
            u_user_no_dedup: utility_user_no_dedup(p),
            u_user_dedup: utility_user_dedup(p, state.dedup_rate())?,
            u_csp_no_dedup: utility_csp_no_dedup(p, &[(state.total_holders(), Money::from_integer(1))])?,
            u_csp_inter: utility_csp_inter(&u_csp_dedup, af_in, af_out),
            u_csp_dedup,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IcVerdict {
    pub compatible: bool,
    pub margin: Amount,
}

pub fn utility_user_no_dedup(p: &EconParams) -> Amount {
    p.profit.to_amount() - p.storage_fee.to_amount()
}

pub fn utility_user_dedup(p: &EconParams, n: u64) -> Result<Amount, EconError> {
    if n == 0 {
        return Err(EconError::ZeroDedupRate);
    }
    Ok(p.profit.to_amount()
        - p.storage_fee.div_int(n).to_amount()
        - p.extra_fee.to_amount()
        - p.cost_user.to_amount())
}

/// Σ N_d·(SF − SC)·|d| over `(N_d, |d|)` pairs.
pub fn utility_csp_no_dedup(p: &EconParams, holders: &[(u64, Money)]) -> Result<Amount, EconError> {
    let mut total = Amount::zero();
    for (n, size) in holders {
        if *n == 0 {
            return Err(EconError::ZeroDedupRate);
        }
        total += &p.margin(size).mul_int(*n);
    }
    Ok(total)
}

/// Unit-size files; see [`utility_csp_dedup_sized`].
pub fn utility_csp_dedup(p: &EconParams, states: &[PopulationState]) -> Amount {
    let unit = Money::from_integer(1);
    let loads: Vec<FileLoad> = states.iter().map(|s| FileLoad { state: *s, size: unit.clone() }).collect();
    utility_csp_dedup_sized(p, &loads)
}

/// Σ (N−n+1)(SF−SC)|d| + Σ n·EF_d − Σ N·I_c − I_deploy.
pub fn utility_csp_dedup_sized(p: &EconParams, files: &[FileLoad]) -> Amount {
    let mut total = -p.cost_deploy.to_amount();
    for f in files {
        let (big_n, n) = (f.state.total_holders, f.state.dedup_rate);
        total += &p.margin(&f.size).mul_int(big_n - n + 1);
        total += &p.extra_fee_for(&f.size).mul_int(n).to_amount();
        total -= &p.cost_csp.mul_int(big_n).to_amount();
    }
    total
}

pub fn utility_csp_inter(base: &Amount, af_in: &Money, af_out: &Money) -> Amount {
    base.clone() + af_in.to_amount() - af_out.to_amount()
}

pub fn min_extra_fee(p: &EconParams, n: u64, mode: BoundMode) -> Result<Amount, EconError> {
    if n == 0 {
        return Err(EconError::ZeroDedupRate);
    }
    let base = p.margin(&Money::from_integer(1)).mul_int(n - 1).div_int(n);
    Ok(match mode {
        BoundMode::CostFree => base,
        BoundMode::CostAware => base + p.cost_csp.mul_int(n).to_amount() + p.cost_deploy.to_amount(),
    })
}

pub fn max_extra_fee(p: &EconParams, n: u64, mode: BoundMode) -> Result<Amount, EconError> {
    if n == 0 {
        return Err(EconError::ZeroDedupRate);
    }
    let base = p.storage_fee.mul_int(n - 1).div_int(n).to_amount();
    Ok(match mode {
        BoundMode::CostFree => base,
        BoundMode::CostAware => base + p.cost_user.to_amount(),
    })
}

/// `Some((min, max))`, or `None` when the interval is empty.
pub fn extra_fee_interval(p: &EconParams, n: u64, mode: BoundMode) -> Result<Option<(Amount, Amount)>, EconError> {
    let lo = min_extra_fee(p, n, mode)?;
    let hi = max_extra_fee(p, n, mode)?;
    Ok(if lo > hi { None } else { Some((lo, hi)) })
}

/// Compares dedup against no dedup for one file held by exactly `n` users,
/// all of whom opted in.
pub fn ic_check(p: &EconParams, n: u64, role: Role) -> Result<IcVerdict, EconError> {
    let margin = match role {
        Role::User => utility_user_dedup(p, n)? - utility_user_no_dedup(p),
        Role::Csp => {
            let state = PopulationState::new(n, n)?;
            utility_csp_dedup(p, &[state]) - utility_csp_no_dedup(p, &[(n, Money::from_integer(1))])?
        }
    };
    Ok(IcVerdict { compatible: !margin.is_negative(), margin })
}

pub fn ir_check(p: &EconParams, n: u64, role: Role) -> Result<bool, EconError> {
    let u = match role {
        Role::User => utility_user_dedup(p, n)?,
        Role::Csp => utility_csp_dedup(p, &[PopulationState::new(n, n)?]),
    };
    Ok(!u.is_negative())
}

/// Mean utility over `total` users of one file when `n` of them dedup.
///
/// Dedup users pay `SF/n + EF` each; with the waiver the first of them pays
/// no extra fee.
pub fn average_user_utility(p: &EconParams, state: PopulationState) -> Amount {
    let (big_n, n) = (state.total_holders, state.dedup_rate);
    let plain = utility_user_no_dedup(p).mul_int(big_n - n);
    let dedup = utility_user_dedup(p, n).expect("n >= 1").mul_int(n);
    let waived = if p.waive_first_uploader_ef { p.extra_fee.to_amount() } else { Amount::zero() };
    (plain + dedup + waived).div_int(big_n)
}

/// Provider utility for one file, including the waiver when enabled.
pub fn csp_utility_with_waiver(p: &EconParams, state: PopulationState) -> Amount {
    let u = utility_csp_dedup(p, &[state]);
    if p.waive_first_uploader_ef {
        u - p.extra_fee.to_amount()
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(s: &str) -> Money {
        s.parse().unwrap()
    }
    fn a(s: &str) -> Amount {
        s.parse().unwrap()
    }
    fn table() -> EconParams {
        EconParams::experiment_defaults()
    }

    #[test]
    fn user_utilities() {
        assert_eq!(utility_user_no_dedup(&table()), a("2"));
        let even = EconParams::new_unchecked(m("0.3"), m("0.3"), m("0"));
        assert_eq!(utility_user_no_dedup(&even), Amount::zero());
        let p = EconParams::new(m("1"), m("0.3"), m("0.1")).unwrap();
        assert_eq!(utility_user_no_dedup(&p), a("0.7"));

        let p = table().with_extra_fee(m("0.0165"));
        assert_eq!(utility_user_dedup(&p, 10).unwrap(), a("2.132"));
        assert_eq!(utility_user_dedup(&table(), 1).unwrap(), utility_user_no_dedup(&table()));
        assert_eq!(utility_user_dedup(&p, 0), Err(EconError::ZeroDedupRate));
    }

    #[test]
    fn waiver_average_at_full_rate() {
        let p = table().with_extra_fee(m("0.0165")).with_waiver(true);
        let avg = average_user_utility(&p, PopulationState::new(10, 10).unwrap());
        assert_eq!(avg, a("2.13365"));
        assert!((avg - a("2.133")).abs() <= a("0.002"));
    }

    #[test]
    fn csp_utilities() {
        let one = Money::from_integer(1);
        let p = table();
        assert_eq!(utility_csp_no_dedup(&p, &[(10, one.clone())]).unwrap(), a("0.65"));
        assert_eq!(utility_csp_no_dedup(&p, &[]).unwrap(), Amount::zero());
        assert_eq!(
            utility_csp_no_dedup(&p, &[(1, one.clone()), (1, one.clone())]).unwrap(),
            a("0.065").mul_int(2)
        );

        let p = table().with_extra_fee(m("0.0165"));
        assert_eq!(utility_csp_dedup(&p, &[PopulationState::new(10, 1).unwrap()]), a("0.6665"));
        assert_eq!(utility_csp_dedup(&p, &[PopulationState::new(20, 2).unwrap()]), a("1.268"));
        assert_eq!(utility_csp_dedup(&table(), &[PopulationState::new(1, 1).unwrap()]), a("0.065"));
    }

    #[test]
    fn sized_files_scale_margin_and_per_unit_extra_fee() {
        let p = table().with_extra_fee(m("0.01")).with_extra_fee_basis(FeeBasis::PerUnit);
        let load = FileLoad { state: PopulationState::new(3, 3).unwrap(), size: m("2") };
        // (3−3+1)·0.065·2 + 3·0.01·2
        assert_eq!(utility_csp_dedup_sized(&p, &[load]), a("0.19"));
    }

    #[test]
    fn inter_utility() {
        assert_eq!(utility_csp_inter(&a("1"), &m("0.3"), &m("0.1")), a("1.2"));
        assert_eq!(utility_csp_inter(&a("-4.5"), &m("0.7"), &m("0.7")), a("-4.5"));
    }

    #[test]
    fn construction_rejects_irrational_provider() {
        assert!(EconParams::new(m("1"), m("0.165"), m("0.2")).is_err());
        assert!(EconParams::new(m("1"), m("0.1"), m("0.1")).is_err());
        assert!(PopulationState::new(3, 0).is_err());
        assert!(PopulationState::new(3, 4).is_err());
    }

    #[test]
    fn bound_values() {
        let p = table();
        assert_eq!(min_extra_fee(&p, 1, BoundMode::CostFree).unwrap(), Amount::zero());
        assert_eq!(max_extra_fee(&p, 1, BoundMode::CostFree).unwrap(), Amount::zero());
        assert_eq!(min_extra_fee(&p, 10, BoundMode::CostFree).unwrap(), a("0.0585"));
        assert_eq!(max_extra_fee(&p, 10, BoundMode::CostFree).unwrap(), a("0.1485"));
        assert_eq!(
            extra_fee_interval(&p, 2, BoundMode::CostFree).unwrap(),
            Some((a("0.0325"), a("0.0825")))
        );
    }

    #[test]
    fn cost_aware_interval_can_be_empty() {
        let p = table().with_costs(m("0"), m("0.001"), m("0.5"));
        assert!(extra_fee_interval(&p, 2, BoundMode::CostAware).unwrap().is_none());
        assert!(extra_fee_interval(&p, 2, BoundMode::CostFree).unwrap().is_some());
        let p = table().with_costs(m("0.01"), m("0.002"), m("0"));
        assert_eq!(min_extra_fee(&p, 4, BoundMode::CostAware).unwrap(), a("0.05675"));
        assert_eq!(max_extra_fee(&p, 4, BoundMode::CostAware).unwrap(), a("0.13375"));
    }

    // Smallest grid EF at which the provider prefers dedup, found by direct
    // utility comparison rather than the closed form.
    fn grid_min_ef(p: &EconParams, n: u64, step: &Money, steps: u64) -> Option<Money> {
        let state = PopulationState::new(n, n).unwrap();
        let plain = utility_csp_no_dedup(p, &[(n, Money::from_integer(1))]).unwrap();
        (0..=steps)
            .map(|i| step.mul_int(i))
            .find(|ef| utility_csp_dedup(&p.clone().with_extra_fee(ef.clone()), &[state]) >= plain)
    }

    fn grid_max_ef(p: &EconParams, n: u64, step: &Money, steps: u64) -> Option<Money> {
        let plain = utility_user_no_dedup(p);
        (0..=steps)
            .rev()
            .map(|i| step.mul_int(i))
            .find(|ef| utility_user_dedup(&p.clone().with_extra_fee(ef.clone()), n).unwrap() >= plain)
    }

    #[test]
    fn grid_oracles_agree_with_closed_forms() {
        let p = table();
        let step = m("0.00001");
        assert_eq!(grid_min_ef(&p, 2, &step, 16_500), Some(m("0.0325")));
        assert_eq!(grid_min_ef(&p, 10, &step, 16_500), Some(m("0.0585")));
        assert_eq!(grid_max_ef(&p, 10, &step, 16_500), Some(m("0.1485")));
        assert_eq!(grid_max_ef(&p, 2, &step, 16_500), Some(m("0.0825")));
    }

    #[test]
    fn sign_flips_at_bounds_on_a_ten_thousand_point_grid() {
        let p = table();
        let step = p.storage_fee().div_int(10_000);
        for n in 2..=50u64 {
            let lo = min_extra_fee(&p, n, BoundMode::CostFree).unwrap();
            let hi = max_extra_fee(&p, n, BoundMode::CostFree).unwrap();
            let first_csp = grid_min_ef(&p, n, &step, 10_000).unwrap().to_amount();
            let last_user = grid_max_ef(&p, n, &step, 10_000).unwrap().to_amount();
            assert!(first_csp >= lo && first_csp.clone() - step.to_amount() < lo, "n={n}");
            assert!(last_user <= hi && last_user.clone() + step.to_amount() > hi, "n={n}");
        }
    }

    #[test]
    fn max_bound_increases_towards_sf() {
        let p = table();
        let mut prev = max_extra_fee(&p, 2, BoundMode::CostFree).unwrap();
        for n in 3..=10_000u64 {
            let cur = max_extra_fee(&p, n, BoundMode::CostFree).unwrap();
            assert!(cur > prev && cur < p.storage_fee().to_amount());
            prev = cur;
        }
        assert!(p.storage_fee().to_amount() - prev < a("0.00002"));
    }

    #[test]
    fn ic_and_ir() {
        let p = table().with_extra_fee(m("0.0165"));
        assert!(!ic_check(&p, 1, Role::User).unwrap().compatible);
        assert_eq!(ic_check(&p, 1, Role::User).unwrap().margin, a("-0.0165"));

        let lo = min_extra_fee(&table(), 10, BoundMode::CostFree).unwrap();
        let below = (lo.clone() - a("0.000001")).to_money().unwrap();
        assert!(!ic_check(&table().with_extra_fee(below), 10, Role::Csp).unwrap().compatible);
        let inside = table().with_extra_fee(m("0.1"));
        assert!(ic_check(&inside, 10, Role::Csp).unwrap().compatible);
        assert!(ic_check(&inside, 10, Role::User).unwrap().compatible);

        let broke = EconParams::new(m("0"), m("0.165"), m("0.1")).unwrap();
        assert!(!ir_check(&broke, 3, Role::User).unwrap());
        let loss = EconParams::new_unchecked(m("1"), m("0.1"), m("0.2"));
        assert!(!ir_check(&loss, 1, Role::Csp).unwrap());
    }

    #[test]
    fn experiment_settings_are_individually_rational() {
        for pct in [10u64, 20, 30, 40, 50] {
            let ef = table().storage_fee().mul_int(pct).div_int(100);
            let p = table().with_extra_fee(ef);
            for n in 1..=100 {
                assert!(ir_check(&p, n, Role::User).unwrap());
                assert!(ir_check(&p, n, Role::Csp).unwrap());
            }
        }
    }

    #[test]
    fn recomputation_is_identical() {
        let p = table().with_extra_fee(m("0.033"));
        let s = PopulationState::new(40, 20).unwrap();
        let r1 = UtilityReport::compute(&p, s, &m("0.3"), &m("0.1")).unwrap();
        let r2 = UtilityReport::compute(&p, s, &m("0.3"), &m("0.1")).unwrap();
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
        assert_eq!(r1.u_csp_inter, r1.u_csp_dedup.clone() + a("0.2"));
    }

    #[test]
    fn params_roundtrip_through_toml() {
        let p = table().with_extra_fee(m("0.0165")).with_waiver(true);
        let text = toml::to_string(&p).unwrap();
        let back: EconParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
        let bad = "profit = 1\nstorage_fee = 0.1\nstorage_cost = 0.2\n";
        assert!(toml::from_str::<EconParams>(bad).is_err());
    }

    fn money_strategy(max_milli: u64) -> impl Strategy<Value = Money> {
        (0..=max_milli).prop_map(|v| Money::ratio(v, 1000))
    }

    proptest! {
        #[test]
        fn min_bound_strictly_below_max(sc in money_strategy(500), extra in 1u64..500, n in 2u64..200) {
            let sf = sc.clone() + Money::ratio(extra, 1000);
            let p = EconParams::new(Money::from_integer(3), sf, sc).unwrap();
            let lo = min_extra_fee(&p, n, BoundMode::CostFree).unwrap();
            let hi = max_extra_fee(&p, n, BoundMode::CostFree).unwrap();
            if p.storage_cost().is_zero() {
                prop_assert!(lo <= hi);
            } else {
                prop_assert!(lo < hi);
            }
        }

        #[test]
        fn user_utility_monotone(n in 1u64..1000, ef in money_strategy(200), bump in 1u64..100) {
            let p = table().with_extra_fee(ef.clone());
            let u_n = utility_user_dedup(&p, n).unwrap();
            prop_assert!(utility_user_dedup(&p, n + 1).unwrap() > u_n);
            let pricier = table().with_extra_fee(ef + Money::ratio(bump, 1000));
            prop_assert!(utility_user_dedup(&pricier, n).unwrap() < u_n);
        }

        #[test]
        fn inside_interval_is_compatible_for_both(n in 1u64..300, t in 0u64..=1000) {
            let p = table();
            let (lo, hi) = extra_fee_interval(&p, n, BoundMode::CostFree).unwrap().unwrap();
            let ef = lo.clone() + (hi - lo).mul_int(t).div_int(1000);
            let p = p.with_extra_fee(ef.to_money().unwrap());
            prop_assert!(ic_check(&p, n, Role::User).unwrap().compatible);
            prop_assert!(ic_check(&p, n, Role::Csp).unwrap().compatible);
        }
    }
}
