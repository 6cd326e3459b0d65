//! Declarative scenarios: a market, an actor roster, a schedule of actions
//! and the expected end state. Scripts are TOML; traces are JSON lines.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::actors::{fairness_predicate, BehaviorPolicy, FairnessReport, Market, MarketConfig, StoreOutcome};
use crate::crypto::{ce_pipeline, FileObject};
use crate::ledger::{Address, Trace};
use crate::money::{Amount, Money};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CspSetup {
    #[serde(default)]
    pub policy: BehaviorPolicy,
    #[serde(default = "one")]
    pub funds: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSetup {
    #[serde(default)]
    pub policy: BehaviorPolicy,
    #[serde(default)]
    pub home: usize,
    #[serde(default = "one")]
    pub funds: Money,
}

fn one() -> Money {
    Money::from_integer(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// The user stores a file whose plaintext is `file`.
    Store { user: usize, file: String },
    Delink { user: usize, file: String },
    Advance { steps: u64 },
}

/// An account named `user-<i>` or `csp-<i>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaExpect {
    pub account: String,
    pub delta: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectExpect {
    pub csp: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default = "yes")]
    pub fair: bool,
    /// One per `store` step, in order.
    #[serde(default)]
    pub outcomes: Vec<StoreOutcome>,
    /// Net balance change of an account from the end of setup.
    #[serde(default)]
    pub deltas: Vec<DeltaExpect>,
    #[serde(default)]
    pub objects: Vec<ObjectExpect>,
}

impl Default for Expectations {
    fn default() -> Self {
        Expectations { fair: true, outcomes: Vec::new(), deltas: Vec::new(), objects: Vec::new() }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Case-tree leaf the scenario exercises.
    #[serde(default)]
    pub case: String,
    #[serde(default)]
    pub market: MarketConfig,
    #[serde(default, rename = "csp")]
    pub csps: Vec<CspSetup>,
    #[serde(default, rename = "user")]
    pub users: Vec<UserSetup>,
    #[serde(default, rename = "step")]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub expect: Expectations,
}

impl ScenarioScript {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse { what: "scenario".into(), reason: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Parse { reason, .. } => HarnessError::Parse { what: path.display().to_string(), reason },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scripts serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub conserved: bool,
    pub fairness: Option<FairnessReport>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trace: Trace,
    pub verdict: Verdict,
}

fn account(market: &Market, name: &str) -> Option<Address> {
    let (kind, idx) = name.split_once('-')?;
    let idx: usize = idx.parse().ok()?;
    match kind {
        "user" => market.users.get(idx).map(|u| u.address),
        "csp" => market.csps.get(idx).map(|c| c.address),
        _ => None,
    }
}

/// Runs a script on a fresh ledger and checks fairness, conservation and
/// the script's own expectations.
pub fn run_scenario(script: &ScenarioScript) -> Result<ScenarioRun, HarnessError> {
    let mut market = Market::new(script.market.clone())?;
    for c in &script.csps {
        market.add_csp(c.funds.clone(), c.policy)?;
    }
    for u in &script.users {
        market.add_user(u.funds.clone(), u.policy, u.home)?;
    }
    let baseline: Vec<(String, Money)> = script
        .expect
        .deltas
        .iter()
        .map(|d| {
            let a = account(&market, &d.account).ok_or_else(|| HarnessError::Script(format!("unknown account {}", d.account)))?;
            Ok((d.account.clone(), market.ledger.balance(a)))
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut failures = Vec::new();
    let mut stores = 0usize;
    for (i, step) in script.steps.iter().enumerate() {
        let mark = market.trace().entries().len();
        match step {
            Step::Store { user, file } => {
                let r = market.user_store(*user, &FileObject::new(file.as_bytes().to_vec()))?;
                if let Some(want) = script.expect.outcomes.get(stores) {
                    if *want != r.outcome {
                        failures.push(format!(
                            "step {i}: expected {want:?}, got {:?} (diverges at trace entry {mark})",
                            r.outcome
                        ));
                    }
                }
                stores += 1;
            }
            Step::Delink { user, file } => {
                let tag = ce_pipeline(&FileObject::new(file.as_bytes().to_vec()))?.2;
                let r = market.user_delink(*user, &tag)?;
                if !r.accepted() {
                    failures.push(format!("step {i}: delink rejected at trace entry {mark}: {:?}", r.outcome));
                }
            }
            Step::Advance { steps } => {
                market.ledger.advance(*steps);
                market.tick_all();
            }
        }
    }
    if stores != script.expect.outcomes.len() && !script.expect.outcomes.is_empty() {
        failures.push(format!("{} outcomes expected, {stores} stores ran", script.expect.outcomes.len()));
    }

    let conserved = &market.ledger.total_supply() == market.ledger.minted();
    if !conserved {
        failures.push("total supply differs from minted".into());
    }
    for (c, addr) in market.ledger.contracts().filter_map(|(a, c)| c.as_dedu().map(|d| (d, a))) {
        if market.ledger.balance(addr) != c.expected_escrow() {
            failures.push(format!("escrow of {addr} does not match its records"));
        }
    }
    let fairness = match fairness_predicate(market.trace()) {
        Ok(report) => {
            if report.holds() != script.expect.fair {
                let first = report.violations().next().map(|v| format!("{:?}", v.key)).unwrap_or_default();
                failures.push(format!("fairness {} but expected {} {first}", report.holds(), script.expect.fair));
            }
            Some(report)
        }
        Err(e) => {
            failures.push(e.to_string());
            None
        }
    };
    for ((name, before), want) in baseline.iter().zip(&script.expect.deltas) {
        let a = account(&market, name).expect("resolved above");
        let got = market.ledger.balance(a).to_amount() - before.to_amount();
        if got != want.delta {
            failures.push(format!("{name}: balance changed by {got}, expected {}", want.delta));
        }
    }
    for o in &script.expect.objects {
        let got = market.csps.get(o.csp).map(|c| c.objects.len());
        if got != Some(o.count) {
            failures.push(format!("csp-{} stores {got:?} objects, expected {}", o.csp, o.count));
        }
    }
    let verdict = Verdict { name: script.name.clone(), passed: failures.is_empty(), conserved, fairness, failures };
    Ok(ScenarioRun { trace: market.ledger.trace().clone(), verdict })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub identical: bool,
    /// 1-based line of the first difference.
    pub first_mismatch: Option<usize>,
}

/// Re-runs the script and compares the trace with a recorded one.
pub fn replay(script: &ScenarioScript, recorded: &str) -> Result<ReplayReport, HarnessError> {
    let fresh = run_scenario(script)?.trace.to_jsonl();
    if fresh == recorded {
        return Ok(ReplayReport { identical: true, first_mismatch: None });
    }
    let mut a = fresh.lines();
    let mut b = recorded.lines();
    let mut line = 1;
    loop {
        match (a.next(), b.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (None, None) => break,
            _ => return Ok(ReplayReport { identical: false, first_mismatch: Some(line) }),
        }
    }
    // only trailing newline differences remain
    Ok(ReplayReport { identical: false, first_mismatch: Some(line) })
}

/// Fairness suite shipped with the crate: `(file name, TOML)`.
pub const BUNDLED: [(&str, &str); 10] = [
    ("honest-file.toml", include_str!("../../scenarios/honest-file.toml")),
    ("honest-pop.toml", include_str!("../../scenarios/honest-pop.toml")),
    ("abort-after-quote.toml", include_str!("../../scenarios/abort-after-quote.toml")),
    ("wrong-file.toml", include_str!("../../scenarios/wrong-file.toml")),
    ("wrong-pop.toml", include_str!("../../scenarios/wrong-pop.toml")),
    ("send-nothing.toml", include_str!("../../scenarios/send-nothing.toml")),
    ("no-csp-conf.toml", include_str!("../../scenarios/no-csp-conf.toml")),
    ("no-link.toml", include_str!("../../scenarios/no-link.toml")),
    ("no-usr-conf.toml", include_str!("../../scenarios/no-usr-conf.toml")),
    ("no-usr-conf-after-link.toml", include_str!("../../scenarios/no-usr-conf-after-link.toml")),
];

/// Scenarios that document a known weakness and are expected to fail.
pub const KNOWN_LIMITATIONS: [(&str, &str); 1] =
    [("disable-link-after-fee.toml", include_str!("../../scenarios/known-limitations/disable-link-after-fee.toml"))];

pub fn bundled() -> Result<Vec<ScenarioScript>, HarnessError> {
    BUNDLED.iter().map(|(_, text)| ScenarioScript::from_toml(text)).collect()
}
