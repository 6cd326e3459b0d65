//! Joined view of requests that span two dedup contracts.

use serde::Serialize;

use super::dedu::{RequestState, Route};
use crate::crypto::Tag;
use crate::ledger::{Address, Ledger};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossStatus {
    Pending,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossRequest {
    pub origin: Address,
    pub remote: Address,
    pub user: Address,
    pub tag: Tag,
    pub origin_req: u64,
    pub remote_req: u64,
    pub pay: Money,
    pub access_fee: Money,
    pub origin_state: RequestState,
    pub remote_state: RequestState,
    pub status: CrossStatus,
}

impl CrossRequest {
    /// Both sides hold the same state.
    pub fn synchronized(&self) -> bool {
        self.origin_state == self.remote_state
    }
}

/// Collects every mirrored request on the ledger, paired with its served side.
pub fn cross_requests(ledger: &Ledger) -> Vec<CrossRequest> {
    let mut out = Vec::new();
    for (addr, state) in ledger.contracts() {
        let Some(origin) = state.as_dedu() else { continue };
        for (tag, req, rec) in origin.records() {
            let Route::Remote { contract, req: rreq, .. } = rec.route else { continue };
            let Some(served) = ledger.contract(contract).and_then(|c| c.as_dedu()).and_then(|d| d.record(&tag, rreq))
            else {
                continue;
            };
            let status = if rec.state.is_pending() || served.state.is_pending() {
                CrossStatus::Pending
            } else {
                CrossStatus::Terminated
            };
            out.push(CrossRequest {
                origin: addr,
                remote: contract,
                user: rec.user,
                tag,
                origin_req: req,
                remote_req: rreq,
                pay: rec.pay.clone(),
                access_fee: origin.settings().access_fee.clone(),
                origin_state: rec.state,
                remote_state: served.state,
                status,
            });
        }
    }
    out
}
