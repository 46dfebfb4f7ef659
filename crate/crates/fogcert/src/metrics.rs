//! Run accounting and the independent certification oracle.
//!
//! Every simulator feeds a [`Ledger`]: publish/send/queue/lose/deliver
//! events update counters whose conservation identities are checked
//! continuously, one audit row is kept per counted notification, and every
//! verification decision is re-derived from a raw state snapshot by
//! [`oracle_verify`] so the simulators can be cross-checked decision by
//! decision. Reports aggregate across seeds by plain arithmetic mean.

use crate::grid::CellId;
use crate::model::{GroundTruth, ProducerId, SimTime};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate reports from different configs: {0}")]
    ConfigMismatch(String),
    #[error("oracle snapshot incomplete: {0}")]
    SnapshotIncomplete(String),
    #[error("ledger conservation violated: {0}")]
    Conservation(String),
}

/// How a claim changed between publication and send (collaborative runs).
/// `RemainFalse` covers both unchanged false claims and claims substituted
/// by a different, still incorrect value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MutationClass {
    RemainTrue,
    FalseToTrue,
    RemainFalse,
    TrueToFalse,
}

/// Why a true-claim notification was delivered uncertified (fixed brokers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UncertifiedTrueCause {
    /// Delivered live to a neighboring cell's broker from an overlap edge.
    OverlapEdge,
    /// Flushed from the local queue to a broker of a different cell.
    QueueFlush,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum AuditOutcome {
    Delivered {
        certified: bool,
        broker: u32,
        cause: Option<UncertifiedTrueCause>,
    },
    Lost,
    /// Still sitting in the producer's local queue when the run ended.
    Queued,
}

/// One row per counted notification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRow {
    pub producer: ProducerId,
    pub seq: u64,
    pub published_at: SimTime,
    pub true_cell: CellId,
    pub claim_at_publish: CellId,
    pub claim_at_send: CellId,
    pub was_queued: bool,
    pub outcome: AuditOutcome,
}

impl AuditRow {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit row serialization cannot fail")
    }
}

/// Per-run counters in the report table layout. Counts are exact integers
/// for single runs and arithmetic means after aggregation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub arch: String,
    pub strategy: String,
    pub pf: f64,
    pub seed: String,
    pub published: f64,
    pub published_true: f64,
    pub published_false: f64,
    pub sent_true: f64,
    pub sent_false: f64,
    pub queued: f64,
    pub lost: f64,
    pub delivered: f64,
    pub dt_cert: f64,
    pub dt_uncert: f64,
    pub df_cert: f64,
    pub df_uncert: f64,
    pub remain_true: f64,
    pub false_to_true: f64,
    pub remain_false: f64,
    pub true_to_false: f64,
}

pub const CSV_HEADER: &str = "arch,strategy,pf,seed,published,published_true,published_false,\
sent_true,sent_false,queued,lost,delivered,dt_cert,dt_uncert,df_cert,df_uncert,\
remain_true,false_to_true,remain_false,true_to_false";

fn pct(part: f64, total: f64) -> f64 {
    if total == 0.0 {
        0.0
    } else {
        part / total * 100.0
    }
}

impl RunReport {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.arch,
            self.strategy,
            self.pf,
            self.seed,
            self.published,
            self.published_true,
            self.published_false,
            self.sent_true,
            self.sent_false,
            self.queued,
            self.lost,
            self.delivered,
            self.dt_cert,
            self.dt_uncert,
            self.df_cert,
            self.df_uncert,
            self.remain_true,
            self.false_to_true,
            self.remain_false,
            self.true_to_false
        )
    }

    /// Certified / uncertified rates among delivered notifications, as
    /// percentages recomputed from the raw counts.
    pub fn dt_cert_pct(&self) -> f64 {
        pct(self.dt_cert, self.dt_cert + self.dt_uncert)
    }

    pub fn df_cert_pct(&self) -> f64 {
        pct(self.df_cert, self.df_cert + self.df_uncert)
    }
}

/// Render reports as CSV with the fixed column order.
pub fn to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Render reports as a JSON array (field order fixed by the struct).
pub fn to_json(reports: &[RunReport]) -> String {
    serde_json::to_string_pretty(reports).expect("report serialization cannot fail")
}

/// Integer counts print plain; fractional seed means print with one
/// decimal, the way aggregate results are quoted.
fn fmt_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

/// Human-readable report: notification flow, then delivered-true and
/// delivered-false certification splits, then claim mutations for
/// collaborative runs.
pub fn to_table(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14}{:<10}{:<6}{:<6}{:>10}{:>10}{:>10}{:>11}{:>11}{:>8}{:>8}{:>11}\n",
        "arch", "strategy", "pf", "seed", "published", "pub_true", "pub_false", "sent_true",
        "sent_false", "queued", "lost", "delivered"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<14}{:<10}{:<6}{:<6}{:>10}{:>10}{:>10}{:>11}{:>11}{:>8}{:>8}{:>11}\n",
            r.arch,
            r.strategy,
            r.pf,
            r.seed,
            fmt_count(r.published),
            fmt_count(r.published_true),
            fmt_count(r.published_false),
            fmt_count(r.sent_true),
            fmt_count(r.sent_false),
            fmt_count(r.queued),
            fmt_count(r.lost),
            fmt_count(r.delivered)
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<14}{:<10}{:<6}{:<6}{:>10}{:>9}{:>10}{:>9}{:>10}{:>9}{:>10}{:>9}\n",
        "arch", "strategy", "pf", "seed", "dt_cert", "%", "dt_uncert", "%", "df_cert", "%",
        "df_uncert", "%"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<14}{:<10}{:<6}{:<6}{:>10}{:>9.2}{:>10}{:>9.2}{:>10}{:>9.2}{:>10}{:>9.2}\n",
            r.arch,
            r.strategy,
            r.pf,
            r.seed,
            fmt_count(r.dt_cert),
            r.dt_cert_pct(),
            fmt_count(r.dt_uncert),
            pct(r.dt_uncert, r.dt_cert + r.dt_uncert),
            fmt_count(r.df_cert),
            r.df_cert_pct(),
            fmt_count(r.df_uncert),
            pct(r.df_uncert, r.df_cert + r.df_uncert),
        ));
    }
    if reports.iter().any(|r| r.arch == "collaborative") {
        out.push('\n');
        out.push_str(&format!(
            "{:<14}{:<6}{:<6}{:>12}{:>14}{:>13}{:>14}{:>16}{:>17}\n",
            "arch", "pf", "seed", "remain_true", "false_to_true", "remain_false",
            "true_to_false", "uncert_rem_true", "uncert_rem_false"
        ));
        for r in reports.iter().filter(|r| r.arch == "collaborative") {
            out.push_str(&format!(
                "{:<14}{:<6}{:<6}{:>12}{:>14}{:>13}{:>14}{:>16}{:>17}\n",
                r.arch,
                r.pf,
                r.seed,
                fmt_count(r.remain_true),
                fmt_count(r.false_to_true),
                fmt_count(r.remain_false),
                fmt_count(r.true_to_false),
                fmt_count(r.dt_uncert),
                fmt_count(r.df_uncert)
            ));
        }
    }
    out
}

/// Arithmetic mean of reports from identical configs (differing in seed).
pub fn aggregate(reports: &[RunReport]) -> Result<RunReport, MetricsError> {
    let first = reports
        .first()
        .ok_or_else(|| MetricsError::ConfigMismatch("no reports to aggregate".into()))?;
    for r in reports {
        if r.arch != first.arch || r.strategy != first.strategy || r.pf != first.pf {
            return Err(MetricsError::ConfigMismatch(format!(
                "{}/{}/pf={} vs {}/{}/pf={}",
                first.arch, first.strategy, first.pf, r.arch, r.strategy, r.pf
            )));
        }
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(RunReport {
        arch: first.arch.clone(),
        strategy: first.strategy.clone(),
        pf: first.pf,
        seed: if reports.len() == 1 { first.seed.clone() } else { "avg".into() },
        published: mean(|r| r.published),
        published_true: mean(|r| r.published_true),
        published_false: mean(|r| r.published_false),
        sent_true: mean(|r| r.sent_true),
        sent_false: mean(|r| r.sent_false),
        queued: mean(|r| r.queued),
        lost: mean(|r| r.lost),
        delivered: mean(|r| r.delivered),
        dt_cert: mean(|r| r.dt_cert),
        dt_uncert: mean(|r| r.dt_uncert),
        df_cert: mean(|r| r.df_cert),
        df_uncert: mean(|r| r.df_uncert),
        remain_true: mean(|r| r.remain_true),
        false_to_true: mean(|r| r.false_to_true),
        remain_false: mean(|r| r.remain_false),
        true_to_false: mean(|r| r.true_to_false),
    })
}

/// Raw state captured at the instant a verification decision was made,
/// sufficient to re-derive the verdict without consulting simulator logic.
#[derive(Debug, Clone, PartialEq)]
pub enum VerdictSnapshot {
    Fixed {
        claim: CellId,
        broker_cell: CellId,
    },
    AssignedCls {
        claim: CellId,
        broker_cell: CellId,
        sender: ProducerId,
        neighbor_list: Vec<ProducerId>,
        registered: Vec<ProducerId>,
        adjacent_registered: Vec<ProducerId>,
    },
    AssignedNls {
        claim: CellId,
        broker_cell: CellId,
        sender: ProducerId,
        neighbor_list: Vec<ProducerId>,
        registered: Vec<ProducerId>,
    },
    Collab {
        flag: bool,
        sent_claim: CellId,
        tally: Vec<(CellId, u32)>,
    },
}

/// Recompute the expected certification verdict from a snapshot by brute
/// force. Deliberately written with plain scans rather than the simulators'
/// set machinery so the two paths stay independent.
pub fn oracle_verify(snapshot: &VerdictSnapshot) -> Result<bool, MetricsError> {
    match snapshot {
        VerdictSnapshot::Fixed { claim, broker_cell } => Ok(claim == broker_cell),
        VerdictSnapshot::AssignedCls {
            claim,
            broker_cell,
            sender,
            neighbor_list,
            registered,
            adjacent_registered,
        } => {
            if claim != broker_cell {
                return Ok(false);
            }
            // every registered producer (other than the sender) must be a
            // reported neighbor
            for b in registered {
                if b != sender && !neighbor_list.contains(b) {
                    return Ok(false);
                }
            }
            // no reported neighbor may be unknown to this broker and all
            // adjacent brokers
            for b in neighbor_list {
                let known = (registered.contains(b) && b != sender)
                    || adjacent_registered.contains(b);
                if !known {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        VerdictSnapshot::AssignedNls {
            claim,
            broker_cell,
            sender,
            neighbor_list,
            registered,
        } => {
            if claim != broker_cell {
                return Ok(false);
            }
            for b in neighbor_list {
                if b != sender && registered.contains(b) {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        VerdictSnapshot::Collab { flag, sent_claim, tally } => {
            if tally.is_empty() {
                return Err(MetricsError::SnapshotIncomplete(
                    "poll tally must include at least the local vote".into(),
                ));
            }
            let total: u32 = tally.iter().map(|(_, n)| n).sum();
            let max = tally.iter().map(|(_, n)| *n).max().unwrap();
            let winners: Vec<CellId> =
                tally.iter().filter(|(_, n)| *n == max).map(|(c, _)| *c).collect();
            let decided = total > 1 && winners.len() == 1;
            if decided && winners[0] != *sent_claim {
                // a decided poll must have sent exactly the winning cell
                return Ok(!*flag);
            }
            let _ = flag;
            Ok(decided)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleStats {
    pub checks: u64,
    pub disagreements: u64,
    pub first_disagreement: Option<String>,
}

/// The run ledger: counters, ground truth, audit rows and oracle tallies.
#[derive(Debug)]
pub struct Ledger {
    arch: String,
    strategy: String,
    pf: f64,
    seed: u64,
    published_true: u64,
    published_false: u64,
    sent_true: u64,
    sent_false: u64,
    queued: u64,
    lost: u64,
    dt_cert: u64,
    dt_uncert: u64,
    df_cert: u64,
    df_uncert: u64,
    remain_true: u64,
    false_to_true: u64,
    remain_false: u64,
    true_to_false: u64,
    in_flight: u64,
    poll_pending: u64,
    audits: Vec<AuditRow>,
    truths: BTreeMap<(ProducerId, u64), GroundTruth>,
    oracle: OracleStats,
}

impl Ledger {
    pub fn new(arch: &str, strategy: &str, pf: f64, seed: u64) -> Self {
        Self {
            arch: arch.into(),
            strategy: strategy.into(),
            pf,
            seed,
            published_true: 0,
            published_false: 0,
            sent_true: 0,
            sent_false: 0,
            queued: 0,
            lost: 0,
            dt_cert: 0,
            dt_uncert: 0,
            df_cert: 0,
            df_uncert: 0,
            remain_true: 0,
            false_to_true: 0,
            remain_false: 0,
            true_to_false: 0,
            in_flight: 0,
            poll_pending: 0,
            audits: Vec::new(),
            truths: BTreeMap::new(),
            oracle: OracleStats::default(),
        }
    }

    /// Ground truth is recorded for every publication, counted or not, and
    /// is immutable once written.
    pub fn record_truth(&mut self, producer: ProducerId, seq: u64, truth: GroundTruth) {
        let prev = self.truths.insert((producer, seq), truth);
        debug_assert!(prev.is_none(), "ground truth rewritten for {producer}/{seq}");
    }

    pub fn truth(&self, producer: ProducerId, seq: u64) -> Option<&GroundTruth> {
        self.truths.get(&(producer, seq))
    }

    /// A publication was created. For architectures whose claims do not
    /// mutate, this also books the sent column; collaborative runs book
    /// sends separately once the poll closes.
    pub fn publish(&mut self, counted: bool, claim_true: bool, sent_immediately: bool) {
        if !counted {
            return;
        }
        if claim_true {
            self.published_true += 1;
        } else {
            self.published_false += 1;
        }
        if sent_immediately {
            if claim_true {
                self.sent_true += 1;
            } else {
                self.sent_false += 1;
            }
        } else {
            self.poll_pending += 1;
        }
        self.in_flight += 1;
        self.debug_conservation();
    }

    /// The poll closed and the (possibly substituted) claim goes out.
    pub fn sent_after_poll(&mut self, counted: bool, sent_claim_true: bool) {
        if !counted {
            return;
        }
        debug_assert!(self.poll_pending > 0);
        self.poll_pending -= 1;
        if sent_claim_true {
            self.sent_true += 1;
        } else {
            self.sent_false += 1;
        }
        self.debug_conservation();
    }

    pub fn enqueue(&mut self, counted: bool) {
        if !counted {
            return;
        }
        debug_assert!(self.in_flight > 0);
        self.in_flight -= 1;
        self.queued += 1;
        self.debug_conservation();
    }

    /// A queued notification leaves its queue for transmission.
    pub fn dequeue(&mut self, counted: bool) {
        if !counted {
            return;
        }
        debug_assert!(self.queued > 0);
        self.queued -= 1;
        self.in_flight += 1;
        self.debug_conservation();
    }

    pub fn lose(&mut self, counted: bool, audit: AuditRow) {
        if !counted {
            return;
        }
        debug_assert!(matches!(audit.outcome, AuditOutcome::Lost));
        debug_assert!(self.in_flight > 0);
        self.in_flight -= 1;
        self.lost += 1;
        self.audits.push(audit);
        self.debug_conservation();
    }

    pub fn deliver(
        &mut self,
        counted: bool,
        sent_claim_true: bool,
        certified: bool,
        mutation: Option<MutationClass>,
        audit: AuditRow,
    ) {
        if !counted {
            return;
        }
        debug_assert!(matches!(audit.outcome, AuditOutcome::Delivered { .. }));
        debug_assert!(self.in_flight > 0);
        self.in_flight -= 1;
        match (sent_claim_true, certified) {
            (true, true) => self.dt_cert += 1,
            (true, false) => self.dt_uncert += 1,
            (false, true) => self.df_cert += 1,
            (false, false) => self.df_uncert += 1,
        }
        if let Some(m) = mutation {
            debug_assert!(certified, "mutation classes only apply to certified deliveries");
            match m {
                MutationClass::RemainTrue => self.remain_true += 1,
                MutationClass::FalseToTrue => self.false_to_true += 1,
                MutationClass::RemainFalse => self.remain_false += 1,
                MutationClass::TrueToFalse => self.true_to_false += 1,
            }
        }
        self.audits.push(audit);
        self.debug_conservation();
    }

    /// Audit a notification still queued when the run ended. The queued
    /// gauge already counts it.
    pub fn note_end_queued(&mut self, audit: AuditRow) {
        debug_assert!(matches!(audit.outcome, AuditOutcome::Queued));
        self.audits.push(audit);
    }

    /// Cross-check an architecture verdict against the oracle.
    pub fn oracle_check(&mut self, snapshot: &VerdictSnapshot, arch_verdict: bool) {
        self.oracle.checks += 1;
        let expected = match oracle_verify(snapshot) {
            Ok(v) => v,
            Err(e) => {
                self.oracle.disagreements += 1;
                if self.oracle.first_disagreement.is_none() {
                    self.oracle.first_disagreement = Some(e.to_string());
                }
                return;
            }
        };
        if expected != arch_verdict {
            self.oracle.disagreements += 1;
            if self.oracle.first_disagreement.is_none() {
                self.oracle.first_disagreement = Some(format!(
                    "arch said {arch_verdict}, oracle said {expected} for {snapshot:?}"
                ));
            }
        }
    }

    pub fn oracle_stats(&self) -> &OracleStats {
        &self.oracle
    }

    fn delivered(&self) -> u64 {
        self.dt_cert + self.dt_uncert + self.df_cert + self.df_uncert
    }

    fn published(&self) -> u64 {
        self.published_true + self.published_false
    }

    fn debug_conservation(&self) {
        debug_assert_eq!(
            self.published(),
            self.sent_true + self.sent_false + self.poll_pending,
            "published must equal sent plus polls in flight"
        );
        debug_assert_eq!(
            self.published(),
            self.queued + self.lost + self.delivered() + self.in_flight,
            "published must equal queued + lost + delivered + in flight"
        );
    }

    /// Check the conservation identities; callable mid-run.
    pub fn verify_conservation(&self) -> Result<(), MetricsError> {
        if self.published() != self.sent_true + self.sent_false + self.poll_pending {
            return Err(MetricsError::Conservation(format!(
                "published {} != sent {} + pending polls {}",
                self.published(),
                self.sent_true + self.sent_false,
                self.poll_pending
            )));
        }
        if self.published() != self.queued + self.lost + self.delivered() + self.in_flight {
            return Err(MetricsError::Conservation(format!(
                "published {} != queued {} + lost {} + delivered {} + in flight {}",
                self.published(),
                self.queued,
                self.lost,
                self.delivered(),
                self.in_flight
            )));
        }
        Ok(())
    }

    /// Close the ledger: all in-flight work must have drained, identities
    /// must hold exactly.
    pub fn finalize(self) -> Result<(RunReport, Vec<AuditRow>, OracleStats), MetricsError> {
        self.verify_conservation()?;
        if self.in_flight != 0 || self.poll_pending != 0 {
            return Err(MetricsError::Conservation(format!(
                "{} notifications still in flight, {} polls pending at end of run",
                self.in_flight, self.poll_pending
            )));
        }
        let cert_total = self.dt_cert + self.df_cert;
        let mutated: u64 =
            self.remain_true + self.false_to_true + self.remain_false + self.true_to_false;
        if self.arch == "collaborative" && mutated != cert_total {
            return Err(MetricsError::Conservation(format!(
                "certified {cert_total} != mutation classes total {mutated}"
            )));
        }
        let published = self.published();
        let delivered = self.delivered();
        let report = RunReport {
            arch: self.arch,
            strategy: self.strategy,
            pf: self.pf,
            seed: self.seed.to_string(),
            published: published as f64,
            published_true: self.published_true as f64,
            published_false: self.published_false as f64,
            sent_true: self.sent_true as f64,
            sent_false: self.sent_false as f64,
            queued: self.queued as f64,
            lost: self.lost as f64,
            delivered: delivered as f64,
            dt_cert: self.dt_cert as f64,
            dt_uncert: self.dt_uncert as f64,
            df_cert: self.df_cert as f64,
            df_uncert: self.df_uncert as f64,
            remain_true: self.remain_true as f64,
            false_to_true: self.false_to_true as f64,
            remain_false: self.remain_false as f64,
            true_to_false: self.true_to_false as f64,
        };
        Ok((report, self.audits, self.oracle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellId;

    fn cell(r: u16, c: u16) -> CellId {
        CellId::new(r, c)
    }

    fn audit(outcome: AuditOutcome) -> AuditRow {
        AuditRow {
            producer: ProducerId(0),
            seq: 0,
            published_at: 0,
            true_cell: cell(0, 0),
            claim_at_publish: cell(0, 0),
            claim_at_send: cell(0, 0),
            was_queued: false,
            outcome,
        }
    }

    #[test]
    fn publish_and_deliver_update_the_right_counters() {
        let mut l = Ledger::new("fixed", "-", 0.0, 1);
        l.publish(true, true, true);
        l.deliver(
            true,
            true,
            false,
            None,
            audit(AuditOutcome::Delivered { certified: false, broker: 0, cause: None }),
        );
        let (r, audits, _) = l.finalize().unwrap();
        assert_eq!(r.published, 1.0);
        assert_eq!(r.published_true, 1.0);
        assert_eq!(r.dt_uncert, 1.0);
        assert_eq!(audits.len(), 1);
    }

    #[test]
    fn end_of_run_queue_residue_is_the_queued_count() {
        let mut l = Ledger::new("fixed", "-", 0.0, 1);
        for _ in 0..3 {
            l.publish(true, true, true);
            l.enqueue(true);
        }
        l.dequeue(true);
        l.deliver(
            true,
            true,
            true,
            None,
            audit(AuditOutcome::Delivered { certified: true, broker: 0, cause: None }),
        );
        let (r, _, _) = l.finalize().unwrap();
        assert_eq!(r.queued, 2.0);
        assert_eq!(r.delivered, 1.0);
        assert_eq!(r.published, 3.0);
    }

    #[test]
    fn uncounted_events_do_not_touch_counters() {
        let mut l = Ledger::new("assigned", "cls", 0.3, 1);
        l.publish(false, false, true);
        let (r, _, _) = l.finalize().unwrap();
        assert_eq!(r.published, 0.0);
    }

    #[test]
    fn finalize_rejects_in_flight_notifications() {
        let mut l = Ledger::new("fixed", "-", 0.0, 1);
        l.publish(true, true, true);
        assert!(matches!(l.finalize(), Err(MetricsError::Conservation(_))));
    }

    #[test]
    fn oracle_fixed_matches_equality() {
        let snap = VerdictSnapshot::Fixed { claim: cell(1, 1), broker_cell: cell(1, 1) };
        assert_eq!(oracle_verify(&snap), Ok(true));
        let snap = VerdictSnapshot::Fixed { claim: cell(1, 2), broker_cell: cell(1, 1) };
        assert_eq!(oracle_verify(&snap), Ok(false));
    }

    #[test]
    fn oracle_cls_set_conditions_by_hand() {
        // NP = {p2, p9}, registry = {p2}, adjacent = {p9}: both conditions
        // hold, so the claim is certified
        let snap = VerdictSnapshot::AssignedCls {
            claim: cell(0, 0),
            broker_cell: cell(0, 0),
            sender: ProducerId(1),
            neighbor_list: vec![ProducerId(2), ProducerId(9)],
            registered: vec![ProducerId(2)],
            adjacent_registered: vec![ProducerId(9)],
        };
        assert_eq!(oracle_verify(&snap), Ok(true));
        // p9 unknown everywhere: extra neighbor, rejected
        let snap = VerdictSnapshot::AssignedCls {
            claim: cell(0, 0),
            broker_cell: cell(0, 0),
            sender: ProducerId(1),
            neighbor_list: vec![ProducerId(2), ProducerId(9)],
            registered: vec![ProducerId(2)],
            adjacent_registered: vec![],
        };
        assert_eq!(oracle_verify(&snap), Ok(false));
        // registered producer p5 not reported as neighbor: rejected
        let snap = VerdictSnapshot::AssignedCls {
            claim: cell(0, 0),
            broker_cell: cell(0, 0),
            sender: ProducerId(1),
            neighbor_list: vec![ProducerId(2)],
            registered: vec![ProducerId(2), ProducerId(5)],
            adjacent_registered: vec![],
        };
        assert_eq!(oracle_verify(&snap), Ok(false));
        // lonely producer: both sets empty, certified regardless of claim truth
        let snap = VerdictSnapshot::AssignedCls {
            claim: cell(0, 0),
            broker_cell: cell(0, 0),
            sender: ProducerId(1),
            neighbor_list: vec![],
            registered: vec![],
            adjacent_registered: vec![],
        };
        assert_eq!(oracle_verify(&snap), Ok(true));
    }

    #[test]
    fn oracle_collab_tie_is_uncertified() {
        let snap = VerdictSnapshot::Collab {
            flag: false,
            sent_claim: cell(0, 0),
            tally: vec![(cell(0, 0), 1), (cell(0, 1), 1)],
        };
        assert_eq!(oracle_verify(&snap), Ok(false));
        let snap = VerdictSnapshot::Collab {
            flag: true,
            sent_claim: cell(0, 0),
            tally: vec![(cell(0, 0), 2)],
        };
        assert_eq!(oracle_verify(&snap), Ok(true));
        // lone local vote: sum is not > 1
        let snap = VerdictSnapshot::Collab {
            flag: false,
            sent_claim: cell(0, 0),
            tally: vec![(cell(0, 0), 1)],
        };
        assert_eq!(oracle_verify(&snap), Ok(false));
        let snap = VerdictSnapshot::Collab { flag: false, sent_claim: cell(0, 0), tally: vec![] };
        assert!(matches!(
            oracle_verify(&snap),
            Err(MetricsError::SnapshotIncomplete(_))
        ));
    }

    #[test]
    fn oracle_check_counts_disagreements() {
        let mut l = Ledger::new("fixed", "-", 0.0, 1);
        let snap = VerdictSnapshot::Fixed { claim: cell(0, 0), broker_cell: cell(0, 0) };
        l.oracle_check(&snap, true);
        l.oracle_check(&snap, false);
        assert_eq!(l.oracle_stats().checks, 2);
        assert_eq!(l.oracle_stats().disagreements, 1);
        assert!(l.oracle_stats().first_disagreement.is_some());
    }

    fn report(seed: &str, lost: f64) -> RunReport {
        RunReport {
            arch: "fixed".into(),
            strategy: "-".into(),
            pf: 0.0,
            seed: seed.into(),
            published: 5900.0,
            published_true: 5900.0,
            published_false: 0.0,
            sent_true: 5900.0,
            sent_false: 0.0,
            queued: 0.0,
            lost,
            delivered: 5900.0 - lost,
            dt_cert: 5000.0,
            dt_uncert: 900.0 - lost,
            df_cert: 0.0,
            df_uncert: 0.0,
            remain_true: 0.0,
            false_to_true: 0.0,
            remain_false: 0.0,
            true_to_false: 0.0,
        }
    }

    #[test]
    fn aggregate_takes_arithmetic_means() {
        let reports: Vec<RunReport> =
            [60.0, 61.0, 63.0, 64.0, 65.0].iter().enumerate().map(|(i, l)| report(&i.to_string(), *l)).collect();
        let agg = aggregate(&reports).unwrap();
        assert!((agg.lost - 62.6).abs() < 1e-12);
        assert_eq!(agg.seed, "avg");
    }

    #[test]
    fn aggregate_of_single_report_is_itself() {
        let r = report("3", 60.0);
        let agg = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(agg, r);
    }

    #[test]
    fn aggregate_rejects_mixed_configs() {
        let a = report("1", 60.0);
        let mut b = report("2", 61.0);
        b.strategy = "nls".into();
        assert!(matches!(
            aggregate(&[a, b]),
            Err(MetricsError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn csv_and_json_encode_identical_counters() {
        let r = report("1", 62.5);
        let csv = to_csv(std::slice::from_ref(&r));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("fixed,-,0,1,5900,5900,0,5900,0,0,62.5,5837.5,"));
        let json = to_json(&[r]);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v[0]["lost"], 62.5);
        assert_eq!(v[0]["delivered"], 5837.5);
    }

    #[test]
    fn emission_is_deterministic() {
        let r = report("1", 62.6);
        assert_eq!(to_csv(std::slice::from_ref(&r)), to_csv(std::slice::from_ref(&r)));
        assert_eq!(to_table(std::slice::from_ref(&r)), to_table(&[r]));
    }

    #[test]
    fn table_keeps_columns_separate_for_fractional_means() {
        let mut r = report("avg", 0.0);
        r.queued = 1.0 / 3.0;
        r.lost = 97.0 + 2.0 / 3.0;
        r.delivered = r.published - r.queued - r.lost;
        let table = to_table(std::slice::from_ref(&r));
        let flow_row = table.lines().nth(1).unwrap();
        assert_eq!(flow_row.split_whitespace().count(), 12, "row: {flow_row}");
        assert!(flow_row.contains("0.3"), "queued mean rendered: {flow_row}");
        assert!(flow_row.contains("97.7"), "lost mean rendered: {flow_row}");
    }

    #[test]
    fn table_percentages_recompute_from_raw_counts() {
        let mut r = report("1", 0.0);
        r.dt_cert = 5275.8;
        r.dt_uncert = 561.4;
        let pct = r.dt_cert_pct();
        assert!((pct - 90.38).abs() < 0.005, "{pct}");
    }
}
