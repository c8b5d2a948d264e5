//! Head-side IDS handling: alert reports, cooperative detection with
//! mobile agents, elections and isolation.

use std::collections::BTreeMap;

use super::msg::{Handover, Report};
use super::{Body, ClusterMsg, CoopRequest, Ev, PendingHandover, PendingReport, Simulation};
use crate::agents::{AgentId, AgentQuery, MobileAgent, Observation, TimeoutOutcome};
use crate::detection::{build_itinerary, cooperative_verdict, Alert, CoopVerdict, DetectorKind, MisuseSignature, Suspicion};
use crate::harness::trace::List;
use crate::response::{Evidence, ResponseAction, ResponseKind};
use crate::trust::{cast_vote, tally};
use crate::NodeId;

impl Simulation {
    // ---- reports ----------------------------------------------------------

    pub(super) fn report(&mut self, me: NodeId, alert: Alert) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if n.cluster.is_head() {
            self.head_on_report(me, me, alert);
            return;
        }
        let Some(head) = n.cluster.head_id() else {
            self.trace
                .rec(now, Some(me), "detect", "report_dropped")
                .f("suspect", alert.suspect)
                .f("reason", "no_head");
            return;
        };
        n.next_report += 1;
        let id = n.next_report;
        n.reports.insert(
            id,
            PendingReport {
                alert: alert.clone(),
                head,
                tries: 1,
            },
        );
        self.trace
            .rec(now, Some(me), "detect", "report")
            .f("id", id)
            .f("head", head)
            .f("suspect", alert.suspect);
        self.send_routed(me, head, Body::Report(Box::new(Report { id, alert })));
        let retry = self.cfg.detection.report_retry;
        self.after(retry, me, Ev::ReportRetry { node: me, id });
    }

    pub(super) fn on_report_retry(&mut self, me: NodeId, id: u64) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        let Some(p) = n.reports.get_mut(&id) else {
            return;
        };
        if p.tries >= 2 {
            let p = n.reports.remove(&id).expect("present");
            self.trace
                .rec(now, Some(me), "detect", "report_dropped")
                .f("id", id)
                .f("head", p.head)
                .f("suspect", p.alert.suspect)
                .f("reason", "unacked");
            return;
        }
        p.tries += 1;
        let (head, alert) = (p.head, p.alert.clone());
        self.send_routed(me, head, Body::Report(Box::new(Report { id, alert })));
        let retry = self.cfg.detection.report_retry;
        self.after(retry, me, Ev::ReportRetry { node: me, id });
    }

    /// A head receives an alert from one of its members (or itself).
    pub(super) fn head_on_report(&mut self, me: NodeId, reporter: NodeId, alert: Alert) {
        let now = self.now();
        let window = self.window_index(alert.time);
        let n = &mut self.nodes[me.index()];
        if !n.cluster.is_head() {
            return;
        }
        let key = (reporter, alert.suspect, window, alert.source.clone());
        if !n.logged_reports.insert(key) {
            return;
        }
        self.trace
            .rec(now, Some(me), "detect", "report_rx")
            .f("reporter", reporter)
            .f("suspect", alert.suspect)
            .f("kind", alert.detector.as_str());
        if alert.suspect == me {
            return;
        }
        let (sev, ev) = match alert.detector {
            DetectorKind::LocalMisuse => (self.cfg.detection.severity_misuse, Evidence::Misuse),
            DetectorKind::LocalAnomaly => (self.cfg.detection.severity_anomaly, Evidence::Anomaly),
            DetectorKind::Cooperative => (self.cfg.detection.severity_coop, Evidence::Cooperative),
        };
        let n = &mut self.nodes[me.index()];
        if let Ok(v) = n.trust.penalize(alert.suspect, sev, now) {
            self.trace
                .rec(now, Some(me), "trust", "penalize")
                .f("subject", alert.suspect)
                .f("value", v);
        }
        self.escalate(me, alert.suspect, reporter, ev);
    }

    fn escalate(&mut self, me: NodeId, subject: NodeId, reporter: NodeId, ev: Evidence) {
        let esc = self.nodes[me.index()].policy.on_evidence(subject, reporter, ev);
        if esc.cluster {
            self.isolate_cluster(me, subject);
        }
        if esc.network {
            self.issue_network_isolate(me, subject);
        }
    }

    // ---- cooperative detection -------------------------------------------

    pub(super) fn on_suspicion(&mut self, me: NodeId, s: Suspicion) {
        let now = self.now();
        self.trace
            .rec(now, Some(me), "detect", "suspicion")
            .f("suspect", s.suspect)
            .f("metric", s.metric.as_str())
            .f("value", s.value)
            .f("window_start", s.window.0.secs());
        let c = &self.nodes[me.index()].cluster;
        if c.is_head() {
            self.head_on_coop(me, me, s);
        } else if let Some(head) = c.head_id() {
            self.send_routed(me, head, Body::CoopRequest(Box::new(s)));
        }
    }

    pub(super) fn head_on_coop(&mut self, me: NodeId, requester: NodeId, s: Suspicion) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if !n.cluster.is_head() || s.suspect == me || n.policy.is_isolated(s.suspect) {
            return;
        }
        if !n.coop_open.insert((s.suspect, s.metric)) {
            return;
        }
        let members = n.cluster.members();
        let suspect = s.suspect;
        let itinerary = {
            let cluster = &n.cluster;
            let bl = &n.blocklist;
            build_itinerary(
                &members,
                |m| cluster.advert_of(m).is_some_and(|a| a.neighbors.contains(&suspect)),
                suspect,
                requester,
                |m| bl.is_blocked(m, now),
                n.agents.config().itinerary_cap,
            )
        };
        n.next_request += 1;
        let request = n.next_request;
        let query = AgentQuery {
            metric: s.metric,
            suspect,
            window: s.window,
        };
        n.coop.insert(request, CoopRequest { suspicion: s, requester });
        self.trace
            .rec(now, Some(me), "detect", "coop_open")
            .f("request", request)
            .f("requester", requester)
            .f("suspect", suspect)
            .f("itinerary", List(&itinerary));
        if itinerary.is_empty() {
            self.conclude(me, request, Vec::new());
            return;
        }
        let n = &mut self.nodes[me.index()];
        match n.agents.create_agent(me, request, query, itinerary, &members, now) {
            Ok(agent) => self.dispatch_agent(me, agent),
            Err(_) => self.conclude(me, request, Vec::new()),
        }
    }

    fn dispatch_agent(&mut self, me: NodeId, agent: MobileAgent) {
        let now = self.now();
        let (deadline, retry) = self.nodes[me.index()]
            .agents
            .entry(agent.id)
            .map_or((now, 0), |e| (e.deadline, e.retries));
        self.trace
            .rec(now, Some(me), "agent", "dispatch")
            .f("agent", agent.id)
            .f("request", agent.request)
            .f("retry", retry)
            .f("itinerary", List(&agent.itinerary));
        let id = agent.id;
        let first = agent.next_stop();
        self.send_routed(me, first, Body::Agent(Box::new(agent)));
        self.at(deadline, crate::kernel::Target::Node(me), Ev::AgentTimeout { node: me, agent: id });
    }

    pub(super) fn on_agent(&mut self, me: NodeId, mut agent: MobileAgent) {
        let now = self.now();
        if agent.origin_head == me && agent.is_done() {
            match self.nodes[me.index()].agents.on_return(&agent) {
                Some(results) => {
                    self.trace
                        .rec(now, Some(me), "agent", "returned")
                        .f("agent", agent.id)
                        .f("results", results.len());
                    self.conclude(me, agent.request, results);
                }
                None => {
                    self.trace.rec(now, Some(me), "agent", "late").f("agent", agent.id);
                }
            }
            return;
        }
        if agent.next_stop() != me {
            return;
        }
        let q = agent.query;
        let obs = match self.nodes[me.index()].detector.observe(q.metric, q.suspect, q.window) {
            Some(v) => Observation::Value(v),
            None => Observation::NoData,
        };
        if let Some(next) = agent.execute_at(me, obs) {
            let mut r = self.trace.rec(now, Some(me), "agent", "hop").f("agent", agent.id);
            r = match obs {
                Observation::Value(v) => r.f("value", v),
                Observation::NoData => r.f("value", "none"),
            };
            drop(r);
            self.send_routed(me, next, Body::Agent(Box::new(agent)));
        }
    }

    pub(super) fn on_agent_timeout(&mut self, me: NodeId, id: AgentId) {
        let now = self.now();
        match self.nodes[me.index()].agents.on_timeout(id, me, now) {
            TimeoutOutcome::Ignored => {}
            TimeoutOutcome::Redispatch(agent) => {
                self.trace.rec(now, Some(me), "agent", "lost").f("agent", id);
                self.dispatch_agent(me, agent);
            }
            TimeoutOutcome::Exhausted { request, .. } => {
                self.trace
                    .rec(now, Some(me), "agent", "exhausted")
                    .f("agent", id)
                    .f("request", request);
                self.conclude(me, request, Vec::new());
            }
        }
    }

    fn conclude(&mut self, me: NodeId, request: u64, mut results: Vec<(NodeId, Observation)>) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        let Some(req) = n.coop.remove(&request) else {
            return;
        };
        let s = req.suspicion;
        n.coop_open.remove(&(s.suspect, s.metric));
        results.push((req.requester, Observation::Value(s.value)));
        let Some(rule) = n.detector.base.rule(s.metric).cloned() else {
            return;
        };
        let quorum = self.cfg.detection.coop_quorum;
        let verdict = cooperative_verdict(&rule, &results, quorum);
        let (confirmed, median, observers) = match verdict {
            CoopVerdict::Confirmed { median, observers } => (true, Some(median), observers),
            CoopVerdict::Inconclusive { median, observers } => (false, median, observers),
        };
        let mut r = self
            .trace
            .rec(now, Some(me), "detect", "verdict")
            .f("request", request)
            .f("suspect", s.suspect)
            .f("metric", s.metric.as_str())
            .f("observers", observers)
            .f("confirmed", confirmed);
        if let Some(m) = median {
            r = r.f("median", m);
        }
        drop(r);
        if !confirmed || s.suspect == me {
            return;
        }
        let alert = Alert {
            time: now,
            detector: DetectorKind::Cooperative,
            reporter: me,
            suspect: s.suspect,
            label: rule.label,
            confidence: self.cfg.detection.coop_confidence,
            source: rule.rule_id.clone(),
        };
        let window = self.window_index(s.window.0);
        self.trace_alert(&alert, window);
        let sev = self.cfg.detection.severity_coop;
        let learned_threshold = self.cfg.detection.learned_threshold;
        let w = self.cfg.detection.window;
        let n = &mut self.nodes[me.index()];
        if let Ok(v) = n.trust.penalize(s.suspect, sev, now) {
            self.trace
                .rec(now, Some(me), "trust", "penalize")
                .f("subject", s.suspect)
                .f("value", v);
        }
        let n = &mut self.nodes[me.index()];
        let sig = MisuseSignature::learned(s.suspect, s.metric, rule.label, learned_threshold, w);
        if n.detector.base.learn(sig.clone()) {
            let version = n.detector.base.version;
            self.trace
                .rec(now, Some(me), "detect", "learn")
                .f("sig", &sig.sig_id)
                .f("version", version);
            self.flood(me, ClusterMsg::BaseDelta { sigs: vec![sig], version });
        }
        self.escalate(me, s.suspect, me, Evidence::Cooperative);
    }

    // ---- response ---------------------------------------------------------

    /// Adds `subject` to `me`'s blocklist and drops routes through it.
    pub(super) fn apply_block(&mut self, me: NodeId, subject: NodeId, kind: ResponseKind, issuer: NodeId, epoch: u64) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if !matches!(n.blocklist.block(subject, now), Ok(true)) {
            return;
        }
        n.router.forget_via(subject);
        n.cluster.deregister(subject);
        self.trace
            .rec(now, Some(me), "response", "block")
            .f("subject", subject)
            .f("kind", kind.as_str())
            .f("issuer", issuer)
            .f("epoch", epoch);
    }

    fn isolate_cluster(&mut self, me: NodeId, subject: NodeId) {
        if subject == me {
            return;
        }
        let now = self.now();
        let epoch = self.nodes[me.index()].policy.next_epoch();
        let action = ResponseAction {
            kind: ResponseKind::ClusterIsolate,
            subject,
            epoch,
            issuer: me,
        };
        self.apply_block(me, subject, action.kind, me, epoch);
        self.trace
            .rec(now, Some(me), "response", "cluster")
            .f("subject", subject)
            .f("epoch", epoch);
        self.flood(me, ClusterMsg::Isolate(action));
    }

    /// Has head `head` start a network-wide isolation of `subject`.
    pub fn issue_network_isolate(&mut self, head: NodeId, subject: NodeId) {
        if subject == head {
            return;
        }
        let now = self.now();
        let n = &mut self.nodes[head.index()];
        let epoch = n.policy.next_epoch();
        let action = ResponseAction {
            kind: ResponseKind::NetworkIsolate,
            subject,
            epoch,
            issuer: head,
        };
        n.policy.first_network(&action);
        if !n.policy.is_isolated(subject) {
            n.policy.mark_isolated(subject);
            self.isolate_cluster(head, subject);
        }
        self.trace
            .rec(now, Some(head), "response", "network")
            .f("subject", subject)
            .f("epoch", epoch);
        self.forward_net(head, action, 1, None);
    }

    fn forward_net(&mut self, me: NodeId, action: ResponseAction, round: u32, except: Option<NodeId>) {
        let heads: Vec<NodeId> = self.nodes[me.index()]
            .cluster
            .neighbor_heads()
            .into_iter()
            .filter(|h| *h != me && Some(*h) != except && *h != action.issuer && *h != action.subject)
            .collect();
        for h in heads {
            self.send_routed(me, h, Body::NetIsolate { action, round });
        }
    }

    pub(super) fn on_net_isolate(&mut self, me: NodeId, from: NodeId, action: ResponseAction, round: u32) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if !n.policy.first_network(&action) {
            return;
        }
        self.trace
            .rec(now, Some(me), "response", "net_rx")
            .f("subject", action.subject)
            .f("issuer", action.issuer)
            .f("from", from)
            .f("round", round);
        let n = &mut self.nodes[me.index()];
        if n.cluster.is_head() {
            if n.policy.mark_isolated(action.subject) {
                self.isolate_cluster(me, action.subject);
            }
            self.forward_net(me, action, round + 1, Some(from));
        } else {
            let head = n.cluster.head_id();
            self.apply_block(me, action.subject, action.kind, action.issuer, action.epoch);
            if let Some(h) = head.filter(|h| *h != from) {
                self.send_routed(me, h, Body::NetIsolate { action, round });
            }
        }
    }

    // ---- elections ----------------------------------------------------------

    pub(super) fn on_election_start(&mut self, me: NodeId, tenure: u64) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if !n.cluster.is_head() || n.tenure != tenure {
            return;
        }
        let period = self.election_period;
        self.after(period, me, Ev::ElectionStart { node: me, tenure });
        let n = &mut self.nodes[me.index()];
        if n.handover.is_some() {
            return;
        }
        let mut candidates: Vec<NodeId> = n
            .cluster
            .members()
            .into_iter()
            .filter(|m| !n.blocklist.is_blocked(*m, now))
            .collect();
        if candidates.is_empty() {
            return;
        }
        candidates.push(me);
        candidates.sort();
        n.epoch += 1;
        let epoch = n.epoch;
        n.ballots.clear();
        for c in &candidates {
            n.trust.ensure(*c, now);
        }
        if let Some(b) = cast_vote(me, &mut n.trust, &candidates, epoch, now) {
            n.ballots.push(b);
        }
        self.trace
            .rec(now, Some(me), "election", "call")
            .f("epoch", epoch)
            .f("candidates", List(&candidates));
        self.flood(me, ClusterMsg::ElectionCall { epoch, candidates });
        let window = self.cfg.election.ballot_window;
        self.after(window, me, Ev::BallotClose { node: me, epoch });
    }

    pub(super) fn on_ballot_close(&mut self, me: NodeId, epoch: u64) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if !n.cluster.is_head() || n.epoch != epoch || n.handover.is_some() {
            return;
        }
        let ballots = std::mem::take(&mut n.ballots);
        let mut connectivity = BTreeMap::new();
        for b in &ballots {
            let c = b.candidate;
            let deg = if c == me {
                n.cluster.recent_neighbors(now).len()
            } else {
                n.cluster.advert_of(c).map_or(0, |a| a.neighbors.len())
            };
            connectivity.insert(c, deg as u32);
        }
        let Some(result) = tally(&ballots, &connectivity) else {
            self.trace
                .rec(now, Some(me), "election", "result")
                .f("epoch", epoch)
                .f("winner", me)
                .f("ballots", 0);
            return;
        };
        let votes: Vec<String> = result
            .vote_counts
            .iter()
            .map(|(c, v)| format!("{c}:{v}"))
            .collect();
        self.trace
            .rec(now, Some(me), "election", "result")
            .f("epoch", epoch)
            .f("winner", result.winner)
            .f("ballots", ballots.len())
            .f("votes", List(&votes))
            .f("tie", result.tie_broken_by.as_str());
        let winner = result.winner;
        if winner == me || n.blocklist.is_blocked(winner, now) {
            return;
        }
        let msg = Handover {
            epoch,
            old_head: me,
            registry: n.cluster.registry().iter().map(|(k, v)| (*k, *v)).collect(),
            trust: n.trust.entries(),
            neighbor_heads: n.cluster.neighbor_heads().into_iter().collect(),
            signatures: n.detector.base.learned_signatures(),
            base_version: n.detector.base.version,
        };
        n.handover = Some(PendingHandover {
            epoch,
            to: winner,
            tries: 1,
            msg: msg.clone(),
        });
        self.send_routed(me, winner, Body::Handover(Box::new(msg)));
        let retry = self.cfg.election.handover_retry;
        self.after(retry, me, Ev::HandoverRetry { node: me, epoch });
    }

    pub(super) fn on_handover_retry(&mut self, me: NodeId, epoch: u64) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        let Some(p) = n.handover.as_mut().filter(|p| p.epoch == epoch) else {
            return;
        };
        if !n.cluster.is_head() {
            n.handover = None;
            return;
        }
        if p.tries >= 2 {
            let to = p.to;
            n.handover = None;
            self.trace
                .rec(now, Some(me), "election", "handover_failed")
                .f("epoch", epoch)
                .f("to", to);
            return;
        }
        p.tries += 1;
        let (to, msg) = (p.to, p.msg.clone());
        self.send_routed(me, to, Body::Handover(Box::new(msg)));
        let retry = self.cfg.election.handover_retry;
        self.after(retry, me, Ev::HandoverRetry { node: me, epoch });
    }

    pub(super) fn on_handover(&mut self, me: NodeId, h: Handover) {
        let now = self.now();
        let old = h.old_head;
        let n = &mut self.nodes[me.index()];
        if n.taken_over.contains(&(old, h.epoch)) {
            self.send_routed(me, old, Body::HandoverAck { epoch: h.epoch });
            return;
        }
        if n.cluster.is_head() || n.blocklist.is_blocked(old, now) {
            return;
        }
        n.taken_over.insert((old, h.epoch));
        let mut acts = Vec::new();
        n.cluster.take_over(&h.registry, old, &h.neighbor_heads, now, &mut acts);
        n.trust.merge_from(&h.trust);
        n.detector.base.merge(&h.signatures, h.base_version);
        n.tenure += 1;
        let tenure = n.tenure;
        self.trace
            .rec(now, Some(me), "election", "takeover")
            .f("from", old)
            .f("epoch", h.epoch)
            .f("tenure", tenure);
        self.cluster_actions(me, acts);
        self.send_routed(me, old, Body::HandoverAck { epoch: h.epoch });
        self.flood(me, ClusterMsg::HeadChange { old, new: me });
        self.start_tenure(me, tenure);
    }

    pub(super) fn on_handover_ack(&mut self, me: NodeId, from: NodeId, epoch: u64) {
        let n = &self.nodes[me.index()];
        let pending = n.handover.as_ref().is_some_and(|p| p.epoch == epoch && p.to == from);
        if pending && n.cluster.is_head() {
            self.step_down(me, from);
        }
        let n = &mut self.nodes[me.index()];
        if n.handover.as_ref().is_some_and(|p| p.epoch == epoch) {
            n.handover = None;
        }
    }

    pub(super) fn step_down(&mut self, me: NodeId, new: NodeId) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        n.handover = None;
        let mut acts = Vec::new();
        n.cluster.follow(new, now, &mut acts);
        self.trace
            .rec(now, Some(me), "election", "handed_over")
            .f("to", new);
        self.cluster_actions(me, acts);
    }
}
