use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{action, guard, InterruptKind, ProcessModel, Value};
use crate::kernel::SimTime;
use crate::radio::Address;
use crate::topology::NodeId;

pub const TAG_START: u32 = 1;
pub const TAG_REPORT: u32 = 2;

/// Knobs the built-in protocols read; filled from the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub flood_source: NodeId,
    pub flood_start: SimTime,
    pub report_source: NodeId,
    pub report_sink: NodeId,
    pub report_start: SimTime,
    pub report_period: SimTime,
    pub report_count: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            flood_source: NodeId(0),
            flood_start: SimTime::ZERO,
            report_source: NodeId(0),
            report_sink: NodeId(1),
            report_start: SimTime::ZERO,
            report_period: SimTime::from_secs(1),
            report_count: 1,
        }
    }
}

type Factory = Arc<dyn Fn(&ProtocolParams) -> ProcessModel + Send + Sync>;

/// Process models selectable by name.
#[derive(Clone)]
pub struct Registry {
    factories: BTreeMap<String, Factory>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry {
            factories: BTreeMap::new(),
        };
        r.register("flood", |p| flood(p.flood_source, p.flood_start));
        r.register("idle", |_| idle());
        r.register("report", report);
        r
    }
}

impl Registry {
    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&ProtocolParams) -> ProcessModel + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn build(&self, name: &str, params: &ProtocolParams) -> Option<ProcessModel> {
        self.factories.get(name).map(|f| f(params))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

fn seen_contains(vars: &super::Vars, id: u64) -> bool {
    vars.by_name("seen")
        .and_then(|v| match v {
            Value::Ids(s) => Some(s.contains(&id)),
            _ => None,
        })
        .unwrap_or(false)
}

/// Rebroadcast-once flooding. The source emits at `start`; every node
/// forwards the first copy it hears and drops later duplicates.
pub fn flood(source: NodeId, start: SimTime) -> ProcessModel {
    let fresh = guard::when(|vars, i, _| i.packet().is_some_and(|p| !seen_contains(vars, p.id)));
    let dup = guard::when(|vars, i, _| i.packet().is_some_and(|p| seen_contains(vars, p.id)));
    ProcessModel::new("flood", "listen")
        .resting("listen")
        .resting("dead")
        .var("seen", Value::Ids(BTreeSet::new()))
        .on_boot(Arc::new(move |_, host| {
            if host.node() == source {
                host.set_timer(start, TAG_START)?;
            }
            Ok(())
        }))
        .transition_with(
            "listen",
            "listen",
            guard::timer(TAG_START),
            Some(action(|vars, _, host| {
                let packet = host.new_packet(Address::Broadcast);
                if let Some(Value::Ids(seen)) = vars.by_name_mut("seen") {
                    seen.insert(packet.id);
                }
                host.annotate(&format!("origin pkt={}", packet.id));
                host.broadcast(packet)
            })),
        )
        .transition_with(
            "listen",
            "listen",
            fresh,
            Some(action(|vars, i, host| {
                let packet = i.packet().expect("guarded").clone();
                if let Some(Value::Ids(seen)) = vars.by_name_mut("seen") {
                    seen.insert(packet.id);
                }
                host.annotate(&format!("first pkt={} hops={}", packet.id, packet.hops));
                host.record_scalar("flood.first_hops", packet.hops as f64);
                let latency = host.now().saturating_sub(packet.created);
                // integral nanoseconds keep the sum independent of record order
                host.record_scalar("flood.latency_ns", latency.as_nanos() as f64);
                host.broadcast(packet)
            })),
        )
        .transition_with(
            "listen",
            "listen",
            dup,
            Some(action(|_, i, host| {
                let packet = i.packet().expect("guarded");
                host.annotate(&format!("duplicate pkt={}", packet.id));
                Ok(())
            })),
        )
        .transition("listen", "dead", guard::on(InterruptKind::EnergyDepleted))
}

/// Does nothing until its battery runs out.
pub fn idle() -> ProcessModel {
    ProcessModel::new("idle", "idle")
        .resting("idle")
        .resting("dead")
        .transition("idle", "dead", guard::on(InterruptKind::EnergyDepleted))
}

/// Periodic unicast reports from one source to one sink over source routes.
pub fn report(p: &ProtocolParams) -> ProcessModel {
    let (source, sink, start, period, count) = (
        p.report_source,
        p.report_sink,
        p.report_start,
        p.report_period,
        p.report_count,
    );
    let for_me =
        guard::when(|_, i, ctx| i.packet().is_some_and(|p| p.dst == Address::Node(ctx.node)));
    let transit =
        guard::when(|_, i, ctx| i.packet().is_some_and(|p| p.dst != Address::Node(ctx.node)));
    ProcessModel::new("report", "active")
        .resting("active")
        .resting("dead")
        .var("sent", Value::Int(0))
        .on_boot(Arc::new(move |_, host| {
            if host.node() == source && count > 0 {
                host.set_timer(start, TAG_REPORT)?;
            }
            Ok(())
        }))
        .transition_with(
            "active",
            "active",
            guard::timer(TAG_REPORT),
            Some(action(move |vars, _, host| {
                let packet = host.new_packet(Address::Node(sink));
                let id = packet.id;
                let routed = host.forward(packet)?;
                host.annotate(&format!(
                    "send pkt={id}{}",
                    if routed { "" } else { " no-route" }
                ));
                let slot = vars.slot("sent").expect("declared");
                let sent = vars.int(slot) + 1;
                *vars.get_mut(slot) = Value::Int(sent);
                if sent < i64::from(count) {
                    host.set_timer(period, TAG_REPORT)?;
                }
                Ok(())
            })),
        )
        .transition_with(
            "active",
            "active",
            for_me,
            Some(action(|_, i, host| {
                let packet = i.packet().expect("guarded");
                host.annotate(&format!("delivered pkt={} hops={}", packet.id, packet.hops));
                let latency = host.now().saturating_sub(packet.created);
                host.record_scalar("report.latency_ns", latency.as_nanos() as f64);
                Ok(())
            })),
        )
        .transition_with(
            "active",
            "active",
            transit,
            Some(action(|_, i, host| {
                let packet = i.packet().expect("guarded").clone();
                let id = packet.id;
                let routed = host.forward(packet)?;
                host.annotate(&format!(
                    "relay pkt={id}{}",
                    if routed { "" } else { " no-route" }
                ));
                Ok(())
            })),
        )
        .transition("active", "dead", guard::on(InterruptKind::EnergyDepleted))
}
