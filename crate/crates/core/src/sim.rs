//! One simulated world (or one partition of it): kernel, topology, per-node
//! energy and process state, routing and telemetry wired together.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::energy::{
    Direction, EnergyConfig, EnergyError, EnergyModel, ModelKind, NodeEnergy, PowerState,
};
use crate::kernel::{
    Event, EventHandle, EventId, EventKind, Kernel, KernelConfig, KernelError, SimTime, Target,
};
use crate::process::{
    BoxError, CompiledModel, Interrupt, ProcessError, ProcessHost, ProcessInstance,
};
use crate::radio::{plan_transmission, run_pipeline, Address, Packet, PipelineConfig, RadioError};
use crate::rng::{node_stream, SimRng, Stream};
use crate::routing::{next_hop, RadioConnectivity, Router};
use crate::telemetry::{LogFilter, Telemetry};
use crate::topology::{NodeDescriptor, NodeId, Position, Topology, TopologyError, WaypointConfig};

/// Packet bits used by [`ProcessHost::new_packet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketShape {
    pub payload_bits: u32,
    pub header_bits: u32,
}

impl Default for PacketShape {
    fn default() -> Self {
        PacketShape {
            payload_bits: 1024,
            header_bits: 0,
        }
    }
}

const HEADER_PROTOCOL: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityConfig {
    pub waypoint: WaypointConfig,
    pub period: SimTime,
}

/// Everything a world needs besides the topology.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub energy: EnergyConfig,
    pub routing: bool,
    pub process: Arc<CompiledModel>,
    pub packet: PacketShape,
    pub mobility: Option<MobilityConfig>,
    pub energy_sample: Option<SimTime>,
    pub filter: LogFilter,
    pub kernel: KernelConfig,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(
        "remote message for node {node} at {at} arrived after partition {partition} reached {now}"
    )]
    Causality {
        partition: u32,
        node: NodeId,
        at: SimTime,
        now: SimTime,
    },
    #[error("node {node} is not owned by partition {partition}")]
    UnknownPartition { partition: u32, node: NodeId },
}

/// A packet in flight plus what the receiver needs to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub packet: Packet,
    pub from: NodeId,
    /// Sender position when the transmission started.
    pub from_position: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Arrival(Box<Arrival>),
    Timer {
        tag: u32,
    },
    User {
        code: u16,
        value: i64,
    },
    /// Battery exhausted; delivered to the process as an interrupt.
    Depletion,
    /// End of the node's current transmission.
    RadioIdle,
    Mobility,
    EnergySample,
}

/// A packet arrival crossing a partition boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteMessage {
    pub from_partition: u32,
    pub to_partition: u32,
    pub id: EventId,
    pub receive_time: SimTime,
    pub target: NodeId,
    pub arrival: Box<Arrival>,
}

/// End-of-run state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub node: NodeId,
    pub capacity_j: f64,
    pub remaining_j: f64,
    pub debited_j: f64,
    pub died_at: Option<SimTime>,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub unmatched: u64,
    pub state: String,
}

#[derive(Debug)]
pub struct WorldOutput {
    pub telemetry: Telemetry,
    pub nodes: Vec<NodeReport>,
    pub dispatched: u64,
    pub peak_pending: usize,
    pub routes_computed: u64,
    pub route_cache_hits: u64,
    pub routing_memory_bytes: usize,
}

struct NodeState {
    energy: NodeEnergy,
    radio_rng: SimRng,
    process_rng: SimRng,
    mobility_rng: SimRng,
    next_packet: u32,
    depletion: Option<EventHandle>,
    tx_busy_until: SimTime,
    sent: u64,
    received: u64,
    dropped: u64,
}

/// Everything except the kernel and the process instances, so that a
/// process can act on the world while it is itself borrowed.
struct Ctx {
    partition: u32,
    owner: Arc<[u32]>,
    /// Global index to local slot; `u32::MAX` when owned elsewhere.
    local: Vec<u32>,
    owned: Vec<NodeId>,
    topology: Topology,
    pipeline: PipelineConfig,
    energy: EnergyModel,
    routing: bool,
    packet: PacketShape,
    mobility: Option<MobilityConfig>,
    energy_sample: Option<SimTime>,
    last_mobility: SimTime,
    nodes: Vec<NodeState>,
    router: Router,
    telemetry: Telemetry,
    outbox: Vec<RemoteMessage>,
    scratch: Vec<NodeId>,
    notes: String,
    logging: bool,
}

pub struct World {
    kernel: Kernel<Payload>,
    procs: Vec<ProcessInstance>,
    ctx: Ctx,
}

impl Payload {
    /// The event kind this payload is scheduled under.
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::Arrival(_) => EventKind::PacketArrival,
            Payload::Timer { .. } | Payload::RadioIdle => EventKind::TimerExpiry,
            Payload::User { code, .. } => EventKind::User(*code),
            Payload::Depletion => EventKind::InterruptDelivery,
            Payload::Mobility => EventKind::MobilityUpdate,
            Payload::EnergySample => EventKind::EnergySample,
        }
    }
}

impl World {
    /// A world owning every node.
    pub fn monolithic(config: &WorldConfig, topology: Topology) -> Result<World, SimError> {
        let owner: Arc<[u32]> = vec![0; topology.len()].into();
        World::partition(config, topology, owner, 0)
    }

    /// A world owning the nodes with `owner[node] == partition`.
    pub fn partition(
        config: &WorldConfig,
        topology: Topology,
        owner: Arc<[u32]>,
        partition: u32,
    ) -> Result<World, SimError> {
        let energy = EnergyModel::new(config.energy.clone())?;
        let mut local = vec![u32::MAX; topology.len()];
        let mut owned = Vec::new();
        let mut nodes = Vec::new();
        let mut procs = Vec::new();
        for id in topology.node_ids() {
            if owner[id.index()] != partition {
                continue;
            }
            local[id.index()] = owned.len() as u32;
            owned.push(id);
            nodes.push(NodeState {
                energy: energy.new_node(),
                radio_rng: node_stream(config.seed, id.0, Stream::Radio),
                process_rng: node_stream(config.seed, id.0, Stream::Process),
                mobility_rng: node_stream(config.seed, id.0, Stream::Mobility),
                next_packet: 0,
                depletion: None,
                tx_busy_until: SimTime::ZERO,
                sent: 0,
                received: 0,
                dropped: 0,
            });
            procs.push(config.process.instantiate(id));
        }
        Ok(World {
            kernel: Kernel::new(config.kernel),
            procs,
            ctx: Ctx {
                partition,
                owner,
                local,
                owned,
                topology,
                pipeline: config.pipeline,
                energy,
                routing: config.routing,
                packet: config.packet,
                mobility: config.mobility,
                energy_sample: config.energy_sample,
                last_mobility: SimTime::ZERO,
                nodes,
                router: Router::default(),
                telemetry: Telemetry::new(config.filter.clone()),
                outbox: Vec::new(),
                scratch: Vec::new(),
                notes: String::new(),
                logging: false,
            },
        })
    }

    pub fn partition_id(&self) -> u32 {
        self.ctx.partition
    }

    pub fn owned(&self) -> &[NodeId] {
        &self.ctx.owned
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn kernel(&self) -> &Kernel<Payload> {
        &self.kernel
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.ctx.telemetry
    }

    pub fn topology(&self) -> &Topology {
        &self.ctx.topology
    }

    /// Runs every process's boot hook and arms the periodic machinery.
    /// Setup events are attributed to the node they concern.
    pub fn boot(&mut self) -> Result<(), SimError> {
        let ctx = &mut self.ctx;
        if let Some(m) = ctx.mobility {
            for id in ctx.owned.clone() {
                let slot = ctx.local[id.index()] as usize;
                ctx.topology
                    .init_waypoint(id, &m.waypoint, &mut ctx.nodes[slot].mobility_rng)?;
            }
            self.kernel.schedule(
                m.period,
                Target::Kernel,
                EventKind::MobilityUpdate,
                Payload::Mobility,
            )?;
        }
        for slot in 0..ctx.owned.len() {
            let id = ctx.owned[slot];
            if let Some(period) = ctx.energy_sample {
                self.kernel.schedule_from(
                    id,
                    period,
                    Target::Node(id),
                    EventKind::EnergySample,
                    Payload::EnergySample,
                )?;
            }
            let mut host = Host {
                kernel: &mut self.kernel,
                ctx: &mut *ctx,
                node: id,
                slot,
                boot: true,
            };
            host.rearm_depletion()?;
            self.procs[slot].boot(&mut host)?;
        }
        Ok(())
    }

    pub fn next_event_time(&mut self) -> Option<SimTime> {
        self.kernel.next_event_time()
    }

    /// Dispatches every event at or before `bound`.
    pub fn run_until(&mut self, bound: SimTime) -> Result<(), SimError> {
        let World { kernel, procs, ctx } = self;
        let result = kernel.run_until(bound, |k, ev| ctx.dispatch(k, procs, ev));
        match result {
            Ok(_) => Ok(()),
            Err(KernelError::HandlerFault { event, source }) => match source.downcast::<SimError>()
            {
                Ok(e) => Err(*e),
                Err(source) => Err(KernelError::HandlerFault { event, source }.into()),
            },
            Err(e) => Err(e.into()),
        }
    }

    /// Schedules an arrival sent by another partition.
    pub fn inject(&mut self, msg: RemoteMessage) -> Result<(), SimError> {
        let owned = self
            .ctx
            .local
            .get(msg.target.index())
            .is_some_and(|&s| s != u32::MAX);
        if !owned {
            return Err(SimError::UnknownPartition {
                partition: self.ctx.partition,
                node: msg.target,
            });
        }
        let event = Event {
            id: msg.id,
            time: msg.receive_time,
            target: Target::Node(msg.target),
            kind: EventKind::PacketArrival,
            payload: Payload::Arrival(msg.arrival),
        };
        match self.kernel.insert(event) {
            Ok(_) => Ok(()),
            Err(KernelError::PastTime { now, .. }) => Err(SimError::Causality {
                partition: self.ctx.partition,
                node: msg.target,
                at: msg.receive_time,
                now,
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn take_outbox(&mut self) -> Vec<RemoteMessage> {
        std::mem::take(&mut self.ctx.outbox)
    }

    /// Final node states at `end` plus telemetry.
    pub fn finish(self, end: SimTime) -> WorldOutput {
        let World { kernel, procs, ctx } = self;
        let nodes = ctx
            .owned
            .iter()
            .enumerate()
            .map(|(slot, &id)| {
                let st = &ctx.nodes[slot];
                NodeReport {
                    node: id,
                    capacity_j: st.energy.battery().capacity_j(),
                    remaining_j: ctx.energy.remaining(&st.energy, end),
                    debited_j: ctx.energy.debited(&st.energy, end),
                    died_at: st.energy.died_at(),
                    sent: st.sent,
                    received: st.received,
                    dropped: st.dropped,
                    unmatched: procs[slot].unmatched(),
                    state: procs[slot].state_name().to_string(),
                }
            })
            .collect();
        WorldOutput {
            dispatched: kernel.dispatched(),
            peak_pending: kernel.peak_pending(),
            routes_computed: ctx.router.routes_computed(),
            route_cache_hits: ctx.router.cache_hits(),
            routing_memory_bytes: ctx.router.memory_bytes(),
            telemetry: ctx.telemetry,
            nodes,
        }
    }
}

impl Ctx {
    fn slot(&self, id: NodeId) -> Option<usize> {
        match self.local.get(id.index()) {
            Some(&s) if s != u32::MAX => Some(s as usize),
            _ => None,
        }
    }

    fn dispatch(
        &mut self,
        kernel: &mut Kernel<Payload>,
        procs: &mut [ProcessInstance],
        ev: Event<Payload>,
    ) -> Result<(), SimError> {
        let node = ev.target.node();
        self.logging = self.telemetry.filter().matches(ev.time, ev.kind, node);
        self.notes.clear();
        self.telemetry.set_context(ev.id);
        match (ev.payload, node) {
            (Payload::Mobility, _) => self.on_mobility(kernel)?,
            (payload, Some(id)) => {
                let slot = self.slot(id).ok_or(SimError::UnknownPartition {
                    partition: self.partition,
                    node: id,
                })?;
                let mut host = Host {
                    kernel,
                    ctx: self,
                    node: id,
                    slot,
                    boot: false,
                };
                host.handle(&mut procs[slot], payload)?;
            }
            (_, None) => {}
        }
        if self.logging {
            let notes = std::mem::take(&mut self.notes);
            self.telemetry
                .log_event(ev.time, ev.id, ev.kind, node, &notes);
            self.notes = notes;
        }
        Ok(())
    }

    fn on_mobility(&mut self, kernel: &mut Kernel<Payload>) -> Result<(), SimError> {
        let Some(m) = self.mobility else {
            return Ok(());
        };
        let now = kernel.now();
        let dt = now.saturating_sub(self.last_mobility);
        for slot in 0..self.owned.len() {
            let id = self.owned[slot];
            self.topology.step_waypoint(
                id,
                self.last_mobility,
                dt,
                &m.waypoint,
                &mut self.nodes[slot].mobility_rng,
            )?;
        }
        self.last_mobility = now;
        self.router.invalidate();
        if self.logging {
            let _ = write!(self.notes, "moved={}", self.owned.len());
        }
        let next = now.checked_add(m.period).ok_or(KernelError::TimeOverflow)?;
        kernel.schedule(
            next,
            Target::Kernel,
            EventKind::MobilityUpdate,
            Payload::Mobility,
        )?;
        Ok(())
    }
}

/// A node's view of the world while one of its events is handled.
struct Host<'a> {
    kernel: &'a mut Kernel<Payload>,
    ctx: &'a mut Ctx,
    node: NodeId,
    slot: usize,
    /// Setup phase: events are attributed to `node` explicitly.
    boot: bool,
}

impl Host<'_> {
    fn note(&mut self, args: std::fmt::Arguments<'_>) {
        if self.ctx.logging {
            if !self.ctx.notes.is_empty() {
                self.ctx.notes.push(' ');
            }
            let _ = self.ctx.notes.write_fmt(args);
        }
    }

    fn schedule(
        &mut self,
        at: SimTime,
        kind: EventKind,
        payload: Payload,
    ) -> Result<EventHandle, KernelError> {
        self.schedule_to(Target::Node(self.node), at, kind, payload)
    }

    fn schedule_to(
        &mut self,
        target: Target,
        at: SimTime,
        kind: EventKind,
        payload: Payload,
    ) -> Result<EventHandle, KernelError> {
        if self.boot {
            self.kernel
                .schedule_from(self.node, at, target, kind, payload)
        } else {
            self.kernel.schedule(at, target, kind, payload)
        }
    }

    fn state(&mut self) -> &mut NodeState {
        &mut self.ctx.nodes[self.slot]
    }

    fn is_dead(&self) -> bool {
        self.ctx.nodes[self.slot].energy.died_at().is_some()
    }

    /// Replaces the pending depletion event with one at the current
    /// analytic crossing time.
    fn rearm_depletion(&mut self) -> Result<(), KernelError> {
        if let Some(h) = self.state().depletion.take() {
            self.kernel.cancel(h);
        }
        if self.ctx.energy.kind() != ModelKind::State {
            return Ok(());
        }
        let st = &self.ctx.nodes[self.slot];
        if st.energy.died_at().is_some() {
            return Ok(());
        }
        if let Some(at) = self.ctx.energy.depletion_time(&st.energy) {
            let h = self.schedule(at, EventKind::InterruptDelivery, Payload::Depletion)?;
            self.state().depletion = Some(h);
        }
        Ok(())
    }

    /// Records the death and queues the interrupt for the process.
    fn on_death(&mut self) -> Result<(), KernelError> {
        if let Some(h) = self.state().depletion.take() {
            self.kernel.cancel(h);
        }
        let now = self.kernel.now();
        self.schedule(now, EventKind::InterruptDelivery, Payload::Depletion)?;
        self.ctx.topology.set_alive(self.node, false).ok();
        Ok(())
    }

    fn set_power_state(&mut self, state: PowerState) -> Result<bool, KernelError> {
        if self.ctx.energy.kind() != ModelKind::State {
            return Ok(true);
        }
        let now = self.kernel.now();
        let slot = self.slot;
        match self
            .ctx
            .energy
            .set_state(&mut self.ctx.nodes[slot].energy, state, now)
        {
            Ok(_) => {
                self.rearm_depletion()?;
                Ok(true)
            }
            Err(_) => {
                self.on_death()?;
                Ok(false)
            }
        }
    }

    fn handle(&mut self, proc_: &mut ProcessInstance, payload: Payload) -> Result<(), SimError> {
        match payload {
            Payload::Arrival(arrival) => self.on_arrival(proc_, *arrival),
            Payload::Timer { tag } => {
                self.note(format_args!("tag={tag}"));
                if self.is_dead() {
                    self.note(format_args!("dead"));
                    return Ok(());
                }
                proc_.deliver(&Interrupt::Timer { tag }, self)?;
                Ok(())
            }
            Payload::User { code, value } => {
                if self.is_dead() {
                    return Ok(());
                }
                proc_.deliver(&Interrupt::User { code, value }, self)?;
                Ok(())
            }
            Payload::Depletion => {
                let now = self.kernel.now();
                let slot = self.slot;
                self.state().depletion = None;
                if self.ctx.nodes[slot].energy.died_at().is_none() {
                    self.ctx
                        .energy
                        .expire(&mut self.ctx.nodes[slot].energy, now);
                    self.ctx.topology.set_alive(self.node, false).ok();
                }
                self.note(format_args!("depleted"));
                proc_.deliver(&Interrupt::EnergyDepleted, self)?;
                Ok(())
            }
            Payload::RadioIdle => {
                self.note(format_args!("radio-idle"));
                let now = self.kernel.now();
                if !self.is_dead() && now >= self.state().tx_busy_until {
                    self.set_power_state(PowerState::Idle)?;
                }
                Ok(())
            }
            Payload::EnergySample => {
                let now = self.kernel.now();
                let remaining = self
                    .ctx
                    .energy
                    .remaining(&self.ctx.nodes[self.slot].energy, now);
                self.note(format_args!("remaining_j={remaining}"));
                let probe = format!("energy.remaining_j.node{}", self.node.0);
                if self.ctx.telemetry.vector(&probe).is_none() {
                    let _ = self.ctx.telemetry.register_vector(&probe, "J");
                }
                let _ = self.ctx.telemetry.record_vector(&probe, now, remaining);
                if !self.is_dead() {
                    if let Some(period) = self.ctx.energy_sample {
                        let next = now.checked_add(period).ok_or(KernelError::TimeOverflow)?;
                        self.schedule(next, EventKind::EnergySample, Payload::EnergySample)?;
                    }
                }
                Ok(())
            }
            Payload::Mobility => Ok(()),
        }
    }

    fn on_arrival(
        &mut self,
        proc_: &mut ProcessInstance,
        arrival: Arrival,
    ) -> Result<(), SimError> {
        let Arrival {
            mut packet,
            from,
            from_position,
        } = arrival;
        self.note(format_args!("pkt={} from={}", packet.id, from.0));
        let tx_radio = self.ctx.topology.node(from)?.radio;
        let tx = NodeDescriptor {
            id: from,
            position: from_position,
            radio: tx_radio,
            alive: true,
        };
        let rx = *self.ctx.topology.node(self.node)?;
        let slot = self.slot;
        let outcome = run_pipeline(
            &tx,
            &rx,
            &mut packet,
            &self.ctx.pipeline,
            &mut self.ctx.nodes[slot].radio_rng,
        );
        if !outcome.received {
            self.state().dropped += 1;
            self.note(format_args!("drop={}", outcome.drop_reason.name()));
            return Ok(());
        }
        if !packet.link.accepts(self.node) {
            self.note(format_args!("not-addressed"));
            return Ok(());
        }
        let now = self.kernel.now();
        if self
            .ctx
            .energy
            .debit_packet(
                &mut self.ctx.nodes[slot].energy,
                Direction::Rx,
                &packet,
                now,
            )
            .is_err()
        {
            self.state().dropped += 1;
            self.note(format_args!("drop=depleted"));
            if self.ctx.nodes[slot].energy.died_at() == Some(now) && rx.alive {
                self.on_death()?;
            }
            return Ok(());
        }
        self.state().received += 1;
        packet.hops = packet.hops.saturating_add(1);
        self.note(format_args!("ok"));
        proc_.deliver(&Interrupt::PacketArrival(packet), self)?;
        Ok(())
    }

    /// Puts `packet` on the air, scheduling an arrival for each candidate
    /// receiver (only the link target for unicast).
    fn transmit(&mut self, mut packet: Packet) -> Result<bool, SimError> {
        let now = self.kernel.now();
        if self.is_dead() {
            self.note(format_args!("tx-dead"));
            return Ok(false);
        }
        let slot = self.slot;
        if self
            .ctx
            .energy
            .debit_packet(
                &mut self.ctx.nodes[slot].energy,
                Direction::Tx,
                &packet,
                now,
            )
            .is_err()
        {
            self.note(format_args!("tx-depleted"));
            self.on_death()?;
            return Ok(false);
        }
        if !self.set_power_state(PowerState::Tx)? {
            self.note(format_args!("tx-depleted"));
            return Ok(false);
        }
        packet.bit_errors = 0;
        let mut scratch = std::mem::take(&mut self.ctx.scratch);
        let planned = plan_transmission(
            &self.ctx.topology,
            &self.ctx.pipeline,
            self.node,
            &packet,
            now,
            &mut scratch,
        );
        self.ctx.scratch = scratch;
        let planned = planned?;
        let from_position = self.ctx.topology.position(self.node)?;
        let bitrate = self.ctx.topology.node(self.node)?.radio.bitrate;
        let end = now
            .checked_add(crate::radio::transmission_delay(packet.size(), bitrate))
            .ok_or(KernelError::TimeOverflow)?;
        let st = self.state();
        st.sent += 1;
        st.tx_busy_until = st.tx_busy_until.max(end);
        if self.ctx.energy.kind() == ModelKind::State {
            self.schedule(end, EventKind::TimerExpiry, Payload::RadioIdle)?;
        }

        let mut count = 0usize;
        for p in planned {
            if let Address::Node(target) = packet.link {
                if p.receiver != target {
                    continue;
                }
            }
            count += 1;
            let arrival = Box::new(Arrival {
                packet: packet.clone(),
                from: self.node,
                from_position,
            });
            let owner = self.ctx.owner[p.receiver.index()];
            if owner == self.ctx.partition {
                self.schedule_to(
                    Target::Node(p.receiver),
                    p.at,
                    EventKind::PacketArrival,
                    Payload::Arrival(arrival),
                )?;
            } else {
                let id = if self.boot {
                    self.kernel.allocate_id_from(self.node)?
                } else {
                    self.kernel.allocate_id()?
                };
                self.ctx.outbox.push(RemoteMessage {
                    from_partition: self.ctx.partition,
                    to_partition: owner,
                    id,
                    receive_time: p.at,
                    target: p.receiver,
                    arrival,
                });
            }
        }
        self.note(format_args!("tx pkt={} n={}", packet.id, count));
        Ok(true)
    }
}

impl ProcessHost for Host<'_> {
    fn now(&self) -> SimTime {
        self.kernel.now()
    }

    fn node(&self) -> NodeId {
        self.node
    }

    fn set_timer(&mut self, delay: SimTime, tag: u32) -> Result<EventHandle, BoxError> {
        let at = self
            .kernel
            .now()
            .checked_add(delay)
            .ok_or(KernelError::TimeOverflow)?;
        Ok(self.schedule(at, EventKind::TimerExpiry, Payload::Timer { tag })?)
    }

    fn cancel_timer(&mut self, handle: EventHandle) -> bool {
        self.kernel.cancel(handle)
    }

    fn new_packet(&mut self, dst: Address) -> Packet {
        let now = self.kernel.now();
        let shape = self.ctx.packet;
        let node = u64::from(self.node.0);
        let st = self.state();
        // unique per run: originating node in the high half
        let id = (node << 32) | u64::from(st.next_packet);
        st.next_packet = st.next_packet.wrapping_add(1);
        let mut packet = Packet::new(id, self.node, dst, shape.payload_bits, now);
        if shape.header_bits > 0 {
            packet.push_header(HEADER_PROTOCOL, shape.header_bits);
        }
        packet
    }

    fn broadcast(&mut self, mut packet: Packet) -> Result<(), BoxError> {
        packet.link = Address::Broadcast;
        self.transmit(packet)?;
        Ok(())
    }

    fn forward(&mut self, mut packet: Packet) -> Result<bool, BoxError> {
        let Address::Node(dst) = packet.dst else {
            return Ok(false);
        };
        if !self.ctx.routing || dst == self.node {
            return Ok(false);
        }
        let graph = RadioConnectivity::new(&self.ctx.topology, &self.ctx.pipeline);
        if packet.route.is_none() {
            match self.ctx.router.route(self.node, dst, &graph) {
                Ok(route) => packet.route = Some(route),
                Err(_) => return Ok(false),
            }
        }
        let route = packet.route.as_mut().expect("set above");
        let next = match next_hop(self.node, route, &graph) {
            Ok(n) => n,
            Err(_) => return Ok(false),
        };
        packet.link = Address::Node(next);
        Ok(self.transmit(packet)?)
    }

    fn rng(&mut self) -> &mut SimRng {
        &mut self.ctx.nodes[self.slot].process_rng
    }

    fn annotate(&mut self, note: &str) {
        self.note(format_args!("{note}"));
    }

    fn record_scalar(&mut self, probe: &str, value: f64) {
        let t = &mut self.ctx.telemetry;
        if t.scalar(probe).is_none() {
            let _ = t.register_scalar(probe);
        }
        let _ = t.record_scalar(probe, value);
    }
}
