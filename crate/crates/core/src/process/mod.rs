pub mod protocols;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::kernel::{EventHandle, SimTime};
use crate::radio::{Address, Packet};
use crate::rng::SimRng;
use crate::topology::NodeId;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Pure predicate over variables, interrupt and node context.
pub type Guard = Arc<dyn Fn(&Vars, &Interrupt, &GuardCtx) -> bool + Send + Sync>;
pub type Action =
    Arc<dyn Fn(&mut Vars, &Interrupt, &mut dyn ProcessHost) -> Result<(), BoxError> + Send + Sync>;
/// Runs once per instance before the first event, e.g. to arm a start timer.
pub type BootAction =
    Arc<dyn Fn(&mut Vars, &mut dyn ProcessHost) -> Result<(), BoxError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum Interrupt {
    PacketArrival(Packet),
    Timer { tag: u32 },
    EnergyDepleted,
    User { code: u16, value: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterruptKind {
    PacketArrival,
    Timer,
    EnergyDepleted,
    User,
}

impl Interrupt {
    pub fn kind(&self) -> InterruptKind {
        match self {
            Interrupt::PacketArrival(_) => InterruptKind::PacketArrival,
            Interrupt::Timer { .. } => InterruptKind::Timer,
            Interrupt::EnergyDepleted => InterruptKind::EnergyDepleted,
            Interrupt::User { .. } => InterruptKind::User,
        }
    }

    pub fn packet(&self) -> Option<&Packet> {
        match self {
            Interrupt::PacketArrival(p) => Some(p),
            _ => None,
        }
    }

    pub fn timer_tag(&self) -> Option<u32> {
        match self {
            Interrupt::Timer { tag } => Some(*tag),
            _ => None,
        }
    }
}

impl fmt::Display for InterruptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterruptKind::PacketArrival => "packet-arrival",
            InterruptKind::Timer => "timer",
            InterruptKind::EnergyDepleted => "energy-depleted",
            InterruptKind::User => "user",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardCtx {
    pub node: NodeId,
    pub now: SimTime,
}

/// What an action may do to the world around its node.
pub trait ProcessHost {
    fn now(&self) -> SimTime;
    fn node(&self) -> NodeId;
    /// Timer interrupt to this node at `now + delay`.
    fn set_timer(&mut self, delay: SimTime, tag: u32) -> Result<EventHandle, BoxError>;
    fn cancel_timer(&mut self, handle: EventHandle) -> bool;
    /// Fresh packet originated by this node; ids are unique per run.
    fn new_packet(&mut self, dst: Address) -> Packet;
    /// Transmits to every node in radio range.
    fn broadcast(&mut self, packet: Packet) -> Result<(), BoxError>;
    /// Sends one hop along the packet's source route, computing the route
    /// first when the packet has none. Returns false when no route exists.
    fn forward(&mut self, packet: Packet) -> Result<bool, BoxError>;
    fn rng(&mut self) -> &mut SimRng;
    /// Appends a note to the trace line of the current event.
    fn annotate(&mut self, note: &str);
    fn record_scalar(&mut self, probe: &str, value: f64);
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Ids(BTreeSet<u64>),
}

/// State variables of one instance, addressed by declared slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Vars {
    names: Arc<[String]>,
    values: Vec<Value>,
}

impl Vars {
    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, slot: usize) -> &Value {
        &self.values[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Value {
        &mut self.values[slot]
    }

    pub fn by_name(&self, name: &str) -> Option<&Value> {
        self.slot(name).map(|s| &self.values[s])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.slot(name).map(|s| &mut self.values[s])
    }

    pub fn int(&self, slot: usize) -> i64 {
        match self.values[slot] {
            Value::Int(v) => v,
            _ => 0,
        }
    }

    pub fn ids(&self, slot: usize) -> Option<&BTreeSet<u64>> {
        match &self.values[slot] {
            Value::Ids(s) => Some(s),
            _ => None,
        }
    }

    pub fn ids_mut(&mut self, slot: usize) -> Option<&mut BTreeSet<u64>> {
        match &mut self.values[slot] {
            Value::Ids(s) => Some(s),
            _ => None,
        }
    }
}

struct StateDef {
    name: String,
    forced: bool,
    enter: Option<Action>,
    exit: Option<Action>,
}

struct TransitionDef {
    from: String,
    to: String,
    guard: Guard,
    action: Option<Action>,
}

/// Declarative description of a protocol state machine.
pub struct ProcessModel {
    name: String,
    initial: String,
    states: Vec<StateDef>,
    transitions: Vec<TransitionDef>,
    vars: Vec<(String, Value)>,
    boot: Option<BootAction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateState(String),
    DuplicateVariable(String),
    UnknownState(String),
    UnknownInitial(String),
    InitialForced(String),
    Unreachable(String),
    ForcedCycle(Vec<String>),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateState(s) => write!(f, "duplicate state {s}"),
            Diagnostic::DuplicateVariable(v) => write!(f, "duplicate variable {v}"),
            Diagnostic::UnknownState(s) => write!(f, "unknown state {s}"),
            Diagnostic::UnknownInitial(s) => write!(f, "unknown state {s} (initial)"),
            Diagnostic::InitialForced(s) => write!(f, "initial state {s} is forced"),
            Diagnostic::Unreachable(s) => write!(f, "unreachable state {s}"),
            Diagnostic::ForcedCycle(c) => write!(f, "forced-state cycle: {}", c.join(" -> ")),
        }
    }
}

impl ProcessModel {
    pub fn new(name: &str, initial: &str) -> Self {
        ProcessModel {
            name: name.to_string(),
            initial: initial.to_string(),
            states: Vec::new(),
            transitions: Vec::new(),
            vars: Vec::new(),
            boot: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn resting(self, name: &str) -> Self {
        self.state(name, false)
    }

    pub fn forced(self, name: &str) -> Self {
        self.state(name, true)
    }

    fn state(mut self, name: &str, forced: bool) -> Self {
        self.states.push(StateDef {
            name: name.to_string(),
            forced,
            enter: None,
            exit: None,
        });
        self
    }

    /// Entry action for the most recent state with this name.
    pub fn on_enter(mut self, state: &str, action: Action) -> Self {
        if let Some(s) = self.states.iter_mut().rev().find(|s| s.name == state) {
            s.enter = Some(action);
        }
        self
    }

    pub fn on_exit(mut self, state: &str, action: Action) -> Self {
        if let Some(s) = self.states.iter_mut().rev().find(|s| s.name == state) {
            s.exit = Some(action);
        }
        self
    }

    pub fn transition(self, from: &str, to: &str, guard: Guard) -> Self {
        self.transition_with(from, to, guard, None)
    }

    pub fn transition_with(
        mut self,
        from: &str,
        to: &str,
        guard: Guard,
        action: Option<Action>,
    ) -> Self {
        self.transitions.push(TransitionDef {
            from: from.to_string(),
            to: to.to_string(),
            guard,
            action,
        });
        self
    }

    pub fn var(mut self, name: &str, initial: Value) -> Self {
        self.vars.push((name.to_string(), initial));
        self
    }

    pub fn on_boot(mut self, action: BootAction) -> Self {
        self.boot = Some(action);
        self
    }

    /// Checks the model and resolves names to indices.
    pub fn validate(self) -> Result<Arc<CompiledModel>, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if index.insert(s.name.as_str(), i).is_some() {
                diags.push(Diagnostic::DuplicateState(s.name.clone()));
            }
        }
        let mut seen_vars = BTreeSet::new();
        for (v, _) in &self.vars {
            if !seen_vars.insert(v.as_str()) {
                diags.push(Diagnostic::DuplicateVariable(v.clone()));
            }
        }
        let initial = index.get(self.initial.as_str()).copied();
        match initial {
            None => diags.push(Diagnostic::UnknownInitial(self.initial.clone())),
            Some(i) if self.states[i].forced => {
                diags.push(Diagnostic::InitialForced(self.initial.clone()))
            }
            Some(_) => {}
        }

        let n = self.states.len();
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut resolved = Vec::with_capacity(self.transitions.len());
        for t in &self.transitions {
            let from = index.get(t.from.as_str()).copied();
            let to = index.get(t.to.as_str()).copied();
            for (name, idx) in [(&t.from, from), (&t.to, to)] {
                if idx.is_none() {
                    let d = Diagnostic::UnknownState(name.clone());
                    if !diags.contains(&d) {
                        diags.push(d);
                    }
                }
            }
            if let (Some(f), Some(to)) = (from, to) {
                edges[f].push(to);
                resolved.push((f, to));
            }
        }

        if let Some(init) = initial {
            let mut reached = vec![false; n];
            let mut stack = vec![init];
            reached[init] = true;
            while let Some(s) = stack.pop() {
                for &t in &edges[s] {
                    if !reached[t] {
                        reached[t] = true;
                        stack.push(t);
                    }
                }
            }
            for (i, r) in reached.iter().enumerate() {
                if !r {
                    diags.push(Diagnostic::Unreachable(self.states[i].name.clone()));
                }
            }
        }

        if let Some(cycle) = forced_cycle(&self.states, &edges) {
            diags.push(Diagnostic::ForcedCycle(
                cycle
                    .into_iter()
                    .map(|i| self.states[i].name.clone())
                    .collect(),
            ));
        }

        if !diags.is_empty() {
            return Err(diags);
        }

        let mut outgoing = vec![Vec::new(); n];
        let transitions: Vec<CompiledTransition> = self
            .transitions
            .into_iter()
            .zip(resolved)
            .enumerate()
            .map(|(i, (t, (from, to)))| {
                outgoing[from].push(i);
                CompiledTransition {
                    from,
                    to,
                    guard: t.guard,
                    action: t.action,
                }
            })
            .collect();
        let (names, values): (Vec<String>, Vec<Value>) = self.vars.into_iter().unzip();
        Ok(Arc::new(CompiledModel {
            name: self.name,
            initial: initial.expect("checked above"),
            states: self.states,
            transitions,
            outgoing,
            var_names: names.into(),
            var_init: values,
            boot: self.boot,
        }))
    }
}

/// A cycle made only of forced states, if any: such a loop would spin
/// forever at one instant.
fn forced_cycle(states: &[StateDef], edges: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = states.len();
    let mut mark = vec![Mark::New; n];
    for root in (0..n).filter(|&i| states[i].forced) {
        if mark[root] != Mark::New {
            continue;
        }
        let mut path = vec![root];
        let mut iters = vec![0usize];
        mark[root] = Mark::Open;
        while let Some(&top) = path.last() {
            let k = iters.last_mut().expect("parallel to path");
            if let Some(&next) = edges[top].get(*k) {
                *k += 1;
                if !states[next].forced {
                    continue;
                }
                match mark[next] {
                    Mark::Open => {
                        let start = path
                            .iter()
                            .position(|&p| p == next)
                            .expect("open states are on the path");
                        let mut cycle = path[start..].to_vec();
                        cycle.push(next);
                        return Some(cycle);
                    }
                    Mark::New => {
                        mark[next] = Mark::Open;
                        path.push(next);
                        iters.push(0);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[top] = Mark::Done;
                path.pop();
                iters.pop();
            }
        }
    }
    None
}

struct CompiledTransition {
    from: usize,
    to: usize,
    guard: Guard,
    action: Option<Action>,
}

/// A validated model; shared by every instance running it.
pub struct CompiledModel {
    name: String,
    initial: usize,
    states: Vec<StateDef>,
    transitions: Vec<CompiledTransition>,
    outgoing: Vec<Vec<usize>>,
    var_names: Arc<[String]>,
    var_init: Vec<Value>,
    boot: Option<BootAction>,
}

impl fmt::Debug for CompiledModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompiledModel")
            .field("name", &self.name)
            .field(
                "states",
                &self.states.iter().map(|s| &s.name).collect::<Vec<_>>(),
            )
            .field("transitions", &self.transitions.len())
            .finish()
    }
}

impl CompiledModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_name(&self, state: usize) -> &str {
        &self.states[state].name
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn is_forced(&self, state: usize) -> bool {
        self.states[state].forced
    }

    pub fn instantiate(self: &Arc<Self>, node: NodeId) -> ProcessInstance {
        ProcessInstance {
            model: Arc::clone(self),
            state: self.initial,
            vars: Vars {
                names: Arc::clone(&self.var_names),
                values: self.var_init.clone(),
            },
            node,
            unmatched: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("node {node}: {count} transitions out of '{state}' accept a {interrupt} interrupt")]
    AmbiguousTransition {
        node: NodeId,
        state: String,
        interrupt: InterruptKind,
        count: usize,
    },
    #[error("node {node}: no transition leaves forced state '{state}'")]
    ForcedDeadEnd { node: NodeId, state: String },
    #[error("node {node}: action failed in '{state}': {source}")]
    Action {
        node: NodeId,
        state: String,
        #[source]
        source: BoxError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// At least one transition fired; the instance now rests here.
    Moved(usize),
    /// No guard accepted the interrupt; state unchanged.
    Unmatched,
}

pub struct ProcessInstance {
    model: Arc<CompiledModel>,
    state: usize,
    vars: Vars,
    node: NodeId,
    unmatched: u64,
}

impl fmt::Debug for ProcessInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessInstance")
            .field("model", &self.model.name)
            .field("state", &self.state_name())
            .field("node", &self.node)
            .finish()
    }
}

impl ProcessInstance {
    pub fn model(&self) -> &Arc<CompiledModel> {
        &self.model
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn state_name(&self) -> &str {
        self.model.state_name(self.state)
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn unmatched(&self) -> u64 {
        self.unmatched
    }

    pub fn boot(&mut self, host: &mut dyn ProcessHost) -> Result<(), ProcessError> {
        if let Some(boot) = self.model.boot.clone() {
            boot(&mut self.vars, host).map_err(|source| ProcessError::Action {
                node: self.node,
                state: self.state_name().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    /// Indices of transitions out of `state` whose guard holds.
    fn enabled(&self, state: usize, interrupt: &Interrupt, ctx: &GuardCtx) -> Vec<usize> {
        self.model.outgoing[state]
            .iter()
            .copied()
            .filter(|&t| (self.model.transitions[t].guard)(&self.vars, interrupt, ctx))
            .collect()
    }

    /// Fires the unique enabled transition, then keeps going through forced
    /// states until one that rests. Order per hop: exit, transition, entry.
    pub fn deliver(
        &mut self,
        interrupt: &Interrupt,
        host: &mut dyn ProcessHost,
    ) -> Result<Delivery, ProcessError> {
        let ctx = GuardCtx {
            node: self.node,
            now: host.now(),
        };
        let model = Arc::clone(&self.model);
        let mut fired = false;
        loop {
            let enabled = self.enabled(self.state, interrupt, &ctx);
            let t = match enabled.as_slice() {
                [t] => *t,
                [] if !fired => {
                    self.unmatched += 1;
                    return Ok(Delivery::Unmatched);
                }
                [] => {
                    return Err(ProcessError::ForcedDeadEnd {
                        node: self.node,
                        state: self.state_name().to_string(),
                    })
                }
                many => {
                    return Err(ProcessError::AmbiguousTransition {
                        node: self.node,
                        state: self.state_name().to_string(),
                        interrupt: interrupt.kind(),
                        count: many.len(),
                    })
                }
            };
            let tr = &model.transitions[t];
            let steps = [
                (model.states[tr.from].exit.as_ref(), tr.from),
                (tr.action.as_ref(), tr.from),
                (model.states[tr.to].enter.as_ref(), tr.to),
            ];
            for (action, at) in steps {
                if let Some(action) = action {
                    action(&mut self.vars, interrupt, host).map_err(|source| {
                        ProcessError::Action {
                            node: self.node,
                            state: model.states[at].name.clone(),
                            source,
                        }
                    })?;
                }
            }
            self.state = tr.to;
            fired = true;
            if !model.states[self.state].forced {
                return Ok(Delivery::Moved(self.state));
            }
        }
    }
}

/// Guard helpers.
pub mod guard {
    use super::*;

    pub fn always() -> Guard {
        Arc::new(|_, _, _| true)
    }

    pub fn on(kind: InterruptKind) -> Guard {
        Arc::new(move |_, i, _| i.kind() == kind)
    }

    pub fn timer(tag: u32) -> Guard {
        Arc::new(move |_, i, _| i.timer_tag() == Some(tag))
    }

    pub fn when(f: impl Fn(&Vars, &Interrupt, &GuardCtx) -> bool + Send + Sync + 'static) -> Guard {
        Arc::new(f)
    }
}

pub fn action(
    f: impl Fn(&mut Vars, &Interrupt, &mut dyn ProcessHost) -> Result<(), BoxError>
        + Send
        + Sync
        + 'static,
) -> Action {
    Arc::new(f)
}

#[cfg(test)]
pub(crate) mod test_host {
    use super::*;
    use crate::rng::{node_stream, Stream};

    /// Records host calls instead of touching a simulation.
    pub struct RecordingHost {
        pub now: SimTime,
        pub node: NodeId,
        pub log: Vec<String>,
        pub sent: Vec<Packet>,
        pub timers: Vec<(SimTime, u32)>,
        next_packet: u64,
        rng: SimRng,
    }

    impl RecordingHost {
        pub fn new(node: NodeId) -> Self {
            RecordingHost {
                now: SimTime::ZERO,
                node,
                log: Vec::new(),
                sent: Vec::new(),
                timers: Vec::new(),
                next_packet: 0,
                rng: node_stream(1, node.0, Stream::Process),
            }
        }
    }

    impl ProcessHost for RecordingHost {
        fn now(&self) -> SimTime {
            self.now
        }
        fn node(&self) -> NodeId {
            self.node
        }
        fn set_timer(&mut self, delay: SimTime, tag: u32) -> Result<EventHandle, BoxError> {
            let at = self.now.checked_add(delay).ok_or("overflow")?;
            self.timers.push((at, tag));
            Err("recording host has no kernel".into())
        }
        fn cancel_timer(&mut self, _handle: EventHandle) -> bool {
            false
        }
        fn new_packet(&mut self, dst: Address) -> Packet {
            self.next_packet += 1;
            Packet::new(self.next_packet, self.node, dst, 128, self.now)
        }
        fn broadcast(&mut self, packet: Packet) -> Result<(), BoxError> {
            self.sent.push(packet);
            Ok(())
        }
        fn forward(&mut self, packet: Packet) -> Result<bool, BoxError> {
            self.sent.push(packet);
            Ok(true)
        }
        fn rng(&mut self) -> &mut SimRng {
            &mut self.rng
        }
        fn annotate(&mut self, note: &str) {
            self.log.push(note.to_string());
        }
        fn record_scalar(&mut self, _probe: &str, _value: f64) {}
    }
}
