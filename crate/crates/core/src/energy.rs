//! Per-node energy accounting.
//!
//! Two model families: a packet bucket (fixed cost per sent or received
//! packet) and a time-based state model (power draw integrated over the time
//! spent in each radio/CPU state). Energy is kept in integer microjoules so
//! that capacity = remaining + debited holds exactly; the state model carries
//! the sub-microjoule remainder between intervals.

use std::fmt;
use std::str::FromStr;

use crate::kernel::SimTime;
use crate::radio::Packet;

const UJ_PER_J: f64 = 1e6;
const NW_PER_W: f64 = 1e9;
/// nW·ns per µJ
const NWNS_PER_UJ: u128 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("node battery depleted at {at}")]
    NodeDepleted { at: SimTime },
    #[error("invalid energy configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    None,
    Bucket,
    State,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ModelKind::None),
            "bucket" => Ok(ModelKind::Bucket),
            "state" => Ok(ModelKind::State),
            other => Err(format!("unknown energy model '{other}'")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::None => "none",
            ModelKind::Bucket => "bucket",
            ModelKind::State => "state",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerState {
    Sleep,
    Idle,
    Rx,
    Tx,
    Sense,
    Compute,
}

impl PowerState {
    pub const ALL: [PowerState; 6] = [
        PowerState::Sleep,
        PowerState::Idle,
        PowerState::Rx,
        PowerState::Tx,
        PowerState::Sense,
        PowerState::Compute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PowerState::Sleep => "sleep",
            PowerState::Idle => "idle",
            PowerState::Rx => "rx",
            PowerState::Tx => "tx",
            PowerState::Sense => "sense",
            PowerState::Compute => "compute",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub model: ModelKind,
    pub capacity_j: f64,
    pub tx_cost_j: f64,
    pub rx_cost_j: f64,
    /// Draw in watts, indexed like [`PowerState::ALL`].
    pub draw_w: [f64; 6],
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            model: ModelKind::None,
            capacity_j: 100.0,
            tx_cost_j: 0.0,
            rx_cost_j: 0.0,
            draw_w: [0.0; 6],
        }
    }
}

impl EnergyConfig {
    pub fn draw(&self, state: PowerState) -> f64 {
        self.draw_w[state.index()]
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.capacity_j.is_finite() && self.capacity_j > 0.0) {
            errs.push(format!(
                "energy.capacity_j must be > 0 (got {})",
                self.capacity_j
            ));
        }
        for (name, v) in [
            ("energy.tx_cost_j", self.tx_cost_j),
            ("energy.rx_cost_j", self.rx_cost_j),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{name} must be >= 0 (got {v})"));
            }
        }
        for s in PowerState::ALL {
            let v = self.draw(s);
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("energy.draw.{}_w must be >= 0 (got {v})", s.name()));
            }
        }
        errs
    }
}

fn joules_to_uj(j: f64) -> u64 {
    (j * UJ_PER_J).round() as u64
}

fn uj_to_joules(uj: u64) -> f64 {
    uj as f64 / UJ_PER_J
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Battery {
    capacity_uj: u64,
    remaining_uj: u64,
}

impl Battery {
    pub fn new(capacity_j: f64) -> Self {
        let uj = joules_to_uj(capacity_j);
        Battery {
            capacity_uj: uj,
            remaining_uj: uj,
        }
    }

    pub fn capacity_j(&self) -> f64 {
        uj_to_joules(self.capacity_uj)
    }

    pub fn remaining_j(&self) -> f64 {
        uj_to_joules(self.remaining_uj)
    }

    pub fn capacity_uj(&self) -> u64 {
        self.capacity_uj
    }

    pub fn remaining_uj(&self) -> u64 {
        self.remaining_uj
    }

    pub fn is_depleted(&self) -> bool {
        self.remaining_uj == 0
    }

    /// Takes up to `uj` and returns what was actually taken.
    fn take(&mut self, uj: u64) -> u64 {
        let taken = uj.min(self.remaining_uj);
        self.remaining_uj -= taken;
        taken
    }
}

/// Energy state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEnergy {
    battery: Battery,
    debited_uj: u64,
    state: PowerState,
    entered_at: SimTime,
    carry: u128,
    died_at: Option<SimTime>,
}

impl NodeEnergy {
    pub fn battery(&self) -> &Battery {
        &self.battery
    }

    pub fn state(&self) -> PowerState {
        self.state
    }

    pub fn entered_at(&self) -> SimTime {
        self.entered_at
    }

    pub fn is_alive(&self) -> bool {
        self.died_at.is_none()
    }

    pub fn died_at(&self) -> Option<SimTime> {
        self.died_at
    }

    /// Total energy taken so far, excluding the open state interval.
    pub fn debited_j(&self) -> f64 {
        uj_to_joules(self.debited_uj)
    }

    pub fn debited_uj(&self) -> u64 {
        self.debited_uj
    }

    fn take(&mut self, uj: u64) -> u64 {
        let taken = self.battery.take(uj);
        self.debited_uj += taken;
        taken
    }
}

/// Compiled energy configuration shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    config: EnergyConfig,
    tx_cost_uj: u64,
    rx_cost_uj: u64,
    draw_nw: [u64; 6],
}

impl EnergyModel {
    pub fn new(config: EnergyConfig) -> Result<Self, EnergyError> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(EnergyError::InvalidConfig(errs.join("; ")));
        }
        let mut draw_nw = [0u64; 6];
        for s in PowerState::ALL {
            draw_nw[s.index()] = (config.draw(s) * NW_PER_W).round() as u64;
        }
        Ok(EnergyModel {
            tx_cost_uj: joules_to_uj(config.tx_cost_j),
            rx_cost_uj: joules_to_uj(config.rx_cost_j),
            draw_nw,
            config,
        })
    }

    pub fn config(&self) -> &EnergyConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.model
    }

    pub fn new_node(&self) -> NodeEnergy {
        NodeEnergy {
            battery: Battery::new(self.config.capacity_j),
            debited_uj: 0,
            state: PowerState::Idle,
            entered_at: SimTime::ZERO,
            carry: 0,
            died_at: None,
        }
    }

    /// Charges the per-packet cost of the bucket model. Other models charge
    /// nothing here. On exhaustion the node dies and the packet must not be
    /// sent or received.
    pub fn debit_packet(
        &self,
        node: &mut NodeEnergy,
        direction: Direction,
        _packet: &Packet,
        now: SimTime,
    ) -> Result<f64, EnergyError> {
        if let Some(at) = node.died_at {
            return Err(EnergyError::NodeDepleted { at });
        }
        if self.config.model != ModelKind::Bucket {
            return Ok(0.0);
        }
        let cost = match direction {
            Direction::Tx => self.tx_cost_uj,
            Direction::Rx => self.rx_cost_uj,
        };
        if cost > node.battery.remaining_uj {
            node.take(cost);
            node.died_at = Some(now);
            return Err(EnergyError::NodeDepleted { at: now });
        }
        node.take(cost);
        Ok(uj_to_joules(cost))
    }

    /// Explicit one-off debit (sensing or computation work), any model but
    /// `none`.
    pub fn debit(
        &self,
        node: &mut NodeEnergy,
        joules: f64,
        now: SimTime,
    ) -> Result<f64, EnergyError> {
        if let Some(at) = node.died_at {
            return Err(EnergyError::NodeDepleted { at });
        }
        if self.config.model == ModelKind::None {
            return Ok(0.0);
        }
        let cost = joules_to_uj(joules.max(0.0));
        if cost > node.battery.remaining_uj {
            node.take(cost);
            node.died_at = Some(now);
            return Err(EnergyError::NodeDepleted { at: now });
        }
        node.take(cost);
        Ok(uj_to_joules(cost))
    }

    fn draw_of(&self, node: &NodeEnergy) -> u64 {
        if self.config.model == ModelKind::State {
            self.draw_nw[node.state.index()]
        } else {
            0
        }
    }

    /// Exact time at which the current state exhausts the battery, if it
    /// ever does.
    pub fn depletion_time(&self, node: &NodeEnergy) -> Option<SimTime> {
        if let Some(at) = node.died_at {
            return Some(at);
        }
        let draw = self.draw_of(node) as u128;
        if draw == 0 {
            return None;
        }
        let need = (node.battery.remaining_uj as u128 * NWNS_PER_UJ).saturating_sub(node.carry);
        let dt = need.div_ceil(draw);
        let dt = u64::try_from(dt).ok()?;
        node.entered_at.checked_add(SimTime::from_nanos(dt))
    }

    /// Closes the open interval at `now`, charging draw × elapsed time.
    fn accrue(&self, node: &mut NodeEnergy, now: SimTime) -> Result<(), EnergyError> {
        if let Some(at) = node.died_at {
            return Err(EnergyError::NodeDepleted { at });
        }
        let draw = self.draw_of(node) as u128;
        let elapsed = now.saturating_sub(node.entered_at).as_nanos() as u128;
        if draw > 0 && elapsed > 0 {
            let crossing = self.depletion_time(node);
            let total = draw * elapsed + node.carry;
            let uj = total / NWNS_PER_UJ;
            if uj >= node.battery.remaining_uj as u128 {
                let rest = node.battery.remaining_uj;
                node.take(rest);
                node.carry = 0;
                let at = crossing.unwrap_or(now).min(now);
                node.died_at = Some(at);
                node.entered_at = at;
                return Err(EnergyError::NodeDepleted { at });
            }
            node.take(uj as u64);
            node.carry = total % NWNS_PER_UJ;
        }
        node.entered_at = now;
        Ok(())
    }

    /// Switches the node's power state at `now`, charging the interval spent
    /// in the previous state. Returns the previous state.
    pub fn set_state(
        &self,
        node: &mut NodeEnergy,
        state: PowerState,
        now: SimTime,
    ) -> Result<PowerState, EnergyError> {
        self.accrue(node, now)?;
        let prev = node.state;
        node.state = state;
        Ok(prev)
    }

    /// Marks the node dead at `at` after charging up to that instant. Used
    /// by the scheduled depletion event.
    pub fn expire(&self, node: &mut NodeEnergy, at: SimTime) -> SimTime {
        match self.accrue(node, at) {
            Err(EnergyError::NodeDepleted { at }) => at,
            _ => {
                let rest = node.battery.remaining_uj;
                node.take(rest);
                node.died_at = Some(at);
                at
            }
        }
    }

    fn pending_uj(&self, node: &NodeEnergy, now: SimTime) -> u64 {
        if node.died_at.is_some() {
            return 0;
        }
        let draw = self.draw_of(node) as u128;
        let elapsed = now.saturating_sub(node.entered_at).as_nanos() as u128;
        let uj = (draw * elapsed + node.carry) / NWNS_PER_UJ;
        uj.min(node.battery.remaining_uj as u128) as u64
    }

    /// Remaining energy at `now`, including the open state interval.
    pub fn remaining(&self, node: &NodeEnergy, now: SimTime) -> f64 {
        uj_to_joules(node.battery.remaining_uj - self.pending_uj(node, now))
    }

    /// Energy debited up to `now`, including the open state interval.
    pub fn debited(&self, node: &NodeEnergy, now: SimTime) -> f64 {
        uj_to_joules(node.debited_uj + self.pending_uj(node, now))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::Address;
    use crate::topology::NodeId;

    fn pkt() -> Packet {
        Packet::new(0, NodeId(0), Address::Broadcast, 100, SimTime::ZERO)
    }

    fn bucket(capacity: f64, tx: f64) -> EnergyModel {
        EnergyModel::new(EnergyConfig {
            model: ModelKind::Bucket,
            capacity_j: capacity,
            tx_cost_j: tx,
            rx_cost_j: tx,
            ..EnergyConfig::default()
        })
        .unwrap()
    }

    fn state_model(capacity: f64, idle: f64) -> EnergyModel {
        let mut draw_w = [0.0; 6];
        draw_w[PowerState::Idle as usize] = idle;
        draw_w[PowerState::Tx as usize] = 0.05;
        EnergyModel::new(EnergyConfig {
            model: ModelKind::State,
            capacity_j: capacity,
            draw_w,
            ..EnergyConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn bucket_subtracts_cost() {
        let m = bucket(100.0, 0.1);
        let mut n = m.new_node();
        assert_eq!(
            m.debit_packet(&mut n, Direction::Tx, &pkt(), SimTime::ZERO)
                .unwrap(),
            0.1
        );
        assert_eq!(n.battery().remaining_j(), 99.9);
        for _ in 0..2 {
            m.debit_packet(&mut n, Direction::Tx, &pkt(), SimTime::ZERO)
                .unwrap();
        }
        assert_eq!(m.remaining(&n, SimTime::ZERO), 99.7);
    }

    #[test]
    fn bucket_depletion_kills_node() {
        let m = bucket(0.05, 0.1);
        let mut n = m.new_node();
        let t = SimTime::from_secs(3);
        assert_eq!(
            m.debit_packet(&mut n, Direction::Tx, &pkt(), t),
            Err(EnergyError::NodeDepleted { at: t })
        );
        assert_eq!(n.battery().remaining_j(), 0.0);
        assert!(!n.is_alive());
        assert_eq!(n.debited_j(), 0.05);
    }

    #[test]
    fn zero_cost_is_identity() {
        let m = bucket(1.0, 0.0);
        let mut n = m.new_node();
        m.debit_packet(&mut n, Direction::Rx, &pkt(), SimTime::ZERO)
            .unwrap();
        assert_eq!(n.battery().remaining_j(), 1.0);
    }

    #[test]
    fn state_interval_is_charged() {
        let m = state_model(100.0, 1e-3);
        let mut n = m.new_node();
        assert_eq!(m.remaining(&n, SimTime::from_secs(2)), 100.0 - 0.002);
        let prev = m
            .set_state(&mut n, PowerState::Tx, SimTime::from_secs(10))
            .unwrap();
        assert_eq!(prev, PowerState::Idle);
        assert_eq!(n.debited_j(), 0.01);
    }

    #[test]
    fn sleep_costs_nothing() {
        let m = state_model(1.0, 1e-3);
        let mut n = m.new_node();
        m.set_state(&mut n, PowerState::Sleep, SimTime::ZERO)
            .unwrap();
        m.set_state(&mut n, PowerState::Idle, SimTime::from_secs(1000))
            .unwrap();
        assert_eq!(n.debited_uj(), 0);
    }

    #[test]
    fn depletion_crossing_is_exact() {
        let m = state_model(0.005, 1e-3);
        let mut n = m.new_node();
        assert_eq!(m.depletion_time(&n), Some(SimTime::from_secs(5)));
        let err = m
            .set_state(&mut n, PowerState::Tx, SimTime::from_secs(10))
            .unwrap_err();
        assert_eq!(
            err,
            EnergyError::NodeDepleted {
                at: SimTime::from_secs(5)
            }
        );
        assert_eq!(n.died_at(), Some(SimTime::from_secs(5)));
        assert_eq!(n.battery().remaining_uj(), 0);
        assert_eq!(n.debited_uj(), n.battery().capacity_uj());
    }

    #[test]
    fn crossing_matches_millisecond_integration() {
        // independent check: step the draw in 1 ms increments
        let capacity = 0.005;
        let draw = 1e-3;
        let mut spent = 0.0;
        let mut t_ms = 0u64;
        while spent + draw * 1e-3 <= capacity + 1e-15 {
            spent += draw * 1e-3;
            t_ms += 1;
        }
        let m = state_model(capacity, draw);
        let n = m.new_node();
        let analytic = m.depletion_time(&n).unwrap();
        assert!((analytic.as_nanos() as i64 - (t_ms * 1_000_000) as i64).abs() <= 1_000_000);
    }

    #[test]
    fn carry_keeps_sub_microjoule_work() {
        // 1 mW for 1 µs is 1 nJ; a thousand of those are one microjoule
        let m = state_model(1.0, 1e-3);
        let mut n = m.new_node();
        let mut t = SimTime::ZERO;
        for _ in 0..1000 {
            t = t.checked_add(SimTime::from_micros(1)).unwrap();
            m.set_state(&mut n, PowerState::Idle, t).unwrap();
        }
        assert_eq!(n.debited_uj(), 1);
        assert_eq!(
            n.battery().remaining_uj() + n.debited_uj(),
            n.battery().capacity_uj()
        );
    }
}
