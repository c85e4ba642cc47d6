//! Node placement, proximity queries and mobility.

mod grid;
mod mobility;

use std::fmt;

pub use mobility::{WaypointConfig, WaypointState};

use crate::kernel::SimTime;
use crate::radio::RadioParams;
use crate::rng::SimRng;
use grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.z >= 0.0
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn planar_distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub width: f64,
    pub height: f64,
}

impl Field {
    pub fn new(width: f64, height: f64) -> Self {
        Field { width, height }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub(crate) fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height), p.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDescriptor {
    pub id: NodeId,
    pub position: Position,
    pub radio: RadioParams,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("position ({x}, {y}) lies outside the {width} x {height} m field", x = .0.x, y = .0.y, width = .1.width, height = .1.height)]
    OutOfField(Position, Field),
    #[error("position has non-finite coordinates or negative height")]
    InvalidPosition,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has no waypoint state")]
    NoWaypoint(NodeId),
    #[error("invalid radius {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone)]
pub struct Topology {
    field: Field,
    nodes: Vec<NodeDescriptor>,
    grid: Grid,
    waypoints: Vec<Option<WaypointState>>,
}

impl Topology {
    /// `cell_size` should be the largest radius queried in the hot path
    /// (the radio coverage radius).
    pub fn new(field: Field, cell_size: f64) -> Self {
        Topology {
            field,
            nodes: Vec::new(),
            grid: Grid::new(field.width, field.height, cell_size),
            waypoints: Vec::new(),
        }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn add_node(
        &mut self,
        position: Position,
        radio: RadioParams,
    ) -> Result<NodeId, TopologyError> {
        if !position.is_valid() {
            return Err(TopologyError::InvalidPosition);
        }
        if !self.field.contains(&position) {
            return Err(TopologyError::OutOfField(position, self.field));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.grid.insert(id.0, &position);
        self.nodes.push(NodeDescriptor {
            id,
            position,
            radio,
            alive: true,
        });
        self.waypoints.push(None);
        Ok(id)
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeDescriptor, TopologyError> {
        self.nodes
            .get(id.index())
            .ok_or(TopologyError::UnknownNode(id))
    }

    pub fn position(&self, id: NodeId) -> Result<Position, TopologyError> {
        Ok(self.node(id)?.position)
    }

    pub fn set_alive(&mut self, id: NodeId, alive: bool) -> Result<(), TopologyError> {
        let node = self
            .nodes
            .get_mut(id.index())
            .ok_or(TopologyError::UnknownNode(id))?;
        node.alive = alive;
        Ok(())
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> Result<f64, TopologyError> {
        Ok(self.node(a)?.position.distance(&self.node(b)?.position))
    }

    /// Every node other than `center` within `radius` (inclusive), in
    /// ascending id order.
    pub fn neighbors_within(
        &self,
        center: NodeId,
        radius: f64,
    ) -> Result<Vec<NodeId>, TopologyError> {
        let mut out = Vec::new();
        self.neighbors_within_into(center, radius, &mut out)?;
        Ok(out)
    }

    /// Like [`Topology::neighbors_within`] but reuses the caller's buffer.
    pub fn neighbors_within_into(
        &self,
        center: NodeId,
        radius: f64,
        out: &mut Vec<NodeId>,
    ) -> Result<(), TopologyError> {
        if radius.is_nan() || radius < 0.0 {
            return Err(TopologyError::InvalidRadius(radius));
        }
        let origin = self.node(center)?.position;
        out.clear();
        self.grid.candidates(&origin, radius, |n| {
            if n != center.0 && self.nodes[n as usize].position.distance(&origin) <= radius {
                out.push(NodeId(n));
            }
        });
        out.sort_unstable();
        Ok(())
    }

    pub fn move_node(&mut self, id: NodeId, to: Position) -> Result<(), TopologyError> {
        if !to.is_valid() {
            return Err(TopologyError::InvalidPosition);
        }
        if !self.field.contains(&to) {
            return Err(TopologyError::OutOfField(to, self.field));
        }
        let node = self
            .nodes
            .get_mut(id.index())
            .ok_or(TopologyError::UnknownNode(id))?;
        self.grid.remove(id.0, &node.position);
        node.position = to;
        self.grid.insert(id.0, &to);
        Ok(())
    }

    /// Gives `id` a first random-waypoint leg drawn from `rng`.
    pub fn init_waypoint(
        &mut self,
        id: NodeId,
        config: &WaypointConfig,
        rng: &mut SimRng,
    ) -> Result<(), TopologyError> {
        self.node(id)?;
        let (destination, speed) = config.draw(&self.field, rng);
        self.waypoints[id.index()] = Some(WaypointState {
            destination,
            speed,
            pause_until: SimTime::ZERO,
        });
        Ok(())
    }

    pub fn set_waypoint(&mut self, id: NodeId, state: WaypointState) -> Result<(), TopologyError> {
        self.node(id)?;
        self.waypoints[id.index()] = Some(state);
        Ok(())
    }

    pub fn waypoint(&self, id: NodeId) -> Option<&WaypointState> {
        self.waypoints.get(id.index()).and_then(Option::as_ref)
    }

    /// Moves `id` along its waypoint path for `dt` starting at `start` and
    /// updates the spatial index.
    pub fn step_waypoint(
        &mut self,
        id: NodeId,
        start: SimTime,
        dt: SimTime,
        config: &WaypointConfig,
        rng: &mut SimRng,
    ) -> Result<Position, TopologyError> {
        let pos = self.position(id)?;
        let state = self.waypoints[id.index()]
            .as_mut()
            .ok_or(TopologyError::NoWaypoint(id))?;
        let next = mobility::advance(pos, state, start, dt, &self.field, config, rng);
        self.move_node(id, next)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{node_stream, Stream};
    use rand::Rng;

    fn radio() -> RadioParams {
        RadioParams::default()
    }

    fn line(xs: &[f64]) -> Topology {
        let mut t = Topology::new(Field::new(1000.0, 1000.0), 150.0);
        for &x in xs {
            t.add_node(Position::new(x, 0.0, 0.0), radio()).unwrap();
        }
        t
    }

    #[test]
    fn sequential_ids_and_field_check() {
        let mut t = Topology::new(Field::new(10.0, 10.0), 5.0);
        assert_eq!(
            t.add_node(Position::new(1.0, 1.0, 0.0), radio()),
            Ok(NodeId(0))
        );
        assert_eq!(
            t.add_node(Position::new(1.0, 1.0, 0.0), radio()),
            Ok(NodeId(1))
        );
        assert!(matches!(
            t.add_node(Position::new(11.0, 1.0, 0.0), radio()),
            Err(TopologyError::OutOfField(..))
        ));
        assert_eq!(t.neighbors_within(NodeId(0), 0.0).unwrap(), vec![NodeId(1)]);
    }

    #[test]
    fn distances() {
        let mut t = Topology::new(Field::new(10.0, 10.0), 5.0);
        let a = t.add_node(Position::new(0.0, 0.0, 0.0), radio()).unwrap();
        let b = t.add_node(Position::new(3.0, 4.0, 0.0), radio()).unwrap();
        let c = t.add_node(Position::new(1.0, 1.0, 1.0), radio()).unwrap();
        let d = t.add_node(Position::new(2.0, 2.0, 2.0), radio()).unwrap();
        assert_eq!(t.distance(a, b).unwrap(), 5.0);
        assert_eq!(t.distance(a, a).unwrap(), 0.0);
        assert!((t.distance(c, d).unwrap() - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            t.distance(a, NodeId(9)),
            Err(TopologyError::UnknownNode(NodeId(9)))
        );
    }

    #[test]
    fn neighbor_query_on_a_line() {
        let t = line(&[0.0, 100.0, 250.0]);
        assert_eq!(
            t.neighbors_within(NodeId(0), 150.0).unwrap(),
            vec![NodeId(1)]
        );
        assert_eq!(
            t.neighbors_within(NodeId(1), 150.0).unwrap(),
            vec![NodeId(0), NodeId(2)]
        );
        assert!(t.neighbors_within(NodeId(0), -1.0).is_err());
    }

    #[test]
    fn waypoint_moves_linearly() {
        let mut t = line(&[0.0]);
        let cfg = WaypointConfig {
            min_speed: 2.0,
            max_speed: 2.0,
            pause: SimTime::ZERO,
        };
        t.set_waypoint(
            NodeId(0),
            WaypointState {
                destination: Position::new(10.0, 0.0, 0.0),
                speed: 2.0,
                pause_until: SimTime::ZERO,
            },
        )
        .unwrap();
        let mut rng = node_stream(1, 0, Stream::Mobility);
        let p = t
            .step_waypoint(
                NodeId(0),
                SimTime::ZERO,
                SimTime::from_secs(1),
                &cfg,
                &mut rng,
            )
            .unwrap();
        assert_eq!(p, Position::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn arrival_draws_next_leg_from_the_stream() {
        let mut t = line(&[0.0]);
        let cfg = WaypointConfig {
            min_speed: 1.0,
            max_speed: 3.0,
            pause: SimTime::ZERO,
        };
        t.set_waypoint(
            NodeId(0),
            WaypointState {
                destination: Position::new(10.0, 0.0, 0.0),
                speed: 2.0,
                pause_until: SimTime::ZERO,
            },
        )
        .unwrap();
        let mut rng = node_stream(9, 0, Stream::Mobility);
        let p = t
            .step_waypoint(
                NodeId(0),
                SimTime::ZERO,
                SimTime::from_secs(5),
                &cfg,
                &mut rng,
            )
            .unwrap();
        assert_eq!(p, Position::new(10.0, 0.0, 0.0));
        // independent replay of the stream
        let mut replay = node_stream(9, 0, Stream::Mobility);
        let x = replay.random::<f64>() * 1000.0;
        let y = replay.random::<f64>() * 1000.0;
        let speed = 1.0 + 2.0 * replay.random::<f64>();
        let wp = t.waypoint(NodeId(0)).unwrap();
        assert_eq!(wp.destination, Position::new(x, y, 0.0));
        assert_eq!(wp.speed, speed);
    }

    #[test]
    fn zero_minimum_speed_is_rejected() {
        let cfg = WaypointConfig {
            min_speed: 0.0,
            max_speed: 1.0,
            pause: SimTime::ZERO,
        };
        assert!(cfg.validate().is_err());
    }
}
