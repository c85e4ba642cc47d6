//! Random-waypoint mobility: move in a straight line toward a uniformly
//! drawn destination at a uniformly drawn speed, pause, repeat.

use rand::Rng;

use super::{Field, Position};
use crate::kernel::SimTime;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointConfig {
    pub min_speed: f64,
    pub max_speed: f64,
    pub pause: SimTime,
}

impl WaypointConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_speed.is_finite() && self.min_speed > 0.0) {
            return Err(format!(
                "minimum speed must be > 0 m/s, got {}",
                self.min_speed
            ));
        }
        if !(self.max_speed.is_finite() && self.max_speed >= self.min_speed) {
            return Err(format!(
                "maximum speed {} must be finite and >= minimum speed {}",
                self.max_speed, self.min_speed
            ));
        }
        Ok(())
    }

    pub(crate) fn draw(&self, field: &Field, rng: &mut SimRng) -> (Position, f64) {
        let x = rng.random::<f64>() * field.width;
        let y = rng.random::<f64>() * field.height;
        let speed = self.min_speed + (self.max_speed - self.min_speed) * rng.random::<f64>();
        (Position::new(x, y, 0.0), speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointState {
    pub destination: Position,
    pub speed: f64,
    pub pause_until: SimTime,
}

/// Advances `pos` over `[start, start + dt)` and returns the new position.
pub(crate) fn advance(
    pos: Position,
    state: &mut WaypointState,
    start: SimTime,
    dt: SimTime,
    field: &Field,
    config: &WaypointConfig,
    rng: &mut SimRng,
) -> Position {
    let end = start.checked_add(dt).unwrap_or(SimTime::MAX);
    let mut t = start;
    let mut pos = pos;
    // bounded so a degenerate zero-length leg cannot spin forever
    for _ in 0..10_000 {
        if t >= end {
            break;
        }
        if state.pause_until > t {
            t = state.pause_until.min(end);
            continue;
        }
        let remaining = (end.as_nanos() - t.as_nanos()) as f64 * 1e-9;
        let to_go = pos.planar_distance(&state.destination);
        let reach = state.speed * remaining;
        if reach < to_go {
            let f = reach / to_go;
            pos = Position::new(
                pos.x + (state.destination.x - pos.x) * f,
                pos.y + (state.destination.y - pos.y) * f,
                pos.z,
            );
            break;
        }
        pos = Position::new(state.destination.x, state.destination.y, pos.z);
        let leg = SimTime::from_secs_f64(to_go / state.speed).unwrap_or(SimTime::ZERO);
        let arrived = t.checked_add(leg).unwrap_or(end).min(end);
        state.pause_until = arrived.checked_add(config.pause).unwrap_or(SimTime::MAX);
        let (dest, speed) = config.draw(field, rng);
        state.destination = dest;
        state.speed = speed;
        t = arrived;
    }
    field.clamp(pos)
}
