//! Reception pipeline. Stages run in a fixed order:
//! closure, tx gain, rx gain, received power, background noise, SNR, BER,
//! error allocation, ECC, threshold. Transmission and propagation delay are
//! applied when the transmission is planned.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::propagation::received_power;
use super::{Modulation, Packet, PipelineConfig, Propagation, RadioError, SPEED_OF_LIGHT};
use crate::kernel::SimTime;
use crate::topology::{NodeDescriptor, NodeId, Topology};

const BOLTZMANN: f64 = 1.380_649e-23;
const REFERENCE_TEMPERATURE_K: f64 = 290.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    None,
    BelowThreshold,
    OutOfRange,
    Uncorrectable,
    ReceiverDead,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::None => "none",
            DropReason::BelowThreshold => "below_threshold",
            DropReason::OutOfRange => "out_of_range",
            DropReason::Uncorrectable => "uncorrectable",
            DropReason::ReceiverDead => "receiver_dead",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptionOutcome {
    pub received: bool,
    pub rx_power: f64,
    pub snr: f64,
    pub ber: f64,
    pub bit_errors: u32,
    pub drop_reason: DropReason,
}

impl ReceptionOutcome {
    fn dropped(reason: DropReason) -> Self {
        ReceptionOutcome {
            received: false,
            rx_power: 0.0,
            snr: 0.0,
            ber: 0.0,
            bit_errors: 0,
            drop_reason: reason,
        }
    }
}

pub fn unit_disk_closure(d: f64, range: f64) -> bool {
    d <= range
}

pub fn snr(rx_power: f64, noise: f64) -> Result<f64, RadioError> {
    if noise > 0.0 {
        Ok(rx_power / noise)
    } else {
        Err(RadioError::ZeroNoise)
    }
}

/// Bit-error probability for the given SNR (linear ratio).
pub fn ber_from_snr(snr: f64, modulation: Modulation) -> f64 {
    let snr = if snr.is_nan() { 0.0 } else { snr.max(0.0) };
    match modulation {
        Modulation::Bpsk => 0.5 * libm::erfc(snr.sqrt()),
    }
}

/// Draws the number of corrupted bits for `packet` and stores it there.
pub fn apply_error_model<R: Rng + ?Sized>(packet: &mut Packet, ber: f64, rng: &mut R) -> u32 {
    let p = if ber.is_nan() {
        0.0
    } else {
        ber.clamp(0.0, 1.0)
    };
    let n = packet.size() as u64;
    let errors = if p == 0.0 || n == 0 {
        0
    } else if p == 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("p in (0,1)").sample(rng)
    };
    packet.bit_errors = errors as u32;
    packet.bit_errors
}

pub fn ecc_accept(bit_errors: u32, capability: u32) -> bool {
    bit_errors <= capability
}

/// Thermal noise kTB at 290 K with bandwidth equal to the bitrate.
pub fn thermal_noise(bitrate: f64) -> f64 {
    BOLTZMANN * REFERENCE_TEMPERATURE_K * bitrate
}

pub fn transmission_delay(bits: u32, bitrate: f64) -> SimTime {
    SimTime::from_secs_f64(bits as f64 / bitrate).unwrap_or(SimTime::MAX)
}

pub fn propagation_delay(d: f64) -> SimTime {
    SimTime::from_secs_f64(d / SPEED_OF_LIGHT).unwrap_or(SimTime::MAX)
}

/// Runs every enabled stage for one transmitter/receiver pair.
pub fn run_pipeline<R: Rng + ?Sized>(
    tx: &NodeDescriptor,
    rx: &NodeDescriptor,
    packet: &mut Packet,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> ReceptionOutcome {
    if !rx.alive {
        return ReceptionOutcome::dropped(DropReason::ReceiverDead);
    }
    let d = tx.position.distance(&rx.position);

    // closure
    let in_reach = match cfg.closure {
        Propagation::UnitDisk => unit_disk_closure(d, tx.radio.disk_range),
        // path-loss models are singular at zero distance
        Propagation::FreeSpace | Propagation::TwoRay => d > 0.0,
    };
    if !in_reach {
        return ReceptionOutcome::dropped(DropReason::OutOfRange);
    }

    // gains and received power
    let rx_power = match received_power(cfg, &tx.radio, &rx.radio, d) {
        Ok(p) => p,
        Err(_) => return ReceptionOutcome::dropped(DropReason::OutOfRange),
    };

    // background noise
    let mut noise = rx.radio.noise_floor;
    if cfg.bkgnoise_enabled {
        noise += thermal_noise(rx.radio.bitrate);
    }

    let snr_value = if cfg.snr_enabled {
        snr(rx_power, noise).unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    let ber = if cfg.ber_enabled {
        ber_from_snr(snr_value, cfg.modulation)
    } else {
        0.0
    };
    let bit_errors = if cfg.error_enabled {
        apply_error_model(packet, ber, rng)
    } else {
        packet.bit_errors = 0;
        0
    };
    // without an ECC stage any corrupted bit loses the packet
    let capability = if cfg.ecc_enabled {
        cfg.ecc_capability
    } else {
        0
    };
    let correctable = ecc_accept(bit_errors, capability);
    let above = rx_power >= rx.radio.rx_threshold;

    let drop_reason = if !correctable {
        DropReason::Uncorrectable
    } else if !above {
        DropReason::BelowThreshold
    } else {
        DropReason::None
    };
    ReceptionOutcome {
        received: drop_reason == DropReason::None,
        rx_power,
        snr: snr_value,
        ber,
        bit_errors,
        drop_reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedArrival {
    pub receiver: NodeId,
    pub at: SimTime,
    pub distance: f64,
}

/// Candidate receivers of a transmission from `src` starting at `now`, with
/// arrival times (end of transmission plus propagation), in ascending
/// receiver order.
pub fn plan_transmission(
    topology: &Topology,
    cfg: &PipelineConfig,
    src: NodeId,
    packet: &Packet,
    now: SimTime,
    scratch: &mut Vec<NodeId>,
) -> Result<Vec<PlannedArrival>, RadioError> {
    if packet.size() == 0 {
        return Err(RadioError::EmptyPacket);
    }
    let tx = topology.node(src)?;
    let radius = super::coverage_radius(cfg, &tx.radio);
    topology.neighbors_within_into(src, radius, scratch)?;
    let sent = now
        .checked_add(transmission_delay(packet.size(), tx.radio.bitrate))
        .ok_or(RadioError::TimeOverflow)?;
    scratch
        .iter()
        .map(|&rx| {
            let d = tx.position.distance(&topology.node(rx)?.position);
            let at = sent
                .checked_add(propagation_delay(d))
                .ok_or(RadioError::TimeOverflow)?;
            Ok(PlannedArrival {
                receiver: rx,
                at,
                distance: d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{Address, RadioParams};
    use crate::rng::{node_stream, Stream};
    use crate::topology::{Field, Position};

    fn desc(id: u32, x: f64, radio: RadioParams) -> NodeDescriptor {
        NodeDescriptor {
            id: NodeId(id),
            position: Position::new(x, 0.0, 0.0),
            radio,
            alive: true,
        }
    }

    fn packet(bits: u32) -> Packet {
        Packet::new(0, NodeId(0), Address::Broadcast, bits, SimTime::ZERO)
    }

    #[test]
    fn snr_and_ber_values() {
        assert_eq!(snr(1e-9, 1e-12).unwrap(), 1e-9 / 1e-12);
        assert_eq!(snr(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(snr(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(snr(1.0, 0.0), Err(RadioError::ZeroNoise));
        assert_eq!(ber_from_snr(0.0, Modulation::Bpsk), 0.5);
        let b100 = ber_from_snr(100.0, Modulation::Bpsk);
        assert!(b100 < 1e-20 && b100 < ber_from_snr(10.0, Modulation::Bpsk));
    }

    #[test]
    fn closure_and_ecc_boundaries() {
        assert!(unit_disk_closure(0.0, 150.0));
        assert!(unit_disk_closure(150.0, 150.0));
        assert!(!unit_disk_closure(150.0 + 1e-9, 150.0));
        assert!(ecc_accept(0, 0));
        assert!(ecc_accept(2, 2));
        assert!(!ecc_accept(3, 2));
    }

    #[test]
    fn error_model_extremes() {
        let mut rng = node_stream(1, 0, Stream::Radio);
        let mut p = packet(1000);
        assert_eq!(apply_error_model(&mut p, 0.0, &mut rng), 0);
        assert_eq!(apply_error_model(&mut p, 1.0, &mut rng), 1000);
        assert_eq!(p.bit_errors, 1000);
    }

    #[test]
    fn pure_unit_disk_reception() {
        let radio = RadioParams {
            disk_range: 150.0,
            rx_threshold: 0.0,
            ..RadioParams::default()
        };
        let mut rng = node_stream(1, 0, Stream::Radio);
        let cfg = PipelineConfig::unit_disk();
        let out = run_pipeline(
            &desc(0, 0.0, radio),
            &desc(1, 150.0, radio),
            &mut packet(100),
            &cfg,
            &mut rng,
        );
        assert!(out.received);
        assert_eq!(out.drop_reason, DropReason::None);
        let out = run_pipeline(
            &desc(0, 0.0, radio),
            &desc(1, 151.0, radio),
            &mut packet(100),
            &cfg,
            &mut rng,
        );
        assert_eq!(out.drop_reason, DropReason::OutOfRange);
    }

    #[test]
    fn free_space_below_threshold() {
        let radio = RadioParams {
            tx_power: 1.0,
            tx_gain: 1.0,
            rx_gain: 1.0,
            wavelength: 0.125,
            system_loss: 1.0,
            rx_threshold: 1e-8,
            ..RadioParams::default()
        };
        let mut rng = node_stream(1, 0, Stream::Radio);
        let cfg = PipelineConfig::with_closure(Propagation::FreeSpace);
        let out = run_pipeline(
            &desc(0, 0.0, radio),
            &desc(1, 100.0, radio),
            &mut packet(100),
            &cfg,
            &mut rng,
        );
        assert!(!out.received);
        assert_eq!(out.drop_reason, DropReason::BelowThreshold);
        assert!((out.rx_power - 9.894_646_840_072_048e-9).abs() < 1e-20);
    }

    #[test]
    fn dead_receiver_drops_regardless_of_power() {
        let radio = RadioParams::default();
        let mut rx = desc(1, 1.0, radio);
        rx.alive = false;
        let mut rng = node_stream(1, 0, Stream::Radio);
        let out = run_pipeline(
            &desc(0, 0.0, radio),
            &rx,
            &mut packet(100),
            &PipelineConfig::unit_disk(),
            &mut rng,
        );
        assert_eq!(out.drop_reason, DropReason::ReceiverDead);
        assert!(!out.received);
    }

    #[test]
    fn planned_arrival_times() {
        let radio = RadioParams {
            disk_range: 150.0,
            bitrate: 1e6,
            ..RadioParams::default()
        };
        let mut topo = Topology::new(Field::new(1000.0, 10.0), 150.0);
        topo.add_node(Position::new(0.0, 0.0, 0.0), radio).unwrap();
        topo.add_node(Position::new(100.0, 0.0, 0.0), radio)
            .unwrap();
        topo.add_node(Position::new(350.0, 0.0, 0.0), radio)
            .unwrap();
        let now = SimTime::from_secs(1);
        let mut scratch = Vec::new();
        let plan = plan_transmission(
            &topo,
            &PipelineConfig::unit_disk(),
            NodeId(0),
            &packet(1000),
            now,
            &mut scratch,
        )
        .unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].receiver, NodeId(1));
        // 1000 bits at 1 Mb/s plus 100 m at c
        let expected = 1.0 + 1e-3 + 100.0 / SPEED_OF_LIGHT;
        let got = plan[0].at.as_nanos() as f64 * 1e-9;
        assert!((got - expected).abs() <= 1e-9, "{got} vs {expected}");
        // node at 250 m from node 1 is out of range
        let plan = plan_transmission(
            &topo,
            &PipelineConfig::unit_disk(),
            NodeId(1),
            &packet(1000),
            now,
            &mut scratch,
        )
        .unwrap();
        assert_eq!(
            plan.iter().map(|a| a.receiver).collect::<Vec<_>>(),
            vec![NodeId(0)]
        );
    }
}
