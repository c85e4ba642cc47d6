//! Physical layer: radio parameters, packets, path-loss models and the
//! staged reception pipeline.

mod packet;
mod pipeline;
mod propagation;

pub use packet::{Address, Header, Packet};
pub use pipeline::{
    apply_error_model, ber_from_snr, ecc_accept, plan_transmission, propagation_delay,
    run_pipeline, snr, thermal_noise, transmission_delay, unit_disk_closure, DropReason,
    PlannedArrival, ReceptionOutcome,
};
pub use propagation::{coverage_radius, free_space_rx_power, receivable, two_ray_rx_power};

use std::fmt;
use std::str::FromStr;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadioError {
    #[error("distance must be positive for path-loss models (got {0} m)")]
    ZeroDistance(f64),
    #[error("noise power must be positive")]
    ZeroNoise,
    #[error("packet has zero size")]
    EmptyPacket,
    #[error("arrival time overflows the simulation clock")]
    TimeOverflow,
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
}

/// Transceiver parameters. Powers in watts, lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub tx_power: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub wavelength: f64,
    pub system_loss: f64,
    pub tx_height: f64,
    pub rx_height: f64,
    pub rx_threshold: f64,
    pub disk_range: f64,
    pub noise_floor: f64,
    /// bits per second
    pub bitrate: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            tx_power: 1e-3,
            tx_gain: 1.0,
            rx_gain: 1.0,
            wavelength: 0.125,
            system_loss: 1.0,
            tx_height: 1.5,
            rx_height: 1.5,
            rx_threshold: 0.0,
            disk_range: 100.0,
            noise_floor: 1e-13,
            bitrate: 250_000.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |name: &str, value: f64, ok: bool, rule: &str| {
            if !(value.is_finite() && ok) {
                errs.push(format!("{name} must be {rule} (got {value})"));
            }
        };
        check("tx_power_w", self.tx_power, self.tx_power >= 0.0, ">= 0");
        check("tx_gain", self.tx_gain, self.tx_gain >= 0.0, ">= 0");
        check("rx_gain", self.rx_gain, self.rx_gain >= 0.0, ">= 0");
        check(
            "wavelength_m",
            self.wavelength,
            self.wavelength > 0.0,
            "> 0",
        );
        check(
            "system_loss",
            self.system_loss,
            self.system_loss >= 1.0,
            ">= 1",
        );
        check("tx_height_m", self.tx_height, self.tx_height > 0.0, "> 0");
        check("rx_height_m", self.rx_height, self.rx_height > 0.0, "> 0");
        check(
            "rx_threshold_w",
            self.rx_threshold,
            self.rx_threshold >= 0.0,
            ">= 0",
        );
        check(
            "disk_range_m",
            self.disk_range,
            self.disk_range > 0.0,
            "> 0",
        );
        check(
            "noise_floor_w",
            self.noise_floor,
            self.noise_floor >= 0.0,
            ">= 0",
        );
        check("bitrate_bps", self.bitrate, self.bitrate > 0.0, "> 0");
        errs
    }
}

/// Which model decides reachability and path loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    UnitDisk,
    FreeSpace,
    TwoRay,
}

impl Propagation {
    pub fn name(self) -> &'static str {
        match self {
            Propagation::UnitDisk => "unit-disk",
            Propagation::FreeSpace => "free-space",
            Propagation::TwoRay => "two-ray",
        }
    }
}

impl fmt::Display for Propagation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Propagation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit-disk" => Ok(Propagation::UnitDisk),
            "free-space" => Ok(Propagation::FreeSpace),
            "two-ray" => Ok(Propagation::TwoRay),
            other => Err(format!("unknown propagation model '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Bpsk,
}

impl FromStr for Modulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bpsk" => Ok(Modulation::Bpsk),
            other => Err(format!("unknown modulation '{other}'")),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("bpsk")
    }
}

/// Stage switches for the reception pipeline.
///
/// A disabled gain stage means unit gain. For the unit-disk closure the
/// power stage applies free-space loss inside the disk when enabled and no
/// loss when disabled; path-loss closures always compute their own power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub closure: Propagation,
    pub tx_gain_enabled: bool,
    pub rx_gain_enabled: bool,
    pub power_enabled: bool,
    pub bkgnoise_enabled: bool,
    pub snr_enabled: bool,
    pub ber_enabled: bool,
    pub error_enabled: bool,
    pub ecc_enabled: bool,
    pub ecc_capability: u32,
    pub modulation: Modulation,
}

impl PipelineConfig {
    /// Pure unit-disk mode: every optional stage off.
    pub fn unit_disk() -> Self {
        PipelineConfig {
            closure: Propagation::UnitDisk,
            tx_gain_enabled: false,
            rx_gain_enabled: false,
            power_enabled: false,
            bkgnoise_enabled: false,
            snr_enabled: false,
            ber_enabled: false,
            error_enabled: false,
            ecc_enabled: false,
            ecc_capability: 0,
            modulation: Modulation::Bpsk,
        }
    }

    pub fn with_closure(closure: Propagation) -> Self {
        PipelineConfig {
            closure,
            tx_gain_enabled: true,
            rx_gain_enabled: true,
            power_enabled: true,
            ..Self::unit_disk()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.ber_enabled && !self.snr_enabled {
            errs.push("ber_enabled requires snr_enabled".to_string());
        }
        if self.error_enabled && !self.ber_enabled {
            errs.push("error_enabled requires ber_enabled".to_string());
        }
        if self.ecc_enabled && !self.error_enabled {
            errs.push("ecc_enabled requires error_enabled".to_string());
        }
        errs
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::unit_disk()
    }
}
