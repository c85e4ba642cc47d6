use std::f64::consts::PI;

use super::{PipelineConfig, Propagation, RadioError, RadioParams};

fn check_distance(d: f64) -> Result<(), RadioError> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(RadioError::ZeroDistance(d))
    }
}

/// Friis free-space received power, Pt·Gt·Gr·λ² / ((4π)²·d²·L).
pub fn free_space_rx_power(p: &RadioParams, d: f64) -> Result<f64, RadioError> {
    check_distance(d)?;
    Ok(free_space(
        p.tx_power * p.tx_gain * p.rx_gain,
        p.wavelength,
        p.system_loss,
        d,
    ))
}

/// Two-ray ground reflection received power, Pt·Gt·Gr·ht²·hr² / (d⁴·L).
pub fn two_ray_rx_power(p: &RadioParams, d: f64) -> Result<f64, RadioError> {
    check_distance(d)?;
    Ok(two_ray(
        p.tx_power * p.tx_gain * p.rx_gain,
        p.tx_height,
        p.rx_height,
        p.system_loss,
        d,
    ))
}

pub(crate) fn free_space(eirp_gain: f64, wavelength: f64, loss: f64, d: f64) -> f64 {
    let four_pi = 4.0 * PI;
    eirp_gain * wavelength * wavelength / (four_pi * four_pi * d * d * loss)
}

pub(crate) fn two_ray(eirp_gain: f64, ht: f64, hr: f64, loss: f64, d: f64) -> f64 {
    let d2 = d * d;
    eirp_gain * ht * ht * hr * hr / (d2 * d2 * loss)
}

pub(crate) fn effective_gains(
    cfg: &PipelineConfig,
    tx: &RadioParams,
    rx: &RadioParams,
) -> (f64, f64) {
    let gt = if cfg.tx_gain_enabled { tx.tx_gain } else { 1.0 };
    let gr = if cfg.rx_gain_enabled { rx.rx_gain } else { 1.0 };
    (gt, gr)
}

/// Received power from `tx` at `rx` over distance `d`, honoring the gain
/// and power stage switches. `d` must be positive unless the closure is
/// unit-disk with the power stage off.
pub(crate) fn received_power(
    cfg: &PipelineConfig,
    tx: &RadioParams,
    rx: &RadioParams,
    d: f64,
) -> Result<f64, RadioError> {
    let (gt, gr) = effective_gains(cfg, tx, rx);
    let eirp_gain = tx.tx_power * gt * gr;
    match cfg.closure {
        Propagation::UnitDisk if !cfg.power_enabled => Ok(eirp_gain),
        Propagation::UnitDisk | Propagation::FreeSpace => {
            check_distance(d)?;
            Ok(free_space(eirp_gain, tx.wavelength, tx.system_loss, d))
        }
        Propagation::TwoRay => {
            check_distance(d)?;
            Ok(two_ray(
                eirp_gain,
                tx.tx_height,
                rx.rx_height,
                tx.system_loss,
                d,
            ))
        }
    }
}

/// Largest distance at which a transmission is even considered. For the
/// path-loss models this is where received power falls to a tenth of the
/// reception threshold, so no receivable node is ever excluded. Radios are
/// assumed homogeneous (`params` plays both ends).
pub fn coverage_radius(cfg: &PipelineConfig, params: &RadioParams) -> f64 {
    let (gt, gr) = effective_gains(cfg, params, params);
    let eirp_gain = params.tx_power * gt * gr;
    let cutoff = params.rx_threshold / 10.0;
    match cfg.closure {
        Propagation::UnitDisk => params.disk_range,
        _ if cutoff <= 0.0 => f64::INFINITY,
        Propagation::FreeSpace => {
            // Pr(d) = k / d^2
            let k = free_space(eirp_gain, params.wavelength, params.system_loss, 1.0);
            (k / cutoff).sqrt()
        }
        Propagation::TwoRay => {
            // Pr(d) = k / d^4
            let k = two_ray(
                eirp_gain,
                params.tx_height,
                params.rx_height,
                params.system_loss,
                1.0,
            );
            (k / cutoff).sqrt().sqrt()
        }
    }
}

/// Whether a packet from `tx` would clear the deterministic stages (closure
/// and reception threshold) at distance `d`. Used to build the routing
/// connectivity view.
pub fn receivable(cfg: &PipelineConfig, tx: &RadioParams, rx: &RadioParams, d: f64) -> bool {
    if cfg.closure == Propagation::UnitDisk && d > tx.disk_range {
        return false;
    }
    match received_power(cfg, tx, rx, d) {
        Ok(p) => p >= rx.rx_threshold,
        Err(_) => false,
    }
}
