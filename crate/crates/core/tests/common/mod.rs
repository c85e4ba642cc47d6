//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::convert::Infallible;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits_shim::ToF64;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use wsnsim::kernel::{EventHandle, EventKind, Kernel, KernelConfig, SimTime, Target};
use wsnsim::radio::RadioParams;
use wsnsim::topology::{NodeId, Position};

// ---------------------------------------------------------------- kernel

const NODES: u32 = 6;

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Schedule {
        at_ms: u64,
        node: Option<u32>,
        label: u64,
    },
    Cancel {
        index: usize,
    },
}

pub fn random_workload(rng: &mut Pcg64Mcg, len: usize) -> Vec<Op> {
    (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                Op::Cancel {
                    index: rng.random_range(0..len),
                }
            } else {
                Op::Schedule {
                    at_ms: rng.random_range(0..2500),
                    node: rng.random_bool(0.8).then(|| rng.random_range(0..NODES)),
                    label: rng.random(),
                }
            }
        })
        .collect()
}

/// Follow-up events an event with `label` spawns when handled.
fn follow_ups(label: u64, depth: u32, target: Option<u32>) -> Vec<(u64, Option<u32>, u64)> {
    let mut out = Vec::new();
    if depth >= 3 {
        return out;
    }
    if label.is_multiple_of(3) {
        // zero delay allowed for self-targeted work
        out.push((label % 4, target, label.wrapping_mul(7).wrapping_add(1)));
    }
    if label.is_multiple_of(5) {
        let next = target.map_or(0, |t| (t + 1) % NODES);
        out.push((
            1 + label % 9,
            Some(next),
            label.wrapping_mul(13).wrapping_add(2),
        ));
    }
    out
}

fn cancel_index(label: u64, handles: usize) -> Option<usize> {
    (label.is_multiple_of(11) && handles > 0).then(|| (label / 11) as usize % handles)
}

/// Dispatch trace of the real kernel: (time ns, label, cancel results).
pub fn run_kernel(ops: &[Op]) -> (Vec<(u64, u64)>, Vec<bool>) {
    let mut k: Kernel<(u64, u32)> = Kernel::new(KernelConfig {
        bucket_width: SimTime::from_micros(700),
        wheel_slots: 64,
    });
    let mut handles: Vec<EventHandle> = Vec::new();
    let mut cancels = Vec::new();
    for op in ops {
        match *op {
            Op::Schedule { at_ms, node, label } => {
                let target = node.map_or(Target::Kernel, |n| Target::Node(NodeId(n)));
                handles.push(
                    k.schedule(
                        SimTime::from_millis(at_ms),
                        target,
                        EventKind::User(0),
                        (label, 0),
                    )
                    .unwrap(),
                );
            }
            Op::Cancel { index } => {
                if let Some(h) = handles.get(index) {
                    cancels.push(k.cancel(*h));
                }
            }
        }
    }
    let mut order = Vec::new();
    k.run_until(SimTime::from_secs(10), |k, ev| {
        let (label, depth) = ev.payload;
        // peeking may discard cancelled events beyond the current time
        k.next_event_time();
        order.push((ev.time.as_nanos(), label));
        if let Some(i) = cancel_index(label, handles.len()) {
            cancels.push(k.cancel(handles[i]));
        }
        for (delay_ms, node, next) in follow_ups(label, depth, ev.target.node().map(|n| n.0)) {
            let target = node.map_or(Target::Kernel, |n| Target::Node(NodeId(n)));
            let at = ev.time.checked_add(SimTime::from_millis(delay_ms)).unwrap();
            handles.push(
                k.schedule(at, target, EventKind::User(0), (next, depth + 1))
                    .unwrap(),
            );
        }
        Ok::<(), Infallible>(())
    })
    .unwrap();
    (order, cancels)
}

/// Naive oracle: pending events in a flat list, each step scans for the
/// smallest (time, creation time, zero-delay depth, creator, creator's
/// counter).
pub fn run_oracle(ops: &[Op]) -> (Vec<(u64, u64)>, Vec<bool>) {
    #[derive(Clone)]
    struct Entry {
        key: (u64, u64, u32, u32, u32),
        label: u64,
        depth: u32,
        node: Option<u32>,
        handle: usize,
    }
    let mut counters = std::collections::HashMap::<u32, u32>::new();
    let mut next_key = |time: u64, created: u64, zero: u32, creator: u32| {
        let c = counters.entry(creator).or_insert(0);
        let key = (time, created, zero, creator, *c);
        *c += 1;
        key
    };
    let mut pending: Vec<Entry> = Vec::new();
    let mut handles = 0usize;
    let mut cancels = Vec::new();
    for op in ops {
        match *op {
            Op::Schedule { at_ms, node, label } => {
                pending.push(Entry {
                    key: next_key(at_ms * 1_000_000, 0, 0, u32::MAX),
                    label,
                    depth: 0,
                    node,
                    handle: handles,
                });
                handles += 1;
            }
            Op::Cancel { index } => {
                if index < handles {
                    let before = pending.len();
                    pending.retain(|e| e.handle != index);
                    cancels.push(pending.len() != before);
                }
            }
        }
    }
    let mut order = Vec::new();
    let stop = 10_000_000_000u64;
    while let Some(i) = (0..pending.len()).min_by_key(|&i| pending[i].key) {
        if pending[i].key.0 > stop {
            break;
        }
        let e = pending.remove(i);
        let now = e.key.0;
        order.push((now, e.label));
        if let Some(idx) = cancel_index(e.label, handles) {
            let before = pending.len();
            pending.retain(|p| p.handle != idx);
            cancels.push(pending.len() != before);
        }
        let creator = e.node.unwrap_or(u32::MAX);
        let zero = if e.key.1 == now { e.key.2 + 1 } else { 0 };
        for (delay_ms, node, next) in follow_ups(e.label, e.depth, e.node) {
            pending.push(Entry {
                key: next_key(now + delay_ms * 1_000_000, now, zero, creator),
                label: next,
                depth: e.depth + 1,
                node,
                handle: handles,
            });
            handles += 1;
        }
    }
    (order, cancels)
}

pub fn kernel_agrees(seed: u64) -> Result<(), String> {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let len = rng.random_range(1..120);
    let ops = random_workload(&mut rng, len);
    let real = run_kernel(&ops);
    let oracle = run_oracle(&ops);
    if real == oracle {
        Ok(())
    } else {
        Err(format!("seed {seed}: kernel and oracle disagree"))
    }
}

// ------------------------------------------------------------ propagation

/// 50 decimal digits of pi.
const PI_50: &str = "314159265358979323846264338327950288419716939937510";

fn pi() -> BigRational {
    let digits: BigInt = PI_50.parse().unwrap();
    BigRational::new(digits, BigInt::from(10u32).pow(50))
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Free-space received power in exact rational arithmetic (pi to 50
/// digits), rounded to f64 at the end.
pub fn free_space_oracle(p: &RadioParams, d: f64) -> f64 {
    let four_pi = exact(4.0) * pi();
    let num = exact(p.tx_power) * exact(p.tx_gain) * exact(p.rx_gain) * exact(p.wavelength).pow(2);
    let den = four_pi.pow(2) * exact(d).pow(2) * exact(p.system_loss);
    (num / den).to_f64_lossy()
}

pub fn two_ray_oracle(p: &RadioParams, d: f64) -> f64 {
    let num = exact(p.tx_power)
        * exact(p.tx_gain)
        * exact(p.rx_gain)
        * exact(p.tx_height).pow(2)
        * exact(p.rx_height).pow(2);
    let den = exact(d).pow(4) * exact(p.system_loss);
    (num / den).to_f64_lossy()
}

mod num_traits_shim {
    use num_bigint::BigInt;
    use num_rational::BigRational;

    pub trait ToF64 {
        fn to_f64_lossy(&self) -> f64;
    }

    impl ToF64 for BigRational {
        /// Scales to a 64-bit integer quotient before the final division, so
        /// the result is accurate to well below 1e-15 relative.
        fn to_f64_lossy(&self) -> f64 {
            let (n, d) = (self.numer(), self.denom());
            let shift = n.bits() as i64 - d.bits() as i64 - 64;
            let q: BigInt = if shift >= 0 {
                n / (d << shift as usize)
            } else {
                (n << (-shift) as usize) / d
            };
            let (_, digits) = q.to_u64_digits();
            let mut v = 0f64;
            for limb in digits.iter().rev() {
                v = v * 18446744073709551616.0 + *limb as f64;
            }
            v * 2f64.powi(shift as i32)
        }
    }
}

pub fn random_radio(rng: &mut Pcg64Mcg) -> RadioParams {
    RadioParams {
        tx_power: 10f64.powf(rng.random_range(-6.0..1.0)),
        tx_gain: rng.random_range(0.1..10.0),
        rx_gain: rng.random_range(0.1..10.0),
        wavelength: rng.random_range(0.01..3.0),
        system_loss: rng.random_range(1.0..5.0),
        tx_height: rng.random_range(0.1..30.0),
        rx_height: rng.random_range(0.1..30.0),
        ..RadioParams::default()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Least-squares slope and worst relative residual of `ys` against `xs`.
pub fn fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| ((icept + slope * x - y) / y).abs())
        .fold(0.0, f64::max);
    (slope, resid)
}

// ---------------------------------------------------------------- graphs

/// Uniform points in a square.
pub fn random_points(rng: &mut Pcg64Mcg, n: usize, side: f64) -> Vec<Position> {
    (0..n)
        .map(|_| Position::new(rng.random::<f64>() * side, rng.random::<f64>() * side, 0.0))
        .collect()
}

/// All-pairs unit-disk adjacency, neighbor lists ascending.
pub fn brute_adjacency(points: &[Position], range: f64) -> Vec<Vec<u32>> {
    (0..points.len())
        .map(|i| {
            (0..points.len())
                .filter(|&j| j != i && points[i].distance(&points[j]) <= range)
                .map(|j| j as u32)
                .collect()
        })
        .collect()
}

/// Hop distances from `src`; `None` when unreachable.
pub fn bfs(adj: &[Vec<u32>], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(du + 1);
                q.push_back(v as usize);
            }
        }
    }
    dist
}

// ------------------------------------------------------------- scenarios

/// Deterministic scenarios exercising different subsystems, for
/// partition-equivalence checks.
pub fn federation_scenarios() -> Vec<(&'static str, String)> {
    let base = "stop_s = 20\nfield.width_m = 1000\nfield.height_m = 600\n";
    vec![
        (
            "unit-disk flood",
            format!("seed = 1\n{base}nodes.random.count = 300\ndisk_range_m = 120\n"),
        ),
        (
            "free-space flood with bit errors",
            format!(
                "seed = 2\n{base}nodes.random.count = 200\npropagation = free-space\n\
                 tx_power_w = 0.01\nrx_threshold_w = 1e-11\nnoise_floor_w = 2e-12\n\
                 tx_gain_enabled = true\nrx_gain_enabled = true\npower_enabled = true\n\
                 bkgnoise_enabled = true\nsnr_enabled = true\nber_enabled = true\n\
                 error_enabled = true\necc_enabled = true\necc_capability = 2\n"
            ),
        ),
        (
            "routed reports",
            format!(
                "seed = 3\n{base}nodes.random.count = 250\ndisk_range_m = 130\nprocess = report\n\
                 report.source = 5\nreport.sink = 200\nreport.period_s = 0.25\nreport.count = 40\n"
            ),
        ),
        (
            "bucket energy with deaths",
            format!(
                "seed = 4\n{base}nodes.random.count = 400\ndisk_range_m = 110\n\
                 energy.model = bucket\nenergy.capacity_j = 0.02\nenergy.tx_cost_j = 0.01\n\
                 energy.rx_cost_j = 0.004\n"
            ),
        ),
        (
            "state energy with sampling",
            format!(
                "seed = 5\n{base}nodes.random.count = 150\npropagation = two-ray\n\
                 tx_power_w = 0.001\nrx_threshold_w = 1e-12\nenergy.model = state\n\
                 energy.capacity_j = 0.012\nenergy.draw.idle_w = 0.001\nenergy.draw.tx_w = 0.05\n\
                 energy.sample_period_s = 2\nflood.start_s = 3\nlog.filter = nodes=0-99\n"
            ),
        ),
    ]
}
