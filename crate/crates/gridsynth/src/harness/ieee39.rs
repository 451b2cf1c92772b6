//! Seeded 39-bus test case generation.
//!
//! The branch table below is the standard New England 39-bus line data
//! (per-unit reactances on a 100 MVA base); susceptances are `1/x`, scaled
//! per line within the configured band. One synchronous generator sits at
//! bus 31, inverter-based resources at buses 30 and 32–39, and every other
//! bus is a zero-damping load bus. A weak tie at one load bus (modelled as
//! a shunt susceptance) anchors the otherwise free angle reference so the
//! open loop is strictly stable, as data collection requires.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grid::case::{BusDevice, BusRecord, CaseFile, LineRecord, OMEGA0_60HZ};
use crate::grid::{build_continuous, kron_reduce, GridCase};

/// (from, to, reactance) for the nominal 39-bus network.
const LINES: [(u32, u32, f64); 46] = [
    (1, 2, 0.0411),
    (1, 39, 0.0250),
    (2, 3, 0.0151),
    (2, 25, 0.0086),
    (2, 30, 0.0181),
    (3, 4, 0.0213),
    (3, 18, 0.0133),
    (4, 5, 0.0128),
    (4, 14, 0.0129),
    (5, 6, 0.0026),
    (5, 8, 0.0112),
    (6, 7, 0.0092),
    (6, 11, 0.0082),
    (6, 31, 0.0250),
    (7, 8, 0.0046),
    (8, 9, 0.0363),
    (9, 39, 0.0250),
    (10, 11, 0.0043),
    (10, 13, 0.0043),
    (10, 32, 0.0200),
    (12, 11, 0.0435),
    (12, 13, 0.0435),
    (13, 14, 0.0101),
    (14, 15, 0.0217),
    (15, 16, 0.0094),
    (16, 17, 0.0089),
    (16, 19, 0.0195),
    (16, 21, 0.0135),
    (16, 24, 0.0059),
    (17, 18, 0.0082),
    (17, 27, 0.0173),
    (19, 20, 0.0138),
    (19, 33, 0.0142),
    (20, 34, 0.0180),
    (21, 22, 0.0140),
    (22, 23, 0.0096),
    (22, 35, 0.0143),
    (23, 24, 0.0350),
    (23, 36, 0.0272),
    (25, 26, 0.0323),
    (25, 37, 0.0232),
    (26, 27, 0.0147),
    (26, 28, 0.0474),
    (26, 29, 0.0625),
    (28, 29, 0.0151),
    (29, 38, 0.0156),
];

const SG_BUS: u32 = 31;
const IBR_BUSES: [u32; 9] = [30, 32, 33, 34, 35, 36, 37, 38, 39];

/// Sampling bounds for the randomized device and network parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseBounds {
    pub inertia: (f64, f64),
    pub damping: (f64, f64),
    pub sg_droop: (f64, f64),
    pub sg_reheat: (f64, f64),
    pub sg_split: (f64, f64),
    pub ibr_tracking: (f64, f64),
    /// Multiplicative band applied to each nominal line susceptance.
    pub line_scale: (f64, f64),
    /// Weak external tie grounding the angle reference.
    pub anchor_susceptance: (f64, f64),
    pub anchor_bus: u32,
    pub omega0: f64,
    /// Redraw limit for open-loop-unstable parameter sets.
    pub max_redraws: usize,
}

impl Default for CaseBounds {
    fn default() -> Self {
        CaseBounds {
            inertia: (2.0, 8.0),
            damping: (0.5, 2.0),
            sg_droop: (15.0, 25.0),
            sg_reheat: (5.0, 10.0),
            sg_split: (0.2, 0.5),
            ibr_tracking: (0.1, 0.5),
            line_scale: (0.8, 1.2),
            anchor_susceptance: (0.8, 1.2),
            anchor_bus: 1,
            omega0: OMEGA0_60HZ,
            max_redraws: 20,
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Generates a seeded 39-bus case; identical seeds yield identical cases.
/// Draws whose open loop is not strictly stable are resampled.
pub fn build_ieee39_case(seed: u64, bounds: &CaseBounds) -> Result<GridCase, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..bounds.max_redraws.max(1) {
        let case = draw_case(&mut rng, bounds)?;
        if open_loop_stable(&case)? {
            return Ok(case);
        }
    }
    Err(HarnessError::NoStableCase { attempts: bounds.max_redraws.max(1) })
}

fn draw_case(rng: &mut ChaCha8Rng, bounds: &CaseBounds) -> Result<GridCase, HarnessError> {
    let mut buses = Vec::with_capacity(39);
    for bus in 1..=39u32 {
        let shunt = if bus == bounds.anchor_bus {
            sample(rng, bounds.anchor_susceptance)
        } else {
            0.0
        };
        let device = if bus == SG_BUS {
            BusDevice::Sg {
                m: sample(rng, bounds.inertia),
                d: sample(rng, bounds.damping),
                k: sample(rng, bounds.sg_droop),
                nu: sample(rng, bounds.sg_reheat),
                lambda: sample(rng, bounds.sg_split),
            }
        } else if let Some(pos) = IBR_BUSES.iter().position(|&b| b == bus) {
            let m = sample(rng, bounds.inertia);
            let d = sample(rng, bounds.damping);
            let nu_ibr = sample(rng, bounds.ibr_tracking);
            if pos % 2 == 0 {
                BusDevice::IbrVsg { m, d, nu_ibr }
            } else {
                // Droop-controlled unit with the same equivalent (m, d).
                BusDevice::IbrDroop { k_tilde: 1.0 / d, omega_lpf: d / m, nu_ibr }
            }
        } else {
            BusDevice::Load { mu: 0.0 }
        };
        buses.push(BusRecord { index: bus, device, shunt_susceptance: shunt });
    }
    let lines = LINES
        .iter()
        .map(|&(from, to, x)| LineRecord {
            from,
            to,
            susceptance: sample(rng, bounds.line_scale) / x,
        })
        .collect();
    let file = CaseFile { omega0: bounds.omega0, buses, lines };
    Ok(GridCase::from_file_repr(file)?)
}

/// Strict open-loop stability: every continuous-time eigenvalue in the
/// open left half plane (equivalently every discrete eigenvalue inside the
/// unit circle for any sampling period).
fn open_loop_stable(case: &GridCase) -> Result<bool, HarnessError> {
    let reduced = kron_reduce(case)?;
    let (a_c, _, _, _) = build_continuous(case, &reduced)?;
    let max_re = a_c.complex_eigenvalues().iter().map(|e| e.re).fold(f64::MIN, f64::max);
    Ok(max_re < -1e-9)
}
