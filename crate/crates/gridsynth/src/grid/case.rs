//! Physical case description: buses, lines, devices.
//!
//! A case file (JSON or TOML) carries a bus table and a line table. At load
//! time buses are reordered internally so that inertia buses come first,
//! followed by load buses, matching the susceptance partition used by the
//! network reduction.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GridError;

/// Nominal angular frequency for a 60 Hz system, rad/s.
pub const OMEGA0_60HZ: f64 = 2.0 * std::f64::consts::PI * 60.0;

/// Per-device dynamic parameters.
///
/// Droop-controlled inverters derive their equivalent inertia and damping
/// from the droop gain and filter cut-off; the other kinds carry them
/// directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceParams {
    /// Synchronous generator with governor droop and re-heater split.
    Sg { m: f64, d: f64, k: f64, nu: f64, lambda: f64 },
    /// Inverter under virtual synchronous generator control.
    IbrVsg { m: f64, d: f64, nu_ibr: f64 },
    /// Grid-forming inverter under droop control; `m = 1/(k_tilde·omega_lpf)`
    /// and `d = 1/k_tilde` are derived, not stored.
    IbrDroop { k_tilde: f64, omega_lpf: f64, nu_ibr: f64 },
}

impl DeviceParams {
    pub fn inertia(&self) -> f64 {
        match *self {
            DeviceParams::Sg { m, .. } | DeviceParams::IbrVsg { m, .. } => m,
            DeviceParams::IbrDroop { k_tilde, omega_lpf, .. } => 1.0 / (k_tilde * omega_lpf),
        }
    }

    pub fn damping(&self) -> f64 {
        match *self {
            DeviceParams::Sg { d, .. } | DeviceParams::IbrVsg { d, .. } => d,
            DeviceParams::IbrDroop { k_tilde, .. } => 1.0 / k_tilde,
        }
    }

    pub fn is_sg(&self) -> bool {
        matches!(self, DeviceParams::Sg { .. })
    }

    /// Secondary-power tracking time constant; SGs respond through the
    /// re-heater instead.
    pub fn tracking_time_constant(&self) -> Option<f64> {
        match *self {
            DeviceParams::IbrVsg { nu_ibr, .. } | DeviceParams::IbrDroop { nu_ibr, .. } => {
                Some(nu_ibr)
            }
            DeviceParams::Sg { .. } => None,
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        let bad = |msg: String| Err(GridError::InvalidCase(msg));
        if self.inertia() <= 0.0 || self.damping() <= 0.0 {
            return bad(format!("device must have positive inertia and damping: {self:?}"));
        }
        match *self {
            DeviceParams::Sg { k, nu, lambda, .. } => {
                if k <= 0.0 || nu <= 0.0 {
                    return bad(format!("SG droop and re-heater time constant must be positive: {self:?}"));
                }
                if !(0.0 < lambda && lambda < 1.0) {
                    return bad(format!("SG re-heater split must lie in (0, 1): {self:?}"));
                }
            }
            DeviceParams::IbrVsg { nu_ibr, .. } | DeviceParams::IbrDroop { nu_ibr, .. } => {
                if nu_ibr <= 0.0 {
                    return bad(format!("IBR tracking time constant must be positive: {self:?}"));
                }
            }
        }
        Ok(())
    }
}

/// A transmission line, endpoints in internal bus indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

/// Linearized network and device description in internal ordering:
/// inertia buses `0..n_inertia`, load buses `n_inertia..n_inertia+n_load`.
#[derive(Clone, Debug)]
pub struct GridCase {
    pub omega0: f64,
    pub n_inertia: usize,
    pub n_load: usize,
    /// Full (grounded) susceptance Laplacian over all buses.
    pub susceptance: DMatrix<f64>,
    /// Load damping per load bus.
    pub load_damping: DVector<f64>,
    /// One device per inertia bus, ordered by internal index.
    pub devices: Vec<DeviceParams>,
    /// Line list retained for tie-line penalties.
    pub lines: Vec<Line>,
    /// External bus number for each internal index.
    pub bus_labels: Vec<u32>,
}

impl GridCase {
    pub fn n_buses(&self) -> usize {
        self.n_inertia + self.n_load
    }

    pub fn n_sg(&self) -> usize {
        self.devices.iter().filter(|d| d.is_sg()).count()
    }

    pub fn n_ibr(&self) -> usize {
        self.n_inertia - self.n_sg()
    }

    /// Diagonal inertia matrix over inertia buses.
    pub fn inertia_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.n_inertia,
            self.devices.iter().map(|d| d.inertia()),
        ))
    }

    /// Diagonal damping matrix over inertia buses.
    pub fn damping_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.n_inertia,
            self.devices.iter().map(|d| d.damping()),
        ))
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let nb = self.n_buses();
        if self.susceptance.nrows() != nb || self.susceptance.ncols() != nb {
            return Err(GridError::InvalidCase(format!(
                "susceptance matrix is {}x{}, expected {nb}x{nb}",
                self.susceptance.nrows(),
                self.susceptance.ncols()
            )));
        }
        let asym = (&self.susceptance - self.susceptance.transpose()).amax();
        if asym > 1e-10 {
            return Err(GridError::AsymmetricSusceptance(asym));
        }
        if self.devices.len() != self.n_inertia {
            return Err(GridError::InvalidCase(format!(
                "{} devices for {} inertia buses",
                self.devices.len(),
                self.n_inertia
            )));
        }
        if self.load_damping.len() != self.n_load {
            return Err(GridError::InvalidCase("load damping length mismatch".into()));
        }
        if self.load_damping.iter().any(|&mu| mu < 0.0) {
            return Err(GridError::InvalidCase("load damping must be nonnegative".into()));
        }
        for d in &self.devices {
            d.validate()?;
        }
        for line in &self.lines {
            if line.from >= nb || line.to >= nb || line.from == line.to {
                return Err(GridError::InvalidCase(format!("bad line {line:?}")));
            }
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path)?;
        let file: CaseFile = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| GridError::Parse(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| GridError::Parse(e.to_string()))?
        };
        Self::from_file_repr(file)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), GridError> {
        let repr = self.to_file_repr();
        let text = serde_json::to_string_pretty(&repr)
            .map_err(|e| GridError::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Builds the internal representation from bus/line tables. Buses are
    /// sorted by external index within each class (inertia first).
    pub fn from_file_repr(file: CaseFile) -> Result<Self, GridError> {
        let mut inertia: Vec<&BusRecord> = Vec::new();
        let mut loads: Vec<&BusRecord> = Vec::new();
        for bus in &file.buses {
            if bus.device.is_load() {
                loads.push(bus);
            } else {
                inertia.push(bus);
            }
        }
        inertia.sort_by_key(|b| b.index);
        loads.sort_by_key(|b| b.index);
        let ordered: Vec<&BusRecord> = inertia.iter().chain(loads.iter()).copied().collect();
        let nb = ordered.len();
        let mut index_of = std::collections::BTreeMap::new();
        for (i, bus) in ordered.iter().enumerate() {
            if index_of.insert(bus.index, i).is_some() {
                return Err(GridError::InvalidCase(format!("duplicate bus index {}", bus.index)));
            }
        }

        let mut susceptance = DMatrix::<f64>::zeros(nb, nb);
        let mut lines = Vec::with_capacity(file.lines.len());
        for line in &file.lines {
            let f = *index_of
                .get(&line.from)
                .ok_or_else(|| GridError::InvalidCase(format!("line from unknown bus {}", line.from)))?;
            let t = *index_of
                .get(&line.to)
                .ok_or_else(|| GridError::InvalidCase(format!("line to unknown bus {}", line.to)))?;
            let b = line.susceptance;
            susceptance[(f, f)] += b;
            susceptance[(t, t)] += b;
            susceptance[(f, t)] -= b;
            susceptance[(t, f)] -= b;
            lines.push(Line { from: f, to: t, susceptance: b });
        }
        for bus in &ordered {
            let i = index_of[&bus.index];
            susceptance[(i, i)] += bus.shunt_susceptance;
        }

        let devices: Vec<DeviceParams> = inertia
            .iter()
            .map(|b| b.device.to_device().expect("inertia bus carries a device"))
            .collect();
        let load_damping = DVector::from_iterator(
            loads.len(),
            loads.iter().map(|b| match b.device {
                BusDevice::Load { mu } => mu,
                _ => unreachable!(),
            }),
        );

        let case = GridCase {
            omega0: file.omega0,
            n_inertia: inertia.len(),
            n_load: loads.len(),
            susceptance,
            load_damping,
            devices,
            lines,
            bus_labels: ordered.iter().map(|b| b.index).collect(),
        };
        case.validate()?;
        Ok(case)
    }

    pub fn to_file_repr(&self) -> CaseFile {
        let mut buses = Vec::with_capacity(self.n_buses());
        for i in 0..self.n_buses() {
            let device = if i < self.n_inertia {
                BusDevice::from_device(&self.devices[i])
            } else {
                BusDevice::Load { mu: self.load_damping[i - self.n_inertia] }
            };
            // Shunt = diagonal minus the incident line susceptances.
            let incident: f64 = self
                .lines
                .iter()
                .filter(|l| l.from == i || l.to == i)
                .map(|l| l.susceptance)
                .sum();
            buses.push(BusRecord {
                index: self.bus_labels[i],
                device,
                shunt_susceptance: self.susceptance[(i, i)] - incident,
            });
        }
        let lines = self
            .lines
            .iter()
            .map(|l| LineRecord {
                from: self.bus_labels[l.from],
                to: self.bus_labels[l.to],
                susceptance: l.susceptance,
            })
            .collect();
        CaseFile { omega0: self.omega0, buses, lines }
    }
}

/// On-disk case representation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseFile {
    pub omega0: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusRecord {
    pub index: u32,
    #[serde(flatten)]
    pub device: BusDevice,
    #[serde(default)]
    pub shunt_susceptance: f64,
}

/// Bus entry in the case file, tagged by `kind`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BusDevice {
    Sg { m: f64, d: f64, k: f64, nu: f64, lambda: f64 },
    IbrVsg { m: f64, d: f64, nu_ibr: f64 },
    IbrDroop { k_tilde: f64, omega_lpf: f64, nu_ibr: f64 },
    Load {
        #[serde(default)]
        mu: f64,
    },
}

impl BusDevice {
    pub fn is_load(&self) -> bool {
        matches!(self, BusDevice::Load { .. })
    }

    fn to_device(&self) -> Option<DeviceParams> {
        match *self {
            BusDevice::Sg { m, d, k, nu, lambda } => Some(DeviceParams::Sg { m, d, k, nu, lambda }),
            BusDevice::IbrVsg { m, d, nu_ibr } => Some(DeviceParams::IbrVsg { m, d, nu_ibr }),
            BusDevice::IbrDroop { k_tilde, omega_lpf, nu_ibr } => {
                Some(DeviceParams::IbrDroop { k_tilde, omega_lpf, nu_ibr })
            }
            BusDevice::Load { .. } => None,
        }
    }

    fn from_device(d: &DeviceParams) -> Self {
        match *d {
            DeviceParams::Sg { m, d, k, nu, lambda } => BusDevice::Sg { m, d, k, nu, lambda },
            DeviceParams::IbrVsg { m, d, nu_ibr } => BusDevice::IbrVsg { m, d, nu_ibr },
            DeviceParams::IbrDroop { k_tilde, omega_lpf, nu_ibr } => {
                BusDevice::IbrDroop { k_tilde, omega_lpf, nu_ibr }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: u32,
    pub to: u32,
    pub susceptance: f64,
}
