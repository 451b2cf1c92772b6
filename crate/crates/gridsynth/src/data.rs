//! Experiment data: persistently exciting probing signals, trajectory
//! recording, and the data matrices consumed by the synthesis stage.
//!
//! A dataset holds `U`, `X`, `X⁺` with one column per transition, the
//! stacked regressor `Z = [Xᵀ Uᵀ]ᵀ`, and a bound `d̄` on the energy of the
//! stochastic disturbance that acted during collection.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    disturbance_components, simulate_with_sequence, DisturbanceSpec, GridError, InputPolicy,
    LtiModel,
};

#[derive(Error, Debug)]
pub enum DataError {
    #[error("probing amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("open loop is unstable (spectral radius {rho:.6}); refusing to collect data")]
    UnstableOpenLoop { rho: f64 },
    #[error("dataset dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bundle parse error: {0}")]
    Parse(String),
}

/// Data matrices plus disturbance-energy bound.
#[derive(Clone, Debug)]
pub struct DataSet {
    /// Inputs, `m × len`.
    pub u: DMatrix<f64>,
    /// States, `n × len`.
    pub x: DMatrix<f64>,
    /// Successor states, `n × len`.
    pub x_plus: DMatrix<f64>,
    /// Energy bound on the stochastic disturbance sequence.
    pub d_bar: f64,
    /// Sampling period the data was collected at.
    pub ts: f64,
    /// Seed recorded for reproducibility.
    pub seed: u64,
}

impl DataSet {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// Number of recorded transitions (columns of each matrix).
    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked regressor `Z = [Xᵀ Uᵀ]ᵀ`, `(n+m) × len`.
    pub fn z(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n() + self.m(), self.len());
        z.view_mut((0, 0), (self.n(), self.len())).copy_from(&self.x);
        z.view_mut((self.n(), 0), (self.m(), self.len())).copy_from(&self.u);
        z
    }

    /// Residual matrix `W = X⁺ − A′X − B′U` for known dynamics parts.
    /// The dynamics are treated as totally unknown by default, so `W = X⁺`.
    pub fn w(&self, known_a: Option<&DMatrix<f64>>, known_b: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let mut w = self.x_plus.clone();
        if let Some(a) = known_a {
            w -= a * &self.x;
        }
        if let Some(b) = known_b {
            w -= b * &self.u;
        }
        w
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.x.ncols() != self.u.ncols() || self.x_plus.ncols() != self.u.ncols() {
            return Err(DataError::Dimension(format!(
                "column counts differ: U {}, X {}, X+ {}",
                self.u.ncols(),
                self.x.ncols(),
                self.x_plus.ncols()
            )));
        }
        if self.x_plus.nrows() != self.x.nrows() {
            return Err(DataError::Dimension("X and X+ row counts differ".into()));
        }
        if self.d_bar < 0.0 {
            return Err(DataError::Dimension("d_bar must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Persistency-of-excitation check: `Z` must have full row rank `n + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistencyReport {
    pub rank: usize,
    pub required: usize,
    pub pass: bool,
    pub min_singular_value: f64,
}

const RANK_TOL_REL: f64 = 1e-8;

pub fn check_persistency(dataset: &DataSet) -> PersistencyReport {
    let required = dataset.n() + dataset.m();
    let z = dataset.z();
    if z.ncols() == 0 {
        return PersistencyReport { rank: 0, required, pass: false, min_singular_value: 0.0 };
    }
    let svd = z.svd(false, false);
    let max_sv = svd.singular_values.max();
    let tol = RANK_TOL_REL * max_sv;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let min_sv = svd.singular_values.min();
    PersistencyReport { rank, required, pass: rank == required, min_singular_value: min_sv }
}

/// I.i.d. uniform probing signal on `[-amplitude, amplitude]`, one column
/// per step, reproducible by seed.
pub fn generate_pe_signal(
    m: usize,
    length: usize,
    amplitude: f64,
    seed: u64,
) -> Result<DMatrix<f64>, DataError> {
    if amplitude <= 0.0 {
        return Err(DataError::NonPositiveAmplitude(amplitude));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DMatrix::from_fn(m, length, |_, _| rng.gen_range(-amplitude..=amplitude)))
}

/// Simulates the open-loop response to `signal` under `dist` and assembles
/// the data matrices.
///
/// The open loop must be stable (checked through the spectral radius) so
/// collection cannot diverge. `d_bar` is the exact energy of the stochastic
/// disturbance sequence injected during the run, times `d_bar_inflation`.
pub fn collect(
    model: &LtiModel,
    signal: &DMatrix<f64>,
    dist: &DisturbanceSpec,
    d_bar_inflation: f64,
) -> Result<DataSet, DataError> {
    let rho = model.spectral_radius();
    if rho >= 1.0 {
        return Err(DataError::UnstableOpenLoop { rho });
    }
    if signal.nrows() != model.m() {
        return Err(DataError::Dimension(format!(
            "signal has {} channels, model expects {}",
            signal.nrows(),
            model.m()
        )));
    }
    let steps = signal.ncols();
    let comps = disturbance_components(dist, model.b_d.ncols(), steps);
    let d_seq = comps.total();
    let x0 = DVector::zeros(model.n());
    let traj =
        simulate_with_sequence(model, &InputPolicy::OpenLoop(signal), &d_seq, steps, &x0)?;
    let ds = DataSet {
        u: traj.input_matrix(),
        x: traj.state_matrix(),
        x_plus: traj.shifted_state_matrix(),
        d_bar: comps.stochastic_energy() * d_bar_inflation,
        ts: model.ts,
        seed: dist.seed,
    };
    ds.validate()?;
    Ok(ds)
}

/// Column-wise concatenation of datasets collected from the same plant.
/// Energy bounds add; no cross-trajectory shift is introduced because each
/// dataset already dropped its final sample.
pub fn concatenate(datasets: &[DataSet]) -> Result<DataSet, DataError> {
    let first = datasets
        .iter()
        .find(|d| !d.is_empty())
        .ok_or_else(|| DataError::Dimension("nothing to concatenate".into()))?;
    let (n, m) = (first.n(), first.m());
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    let mut u = DMatrix::zeros(m, total);
    let mut x = DMatrix::zeros(n, total);
    let mut x_plus = DMatrix::zeros(n, total);
    let mut d_bar = 0.0;
    let mut col = 0;
    for d in datasets {
        if d.is_empty() {
            d_bar += d.d_bar;
            continue;
        }
        if d.n() != n || d.m() != m {
            return Err(DataError::Dimension(format!(
                "incompatible dataset: ({}, {}) vs ({n}, {m})",
                d.n(),
                d.m()
            )));
        }
        u.view_mut((0, col), (m, d.len())).copy_from(&d.u);
        x.view_mut((0, col), (n, d.len())).copy_from(&d.x);
        x_plus.view_mut((0, col), (n, d.len())).copy_from(&d.x_plus);
        d_bar += d.d_bar;
        col += d.len();
    }
    Ok(DataSet { u, x, x_plus, d_bar, ts: first.ts, seed: first.seed })
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    d_bar: f64,
    ts: f64,
    seed: u64,
    n: usize,
    m: usize,
    len: usize,
}

/// Persists the dataset as a directory bundle: `U.csv`, `X.csv`,
/// `Xplus.csv` (one row per step) plus `meta.json`.
pub fn save_bundle(dataset: &DataSet, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("U.csv"), &dataset.u)?;
    write_csv(&dir.join("X.csv"), &dataset.x)?;
    write_csv(&dir.join("Xplus.csv"), &dataset.x_plus)?;
    let meta = BundleMeta {
        d_bar: dataset.d_bar,
        ts: dataset.ts,
        seed: dataset.seed,
        n: dataset.n(),
        m: dataset.m(),
        len: dataset.len(),
    };
    let text =
        serde_json::to_string_pretty(&meta).map_err(|e| DataError::Parse(e.to_string()))?;
    std::fs::write(dir.join("meta.json"), text)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<DataSet, DataError> {
    let meta: BundleMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
            .map_err(|e| DataError::Parse(e.to_string()))?;
    let u = read_csv(&dir.join("U.csv"), meta.m, meta.len)?;
    let x = read_csv(&dir.join("X.csv"), meta.n, meta.len)?;
    let x_plus = read_csv(&dir.join("Xplus.csv"), meta.n, meta.len)?;
    let ds = DataSet { u, x, x_plus, d_bar: meta.d_bar, ts: meta.ts, seed: meta.seed };
    ds.validate()?;
    Ok(ds)
}

/// One row per time step; `{:e}` formatting round-trips f64 exactly.
fn write_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<(), DataError> {
    let mut out = String::new();
    for k in 0..matrix.ncols() {
        let row: Vec<String> = (0..matrix.nrows()).map(|i| format!("{:e}", matrix[(i, k)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_csv(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut m = DMatrix::zeros(rows, cols);
    let mut k = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if k >= cols {
            return Err(DataError::Parse(format!("{path:?}: more rows than declared")));
        }
        for (i, field) in line.split(',').enumerate() {
            if i >= rows {
                return Err(DataError::Parse(format!("{path:?}: row {k} too wide")));
            }
            m[(i, k)] = field
                .trim()
                .parse::<f64>()
                .map_err(|e| DataError::Parse(format!("{path:?} row {k} col {i}: {e}")))?;
        }
        k += 1;
    }
    if k != cols {
        return Err(DataError::Parse(format!("{path:?}: {k} rows, declared {cols}")));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::case::{BusDevice, BusRecord, CaseFile, LineRecord, OMEGA0_60HZ};
    use crate::grid::{build_model, GridCase};

    pub(crate) fn small_model() -> LtiModel {
        let file = CaseFile {
            omega0: OMEGA0_60HZ,
            buses: vec![
                BusRecord {
                    index: 1,
                    device: BusDevice::Sg { m: 5.0, d: 1.5, k: 20.0, nu: 7.0, lambda: 0.3 },
                    shunt_susceptance: 0.4,
                },
                BusRecord {
                    index: 2,
                    device: BusDevice::IbrVsg { m: 4.0, d: 1.0, nu_ibr: 0.2 },
                    shunt_susceptance: 0.0,
                },
            ],
            lines: vec![LineRecord { from: 1, to: 2, susceptance: 8.0 }],
        };
        build_model(&GridCase::from_file_repr(file).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn rejects_zero_probing_amplitude() {
        assert!(generate_pe_signal(2, 10, 0.0, 1).is_err());
    }

    #[test]
    fn pe_signal_shape_matches_request() {
        let s = generate_pe_signal(10, 400, 0.2, 3).unwrap();
        assert_eq!((s.nrows(), s.ncols()), (10, 400));
        assert!(s.amax() <= 0.2);
        assert_eq!(s, generate_pe_signal(10, 400, 0.2, 3).unwrap());
    }

    #[test]
    fn noise_free_data_satisfies_exact_dynamics() {
        let model = small_model();
        let signal = generate_pe_signal(model.m(), 60, 0.3, 11).unwrap();
        let ds = collect(&model, &signal, &DisturbanceSpec::zero(), 1.0).unwrap();
        assert_eq!(ds.d_bar, 0.0);
        let resid = &ds.x_plus - &model.a * &ds.x - &model.b * &ds.u;
        assert!(resid.amax() < 1e-10, "data equation residual {}", resid.amax());
    }

    #[test]
    fn zero_probing_from_equilibrium_fails_persistency() {
        let model = small_model();
        let signal = DMatrix::zeros(model.m(), 40);
        let ds = collect(&model, &signal, &DisturbanceSpec::zero(), 1.0).unwrap();
        assert!(ds.x.amax() == 0.0);
        assert!(!check_persistency(&ds).pass);
    }

    #[test]
    fn short_datasets_cannot_be_persistent() {
        let model = small_model();
        let need = model.n() + model.m();
        let signal = generate_pe_signal(model.m(), need - 1, 0.3, 5).unwrap();
        let ds = collect(&model, &signal, &DisturbanceSpec::zero(), 1.0).unwrap();
        assert!(!check_persistency(&ds).pass);
    }

    #[test]
    fn rich_probing_passes_persistency() {
        let model = small_model();
        for seed in 0..20 {
            let signal = generate_pe_signal(model.m(), 80, 0.3, seed).unwrap();
            let ds = collect(&model, &signal, &DisturbanceSpec::zero(), 1.0).unwrap();
            let rep = check_persistency(&ds);
            assert!(rep.pass, "seed {seed}: rank {} of {}", rep.rank, rep.required);
        }
    }

    #[test]
    fn unstable_open_loop_is_refused() {
        let mut model = small_model();
        model.a *= 1.2; // force spectral radius past one
        let signal = generate_pe_signal(model.m(), 20, 0.3, 1).unwrap();
        let err = collect(&model, &signal, &DisturbanceSpec::zero(), 1.0).unwrap_err();
        assert!(matches!(err, DataError::UnstableOpenLoop { .. }));
    }

    #[test]
    fn energy_bound_tracks_uniform_moment() {
        let model = small_model();
        let channels = model.b_d.ncols() as f64;
        let a = 0.5f64;
        let steps = 400usize;
        let expected = steps as f64 * channels * a * a / 3.0;
        for seed in 0..50 {
            let signal = generate_pe_signal(model.m(), steps, 0.3, seed).unwrap();
            let dist = DisturbanceSpec { steps: vec![], noise_amplitude: a, seed };
            let ds = collect(&model, &signal, &dist, 1.0).unwrap();
            assert!(
                ds.d_bar >= 0.9 * expected && ds.d_bar <= 1.1 * expected,
                "seed {seed}: d_bar {} expected {expected}",
                ds.d_bar
            );
        }
    }

    #[test]
    fn concatenation_matches_block_assembly() {
        let model = small_model();
        let s1 = generate_pe_signal(model.m(), 30, 0.3, 1).unwrap();
        let s2 = generate_pe_signal(model.m(), 25, 0.3, 2).unwrap();
        let d1 = collect(&model, &s1, &DisturbanceSpec::zero(), 1.0).unwrap();
        let d2 = collect(&model, &s2, &DisturbanceSpec::zero(), 1.0).unwrap();
        let cat = concatenate(&[d1.clone(), d2.clone()]).unwrap();
        assert_eq!(cat.len(), 55);
        assert_eq!(cat.u.columns(0, 30), d1.u.columns(0, 30));
        assert_eq!(cat.u.columns(30, 25), d2.u.columns(0, 25));
        assert_eq!(cat.x_plus.columns(30, 25), d2.x_plus.columns(0, 25));
        // Concatenation with an empty dataset is the identity.
        let empty = DataSet {
            u: DMatrix::zeros(model.m(), 0),
            x: DMatrix::zeros(model.n(), 0),
            x_plus: DMatrix::zeros(model.n(), 0),
            d_bar: 0.0,
            ts: model.ts,
            seed: 0,
        };
        let same = concatenate(&[d1.clone(), empty]).unwrap();
        assert_eq!(same.u, d1.u);
        // Rank can only grow under column augmentation.
        let r1 = check_persistency(&d1).rank;
        let rc = check_persistency(&cat).rank;
        assert!(rc >= r1);
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let model = small_model();
        let signal = generate_pe_signal(model.m(), 40, 0.3, 7).unwrap();
        let dist = DisturbanceSpec { steps: vec![], noise_amplitude: 0.1, seed: 7 };
        let ds = collect(&model, &signal, &dist, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&ds, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.u, ds.u);
        assert_eq!(back.x, ds.x);
        assert_eq!(back.x_plus, ds.x_plus);
        assert_eq!(back.d_bar, ds.d_bar);
    }
}
