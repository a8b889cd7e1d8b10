//! Seeded generators for the three simulation scenarios and the
//! missing-snapshot interpolation task.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`). The user seed fixes the
//! key and every entity (a node's coefficients, a snapshot's noise) draws
//! from its own stream, so outputs do not depend on generation order or on
//! how many threads a caller uses.

use crate::error::{FaseError, Result};
use crate::model::{
    evaluate_stack, expected_adjacency, CoordinateTensor, SnapshotSeries, TrajectoryStack,
};
use crate::scalar::Real;
use crate::spline::SplineBasis;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};
use std::str::FromStr;

/// Basis dimension used by the B-spline scenarios.
pub const SCENARIO_Q: usize = 10;
/// Spline order used by the B-spline scenarios.
pub const SCENARIO_ORDER: usize = 3;
/// Dirichlet concentration for scenario III fibers.
pub const DIRICHLET_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Gaussian edges, B-spline processes with Gaussian coefficients.
    I,
    /// Gaussian edges, damped sinusoid processes.
    II,
    /// Bernoulli edges, B-spline processes with Dirichlet coefficients.
    III,
}

impl Scenario {
    fn tag(self) -> u64 {
        match self {
            Scenario::I => 1,
            Scenario::II => 2,
            Scenario::III => 3,
        }
    }
}

impl FromStr for Scenario {
    type Err = FaseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Scenario::I),
            "ii" | "2" => Ok(Scenario::II),
            "iii" | "3" => Ok(Scenario::III),
            other => Err(FaseError::InvalidParameter(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::I => "i",
            Scenario::II => "ii",
            Scenario::III => "iii",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Edge noise standard deviation (scenarios I and II).
    pub sigma: f64,
    /// Target expected edge probability (scenario III).
    pub density: f64,
    /// Number of sinusoid cycles (scenario II).
    pub cycles: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, m: usize, d: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            m,
            d,
            sigma: 1.0,
            density: 0.5,
            cycles: 2.0,
            seed,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_cycles(mut self, cycles: f64) -> Self {
        self.cycles = cycles;
        self
    }

    /// Coordinate scale for scenario III.
    pub fn density_scale(&self) -> f64 {
        (self.density * self.d as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(FaseError::InvalidParameter(format!(
                "n, m and d must be positive (got {}, {}, {})",
                self.n, self.m, self.d
            )));
        }
        match self.scenario {
            Scenario::I | Scenario::II => {
                if !(self.sigma.is_finite() && self.sigma >= 0.0) {
                    return Err(FaseError::InvalidParameter(format!(
                        "sigma must be finite and nonnegative, got {}",
                        self.sigma
                    )));
                }
                if self.scenario == Scenario::II && !(self.cycles.is_finite() && self.cycles > 0.0) {
                    return Err(FaseError::InvalidParameter(format!(
                        "cycles must be positive, got {}",
                        self.cycles
                    )));
                }
            }
            Scenario::III => {
                if !(self.density > 0.0 && self.density <= 1.0) {
                    return Err(FaseError::InvalidParameter(format!(
                        "density must lie in (0, 1], got {}",
                        self.density
                    )));
                }
                let scale = self.density_scale();
                if scale > 1.0 {
                    return Err(FaseError::InfeasibleDensity {
                        density: self.density,
                        d: self.d,
                        scale,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Generated data together with its ground truth.
#[derive(Debug, Clone)]
pub struct Simulation<T: Real> {
    pub series: SnapshotSeries<T>,
    pub truth: TrajectoryStack<T>,
    /// Generating coordinates, for the B-spline scenarios.
    pub coords: Option<CoordinateTensor<T>>,
    /// Generating basis, for the B-spline scenarios.
    pub basis: Option<SplineBasis<T>>,
}

const PURPOSE_COEFFS: u64 = 1;
const PURPOSE_EDGES: u64 = 2;
const PURPOSE_TASK: u64 = 3;

fn stream_rng(seed: u64, scenario: u64, purpose: u64, entity: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((scenario << 56) | (purpose << 48) | entity);
    rng
}

/// `x_k = (k − 1)/(m − 1)`; a single snapshot sits at 0.
pub fn equally_spaced(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|k| k as f64 / (m - 1) as f64).collect()
}

fn scenario_basis<T: Real>() -> SplineBasis<T> {
    SplineBasis::uniform(SCENARIO_Q, SCENARIO_ORDER, T::zero(), T::one())
        .expect("fixed scenario basis is valid")
}

fn gaussian_snapshot<T: Real>(theta: &DMatrix<T>, sigma: f64, rng: &mut ChaCha20Rng) -> DMatrix<T> {
    let n = theta.nrows();
    let mut a = theta.clone();
    if sigma == 0.0 {
        return a;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for j in 0..n {
        for i in 0..=j {
            let e = T::lit(normal.sample(rng));
            a[(i, j)] += e;
            if i != j {
                a[(j, i)] += e;
            }
        }
    }
    a
}

fn gaussian_series<T: Real>(spec: &ScenarioSpec, truth: &TrajectoryStack<T>) -> Result<SnapshotSeries<T>> {
    let tag = spec.scenario.tag();
    let snapshots = truth
        .slices()
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let mut rng = stream_rng(spec.seed, tag, PURPOSE_EDGES, k as u64);
            gaussian_snapshot(&expected_adjacency(z), spec.sigma, &mut rng)
        })
        .collect();
    SnapshotSeries::new(indices_as::<T>(spec.m), snapshots)
}

fn indices_as<T: Real>(m: usize) -> Vec<T> {
    equally_spaced(m).into_iter().map(T::lit).collect()
}

/// Scenario I: coefficients `w_{i,r} ~ N(0, I)` on a cubic basis with ten
/// functions, plus symmetric `N(0, σ²)` edge noise.
pub fn gen_scenario_i<T: Real>(spec: &ScenarioSpec) -> Result<Simulation<T>> {
    let spec = ScenarioSpec { scenario: Scenario::I, ..spec.clone() };
    spec.validate()?;
    let basis = scenario_basis::<T>();
    let (n, q, d) = (spec.n, SCENARIO_Q, spec.d);
    let mut slices = vec![DMatrix::zeros(n, q); d];
    for i in 0..n {
        let mut rng = stream_rng(spec.seed, 1, PURPOSE_COEFFS, i as u64);
        for slice in slices.iter_mut() {
            for j in 0..q {
                let v: f64 = rng.sample(rand_distr::StandardNormal);
                slice[(i, j)] = T::lit(v);
            }
        }
    }
    let coords = CoordinateTensor::from_slices(slices)?;
    let truth = evaluate_stack(&coords, &basis, &indices_as::<T>(spec.m))?;
    let series = gaussian_series(&spec, &truth)?;
    Ok(Simulation {
        series,
        truth,
        coords: Some(coords),
        basis: Some(basis),
    })
}

/// Parameters of one scenario II process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidParams {
    pub phase: f64,
    pub flip: bool,
    pub offset: f64,
}

impl SinusoidParams {
    pub fn eval(&self, x: f64, cycles: f64) -> f64 {
        let b = if self.flip { 1.0 } else { 0.0 };
        let damp = 1.0 + 5.0 * (x + b * (1.0 - 2.0 * x));
        3.0 * (cycles * std::f64::consts::PI * (2.0 * x - self.phase)).sin() / damp + self.offset
    }
}

/// Process parameters for scenario II, indexed `[i][r]`.
pub fn scenario_ii_params(spec: &ScenarioSpec) -> Vec<Vec<SinusoidParams>> {
    let offset = Normal::new(0.0, 0.5).expect("constant scale");
    (0..spec.n)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, 2, PURPOSE_COEFFS, i as u64);
            (0..spec.d)
                .map(|_| SinusoidParams {
                    phase: rng.random::<f64>(),
                    flip: rng.random::<f64>() < 0.5,
                    offset: offset.sample(&mut rng),
                })
                .collect()
        })
        .collect()
}

/// Scenario II: `z(x) = 3 sin(Cπ(2x − U)) / (1 + 5[x + B(1 − 2x)]) + G` with
/// `U ~ Unif[0,1]`, `B ~ Bernoulli(1/2)`, `G ~ N(0, 1/4)`, plus the Gaussian
/// edge noise of scenario I.
pub fn gen_scenario_ii<T: Real>(spec: &ScenarioSpec) -> Result<Simulation<T>> {
    let spec = ScenarioSpec { scenario: Scenario::II, ..spec.clone() };
    spec.validate()?;
    let params = scenario_ii_params(&spec);
    let slices = equally_spaced(spec.m)
        .into_iter()
        .map(|x| DMatrix::from_fn(spec.n, spec.d, |i, r| T::lit(params[i][r].eval(x, spec.cycles))))
        .collect();
    let truth = TrajectoryStack::new(slices)?;
    let series = gaussian_series(&spec, &truth)?;
    Ok(Simulation {
        series,
        truth,
        coords: None,
        basis: None,
    })
}

fn dirichlet(d: usize, gamma: &Gamma<f64>, rng: &mut ChaCha20Rng) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    loop {
        let draws: Vec<f64> = (0..d).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Scenario III: each fiber `(w_{i,j,1}, …, w_{i,j,d})` is Dirichlet(0.1),
/// scaled by `√(density · d)`; edges are Bernoulli with probability
/// `Z(x) Z(x)ᵀ`. Fails for densities whose scale would exceed one.
pub fn gen_scenario_iii<T: Real>(spec: &ScenarioSpec) -> Result<Simulation<T>> {
    let spec = ScenarioSpec { scenario: Scenario::III, ..spec.clone() };
    spec.validate()?;
    let basis = scenario_basis::<T>();
    let (n, q, d) = (spec.n, SCENARIO_Q, spec.d);
    let scale = spec.density_scale();
    let gamma = Gamma::new(DIRICHLET_ALPHA, 1.0).expect("constant shape");
    let mut slices = vec![DMatrix::zeros(n, q); d];
    for i in 0..n {
        let mut rng = stream_rng(spec.seed, 3, PURPOSE_COEFFS, i as u64);
        for j in 0..q {
            for (r, v) in dirichlet(d, &gamma, &mut rng).into_iter().enumerate() {
                slices[r][(i, j)] = T::lit(v * scale);
            }
        }
    }
    let coords = CoordinateTensor::from_slices(slices)?;
    let truth = evaluate_stack(&coords, &basis, &indices_as::<T>(spec.m))?;
    let snapshots = truth
        .slices()
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let mut rng = stream_rng(spec.seed, 3, PURPOSE_EDGES, k as u64);
            let p = expected_adjacency(z);
            let mut a = DMatrix::zeros(n, n);
            for j in 0..n {
                for i in 0..=j {
                    let u: f64 = rng.random();
                    if u < p[(i, j)].as_f64() {
                        a[(i, j)] = T::one();
                        a[(j, i)] = T::one();
                    }
                }
            }
            a
        })
        .collect();
    let series = SnapshotSeries::new(indices_as::<T>(spec.m), snapshots)?;
    Ok(Simulation {
        series,
        truth,
        coords: Some(coords),
        basis: Some(basis),
    })
}

/// Dispatches on `spec.scenario`.
pub fn generate<T: Real>(spec: &ScenarioSpec) -> Result<Simulation<T>> {
    match spec.scenario {
        Scenario::I => gen_scenario_i(spec),
        Scenario::II => gen_scenario_ii(spec),
        Scenario::III => gen_scenario_iii(spec),
    }
}

/// A series with a contiguous window of snapshots deleted around a held-out
/// index.
#[derive(Debug, Clone)]
pub struct InterpolationTask<T: Real> {
    pub series: SnapshotSeries<T>,
    /// Position of the held-out snapshot in the original series.
    pub held_out: usize,
    /// Positions removed from the original series.
    pub removed: std::ops::Range<usize>,
    pub x: T,
    /// Expected adjacency at the held-out index.
    pub theta: DMatrix<T>,
}

/// Picks a held-out snapshot uniformly among those with index in
/// `[0.25, 0.5]` whose window of `2M + 1` snapshots leaves at least one
/// snapshot on each side, then removes that window.
pub fn make_interpolation_task<T: Real>(
    series: &SnapshotSeries<T>,
    truth: &TrajectoryStack<T>,
    half_width: usize,
    seed: u64,
) -> Result<InterpolationTask<T>> {
    let m = series.m();
    if truth.m() != m || truth.n() != series.n() {
        return Err(FaseError::DimensionMismatch(format!(
            "truth is {}x{} (n x m), series is {}x{}",
            truth.n(),
            truth.m(),
            series.n(),
            m
        )));
    }
    if 2 * half_width + 3 > m {
        return Err(FaseError::InvalidParameter(format!(
            "window of {} snapshots is too large for m = {m}",
            2 * half_width + 1
        )));
    }
    let (lo, hi) = (T::lit(0.25), T::lit(0.5));
    let candidates: Vec<usize> = (half_width + 1..m - 1 - half_width)
        .filter(|&k| {
            let x = series.indices()[k];
            x >= lo && x <= hi
        })
        .collect();
    if candidates.is_empty() {
        return Err(FaseError::InvalidParameter(format!(
            "no index in [0.25, 0.5] admits a window of {} snapshots",
            2 * half_width + 1
        )));
    }
    let mut rng = stream_rng(seed, 0, PURPOSE_TASK, 0);
    let held_out = candidates[rng.random_range(0..candidates.len())];
    let removed = held_out - half_width..held_out + half_width + 1;
    Ok(InterpolationTask {
        series: series.without_snapshots(removed.clone())?,
        held_out,
        removed,
        x: series.indices()[held_out],
        theta: expected_adjacency(truth.slice(held_out)),
    })
}
