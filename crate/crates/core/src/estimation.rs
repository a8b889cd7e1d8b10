//! Gradient descent on the basis coordinates with backtracking step sizes.

use crate::error::{FaseError, Result};
use crate::model::{evaluate_processes, evaluate_stack, expected_adjacency, CoordinateTensor, FitProblem, SnapshotSeries, TrajectoryStack};
use crate::scalar::Real;
use crate::spline::SplineBasis;
use nalgebra::DMatrix;

/// Number of halvings below the maximum step (times 1e-3) after which a
/// backtracking search gives up and the fit is declared converged.
const STALL_HALVINGS: i32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T: Real> {
    pub max_iterations: usize,
    /// Stop once `(ℓ_prev − ℓ_new) / ℓ_prev` drops below this.
    pub rel_tol: T,
    /// Largest step tried; `None` means `1 / (n m)`.
    pub max_step: Option<T>,
    pub backtrack_factor: T,
    /// Curvature penalty weight, used only by [`fit_fase_penalized`].
    pub lambda: T,
    /// Try doubling the carried-over step (capped at the maximum) once per iteration.
    pub allow_step_growth: bool,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            rel_tol: T::lit(1e-5),
            max_step: None,
            backtrack_factor: T::lit(0.5),
            lambda: T::zero(),
            allow_step_growth: false,
        }
    }
}

impl<T: Real> FitOptions<T> {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(FaseError::InvalidParameter("max_iterations must be positive".into()));
        }
        if !(self.rel_tol > T::zero()) {
            return Err(FaseError::InvalidParameter("rel_tol must be positive".into()));
        }
        if let Some(step) = self.max_step {
            if !(step > T::zero()) || !step.is_finite() {
                return Err(FaseError::InvalidParameter("max_step must be positive".into()));
            }
        }
        if !(self.backtrack_factor > T::zero() && self.backtrack_factor < T::one()) {
            return Err(FaseError::InvalidParameter("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.lambda >= T::zero()) {
            return Err(FaseError::InvalidParameter("lambda must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn resolved_max_step(&self, n: usize, m: usize) -> T {
        self.max_step.unwrap_or_else(|| T::one() / T::from_count(n * m))
    }
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FaseFit<T: Real> {
    pub coords: CoordinateTensor<T>,
    pub basis: SplineBasis<T>,
    /// Objective before the first step and after every accepted step. For the
    /// sequential driver this is the trace of the final pass.
    pub objective_trace: Vec<T>,
    /// Accepted step size of every iteration, across all passes.
    pub step_trace: Vec<T>,
    /// Per-pass objective traces; a single entry for the concurrent drivers.
    pub pass_traces: Vec<Vec<T>>,
    pub final_step_size: T,
    pub converged: bool,
    /// Set when backtracking hit its floor without finding a decrease.
    pub stalled: bool,
    pub iterations: usize,
    pub lambda: T,
}

impl<T: Real> FaseFit<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    pub fn n(&self) -> usize {
        self.coords.n()
    }

    pub fn d(&self) -> usize {
        self.coords.d()
    }

    pub fn q(&self) -> usize {
        self.coords.q()
    }

    /// Latent positions at `x`; indices outside the basis domain are refused.
    pub fn predict(&self, x: T) -> Result<DMatrix<T>> {
        evaluate_processes(&self.coords, &self.basis, x)
    }

    pub fn predict_adjacency(&self, x: T) -> Result<DMatrix<T>> {
        self.predict(x).map(|z| expected_adjacency(&z))
    }

    pub fn trajectories(&self, indices: &[T]) -> Result<TrajectoryStack<T>> {
        evaluate_stack(&self.coords, &self.basis, indices)
    }
}

struct Descent<T: Real> {
    coords: CoordinateTensor<T>,
    trace: Vec<T>,
    steps: Vec<T>,
    converged: bool,
    stalled: bool,
}

fn descend<T: Real>(
    init: CoordinateTensor<T>,
    max_step: T,
    opts: &FitOptions<T>,
    value: impl Fn(&CoordinateTensor<T>) -> Result<T>,
    grad: impl Fn(&CoordinateTensor<T>) -> Result<CoordinateTensor<T>>,
) -> Result<Descent<T>> {
    let mut coords = init;
    let mut current = value(&coords)?;
    if !current.is_finite() {
        return Err(FaseError::Divergence(format!("initial objective is {current}")));
    }
    let floor = T::lit(1e-3) * max_step * T::lit(0.5f64.powi(STALL_HALVINGS));
    let mut eta = max_step;
    let mut trace = vec![current];
    let mut steps = Vec::new();
    let mut converged = false;
    let mut stalled = false;

    for _ in 0..opts.max_iterations {
        if current == T::zero() {
            converged = true;
            break;
        }
        let g = grad(&coords)?;
        if !g.is_finite() {
            return Err(FaseError::Divergence("non-finite gradient".into()));
        }
        if g.norm_squared() == T::zero() {
            converged = true;
            break;
        }
        let mut trial = if opts.allow_step_growth {
            (eta * T::lit(2.0)).min(max_step)
        } else {
            eta
        };
        let accepted = loop {
            let candidate = coords.add_scaled(&g, -trial);
            let next = value(&candidate)?;
            // overflowing trial steps are treated like any other failed decrease
            if next.is_finite() && next < current {
                break Some((candidate, next));
            }
            trial *= opts.backtrack_factor;
            if trial < floor {
                break None;
            }
        };
        let Some((candidate, next)) = accepted else {
            stalled = true;
            converged = true;
            break;
        };
        let rel = (current - next) / current.max(T::tiny());
        coords = candidate;
        current = next;
        eta = trial;
        trace.push(current);
        steps.push(eta);
        if rel < opts.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(Descent {
        coords,
        trace,
        steps,
        converged,
        stalled,
    })
}

fn check_init<T: Real>(
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    d: usize,
    init: &CoordinateTensor<T>,
) -> Result<()> {
    let expected = (series.n(), basis.q(), d);
    if init.dims() != expected {
        return Err(FaseError::DimensionMismatch(format!(
            "initial coordinates are {:?}, expected {:?}",
            init.dims(),
            expected
        )));
    }
    if !init.is_finite() {
        return Err(FaseError::InvalidParameter("initial coordinates are not finite".into()));
    }
    Ok(())
}

fn single_pass_fit<T: Real>(basis: &SplineBasis<T>, run: Descent<T>, lambda: T) -> FaseFit<T> {
    let final_step_size = run.steps.last().copied().unwrap_or(T::zero());
    FaseFit {
        coords: run.coords,
        basis: basis.clone(),
        iterations: run.steps.len(),
        pass_traces: vec![run.trace.clone()],
        objective_trace: run.trace,
        step_trace: run.steps,
        final_step_size,
        converged: run.converged,
        stalled: run.stalled,
        lambda,
    }
}

/// Concurrent gradient descent: every slice moves along the same gradient
/// evaluation at each iteration.
pub fn fit_fase<T: Real>(
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    d: usize,
    init: CoordinateTensor<T>,
    opts: &FitOptions<T>,
) -> Result<FaseFit<T>> {
    opts.validate()?;
    check_init(series, basis, d, &init)?;
    let problem = FitProblem::new(series, basis)?;
    let max_step = opts.resolved_max_step(series.n(), series.m());
    let run = descend(init, max_step, opts, |w| problem.objective(w), |w| problem.gradient(w))?;
    Ok(single_pass_fit(basis, run, T::zero()))
}

/// Concurrent descent on the objective plus `λ Σ_{i,r} w_{i,r}ᵀ Ω w_{i,r}`.
pub fn fit_fase_penalized<T: Real>(
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    d: usize,
    init: CoordinateTensor<T>,
    opts: &FitOptions<T>,
) -> Result<FaseFit<T>> {
    opts.validate()?;
    check_init(series, basis, d, &init)?;
    let penalty = basis.penalty_matrix()?;
    let problem = FitProblem::new(series, basis)?;
    let max_step = opts.resolved_max_step(series.n(), series.m());
    let lambda = opts.lambda;
    let run = descend(
        init,
        max_step,
        opts,
        |w| problem.penalized_objective(w, lambda, &penalty),
        |w| problem.penalized_gradient(w, lambda, &penalty),
    )?;
    Ok(single_pass_fit(basis, run, lambda))
}

/// Sequential descent: slice `r` is fitted with slices after it held at zero
/// and slices before it frozen at their fitted values.
pub fn fit_fase_sequential<T: Real>(
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    d: usize,
    init: CoordinateTensor<T>,
    opts: &FitOptions<T>,
) -> Result<FaseFit<T>> {
    opts.validate()?;
    check_init(series, basis, d, &init)?;
    let problem = FitProblem::new(series, basis)?;
    let max_step = opts.resolved_max_step(series.n(), series.m());

    let mut current = init.truncated(0);
    let mut pass_traces = Vec::with_capacity(d);
    let mut steps = Vec::new();
    let mut converged = true;
    let mut stalled = false;
    for r in 0..d {
        *current.slice_mut(r) = init.slice(r).clone();
        let run = descend(current, max_step, opts, |w| problem.objective(w), |w| {
            let mut g = problem.gradient(w)?;
            for s in (0..d).filter(|&s| s != r) {
                g.slice_mut(s).fill(T::zero());
            }
            Ok(g)
        })?;
        current = run.coords;
        converged &= run.converged;
        stalled |= run.stalled;
        steps.extend(run.steps);
        pass_traces.push(run.trace);
    }
    let objective_trace = pass_traces.last().cloned().expect("d >= 1");
    Ok(FaseFit {
        coords: current,
        basis: basis.clone(),
        iterations: steps.len(),
        final_step_size: steps.last().copied().unwrap_or(T::zero()),
        objective_trace,
        step_trace: steps,
        pass_traces,
        converged,
        stalled,
        lambda: T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::noiseless_series;
    use crate::model::objective;

    fn setup() -> (SnapshotSeries<f64>, SplineBasis<f64>, CoordinateTensor<f64>) {
        let basis = SplineBasis::uniform(5, 3, 0.0, 1.0).unwrap();
        let truth = CoordinateTensor::from_fn(6, 5, 2, |i, j, r| (((i + 2) * (j + 1) + 3 * r) % 5) as f64 * 0.4 - 0.8);
        let idx: Vec<f64> = (0..10).map(|k| k as f64 / 9.0).collect();
        (noiseless_series(&truth, &basis, &idx).unwrap(), basis, truth)
    }

    #[test]
    fn truth_initialization_stops_immediately() {
        let (series, basis, truth) = setup();
        let fit = fit_fase(&series, &basis, 2, truth.clone(), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 1);
        assert_eq!(fit.coords, truth);
    }

    #[test]
    fn trace_is_strictly_decreasing() {
        let (series, basis, truth) = setup();
        let init = truth.add_scaled(&CoordinateTensor::from_fn(6, 5, 2, |i, j, r| ((i + j + r) % 3) as f64 - 1.0), 0.3);
        let fit = fit_fase(&series, &basis, 2, init, &FitOptions::default()).unwrap();
        assert!(fit.objective_trace.windows(2).all(|w| w[1] < w[0]));
        let max_step = 1.0 / 60.0;
        assert!(fit.step_trace.iter().all(|&s| s <= max_step));
        assert_eq!(fit.final_objective(), objective(&fit.coords, &series, &basis).unwrap());
    }

    #[test]
    fn accepted_steps_are_halvings_of_the_maximum() {
        let (series, basis, truth) = setup();
        let init = truth.scale(1.7);
        let opts = FitOptions { max_step: Some(1.0), max_iterations: 20, ..Default::default() };
        let fit = fit_fase(&series, &basis, 2, init, &opts).unwrap();
        for s in &fit.step_trace {
            let j = -s.log2();
            assert!((j - j.round()).abs() < 1e-12 && j >= 0.0);
        }
        assert!(fit.step_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn step_growth_never_exceeds_maximum() {
        let (series, basis, truth) = setup();
        let opts = FitOptions { allow_step_growth: true, max_iterations: 50, ..Default::default() };
        let fit = fit_fase(&series, &basis, 2, truth.scale(0.5), &opts).unwrap();
        assert!(fit.step_trace.iter().all(|&s| s <= 1.0 / 60.0));
        assert!(fit.objective_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bad_inputs() {
        let (series, basis, truth) = setup();
        assert!(matches!(
            fit_fase(&series, &basis, 3, truth.clone(), &FitOptions::default()),
            Err(FaseError::DimensionMismatch(_))
        ));
        let opts = FitOptions { backtrack_factor: 1.0, ..Default::default() };
        assert!(fit_fase(&series, &basis, 2, truth.clone(), &opts).is_err());
        let opts = FitOptions { lambda: -1.0, ..Default::default() };
        assert!(fit_fase_penalized(&series, &basis, 2, truth, &opts).is_err());
    }

    #[test]
    fn sequential_matches_concurrent_in_one_dimension() {
        let (series, basis, truth) = setup();
        let init = CoordinateTensor::from_slices(vec![truth.slice(0) * 0.8]).unwrap();
        let opts = FitOptions::default();
        let a = fit_fase(&series, &basis, 1, init.clone(), &opts).unwrap();
        let b = fit_fase_sequential(&series, &basis, 1, init, &opts).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn penalized_with_zero_weight_matches_plain_fit() {
        let (series, basis, truth) = setup();
        let init = truth.scale(0.6);
        let opts = FitOptions { max_iterations: 40, ..Default::default() };
        let a = fit_fase(&series, &basis, 2, init.clone(), &opts).unwrap();
        let b = fit_fase_penalized(&series, &basis, 2, init, &opts).unwrap();
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn prediction_refuses_extrapolation() {
        let (series, basis, truth) = setup();
        let fit = fit_fase(&series, &basis, 2, truth, &FitOptions::default()).unwrap();
        assert!(fit.predict(1.0).is_ok());
        assert!(matches!(fit.predict(1.5), Err(FaseError::OutOfDomain { .. })));
        let z = fit.predict(series.indices()[3]).unwrap();
        assert_eq!(z, evaluate_processes(&fit.coords, &fit.basis, series.indices()[3]).unwrap());
    }
}
