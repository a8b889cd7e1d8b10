//! Selection of the basis dimension `q` and latent dimension `d` by the
//! network GCV criterion.

use crate::error::{FaseError, Result};
use crate::estimation::{fit_fase, FaseFit, FitOptions};
use crate::init::{default_blocks, initialize};
use crate::model::SnapshotSeries;
use crate::scalar::Real;
use crate::spline::make_basis;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Objective values below this are floored before taking logs.
pub const OBJECTIVE_FLOOR: f64 = 1e-300;

/// `log(ℓ / (m n²)) − 2 log(1 − 2qd / (nm))`.
pub fn ngcv<T: Real>(objective: T, n: usize, m: usize, q: usize, d: usize) -> Result<T> {
    let (two_qd, nm) = (2 * q * d, n * m);
    if two_qd >= nm {
        return Err(FaseError::InvalidComplexity { two_qd, nm });
    }
    let floor = T::lit(OBJECTIVE_FLOOR).max(T::tiny());
    let fit = objective.max(floor) / T::from_count(m * n * n);
    let complexity = T::one() - T::from_count(two_qd) / T::from_count(nm);
    Ok(fit.ln() - T::lit(2.0) * complexity.ln())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuningGrid {
    pub q_values: Vec<usize>,
    pub d_values: Vec<usize>,
}

impl TuningGrid {
    pub fn new(mut q_values: Vec<usize>, mut d_values: Vec<usize>) -> Result<Self> {
        q_values.sort_unstable();
        q_values.dedup();
        d_values.sort_unstable();
        d_values.dedup();
        if q_values.is_empty() || d_values.is_empty() {
            return Err(FaseError::InvalidGrid("grid needs at least one q and one d".into()));
        }
        if d_values[0] == 0 || q_values[0] == 0 {
            return Err(FaseError::InvalidGrid("q and d must be positive".into()));
        }
        Ok(Self { q_values, d_values })
    }

    /// Checks every cell against the spline order and the data size.
    pub fn validate(&self, order: usize, n: usize, m: usize) -> Result<()> {
        if self.q_values[0] < order + 1 {
            return Err(FaseError::InvalidGrid(format!(
                "q = {} is below order + 1 = {}",
                self.q_values[0],
                order + 1
            )));
        }
        let (q, d) = (self.q_values[self.q_values.len() - 1], self.d_values[self.d_values.len() - 1]);
        if 2 * q * d >= n * m {
            return Err(FaseError::InvalidComplexity { two_qd: 2 * q * d, nm: n * m });
        }
        if d > n {
            return Err(FaseError::InvalidGrid(format!("d = {d} exceeds n = {n}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.q_values.len() * self.d_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells ordered by `d`, then `q`.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.d_values
            .iter()
            .flat_map(|&d| self.q_values.iter().map(move |&q| (q, d)))
            .collect()
    }
}

/// How the initializer chooses its number of blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockRule {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitPolicy {
    pub blocks: BlockRule,
    pub align: bool,
}

impl Default for InitPolicy {
    fn default() -> Self {
        Self {
            blocks: BlockRule::Auto,
            align: true,
        }
    }
}

impl InitPolicy {
    pub fn resolve_blocks<T: Real>(&self, series: &SnapshotSeries<T>, d: usize) -> Result<usize> {
        match self.blocks {
            BlockRule::Auto => default_blocks(series, d),
            BlockRule::Fixed(l) => Ok(l),
        }
    }
}

/// Builds the quantile-knot basis, initializes and fits one `(q, d)` cell.
pub fn fit_cell<T: Real>(
    series: &SnapshotSeries<T>,
    q: usize,
    d: usize,
    order: usize,
    opts: &FitOptions<T>,
    policy: &InitPolicy,
) -> Result<FaseFit<T>> {
    let basis = make_basis(q, series.indices(), order)?;
    let blocks = policy.resolve_blocks(series, d)?;
    let init = initialize(series, &basis, d, blocks, policy.align)?;
    fit_fase(series, &basis, d, init, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult<T: Real> {
    pub chosen: (usize, usize),
    /// Criterion at every visited `(q, d)` cell that fitted successfully.
    pub criteria: BTreeMap<(usize, usize), T>,
    /// Cells whose fit failed, with the error message.
    pub failures: Vec<((usize, usize), String)>,
    /// Incumbent after each univariate search (coordinate descent only).
    pub selection_path: Vec<(usize, usize)>,
    pub fits: Option<BTreeMap<(usize, usize), FaseFit<T>>>,
}

impl<T: Real> TuningResult<T> {
    pub fn chosen_criterion(&self) -> T {
        self.criteria[&self.chosen]
    }

    pub fn visited(&self) -> usize {
        self.criteria.len() + self.failures.len()
    }

    pub fn chosen_fit(&self) -> Option<&FaseFit<T>> {
        self.fits.as_ref().and_then(|f| f.get(&self.chosen))
    }
}

/// Strictly better: lower criterion, then smaller `d`, then smaller `q`.
fn better<T: Real>(a: ((usize, usize), T), b: ((usize, usize), T)) -> bool {
    let ((qa, da), ca) = a;
    let ((qb, db), cb) = b;
    ca < cb || (ca == cb && (da, qa) < (db, qb))
}

fn argmin<T: Real>(items: impl IntoIterator<Item = ((usize, usize), T)>) -> Option<((usize, usize), T)> {
    items.into_iter().fold(None, |best, item| match best {
        Some(b) if !better(item, b) => Some(b),
        _ => Some(item),
    })
}

struct CellOutcome<T: Real> {
    cell: (usize, usize),
    result: Result<(T, FaseFit<T>)>,
}

fn evaluate_cell<T: Real>(
    series: &SnapshotSeries<T>,
    cell: (usize, usize),
    order: usize,
    opts: &FitOptions<T>,
    policy: &InitPolicy,
) -> CellOutcome<T> {
    let (q, d) = cell;
    let result = fit_cell(series, q, d, order, opts, policy).and_then(|fit| {
        let crit = ngcv(fit.final_objective(), series.n(), series.m(), fit.q(), d)?;
        Ok((crit, fit))
    });
    CellOutcome { cell, result }
}

/// Fits every cell of the grid and returns the NGCV minimizer.
pub fn grid_select<T: Real>(
    series: &SnapshotSeries<T>,
    grid: &TuningGrid,
    order: usize,
    opts: &FitOptions<T>,
    policy: &InitPolicy,
    keep_fits: bool,
) -> Result<TuningResult<T>> {
    grid.validate(order, series.n(), series.m())?;
    let outcomes: Vec<CellOutcome<T>> = grid
        .cells()
        .into_par_iter()
        .map(|cell| evaluate_cell(series, cell, order, opts, policy))
        .collect();
    let mut criteria = BTreeMap::new();
    let mut failures = Vec::new();
    let mut fits = BTreeMap::new();
    for out in outcomes {
        match out.result {
            Ok((crit, fit)) => {
                criteria.insert(out.cell, crit);
                if keep_fits {
                    fits.insert(out.cell, fit);
                }
            }
            Err(e) => {
                log::warn!("cell (q = {}, d = {}) failed: {e}", out.cell.0, out.cell.1);
                failures.push((out.cell, e.to_string()));
            }
        }
    }
    let (chosen, _) = argmin(criteria.iter().map(|(&c, &v)| (c, v)))
        .ok_or_else(|| FaseError::InvalidGrid("every grid cell failed to fit".into()))?;
    Ok(TuningResult {
        chosen,
        criteria,
        failures,
        selection_path: vec![chosen],
        fits: keep_fits.then_some(fits),
    })
}

/// Path and visited cells of an alternating search.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSearch<T: Real> {
    pub chosen: (usize, usize),
    pub path: Vec<(usize, usize)>,
    pub visited: BTreeMap<(usize, usize), Option<T>>,
}

/// Alternating minimization over `q` (with `d` fixed) and `d` (with `q`
/// fixed), starting from the smallest `d`. Stops as soon as a univariate
/// search leaves the incumbent unchanged, which makes the incumbent a
/// minimizer along both of its grid lines. `eval` returns `None` for cells
/// that cannot be fitted; each cell is evaluated at most once.
pub fn coordinate_descent<T: Real>(
    grid: &TuningGrid,
    mut eval: impl FnMut(usize, usize) -> Option<T>,
) -> Result<CoordinateSearch<T>> {
    let mut visited: BTreeMap<(usize, usize), Option<T>> = BTreeMap::new();
    let mut lookup = |cell: (usize, usize), visited: &mut BTreeMap<(usize, usize), Option<T>>| {
        *visited.entry(cell).or_insert_with(|| eval(cell.0, cell.1))
    };
    let mut incumbent: Option<(usize, usize)> = None;
    let mut path = Vec::new();
    let mut d_fixed = grid.d_values[0];
    let mut q_fixed = grid.q_values[0];
    // a search along each axis can change the incumbent at most once per cell
    let max_searches = 2 * grid.len() + 2;
    for search in 0..max_searches {
        let line: Vec<(usize, usize)> = if search % 2 == 0 {
            grid.q_values.iter().map(|&q| (q, d_fixed)).collect()
        } else {
            grid.d_values.iter().map(|&d| (q_fixed, d)).collect()
        };
        let scored: Vec<((usize, usize), T)> = line
            .into_iter()
            .filter_map(|cell| lookup(cell, &mut visited).map(|v| (cell, v)))
            .collect();
        let Some((best, _)) = argmin(scored) else {
            if incumbent.is_none() {
                // nothing fitted along this line yet; search the other axis
                continue;
            }
            break;
        };
        let unchanged = incumbent == Some(best);
        incumbent = Some(best);
        (q_fixed, d_fixed) = best;
        path.push(best);
        if unchanged {
            break;
        }
    }
    let chosen = incumbent.ok_or_else(|| FaseError::InvalidGrid("no grid cell could be fitted".into()))?;
    Ok(CoordinateSearch { chosen, path, visited })
}

/// Runs [`coordinate_descent`] against an existing criterion table.
pub fn coordinate_descent_on_table<T: Real>(
    grid: &TuningGrid,
    table: &BTreeMap<(usize, usize), T>,
) -> Result<CoordinateSearch<T>> {
    coordinate_descent(grid, |q, d| table.get(&(q, d)).copied())
}

/// Coordinate-descent selection, fitting cells on demand.
pub fn coordinate_descent_select<T: Real>(
    series: &SnapshotSeries<T>,
    grid: &TuningGrid,
    order: usize,
    opts: &FitOptions<T>,
    policy: &InitPolicy,
    keep_fits: bool,
) -> Result<TuningResult<T>> {
    grid.validate(order, series.n(), series.m())?;
    let mut criteria = BTreeMap::new();
    let mut failures = Vec::new();
    let mut fits = BTreeMap::new();
    let search = coordinate_descent(grid, |q, d| {
        let out = evaluate_cell(series, (q, d), order, opts, policy);
        match out.result {
            Ok((crit, fit)) => {
                criteria.insert((q, d), crit);
                if keep_fits {
                    fits.insert((q, d), fit);
                }
                Some(crit)
            }
            Err(e) => {
                log::warn!("cell (q = {q}, d = {d}) failed: {e}");
                failures.push(((q, d), e.to_string()));
                None
            }
        }
    })?;
    Ok(TuningResult {
        chosen: search.chosen,
        criteria,
        failures,
        selection_path: search.path,
        fits: keep_fits.then_some(fits),
    })
}
