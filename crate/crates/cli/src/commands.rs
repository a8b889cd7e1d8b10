use crate::archive::{self, fmt, Generator};
use crate::error::{CliError, CliResult};
use fase::baselines::{ase_per_snapshot, omni_embed};
use fase::tuning::coordinate_descent_select;
use fase::{
    err_theta_mid, err_z, err_z_star, evaluate_processes, expected_adjacency, fit_fase, fit_fase_penalized, fit_fase_sequential,
    generate, grid_select, initialize, make_basis, ngcv, BlockRule, Fit, InitPolicy, Options, Scenario,
    ScenarioSpec, Series, Stack, TuningGrid,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct SimulateArgs {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub sigma: f64,
    pub density: f64,
    pub cycles: f64,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let scenario: Scenario = args.scenario.parse()?;
    let spec = ScenarioSpec::new(scenario, args.n, args.m, args.d, args.seed)
        .with_sigma(args.sigma)
        .with_density(args.density)
        .with_cycles(args.cycles);
    let sim = generate::<f64>(&spec)?;
    let generator = Generator {
        scenario: scenario.to_string(),
        d: args.d,
        sigma: args.sigma,
        density: args.density,
        cycles: args.cycles,
        seed: args.seed,
    };
    archive::write_series(&args.out, &sim.series, Some(generator))?;
    let truth = args.out.join(archive::TRUTH_DIR);
    archive::ensure_dir(&truth)?;
    archive::write_stack(&truth.join(archive::TRAJECTORIES_FILE), &sim.truth)?;
    if let Some(coords) = &sim.coords {
        archive::write_coords(&truth.join(archive::COORDS_FILE), coords)?;
    }
    if let Some(basis) = &sim.basis {
        archive::write_basis(&truth.join(archive::BASIS_FILE), basis)?;
    }
    log::info!("wrote {} snapshots of {} nodes to {}", args.m, args.n, args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Blocks {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for Blocks {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Blocks::Auto);
        }
        match s.parse::<usize>() {
            Ok(l) if l > 0 => Ok(Blocks::Fixed(l)),
            _ => Err(format!("expected 'auto' or a positive integer, got '{s}'")),
        }
    }
}

/// Settings shared by `fit` and `tune`.
pub struct FitSettings {
    pub input: PathBuf,
    pub order: usize,
    pub sequential: bool,
    pub lambda: f64,
    pub blocks: Blocks,
    pub no_align: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub grow_step: bool,
    pub exclude_diagonal: bool,
    pub out: PathBuf,
}

impl FitSettings {
    fn options(&self) -> Options {
        Options {
            max_iterations: self.max_iter,
            rel_tol: self.tol,
            lambda: self.lambda,
            allow_step_growth: self.grow_step,
            ..Options::default()
        }
    }

    fn policy(&self) -> InitPolicy {
        InitPolicy {
            blocks: match self.blocks {
                Blocks::Auto => BlockRule::Auto,
                Blocks::Fixed(l) => BlockRule::Fixed(l),
            },
            align: !self.no_align,
        }
    }

    fn load(&self) -> CliResult<Series> {
        let series = archive::read_series(&self.input)?;
        if self.exclude_diagonal {
            Ok(series.exclude_diagonal()?)
        } else {
            Ok(series)
        }
    }

    /// Whether the plain concurrent fit used by tuning matches these settings.
    fn is_plain(&self) -> bool {
        !self.sequential && self.lambda == 0.0
    }
}

#[derive(Serialize)]
struct FitReport {
    n: usize,
    m: usize,
    q: usize,
    d: usize,
    order: usize,
    method: &'static str,
    lambda: f64,
    blocks: usize,
    iterations: usize,
    converged: bool,
    stalled: bool,
    final_objective: f64,
    ngcv: Option<f64>,
    final_step_size: f64,
    objective_trace: Vec<f64>,
    step_trace: Vec<f64>,
    pass_traces: Vec<Vec<f64>>,
}

fn run_fit(series: &Series, q: usize, d: usize, settings: &FitSettings) -> CliResult<(Fit, usize)> {
    let basis = make_basis(q, series.indices(), settings.order)?;
    let policy = settings.policy();
    let blocks = policy.resolve_blocks(series, d)?;
    let init = initialize(series, &basis, d, blocks, policy.align)?;
    let opts = settings.options();
    let fit = if settings.sequential {
        fit_fase_sequential(series, &basis, d, init, &opts)?
    } else if settings.lambda > 0.0 {
        fit_fase_penalized(series, &basis, d, init, &opts)?
    } else {
        fit_fase(series, &basis, d, init, &opts)?
    };
    Ok((fit, blocks))
}

fn write_fit(series: &Series, fit: &Fit, blocks: usize, settings: &FitSettings) -> CliResult<()> {
    let out = &settings.out;
    archive::ensure_dir(out)?;
    archive::write_coords(&out.join(archive::COORDS_FILE), &fit.coords)?;
    archive::write_basis(&out.join(archive::BASIS_FILE), &fit.basis)?;
    archive::write_stack(&out.join(archive::TRAJECTORIES_FILE), &fit.trajectories(series.indices())?)?;
    let method = if settings.sequential {
        "sequential"
    } else if settings.lambda > 0.0 {
        "penalized"
    } else {
        "concurrent"
    };
    let report = FitReport {
        n: series.n(),
        m: series.m(),
        q: fit.q(),
        d: fit.d(),
        order: fit.basis.order(),
        method,
        lambda: fit.lambda,
        blocks,
        iterations: fit.iterations,
        converged: fit.converged,
        stalled: fit.stalled,
        final_objective: fit.final_objective(),
        ngcv: ngcv(fit.final_objective(), series.n(), series.m(), fit.q(), fit.d()).ok(),
        final_step_size: fit.final_step_size,
        objective_trace: fit.objective_trace.clone(),
        step_trace: fit.step_trace.clone(),
        pass_traces: fit.pass_traces.clone(),
    };
    archive::write_json(&out.join("fit.json"), &report)?;
    if !fit.converged {
        log::warn!(
            "descent stopped after {} iterations without meeting the tolerance{}",
            fit.iterations,
            if fit.stalled { " (step size underflow)" } else { "" }
        );
    }
    Ok(())
}

pub fn fit(q: usize, d: usize, settings: &FitSettings) -> CliResult<()> {
    let series = settings.load()?;
    let (fit, blocks) = run_fit(&series, q, d, settings)?;
    write_fit(&series, &fit, blocks, settings)
}

/// `a:b:s` (inclusive, step `s`), `a:b` (step 1), or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("cannot parse grid '{text}'; use a:b:s or a comma list");
    if text.contains(':') {
        let parts: Vec<usize> = text
            .split(':')
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let (a, b, s) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, s] => (a, b, s),
            _ => return Err(bad()),
        };
        if s == 0 || b < a {
            return Err(bad());
        }
        Ok((a..=b).step_by(s).collect())
    } else {
        text.split(',').map(|p| p.trim().parse::<usize>().map_err(|_| bad())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Grid,
    Cd,
}

#[derive(Serialize)]
struct ChosenReport {
    q: usize,
    d: usize,
    ngcv: f64,
    method: &'static str,
    visited: usize,
    grid_size: usize,
    path: Vec<(usize, usize)>,
    failures: Vec<((usize, usize), String)>,
}

pub fn tune(q_grid: Vec<usize>, d_grid: Vec<usize>, method: SearchMethod, settings: &FitSettings) -> CliResult<()> {
    let series = settings.load()?;
    let grid = TuningGrid::new(q_grid, d_grid)?;
    let (opts, policy) = (settings.options(), settings.policy());
    let keep = settings.is_plain();
    let result = match method {
        SearchMethod::Grid => grid_select(&series, &grid, settings.order, &opts, &policy, keep)?,
        SearchMethod::Cd => coordinate_descent_select(&series, &grid, settings.order, &opts, &policy, keep)?,
    };
    let (q, d) = result.chosen;
    archive::ensure_dir(&settings.out)?;

    let mut table = String::from("q,d,ngcv,visited\n");
    let visited: std::collections::BTreeSet<(usize, usize)> = result
        .criteria
        .keys()
        .copied()
        .chain(result.failures.iter().map(|(c, _)| *c))
        .collect();
    for cell in grid.cells() {
        let value = result.criteria.get(&cell).map(|&v| fmt(v)).unwrap_or_default();
        table.push_str(&format!("{},{},{},{}\n", cell.0, cell.1, value, visited.contains(&cell)));
    }
    std::fs::write(settings.out.join("tuning.csv"), table)
        .map_err(|e| CliError::data(format!("writing {}", settings.out.display()), e))?;

    let chosen = ChosenReport {
        q,
        d,
        ngcv: result.chosen_criterion(),
        method: match method {
            SearchMethod::Grid => "grid",
            SearchMethod::Cd => "cd",
        },
        visited: result.visited(),
        grid_size: grid.len(),
        path: result.selection_path.clone(),
        failures: result.failures.clone(),
    };
    archive::write_json(&settings.out.join("chosen.json"), &chosen)?;

    let (fit, blocks) = match result.chosen_fit() {
        Some(fit) => (fit.clone(), policy.resolve_blocks(&series, d)?),
        None => run_fit(&series, q, d, settings)?,
    };
    write_fit(&series, &fit, blocks, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ErrZ,
    ErrZStar,
    ThetaMid,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::ErrZ => "errz",
            Metric::ErrZStar => "errzstar",
            Metric::ThetaMid => "theta-mid",
        }
    }
}

fn single(stack: &Stack, k: usize) -> CliResult<Stack> {
    Ok(Stack::new(vec![stack.slice(k).clone()])?)
}

/// Rows of `(metric, snapshot, value)`; `snapshot` is 1-based or `all`.
pub fn evaluate_rows(est: &Stack, truth: &Stack, metric: Metric) -> CliResult<Vec<(String, f64)>> {
    let mut rows = Vec::new();
    match metric {
        Metric::ErrZ => {
            for k in 0..est.m().min(truth.m()) {
                rows.push(((k + 1).to_string(), err_z(&single(est, k)?, &single(truth, k)?)?));
            }
            rows.push(("all".into(), err_z(est, truth)?));
        }
        Metric::ErrZStar => rows.push(("all".into(), err_z_star(est, truth)?)),
        Metric::ThetaMid => {
            if est.m() != truth.m() {
                return Err(CliError::Data(format!("estimate has {} snapshots, truth {}", est.m(), truth.m())));
            }
            let mut total = 0.0;
            for k in 0..est.m() {
                let v = err_theta_mid(est.slice(k), &expected_adjacency(truth.slice(k)))?;
                total += v;
                rows.push(((k + 1).to_string(), v));
            }
            rows.push(("all".into(), total / est.m() as f64));
        }
    }
    Ok(rows)
}

fn output(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::data(format!("creating {}", path.display()), e))?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::data("writing output", e)
}

pub fn evaluate(est: &Path, truth: &Path, metric: Metric, out: Option<&Path>) -> CliResult<()> {
    let est = archive::read_stack(&archive::trajectories_in(est))?;
    let truth = archive::read_stack(&archive::trajectories_in(truth))?;
    let rows = evaluate_rows(&est, &truth, metric)?;
    let mut w = output(out)?;
    writeln!(w, "metric,snapshot,value").map_err(io_err)?;
    for (snap, v) in rows {
        writeln!(w, "{},{snap},{}", metric.name(), fmt(v)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Ase,
    Omni,
}

pub fn baseline(input: &Path, method: BaselineMethod, d: usize, out: &Path) -> CliResult<()> {
    let series = archive::read_series(input)?;
    let stack = match method {
        BaselineMethod::Ase => ase_per_snapshot(&series, d)?,
        BaselineMethod::Omni => omni_embed(&series, d)?,
    };
    archive::ensure_dir(out)?;
    archive::write_stack(&out.join(archive::TRAJECTORIES_FILE), &stack)
}

pub enum PredictAt {
    Points(Vec<f64>),
    Grid(usize),
}

pub fn predict(fit_dir: &Path, at: PredictAt, out: Option<&Path>) -> CliResult<()> {
    let basis = archive::read_basis(&fit_dir.join(archive::BASIS_FILE))?;
    let coords = archive::read_coords(&fit_dir.join(archive::COORDS_FILE))?;
    let (lo, hi) = basis.domain();
    let points = match at {
        PredictAt::Points(p) => p,
        PredictAt::Grid(0) => return Err(CliError::Usage("--grid needs at least one point".into())),
        PredictAt::Grid(1) => vec![lo],
        PredictAt::Grid(k) => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    };
    let mut positions = BTreeMap::new();
    for (i, &x) in points.iter().enumerate() {
        positions.insert(i, evaluate_processes(&coords, &basis, x)?);
    }
    let mut w = output(out)?;
    writeln!(w, "x,node,dim,value").map_err(io_err)?;
    for (i, z) in positions {
        for node in 0..z.nrows() {
            for r in 0..z.ncols() {
                writeln!(w, "{},{},{},{}", fmt(points[i]), node + 1, r + 1, fmt(z[(node, r)])).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}
