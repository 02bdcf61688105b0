//! Finite-difference solver for the nonlocal equation on `[−L, L]`.
//!
//! Each step applies the reaction `(f − f̄ⁿ)u` explicitly, with
//! `f̄ⁿ = ∫f uⁿ` by the trapezoid rule, then a Crank–Nicolson diffusion step
//! with homogeneous Dirichlet boundaries. Nothing here uses the closed form.

use serde::Serialize;
use thiserror::Error;

use crate::closed_form::SolutionField;
use crate::gaussian_dynamics::extinction_time;
use crate::model::{FitnessSign, InitialDatum, Survival, ValidatedDatum};

/// Inverted runs must stop this far before the extinction time.
pub const EXTINCTION_MARGIN: f64 = 1e-3;
pub const OVERFLOW_GUARD: f64 = 1e12;
pub const MASS_DRIFT_LIMIT: f64 = 1e-2;
pub const CLIP_LEVEL: f64 = -1e-12;
/// Bound on `dt · max|f − f̄|` for the explicit reaction step.
pub const REACTION_STABILITY: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("dt·max|f − f̄| = {0} exceeds the stability bound")]
    StepTooLarge(f64),
    #[error("t_end = {t_end} is not before the extinction time {extinction} minus the margin")]
    BeyondExtinction { t_end: f64, extinction: f64 },
    #[error("blow-up at t = {t}")]
    BlowUp { t: f64 },
    #[error("mass drift {drift} at t = {t}")]
    Instability { t: f64, drift: f64 },
}

/// Growth term used by the solver; `Neutral` (`f ≡ 0`) reduces it to the
/// heat equation with diffusivity `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleFitness {
    Quadratic(FitnessSign),
    Neutral,
}

impl OracleFitness {
    pub fn at(self, x: f64) -> f64 {
        match self {
            OracleFitness::Quadratic(s) => s.fitness(x),
            OracleFitness::Neutral => 0.0,
        }
    }
}

impl From<FitnessSign> for OracleFitness {
    fn from(s: FitnessSign) -> Self {
        OracleFitness::Quadratic(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub half_width: f64,
    /// Odd, at least 201.
    pub nx: usize,
    pub dt: f64,
    pub renormalize: bool,
    /// Extra snapshot times in `(0, t_end)`; `0` and `t_end` are always recorded.
    pub snapshot_times: Vec<f64>,
}

impl OracleConfig {
    pub fn new(half_width: f64, nx: usize, dt: f64) -> Self {
        Self {
            half_width,
            nx,
            dt,
            renormalize: false,
            snapshot_times: Vec::new(),
        }
    }

    /// `L = max(8√σ, edge of the datum bulk + 6√σ)` with `nx = 801`, `dt = 1e−4`.
    pub fn reference(d: &InitialDatum, sigma: f64) -> Self {
        let root = sigma.sqrt();
        let edge = match d {
            InitialDatum::Tabulated(t) => {
                let (lo, hi) = t.support();
                lo.abs().max(hi.abs()) + 6.0 * root
            }
            _ => {
                // bulk_domain spans ±10 standard deviations
                let (lo, hi) = d.bulk_domain();
                let (c, w) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                c.abs() + 0.6 * w
            }
        };
        Self::new((8.0 * root).max(edge), 801, 1e-4)
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            dt: self.dt / 4.0,
            ..self.clone()
        }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.nx - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx)
            .map(|i| -self.half_width + i as f64 * dx)
            .collect()
    }

    fn check(&self) -> Result<(), OracleError> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(OracleError::Config(format!("L must be positive, got {}", self.half_width)));
        }
        if self.nx < 201 || self.nx % 2 == 0 {
            return Err(OracleError::Config(format!("nx must be odd and ≥ 201, got {}", self.nx)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(OracleError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub grid: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub step_times: Vec<f64>,
    pub mass: Vec<f64>,
    pub mean_fitness: Vec<f64>,
    /// Values in `[−1e−12, 0)` set to zero.
    pub clipped: usize,
    /// Values below `−1e−12`, left in place.
    pub undershoots: usize,
    pub min_value: f64,
    pub fitness: OracleFitness,
}

impl OracleTrajectory {
    pub fn snapshot_at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|i| self.snapshots[i].as_slice())
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, .., last] => dx * (values.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}

fn mean_fitness_on(grid: &[f64], u: &[f64], fitness: OracleFitness, dx: f64) -> f64 {
    let fu: Vec<f64> = grid.iter().zip(u).map(|(&x, &v)| fitness.at(x) * v).collect();
    trapezoid(&fu, dx)
}

/// Crank–Nicolson system `(1+2r)uᵢ − r(uᵢ₋₁ + uᵢ₊₁) = rhsᵢ` on the interior,
/// with the forward sweep factors computed once per step size.
struct Diffusion {
    r: f64,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl Diffusion {
    fn new(diffusivity: f64, dt: f64, dx: f64, interior: usize) -> Self {
        let r = diffusivity * dt / (2.0 * dx * dx);
        let (a, b, c) = (-r, 1.0 + 2.0 * r, -r);
        let mut c_prime = vec![0.0; interior];
        let mut denom = vec![0.0; interior];
        for i in 0..interior {
            let m = if i == 0 { b } else { b - a * c_prime[i - 1] };
            denom[i] = m;
            c_prime[i] = c / m;
        }
        Self { r, c_prime, denom }
    }

    fn step(&self, u: &mut [f64], scratch: &mut Vec<f64>) {
        let n = u.len();
        let r = self.r;
        scratch.clear();
        scratch.extend((1..n - 1).map(|i| r * u[i - 1] + (1.0 - 2.0 * r) * u[i] + r * u[i + 1]));
        let m = scratch.len();
        for i in 0..m {
            let prev = if i == 0 { 0.0 } else { scratch[i - 1] };
            scratch[i] = (scratch[i] + r * prev) / self.denom[i];
        }
        for i in (0..m.saturating_sub(1)).rev() {
            scratch[i] -= self.c_prime[i] * scratch[i + 1];
        }
        u[0] = 0.0;
        u[n - 1] = 0.0;
        u[1..n - 1].copy_from_slice(scratch);
    }
}

pub fn solve(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: impl Into<OracleFitness>,
    t_end: f64,
    cfg: &OracleConfig,
) -> Result<OracleTrajectory, OracleError> {
    solve_observed(d, sigma, fitness, t_end, cfg, |_, _| {})
}

/// [`solve`], calling `observer(step, t)` after every step.
pub fn solve_observed<O: FnMut(usize, f64)>(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: impl Into<OracleFitness>,
    t_end: f64,
    cfg: &OracleConfig,
    mut observer: O,
) -> Result<OracleTrajectory, OracleError> {
    let fitness = fitness.into();
    cfg.check()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(OracleError::Config(format!("σ must be positive, got {sigma}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(OracleError::Config(format!("t_end must be positive, got {t_end}")));
    }
    if fitness == OracleFitness::Quadratic(FitnessSign::Inverted) {
        let extinction = extinction_time(d, sigma).time;
        if t_end >= extinction - EXTINCTION_MARGIN {
            return Err(OracleError::BeyondExtinction { t_end, extinction });
        }
    }

    let grid = cfg.grid();
    let dx = cfg.dx();
    let n = grid.len();
    let mut u: Vec<f64> = grid.iter().map(|&x| d.density(x)).collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;

    let mut stops: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t_end)
        .collect();
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let fbar0 = mean_fitness_on(&grid, &u, fitness, dx);
    let max_f = grid.iter().map(|&x| (fitness.at(x) - fbar0).abs()).fold(0.0, f64::max);
    if cfg.dt * max_f > REACTION_STABILITY {
        return Err(OracleError::StepTooLarge(cfg.dt * max_f));
    }

    let mut traj = OracleTrajectory {
        times: vec![0.0],
        grid: grid.clone(),
        snapshots: vec![u.clone()],
        step_times: vec![0.0],
        mass: vec![trapezoid(&u, dx)],
        mean_fitness: vec![fbar0],
        clipped: 0,
        undershoots: 0,
        min_value: u.iter().copied().fold(f64::INFINITY, f64::min),
        fitness,
    };

    let diffusivity = sigma * sigma;
    let full = Diffusion::new(diffusivity, cfg.dt, dx, n - 2);
    let mut scratch = Vec::with_capacity(n);
    let mut t = 0.0;
    let mut step = 0usize;
    for &stop in &stops {
        while t < stop {
            let remaining = stop - t;
            let (h, partial);
            if remaining <= cfg.dt * (1.0 + 1e-9) {
                h = remaining;
                partial = (remaining - cfg.dt).abs() > 1e-12 * cfg.dt;
            } else {
                h = cfg.dt;
                partial = false;
            }
            let fbar = mean_fitness_on(&grid, &u, fitness, dx);
            for (v, &x) in u.iter_mut().zip(&grid) {
                *v += h * (fitness.at(x) - fbar) * *v;
            }
            if partial {
                Diffusion::new(diffusivity, h, dx, n - 2).step(&mut u, &mut scratch);
            } else {
                full.step(&mut u, &mut scratch);
            }
            t = if partial || remaining <= cfg.dt * (1.0 + 1e-9) { stop } else { t + h };
            step += 1;

            for v in u.iter_mut() {
                if *v < 0.0 {
                    if *v >= CLIP_LEVEL {
                        *v = 0.0;
                        traj.clipped += 1;
                    } else {
                        traj.undershoots += 1;
                    }
                }
            }
            let mut mass = trapezoid(&u, dx);
            if cfg.renormalize && mass > 0.0 {
                for v in u.iter_mut() {
                    *v /= mass;
                }
                mass = trapezoid(&u, dx);
            }
            let fbar_new = mean_fitness_on(&grid, &u, fitness, dx);
            let peak = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !fbar_new.is_finite()
                || !peak.is_finite()
                || fbar_new.abs() > OVERFLOW_GUARD
                || peak > OVERFLOW_GUARD
            {
                return Err(OracleError::BlowUp { t });
            }
            let drift = (mass - 1.0).abs();
            if !(drift <= MASS_DRIFT_LIMIT) {
                return Err(OracleError::Instability { t, drift });
            }
            traj.min_value = traj.min_value.min(u.iter().copied().fold(f64::INFINITY, f64::min));
            traj.step_times.push(t);
            traj.mass.push(mass);
            traj.mean_fitness.push(fbar_new);
            observer(step, t);
        }
        traj.times.push(stop);
        traj.snapshots.push(u.clone());
    }
    Ok(traj)
}

/// Per-snapshot errors of a trajectory against the closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub linf: Vec<f64>,
    pub l1: Vec<f64>,
    pub mean_fitness_deviation: Vec<f64>,
    pub max_linf: f64,
    pub max_l1: f64,
    pub max_mean_fitness_deviation: f64,
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    ClosedForm(#[from] crate::closed_form::ClosedFormError),
    #[error("trajectory has no snapshot times in the requested window")]
    NoSharedTimes,
}

/// Compares every snapshot with `t ∈ window` (all snapshots when `None`).
pub fn compare(
    traj: &OracleTrajectory,
    field: &SolutionField,
    window: Option<(f64, f64)>,
) -> Result<ErrorReport, CompareError> {
    let dx = traj.grid[1] - traj.grid[0];
    let fitness = OracleFitness::Quadratic(field.params().fitness());
    let mut report = ErrorReport {
        times: Vec::new(),
        linf: Vec::new(),
        l1: Vec::new(),
        mean_fitness_deviation: Vec::new(),
        max_linf: 0.0,
        max_l1: 0.0,
        max_mean_fitness_deviation: 0.0,
    };
    for (&t, snap) in traj.times.iter().zip(&traj.snapshots) {
        if let Some((lo, hi)) = window {
            if t < lo - 1e-12 || t > hi + 1e-12 {
                continue;
            }
        }
        let (exact, fbar) = match field.values(t, &traj.grid)? {
            Survival::Alive(v) => {
                let fbar = field.mean_fitness(t)?.alive().unwrap_or(f64::NAN);
                (v, fbar)
            }
            Survival::Extinct => (vec![0.0; traj.grid.len()], f64::NAN),
        };
        let diff: Vec<f64> = snap.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
        let linf = diff.iter().copied().fold(0.0, f64::max);
        let l1 = trapezoid(&diff, dx);
        let dev = (mean_fitness_on(&traj.grid, snap, fitness, dx) - fbar).abs();
        report.times.push(t);
        report.linf.push(linf);
        report.l1.push(l1);
        report.mean_fitness_deviation.push(dev);
        report.max_linf = report.max_linf.max(linf);
        report.max_l1 = report.max_l1.max(l1);
        report.max_mean_fitness_deviation = report.max_mean_fitness_deviation.max(dev);
    }
    if report.times.is_empty() {
        return Err(CompareError::NoSharedTimes);
    }
    Ok(report)
}

/// A trajectory sampled from the closed form, for comparisons and drift checks.
pub fn trajectory_from_field(
    field: &SolutionField,
    times: &[f64],
    grid: &[f64],
) -> Result<OracleTrajectory, crate::closed_form::ClosedFormError> {
    let fitness = OracleFitness::Quadratic(field.params().fitness());
    let dx = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
    let mut snapshots = Vec::with_capacity(times.len());
    let mut mass = Vec::with_capacity(times.len());
    let mut mean_fitness = Vec::with_capacity(times.len());
    for &t in times {
        let u = match field.values(t, grid)? {
            Survival::Alive(v) => v,
            Survival::Extinct => vec![0.0; grid.len()],
        };
        mass.push(trapezoid(&u, dx));
        mean_fitness.push(mean_fitness_on(grid, &u, fitness, dx));
        snapshots.push(u);
    }
    let min_value = snapshots
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(OracleTrajectory {
        times: times.to_vec(),
        grid: grid.to_vec(),
        snapshots,
        step_times: times.to_vec(),
        mass,
        mean_fitness,
        clipped: 0,
        undershoots: 0,
        min_value,
        fitness,
    })
}

/// Writes snapshots as `t,x,u` rows.
pub fn write_snapshots<W: std::io::Write>(
    traj: &OracleTrajectory,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(out);
    w.write_record(["t", "x", "u"])?;
    for (&t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (&x, &u) in traj.grid.iter().zip(snap) {
            w.write_record([fmt17(t), fmt17(x), fmt17(u)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Seventeen significant digits: every `f64` survives the round trip.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
