//! Convergence rates, extinction phase diagrams and mass bookkeeping.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::closed_form::{asymptotic_profile_psi, stationary_profile_phi, ClosedFormError, SolutionField};
use crate::gaussian_dynamics::{extinction_time, ExtinctionSource};
use crate::model::{FitnessSign, InitialDatum, Survival, TailClass};
use crate::pde_oracle::{trapezoid, OracleTrajectory};
use crate::quadrature::{integrate_with_breakpoints, Domain, QuadratureError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("deviation profiles need harmonic fitness")]
    NotHarmonic,
    #[error("times must be positive, got {0}")]
    InvalidTime(f64),
    #[error("no snapshot at t = {0}")]
    MissingSnapshot(f64),
}

/// `sup_x|u(t,x) − ψ(t,x)|` and its rescaling by `sinh(2σt)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub sigma: f64,
    pub times: Vec<f64>,
    pub sup_deviation: Vec<f64>,
    pub scaled: Vec<f64>,
    /// Largest `scaled(t)` over `t ≥ 1`; `None` when no such time was sampled.
    pub c_estimate: Option<f64>,
}

impl ConvergenceReport {
    /// max/min of `scaled` over `t ≥ 1`.
    pub fn spread(&self) -> Option<f64> {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.scaled)
            .filter(|(t, _)| **t >= 1.0)
            .map(|(_, s)| *s)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max / min)
    }
}

/// Grid for sup norms: 1201 points on `[−6√σ, 6√σ]`, 201 more on the
/// central twelfth.
pub fn default_sup_grid(sigma: f64) -> Vec<f64> {
    let r = 6.0 * sigma.sqrt();
    let mut grid: Vec<f64> = (0..=1200).map(|i| -r + 2.0 * r * i as f64 / 1200.0).collect();
    grid.extend((0..=200).map(|i| -r / 12.0 + r / 6.0 * i as f64 / 200.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

pub fn sup_abs<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> f64 {
    grid.iter().map(|&x| f(x).abs()).fold(0.0, f64::max)
}

fn alive_values(field: &SolutionField, t: f64, grid: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    match field.values(t, grid)? {
        Survival::Alive(v) => Ok(v),
        Survival::Extinct => Ok(vec![0.0; grid.len()]),
    }
}

pub fn deviation_profile(
    field: &SolutionField,
    times: &[f64],
    x_grid: Option<&[f64]>,
) -> Result<ConvergenceReport, AnalysisError> {
    let params = field.params();
    if params.fitness() != FitnessSign::Harmonic {
        return Err(AnalysisError::NotHarmonic);
    }
    let sigma = params.sigma();
    if let Some(&bad) = times.iter().find(|t| !(**t > 0.0)) {
        return Err(AnalysisError::InvalidTime(bad));
    }
    let owned;
    let grid = match x_grid {
        Some(g) => g,
        None => {
            owned = default_sup_grid(sigma);
            &owned
        }
    };
    let sup_deviation = times
        .par_iter()
        .map(|&t| {
            let u = alive_values(field, t, grid)?;
            Ok(grid
                .iter()
                .zip(&u)
                .map(|(&x, &v)| (v - asymptotic_profile_psi(sigma, t, x)).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    let scaled: Vec<f64> = times
        .iter()
        .zip(&sup_deviation)
        .map(|(&t, &s)| s * (2.0 * sigma * t).sinh())
        .collect();
    let c_estimate = times
        .iter()
        .zip(&scaled)
        .filter(|(t, _)| **t >= 1.0)
        .map(|(_, s)| *s)
        .reduce(f64::max);
    Ok(ConvergenceReport {
        sigma,
        times: times.to_vec(),
        sup_deviation,
        scaled,
        c_estimate,
    })
}

/// `sup_x|u(t,x) − φ(x)|` on `grid`.
pub fn distance_to_stationary(field: &SolutionField, t: f64, grid: &[f64]) -> Result<f64, AnalysisError> {
    let sigma = field.params().sigma();
    let u = alive_values(field, t, grid)?;
    Ok(grid
        .iter()
        .zip(&u)
        .map(|(&x, &v)| (v - stationary_profile_phi(sigma, x)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub label: String,
    pub tail: TailClass,
    pub extinction_time: f64,
    pub ratio_to_heat_cap: f64,
    pub source: ExtinctionSource,
}

/// Extinction times of each datum, ordered by `T` (ties keep input order).
pub fn phase_diagram(data: &[(String, InitialDatum)], sigma: f64) -> Vec<PhaseRow> {
    let mut rows: Vec<PhaseRow> = data
        .par_iter()
        .map(|(label, d)| {
            let r = extinction_time(d, sigma);
            PhaseRow {
                label: label.clone(),
                tail: r.tail,
                extinction_time: r.time,
                ratio_to_heat_cap: r.ratio(),
                source: r.source,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.extinction_time.total_cmp(&b.extinction_time));
    rows
}

/// Anything whose total mass can be sampled in time.
pub trait MassSource {
    fn mass_at(&self, t: f64) -> Result<f64, AnalysisError>;
}

impl MassSource for SolutionField {
    fn mass_at(&self, t: f64) -> Result<f64, AnalysisError> {
        Ok(self.mass(t)?.alive().unwrap_or(0.0))
    }
}

impl MassSource for OracleTrajectory {
    fn mass_at(&self, t: f64) -> Result<f64, AnalysisError> {
        let snap = self.snapshot_at(t).ok_or(AnalysisError::MissingSnapshot(t))?;
        Ok(trapezoid(snap, self.grid[1] - self.grid[0]))
    }
}

/// The fundamental solution `ψ(t,·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticProfile {
    pub sigma: f64,
}

impl MassSource for AsymptoticProfile {
    fn mass_at(&self, t: f64) -> Result<f64, AnalysisError> {
        if !(t > 0.0) {
            return Err(AnalysisError::InvalidTime(t));
        }
        let sd = (self.sigma * (2.0 * self.sigma * t).tanh()).sqrt();
        let points: Vec<f64> = (-8..=8).map(|k| k as f64 * sd).collect();
        let r = integrate_with_breakpoints(
            |x| asymptotic_profile_psi(self.sigma, t, x),
            Domain::WholeLine,
            &points,
            1e-13,
        )?;
        Ok(r.value())
    }
}

/// `max_t |∫u(t,·) − 1|` over `times`.
pub fn mass_drift<S: MassSource + ?Sized>(source: &S, times: &[f64]) -> Result<f64, AnalysisError> {
    times
        .iter()
        .map(|&t| source.mass_at(t).map(|m| (m - 1.0).abs()))
        .try_fold(0.0_f64, |acc, d| d.map(|d| acc.max(d)))
}
