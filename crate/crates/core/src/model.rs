//! Model parameters, initial data, validation and tail classification.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, Domain};

/// Default mass tolerance for [`validate_datum`].
pub const MASS_TOL: f64 = 1e-8;

/// Number of sample points used for the nonnegativity spot check.
pub const POSITIVITY_SAMPLES: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("initial datum has mass {mass} (|mass - 1| > {tol})")]
    NotNormalized { mass: f64, tol: f64 },
    #[error("initial datum is negative at x = {x}: {value}")]
    NegativeDensity { x: f64, value: f64 },
    #[error("malformed initial datum: {0}")]
    Malformed(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

/// Sign of the quadratic fitness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitnessSign {
    /// `f(x) = −x²`
    Harmonic,
    /// `f(x) = +x²`
    Inverted,
}

impl FitnessSign {
    /// `−1` for harmonic, `+1` for inverted.
    pub fn sign(self) -> f64 {
        match self {
            FitnessSign::Harmonic => -1.0,
            FitnessSign::Inverted => 1.0,
        }
    }

    pub fn fitness(self, x: f64) -> f64 {
        self.sign() * x * x
    }
}

impl fmt::Display for FitnessSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitnessSign::Harmonic => f.write_str("harmonic"),
            FitnessSign::Inverted => f.write_str("inverted"),
        }
    }
}

impl FromStr for FitnessSign {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "harmonic" | "minus" | "-" => Ok(FitnessSign::Harmonic),
            "inverted" | "plus" | "+" => Ok(FitnessSign::Inverted),
            other => Err(ModelError::InvalidParameters(format!(
                "unknown fitness '{other}' (expected harmonic|inverted)"
            ))),
        }
    }
}

/// Diffusion scale and fitness sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    sigma: f64,
    fitness: FitnessSign,
}

impl Parameters {
    pub fn new(sigma: f64, fitness: FitnessSign) -> Result<Self, ModelError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidParameters(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma, fitness })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn fitness(&self) -> FitnessSign {
        self.fitness
    }

    /// `π/(4σ)` for inverted fitness, `+∞` for harmonic fitness.
    pub fn heat_cap(&self) -> f64 {
        match self.fitness {
            FitnessSign::Harmonic => f64::INFINITY,
            FitnessSign::Inverted => heat_cap(self.sigma),
        }
    }
}

/// Existence cap `π/(4σ)` imposed by the inverted lens transform.
pub fn heat_cap(sigma: f64) -> f64 {
    PI / (4.0 * sigma)
}

/// Normalized Gaussian `√(a/2π) e^{−a(x−m)²/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    /// Inverse variance.
    pub a: f64,
    /// Center.
    pub m: f64,
}

impl GaussianComponent {
    pub fn new(a: f64, m: f64) -> Self {
        Self { a, m }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        let d = x - self.m;
        0.5 * (self.a / (2.0 * PI)).ln() - 0.5 * self.a * d * d
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    pub fn std_dev(&self) -> f64 {
        self.a.sqrt().recip()
    }

    fn check(&self) -> Result<(), ModelError> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(ModelError::Malformed(format!(
                "gaussian inverse variance must be positive, got a = {}",
                self.a
            )));
        }
        if !self.m.is_finite() {
            return Err(ModelError::Malformed(format!(
                "gaussian center must be finite, got m = {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Piecewise-linear density, zero outside `[nodes[0], nodes[n-1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if nodes.len() != values.len() {
            return Err(ModelError::Malformed(format!(
                "table has {} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.len() < 2 {
            return Err(ModelError::Malformed(
                "table needs at least two nodes".into(),
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Malformed("table entries must be finite".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::Malformed(
                "table nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self { nodes, values })
    }

    /// Uniform density on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, ModelError> {
        let h = 1.0 / (hi - lo);
        Self::new(vec![lo, hi], vec![h, h])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        let i = self.nodes.partition_point(|&n| n <= x);
        if i >= self.nodes.len() {
            return *self.values.last().unwrap();
        }
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }

    /// Exact integral of the interpolant.
    pub fn mass(&self) -> f64 {
        self.nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (v[0] + v[1]) * (x[1] - x[0]))
            .sum()
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            nodes: self.nodes.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Reads a two-column `x,u0` CSV file; a header row is optional.
    pub fn from_csv(path: &Path) -> Result<Self, ModelError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| ModelError::Malformed(format!("{}: {e}", path.display())))?;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record =
                record.map_err(|e| ModelError::Malformed(format!("{}: {e}", path.display())))?;
            if record.len() != 2 {
                return Err(ModelError::Malformed(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 1,
                    record.len()
                )));
            }
            match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    nodes.push(x);
                    values.push(v);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(ModelError::Malformed(format!(
                        "{}: row {} is not numeric",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Self::new(nodes, values)
    }
}

/// Outcome of an evaluation that may happen after extinction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Survival<T> {
    Alive(T),
    Extinct,
}

impl<T> Survival<T> {
    pub fn alive(self) -> Option<T> {
        match self {
            Survival::Alive(v) => Some(v),
            Survival::Extinct => None,
        }
    }

    pub fn is_extinct(&self) -> bool {
        matches!(self, Survival::Extinct)
    }

    pub fn map<U, F: FnOnce(T) -> U>(self, f: F) -> Survival<U> {
        match self {
            Survival::Alive(v) => Survival::Alive(f(v)),
            Survival::Extinct => Survival::Extinct,
        }
    }
}

/// Qualitative decay of `u₀` at infinity; it alone decides the extinction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TailClass {
    CompactSupport,
    /// Stretched-Gaussian decay `e^{−c|y|^p}` with `p > 2`.
    SuperGaussian { p: f64 },
    /// `u₀(y) ≍ e^{−rate·y²/2}`.
    Gaussian { rate: f64 },
    /// Exponential, algebraic or heavier tails.
    SubGaussian,
}

/// Density supplied by library users.
#[derive(Clone)]
pub struct CustomDensity {
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tail: Option<TailClass>,
    domain: (f64, f64),
}

impl CustomDensity {
    /// `tail = None` leaves the tail class to the numeric probe.
    pub fn new<F>(density: F, tail: Option<TailClass>, suggested_domain: (f64, f64)) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            density: Arc::new(density),
            tail,
            domain: suggested_domain,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    pub fn declared_tail(&self) -> Option<TailClass> {
        self.tail
    }

    pub fn suggested_domain(&self) -> (f64, f64) {
        self.domain
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("tail", &self.tail)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

/// Initial trait distribution `u₀`.
#[derive(Debug, Clone)]
pub enum InitialDatum {
    Gaussian(GaussianComponent),
    Mixture {
        weights: Vec<f64>,
        components: Vec<GaussianComponent>,
    },
    Tabulated(Table),
    Custom(CustomDensity),
}

impl InitialDatum {
    pub fn gaussian(a: f64, m: f64) -> Self {
        InitialDatum::Gaussian(GaussianComponent::new(a, m))
    }

    pub fn mixture(parts: &[(f64, f64, f64)]) -> Self {
        InitialDatum::Mixture {
            weights: parts.iter().map(|p| p.0).collect(),
            components: parts
                .iter()
                .map(|p| GaussianComponent::new(p.1, p.2))
                .collect(),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            InitialDatum::Gaussian(g) => g.density(x),
            InitialDatum::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, g)| w * g.density(x))
                .sum(),
            InitialDatum::Tabulated(t) => t.density(x),
            InitialDatum::Custom(c) => c.density(x),
        }
    }

    /// `ln u₀(x)`, `−∞` where the density vanishes.
    pub fn ln_density(&self, x: f64) -> f64 {
        match self {
            InitialDatum::Gaussian(g) => g.ln_density(x),
            InitialDatum::Mixture {
                weights,
                components,
            } => log_sum_exp(
                weights
                    .iter()
                    .zip(components)
                    .map(|(w, g)| w.ln() + g.ln_density(x)),
            ),
            _ => {
                let v = self.density(x);
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Finite interval holding the bulk of the mass.
    pub fn bulk_domain(&self) -> (f64, f64) {
        match self {
            InitialDatum::Gaussian(g) => (g.m - 10.0 * g.std_dev(), g.m + 10.0 * g.std_dev()),
            InitialDatum::Mixture { components, .. } => components.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), g| {
                    (
                        lo.min(g.m - 10.0 * g.std_dev()),
                        hi.max(g.m + 10.0 * g.std_dev()),
                    )
                },
            ),
            InitialDatum::Tabulated(t) => t.support(),
            InitialDatum::Custom(c) => c.suggested_domain(),
        }
    }

    /// Points where the integrand of a datum integral should be split.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            InitialDatum::Gaussian(g) => gaussian_breakpoints(g),
            InitialDatum::Mixture { components, .. } => {
                components.iter().flat_map(gaussian_breakpoints).collect()
            }
            InitialDatum::Tabulated(t) => t.nodes().to_vec(),
            InitialDatum::Custom(c) => {
                let (lo, hi) = c.suggested_domain();
                (0..=16).map(|i| lo + (hi - lo) * i as f64 / 16.0).collect()
            }
        }
    }

    /// Integration domain that contains the support.
    pub fn integration_domain(&self) -> Domain {
        match self {
            InitialDatum::Tabulated(t) => {
                let (lo, hi) = t.support();
                Domain::Finite(lo, hi)
            }
            _ => Domain::WholeLine,
        }
    }

    fn check_structure(&self) -> Result<(), ModelError> {
        match self {
            InitialDatum::Gaussian(g) => g.check(),
            InitialDatum::Mixture {
                weights,
                components,
            } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(ModelError::Malformed(format!(
                        "mixture has {} weights and {} components",
                        weights.len(),
                        components.len()
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(ModelError::Malformed(
                        "mixture weights must be positive".into(),
                    ));
                }
                components.iter().try_for_each(GaussianComponent::check)
            }
            InitialDatum::Tabulated(t) => {
                if let Some(v) = t.values().iter().find(|v| **v < 0.0) {
                    let i = t.values().iter().position(|w| w == v).unwrap();
                    return Err(ModelError::NegativeDensity {
                        x: t.nodes()[i],
                        value: *v,
                    });
                }
                Ok(())
            }
            InitialDatum::Custom(c) => {
                let (lo, hi) = c.suggested_domain();
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(ModelError::Malformed(format!(
                        "custom density needs a finite suggested domain, got [{lo}, {hi}]"
                    )));
                }
                match c.declared_tail() {
                    Some(TailClass::Gaussian { rate }) if !(rate > 0.0) => Err(
                        ModelError::Malformed(format!("gaussian tail rate must be positive, got {rate}")),
                    ),
                    Some(TailClass::SuperGaussian { p }) if !(p > 2.0) => Err(
                        ModelError::Malformed(format!("super-gaussian exponent must exceed 2, got {p}")),
                    ),
                    _ => Ok(()),
                }
            }
        }
    }

    fn numeric_mass(&self) -> f64 {
        match self {
            InitialDatum::Tabulated(t) => t.mass(),
            _ => {
                let mut points = self.breakpoints();
                points.sort_by(f64::total_cmp);
                quadrature::integrate_with_breakpoints(
                    |x| self.density(x),
                    self.integration_domain(),
                    &points,
                    1e-12,
                )
                .map(|r| r.value())
                .unwrap_or(f64::NAN)
            }
        }
    }
}

fn gaussian_breakpoints(g: &GaussianComponent) -> Vec<f64> {
    let s = g.std_dev();
    [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|k| g.m + k * s)
        .collect()
}

pub(crate) fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub mass_tol: f64,
    /// Rescale tabulated data to unit mass instead of rejecting them.
    pub renormalize_tabulated: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            mass_tol: MASS_TOL,
            renormalize_tabulated: false,
        }
    }
}

/// A datum whose mass and nonnegativity have been checked numerically.
#[derive(Debug, Clone)]
pub struct ValidatedDatum {
    datum: InitialDatum,
    mass_defect: f64,
}

impl ValidatedDatum {
    pub fn datum(&self) -> &InitialDatum {
        &self.datum
    }

    /// `mass − 1` as measured during validation.
    pub fn mass_defect(&self) -> f64 {
        self.mass_defect
    }

    pub fn density(&self, x: f64) -> f64 {
        self.datum.density(x)
    }
}

impl std::ops::Deref for ValidatedDatum {
    type Target = InitialDatum;

    fn deref(&self) -> &InitialDatum {
        &self.datum
    }
}

pub fn validate_datum(d: InitialDatum, tol: f64) -> Result<ValidatedDatum, ModelError> {
    validate_datum_with(
        d,
        ValidationOptions {
            mass_tol: tol,
            ..Default::default()
        },
    )
}

pub fn validate_datum_with(
    d: InitialDatum,
    opts: ValidationOptions,
) -> Result<ValidatedDatum, ModelError> {
    d.check_structure()?;

    let d = match d {
        InitialDatum::Tabulated(t) if opts.renormalize_tabulated => {
            let mass = t.mass();
            if !(mass > 0.0) {
                return Err(ModelError::NotNormalized {
                    mass,
                    tol: opts.mass_tol,
                });
            }
            InitialDatum::Tabulated(t.scaled(1.0 / mass))
        }
        other => other,
    };

    let (lo, hi) = d.bulk_domain();
    for i in 0..POSITIVITY_SAMPLES {
        let x = lo + (hi - lo) * i as f64 / (POSITIVITY_SAMPLES - 1) as f64;
        let value = d.density(x);
        if value.is_nan() || value < 0.0 {
            return Err(ModelError::NegativeDensity { x, value });
        }
    }

    let mass = d.numeric_mass();
    if !((mass - 1.0).abs() <= opts.mass_tol) {
        return Err(ModelError::NotNormalized {
            mass,
            tol: opts.mass_tol,
        });
    }
    Ok(ValidatedDatum {
        datum: d,
        mass_defect: mass - 1.0,
    })
}

/// Tail class of a datum: analytic for the built-in families, declared or
/// probed for custom densities.
pub fn classify_tail(d: &InitialDatum) -> TailClass {
    match d {
        InitialDatum::Gaussian(g) => TailClass::Gaussian { rate: g.a },
        InitialDatum::Mixture { components, .. } => TailClass::Gaussian {
            rate: components
                .iter()
                .map(|g| g.a)
                .fold(f64::INFINITY, f64::min),
        },
        InitialDatum::Tabulated(_) => TailClass::CompactSupport,
        InitialDatum::Custom(c) => c
            .declared_tail()
            .unwrap_or_else(|| probe_tail(|x| c.density(x), c.suggested_domain())),
    }
}

/// Log-density level below which the probe stops walking outwards.
const PROBE_FLOOR: f64 = -600.0;

/// Estimates the tail class of a density from its logarithm far out.
///
/// Each side is walked outwards geometrically until the log-density drops
/// below [`PROBE_FLOOR`]; the curvature of `ln u₀` in `y` is then measured
/// on two overlapping triples in the far half of the walked range. Constant
/// curvature means Gaussian decay, vanishing or flattening curvature means a
/// heavier tail, growing curvature a stretched Gaussian.
pub fn probe_tail<F: Fn(f64) -> f64>(density: F, domain: (f64, f64)) -> TailClass {
    let (lo, hi) = domain;
    let width = (hi - lo).max(1e-3);
    let sides = [
        probe_side(&density, hi, width),
        probe_side(&density, lo, -width),
    ];
    if sides.iter().any(|s| matches!(s, TailClass::SubGaussian)) {
        return TailClass::SubGaussian;
    }
    let gaussian = sides
        .iter()
        .filter_map(|s| match s {
            TailClass::Gaussian { rate } => Some(*rate),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    if gaussian.is_finite() {
        return TailClass::Gaussian { rate: gaussian };
    }
    let p = sides
        .iter()
        .filter_map(|s| match s {
            TailClass::SuperGaussian { p } => Some(*p),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    if p.is_finite() {
        TailClass::SuperGaussian { p }
    } else {
        TailClass::CompactSupport
    }
}

fn probe_side<F: Fn(f64) -> f64>(density: &F, edge: f64, step: f64) -> TailClass {
    let ln = |y: f64| {
        let v = density(y);
        if v > 0.0 {
            v.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    if ln(edge) == f64::NEG_INFINITY {
        return TailClass::CompactSupport;
    }
    let mut step = step;
    let mut far = edge;
    for _ in 0..40 {
        // Walk edge + step·√2^k outwards.
        let mut valid = 0;
        let mut zero_at = None;
        far = edge;
        for k in 0..160 {
            let offset = step * std::f64::consts::SQRT_2.powi(k);
            if offset.abs() > 1e12 {
                break;
            }
            let y = edge + offset;
            let l = ln(y);
            if l == f64::NEG_INFINITY {
                zero_at = Some(y);
                break;
            }
            if l < PROBE_FLOOR {
                break;
            }
            far = y;
            valid += 1;
        }
        if let Some(zero) = zero_at {
            // Underflow only happens deep below the floor; an earlier zero is an edge of the support.
            let (mut inside, mut outside) = (far, zero);
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if mid == inside || mid == outside {
                    break;
                }
                if ln(mid) == f64::NEG_INFINITY {
                    outside = mid;
                } else {
                    inside = mid;
                }
            }
            if ln(inside) > PROBE_FLOOR - 100.0 {
                return TailClass::CompactSupport;
            }
        }
        if valid >= 6 {
            break;
        }
        step /= 4.0;
    }
    let span = far - edge;
    if span == 0.0 {
        return TailClass::CompactSupport;
    }
    let ys = [0.55, 0.7, 0.85, 1.0].map(|f| edge + span * f);
    let ls = ys.map(ln);
    let curvature = |i: usize| {
        let d1 = (ls[i + 1] - ls[i]) / (ys[i + 1] - ys[i]);
        let d2 = (ls[i + 2] - ls[i + 1]) / (ys[i + 2] - ys[i + 1]);
        (d2 - d1) / (ys[i + 2] - ys[i])
    };
    let near = curvature(0);
    let outer = curvature(1);
    let rate = -2.0 * outer;
    if !(rate > 1e-6) || !(near < 0.0) {
        return TailClass::SubGaussian;
    }
    let ratio = outer / near;
    if ratio < 0.8 {
        TailClass::SubGaussian
    } else if ratio > 1.2 {
        // e^{-c|y|^p} has curvature ∝ |y|^{p-2}
        let mid = |i: usize| ((ys[i] + ys[i + 2]) / 2.0).abs();
        let p = 2.0 + ratio.ln() / (mid(1) / mid(0)).ln();
        TailClass::SuperGaussian { p: p.max(2.0 + 1e-9) }
    } else {
        TailClass::Gaussian { rate }
    }
}

/// Parses the CLI datum grammar:
/// `gaussian:a=<r>,m=<r>`, `mixture:<w1>*gaussian:a=..,m=..;<w2>*...`, `table:<path.csv>`.
pub fn parse_datum_literal(s: &str) -> Result<InitialDatum, ModelError> {
    let s = s.trim();
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| ModelError::Malformed(format!("'{s}': expected <kind>:<args>")))?;
    match kind {
        "gaussian" => parse_gaussian(rest).map(InitialDatum::Gaussian),
        "mixture" => {
            let mut weights = Vec::new();
            let mut components = Vec::new();
            for part in rest.split(';').filter(|p| !p.trim().is_empty()) {
                let (w, g) = part.split_once('*').ok_or_else(|| {
                    ModelError::Malformed(format!("mixture term '{part}': expected <w>*gaussian:.."))
                })?;
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| ModelError::Malformed(format!("bad mixture weight '{w}'")))?;
                let g = g.trim().strip_prefix("gaussian:").ok_or_else(|| {
                    ModelError::Malformed(format!("mixture term '{part}' is not a gaussian"))
                })?;
                weights.push(w);
                components.push(parse_gaussian(g)?);
            }
            if components.is_empty() {
                return Err(ModelError::Malformed("empty mixture".into()));
            }
            Ok(InitialDatum::Mixture {
                weights,
                components,
            })
        }
        "table" => Table::from_csv(Path::new(rest.trim())).map(InitialDatum::Tabulated),
        "custom" => Err(ModelError::Malformed(
            "custom densities are only available through the library".into(),
        )),
        other => Err(ModelError::Malformed(format!("unknown datum kind '{other}'"))),
    }
}

fn parse_gaussian(args: &str) -> Result<GaussianComponent, ModelError> {
    let mut a = None;
    let mut m = None;
    for kv in args.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ModelError::Malformed(format!("'{kv}': expected key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| ModelError::Malformed(format!("'{kv}': value is not a number")))?;
        match k.trim() {
            "a" => a = Some(v),
            "m" => m = Some(v),
            other => return Err(ModelError::Malformed(format!("unknown gaussian key '{other}'"))),
        }
    }
    let g = GaussianComponent::new(
        a.ok_or_else(|| ModelError::Malformed("gaussian needs a=".into()))?,
        m.unwrap_or(0.0),
    );
    g.check()?;
    Ok(g)
}
