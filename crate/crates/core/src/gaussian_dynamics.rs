//! Exact dynamics of Gaussian data and extinction times.
//!
//! A Gaussian initial datum stays Gaussian; its inverse variance `a(t)` and
//! center `m(t)` follow closed-form laws, so no quadrature is involved here.

use serde::Serialize;

use crate::model::{
    classify_tail, heat_cap, GaussianComponent, InitialDatum, Survival, TailClass,
};
use crate::quadrature::{detect_divergence, probe_divergence};

/// Beyond `2σt = ASYMPTOTIC_ARG` the hyperbolic functions are replaced by
/// their asymptotic forms `tanh → 1`, `1/cosh → 2e^{−2σt}`.
pub const ASYMPTOTIC_ARG: f64 = 40.0;

/// Right end of the bisection bracket is `π/(4σ) − BRACKET_GAP`.
pub const BRACKET_GAP: f64 = 1e-9;

pub const BISECTION_ITERATIONS: usize = 60;

/// Gaussian `√(a/2π) e^{−a(x−m)²/2}` along the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianState {
    pub a: f64,
    pub m: f64,
}

impl GaussianState {
    pub fn new(a: f64, m: f64) -> Self {
        Self { a, m }
    }

    pub fn density(&self, x: f64) -> f64 {
        GaussianComponent::new(self.a, self.m).density(x)
    }

    pub fn second_moment(&self) -> f64 {
        self.m * self.m + 1.0 / self.a
    }
}

impl From<GaussianComponent> for GaussianState {
    fn from(g: GaussianComponent) -> Self {
        Self { a: g.a, m: g.m }
    }
}

/// `(tanh z, 1/cosh z)` for `z ≥ 0`, without overflow.
pub fn tanh_sech(z: f64) -> (f64, f64) {
    if z > ASYMPTOTIC_ARG {
        (1.0, 2.0 * (-z).exp())
    } else {
        let e = (-2.0 * z).exp();
        (z.tanh(), 2.0 * (-z).exp() / (1.0 + e))
    }
}

/// `ln cosh z` for `z ≥ 0`.
pub fn ln_cosh(z: f64) -> f64 {
    z + (-2.0 * z).exp().ln_1p() - std::f64::consts::LN_2
}

pub fn propagate_harmonic(g: GaussianState, sigma: f64, t: f64) -> GaussianState {
    let (th, sech) = tanh_sech(2.0 * sigma * t);
    let s = g.a * sigma;
    GaussianState {
        a: (s + th) / (sigma * (1.0 + s * th)),
        // m aσ / (aσ cosh + sinh), divided through by cosh
        m: g.m * s * sech / (s + th),
    }
}

pub fn propagate_inverted(g: GaussianState, sigma: f64, t: f64) -> Survival<GaussianState> {
    if t >= gaussian_extinction_time(g, sigma) {
        return Survival::Extinct;
    }
    let z = 2.0 * sigma * t;
    let (sin, cos) = z.sin_cos();
    let tan = sin / cos;
    let s = g.a * sigma;
    let a = (s - tan) / (sigma * (1.0 + s * tan));
    if !(a > 0.0) {
        return Survival::Extinct;
    }
    Survival::Alive(GaussianState {
        a,
        m: g.m * s / (s * cos - sin),
    })
}

/// `arctan(aσ)/(2σ)`, always below `π/(4σ)`.
pub fn gaussian_extinction_time(g: GaussianState, sigma: f64) -> f64 {
    (g.a * sigma).atan() / (2.0 * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtinctionSource {
    /// Read off the tail class.
    TailClass,
    /// Bisection on the divergence predicate.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionReport {
    /// Extinction time `T ∈ [0, π/(4σ)]`.
    pub time: f64,
    pub tail: TailClass,
    pub source: ExtinctionSource,
    /// `π/(4σ)`
    pub heat_cap: f64,
}

impl ExtinctionReport {
    pub fn ratio(&self) -> f64 {
        self.time / self.heat_cap
    }
}

/// `γ(t) = tan(2σt)/(2σ)`, the growth rate of the inverted weights.
pub fn growth_rate(sigma: f64, t: f64) -> f64 {
    (2.0 * sigma * t).tan() / (2.0 * sigma)
}

/// Extinction time for general data: `sup{t < π/(4σ) : ∫e^{γ(t)y²}u₀ < ∞}`.
pub fn extinction_time(d: &InitialDatum, sigma: f64) -> ExtinctionReport {
    let cap = heat_cap(sigma);
    if let InitialDatum::Custom(c) = d {
        if c.declared_tail().is_none() {
            let domain = c.suggested_domain();
            let time = bisect_extinction(sigma, |gamma| {
                probe_divergence(|y| c.density(y), domain, gamma)
            });
            return ExtinctionReport {
                time,
                tail: classify_tail(d),
                source: ExtinctionSource::Bisection,
                heat_cap: cap,
            };
        }
    }
    let tail = classify_tail(d);
    let time = match tail {
        TailClass::CompactSupport | TailClass::SuperGaussian { .. } => cap,
        TailClass::Gaussian { rate } => (rate * sigma).atan() / (2.0 * sigma),
        TailClass::SubGaussian => 0.0,
    };
    ExtinctionReport {
        time,
        tail,
        source: ExtinctionSource::TailClass,
        heat_cap: cap,
    }
}

/// Extinction time by bisection on [`detect_divergence`], whatever the datum.
pub fn extinction_time_by_bisection(d: &InitialDatum, sigma: f64) -> ExtinctionReport {
    let time = bisect_extinction(sigma, |gamma| detect_divergence(d, gamma));
    ExtinctionReport {
        time,
        tail: classify_tail(d),
        source: ExtinctionSource::Bisection,
        heat_cap: heat_cap(sigma),
    }
}

fn bisect_extinction<P: Fn(f64) -> bool>(sigma: f64, diverges: P) -> f64 {
    let cap = heat_cap(sigma);
    let mut lo = 0.0;
    let mut hi = cap - BRACKET_GAP;
    if !diverges(growth_rate(sigma, hi)) {
        return cap;
    }
    if diverges(f64::MIN_POSITIVE) {
        return 0.0;
    }
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if diverges(growth_rate(sigma, mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
