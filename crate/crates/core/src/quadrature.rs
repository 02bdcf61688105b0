//! Gaussian-weighted integrals of the initial datum.
//!
//! Every closed-form expression in this crate is a ratio of integrals
//! `∫ w(y) yᵏ u₀(y) dy` where `w` is either a Gaussian kernel
//! `e^{−(y−c)²/(2v)}` or a growth factor `e^{γy²}`. They are evaluated by an
//! adaptive Gauss–Kronrod (7/15) scheme working on the log scale, or in
//! closed form for Gaussian and mixture data.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{classify_tail, log_sum_exp, GaussianComponent, InitialDatum, TailClass};

/// Growth rates within this distance of the divergence threshold are
/// reported as divergent.
pub const NEAR_DIVERGENCE: f64 = 1e-6;

/// Panel budget of the adaptive scheme.
pub const MAX_PANELS: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: error estimate {error:e} after {panels} panels")]
    NoConvergence { value: f64, error: f64, panels: usize },
    #[error("integral diverges")]
    Divergent,
}

/// Integration range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Finite(f64, f64),
    /// `[lo, ∞)`
    UpperHalf(f64),
    /// `(−∞, hi]`
    LowerHalf(f64),
    WholeLine,
}

impl Domain {
    fn bounds(self) -> (f64, f64) {
        match self {
            Domain::Finite(a, b) => (a, b),
            Domain::UpperHalf(a) => (a, f64::INFINITY),
            Domain::LowerHalf(b) => (f64::NEG_INFINITY, b),
            Domain::WholeLine => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Integral value kept as `sign · e^{log_abs}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub log_abs: f64,
    /// −1, 0 or +1.
    pub sign: f64,
    pub abs_error_estimate: f64,
    pub converged: bool,
}

impl QuadratureResult {
    fn from_linear(value: f64, error: f64) -> Self {
        Self {
            log_abs: value.abs().ln(),
            sign: sign_of(value),
            abs_error_estimate: error,
            converged: true,
        }
    }

    fn from_log(log_abs: f64, sign: f64, rel_error: f64) -> Self {
        Self {
            log_abs,
            sign,
            abs_error_estimate: rel_error * log_abs.exp(),
            converged: true,
        }
    }

    pub fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }

    /// Error estimate relative to `|value|`.
    pub fn relative_error(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            (self.abs_error_estimate.ln() - self.log_abs).exp()
        }
    }
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// Gauss–Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    panel: usize,
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Change of variable taking a (possibly infinite) panel to a finite one.
#[derive(Debug, Clone, Copy)]
enum Panel {
    Finite,
    /// x = hi − (1 − s)/s, s ∈ (0, 1]
    Lower(f64),
    /// x = lo + s/(1 − s), s ∈ [0, 1)
    Upper(f64),
    /// x = s/(1 − s²), s ∈ (−1, 1)
    Whole,
}

impl Panel {
    fn build(lo: f64, hi: f64) -> (Panel, f64, f64) {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (Panel::Finite, lo, hi),
            (false, true) => (Panel::Lower(hi), 0.0, 1.0),
            (true, false) => (Panel::Upper(lo), 0.0, 1.0),
            (false, false) => (Panel::Whole, -1.0, 1.0),
        }
    }

    /// Returns `(x, dx/ds)`.
    fn map(self, s: f64) -> (f64, f64) {
        match self {
            Panel::Finite => (s, 1.0),
            Panel::Lower(hi) => (hi - (1.0 - s) / s, 1.0 / (s * s)),
            Panel::Upper(lo) => {
                let r = 1.0 / (1.0 - s);
                (lo + s * r, r * r)
            }
            Panel::Whole => {
                let q = 1.0 / (1.0 - s * s);
                (s * q, (1.0 + s * s) * q * q)
            }
        }
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

fn gauss_kronrod<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = g(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut res_abs = (fc * WGK[7]).abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = g(c - dx);
        let f2 = g(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h_abs = h.abs();
    let result = kronrod * h;
    let err = rescale_error((kronrod - gauss) * h, res_abs * h_abs, res_asc * h_abs);
    (result, err, res_abs * h_abs)
}

/// Convergence rule for [`adaptive`].
#[derive(Debug, Clone, Copy)]
enum Target {
    /// `err ≤ tol · max(1, |I|)`
    Mixed(f64),
    /// `err ≤ tol · ∫|f|`
    Relative(f64),
}

struct Outcome {
    value: f64,
    error: f64,
    abs: f64,
    panels: usize,
    converged: bool,
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, cuts: &[f64], target: Target) -> Outcome {
    let mut heap = BinaryHeap::new();
    let mut panels = Vec::new();
    for w in cuts.windows(2) {
        if !(w[1] > w[0]) {
            continue;
        }
        let (panel, a, b) = Panel::build(w[0], w[1]);
        panels.push(panel);
        let idx = panels.len() - 1;
        let g = |s: f64| eval_mapped(f, panel, s);
        let (value, error, abs) = gauss_kronrod(&g, a, b);
        heap.push(Segment {
            panel: idx,
            a,
            b,
            value,
            error,
            abs,
        });
    }

    let totals = |heap: &BinaryHeap<Segment>| {
        heap.iter().fold((0.0, 0.0, 0.0), |(v, e, s), seg| {
            (v + seg.value, e + seg.error, s + seg.abs)
        })
    };
    let goal = |value: f64, abs: f64| match target {
        Target::Mixed(tol) => tol * value.abs().max(1.0),
        Target::Relative(tol) => tol * abs,
    };

    loop {
        let (value, error, abs) = totals(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Outcome {
                value,
                error,
                abs,
                panels: heap.len(),
                converged: false,
            };
        }
        if error <= goal(value, abs) {
            return Outcome {
                value,
                error,
                abs,
                panels: heap.len(),
                converged: true,
            };
        }
        let worst = match heap.peek() {
            Some(s) => *s,
            None => {
                return Outcome {
                    value: 0.0,
                    error: 0.0,
                    abs: 0.0,
                    panels: 0,
                    converged: true,
                }
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        let too_small = (worst.b - worst.a).abs() <= 1e-14 * (1.0 + mid.abs());
        if heap.len() >= MAX_PANELS || too_small {
            // Roundoff-limited results are accepted.
            let floor = 200.0 * f64::EPSILON * abs;
            return Outcome {
                value,
                error,
                abs,
                panels: heap.len(),
                converged: error <= floor.max(goal(value, abs)),
            };
        }
        heap.pop();
        let panel = panels[worst.panel];
        let g = |s: f64| eval_mapped(f, panel, s);
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error, abs) = gauss_kronrod(&g, a, b);
            heap.push(Segment {
                panel: worst.panel,
                a,
                b,
                value,
                error,
                abs,
            });
        }
    }
}

fn eval_mapped<F: Fn(f64) -> f64>(f: &F, panel: Panel, s: f64) -> f64 {
    let (x, jac) = panel.map(s);
    if !x.is_finite() || !jac.is_finite() {
        return 0.0;
    }
    let v = f(x);
    if v == 0.0 {
        0.0
    } else {
        v * jac
    }
}

fn cut_points(domain: Domain, breakpoints: &[f64]) -> Vec<f64> {
    let (lo, hi) = domain.bounds();
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    cuts.extend(inner);
    cuts.push(hi);
    cuts
}

/// Adaptive integral of `f` over `domain`; converged results satisfy
/// `err ≤ tol · max(1, |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    domain: Domain,
    tol: f64,
) -> Result<QuadratureResult, QuadratureError> {
    integrate_with_breakpoints(f, domain, &[], tol)
}

/// [`integrate`] with the range pre-split at `breakpoints`.
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    domain: Domain,
    breakpoints: &[f64],
    tol: f64,
) -> Result<QuadratureResult, QuadratureError> {
    let cuts = cut_points(domain, breakpoints);
    let out = adaptive(&f, &cuts, Target::Mixed(tol));
    if !out.converged || !out.value.is_finite() {
        return Err(QuadratureError::NoConvergence {
            value: out.value,
            error: out.error,
            panels: out.panels,
        });
    }
    Ok(QuadratureResult::from_linear(out.value, out.error))
}

/// Integrates `sign · e^{ln|f|}` without forming `|f|` directly.
///
/// `log_f` returns `(ln|f(x)|, sign)`. The integrand is rescaled by its
/// largest sampled value so that neither overflow nor underflow occurs;
/// converged results satisfy `err ≤ tol · ∫|f|`.
pub fn integrate_log<F: Fn(f64) -> (f64, f64)>(
    log_f: F,
    domain: Domain,
    breakpoints: &[f64],
    tol: f64,
) -> Result<QuadratureResult, QuadratureError> {
    let cuts = cut_points(domain, breakpoints);

    let mut shift = f64::NEG_INFINITY;
    for w in cuts.windows(2) {
        let (panel, a, b) = Panel::build(w[0], w[1]);
        for i in 0..=32 {
            let s = a + (b - a) * (i as f64 + 0.5) / 33.0;
            let (x, _) = panel.map(s);
            if x.is_finite() {
                shift = shift.max(log_f(x).0);
            }
        }
    }
    if shift == f64::NEG_INFINITY {
        return Ok(QuadratureResult {
            log_abs: f64::NEG_INFINITY,
            sign: 0.0,
            abs_error_estimate: 0.0,
            converged: true,
        });
    }
    if !shift.is_finite() {
        return Err(QuadratureError::Divergent);
    }

    for _ in 0..4 {
        let peak = Cell::new(f64::NEG_INFINITY);
        let g = |x: f64| {
            let (l, s) = log_f(x);
            peak.set(peak.get().max(l));
            if s == 0.0 || l == f64::NEG_INFINITY {
                0.0
            } else {
                s * (l - shift).exp()
            }
        };
        let out = adaptive(&g, &cuts, Target::Relative(tol));
        if peak.get() > shift + 300.0 {
            shift = peak.get();
            continue;
        }
        if !out.converged || !out.value.is_finite() {
            return Err(QuadratureError::NoConvergence {
                value: out.value * shift.exp(),
                error: out.error * shift.exp(),
                panels: out.panels,
            });
        }
        let rel = if out.value == 0.0 {
            0.0
        } else {
            out.error / out.value.abs()
        };
        let mut r = QuadratureResult::from_log(out.value.abs().ln() + shift, sign_of(out.value), rel);
        r.converged = out.error <= tol * out.abs;
        return Ok(r);
    }
    Err(QuadratureError::Divergent)
}

/// Weight multiplying the datum inside an integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaussianWeight {
    /// `e^{−(y−center)²/(2·variance)}`
    Kernel { center: f64, variance: f64 },
    /// `e^{γy²}`; `γ` of either sign.
    Growth { gamma: f64 },
}

impl GaussianWeight {
    pub fn ln(&self, y: f64) -> f64 {
        match *self {
            GaussianWeight::Kernel { center, variance } => {
                let d = y - center;
                -d * d / (2.0 * variance)
            }
            GaussianWeight::Growth { gamma } => gamma * y * y,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            GaussianWeight::Kernel { center, variance } => {
                let s = variance.sqrt();
                [-12.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 12.0]
                    .iter()
                    .map(|k| center + k * s)
                    .collect()
            }
            GaussianWeight::Growth { .. } => Vec::new(),
        }
    }
}

/// How datum integrals are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntegralPath {
    /// Closed form for Gaussian and mixture data, quadrature otherwise.
    #[default]
    Auto,
    /// Always adaptive quadrature.
    Quadrature,
}

/// `∫ w(y) yᵏ u₀(y) dy` for `k ∈ {0, 1, 2}`.
///
/// Divergence is decided exactly from the tail class (no margin); see
/// [`weighted_moment`] for the public, margin-aware entry point.
pub fn datum_integral(
    d: &InitialDatum,
    weight: GaussianWeight,
    k: u32,
    tol: f64,
    path: IntegralPath,
) -> Result<QuadratureResult, QuadratureError> {
    assert!(k <= 2, "moments above the second are not supported");
    if let GaussianWeight::Growth { gamma } = weight {
        if diverges(d, gamma, 0.0) {
            return Err(QuadratureError::Divergent);
        }
    }
    match (d, path) {
        (InitialDatum::Gaussian(g), IntegralPath::Auto) => gaussian_integral(g, weight, k),
        (
            InitialDatum::Mixture {
                weights,
                components,
            },
            IntegralPath::Auto,
        ) => {
            let terms = weights
                .iter()
                .zip(components)
                .map(|(w, g)| {
                    let mut r = gaussian_integral(g, weight, k)?;
                    r.log_abs += w.ln();
                    Ok(r)
                })
                .collect::<Result<Vec<_>, QuadratureError>>()?;
            Ok(signed_log_sum(&terms))
        }
        _ => {
            let mut points = d.breakpoints();
            points.extend(weight.breakpoints());
            if k > 0 {
                points.push(0.0);
            }
            if let (GaussianWeight::Growth { gamma }, Domain::Finite(lo, hi)) =
                (weight, d.integration_domain())
            {
                // Strong growth piles the mass within ~1/(2γ|y|) of the support edges.
                if gamma > 0.0 {
                    for (edge, inward) in [(lo, 1.0), (hi, -1.0)] {
                        if edge != 0.0 {
                            let scale = 1.0 / (2.0 * gamma * edge.abs());
                            points.extend(
                                [0.25, 1.0, 4.0, 16.0, 64.0, 256.0].iter().map(|k| edge + inward * k * scale),
                            );
                        }
                    }
                }
            }
            if let (GaussianWeight::Kernel { center, variance }, InitialDatum::Custom(_)) =
                (weight, d)
            {
                // Custom data have unknown shape: also resolve the overlap region.
                let (lo, hi) = d.bulk_domain();
                let s = variance.sqrt();
                let (a, b) = ((center - 12.0 * s).max(lo), (center + 12.0 * s).min(hi));
                if a < b {
                    points.extend((0..=32).map(|i| a + (b - a) * i as f64 / 32.0));
                }
            }
            integrate_log(
                |y| {
                    let l = weight.ln(y) + d.ln_density(y);
                    match k {
                        0 => (l, 1.0),
                        _ => (l + k as f64 * y.abs().ln(), sign_of(y).powi(k as i32)),
                    }
                },
                d.integration_domain(),
                &points,
                tol,
            )
        }
    }
}

/// Canonical-form completion for one Gaussian component.
fn gaussian_integral(
    g: &GaussianComponent,
    weight: GaussianWeight,
    k: u32,
) -> Result<QuadratureResult, QuadratureError> {
    let GaussianComponent { a, m } = *g;
    let (ln_z, mean, var) = match weight {
        GaussianWeight::Growth { gamma } => {
            let p = a - 2.0 * gamma;
            if !(p > 0.0) {
                return Err(QuadratureError::Divergent);
            }
            (0.5 * (a / p).ln() + a * m * m * gamma / p, a * m / p, 1.0 / p)
        }
        GaussianWeight::Kernel { center, variance } => {
            let av = a * variance;
            let d = center - m;
            (
                0.5 * (av / (av + 1.0)).ln() - 0.5 * a * d * d / (av + 1.0),
                (center + av * m) / (1.0 + av),
                variance / (1.0 + av),
            )
        }
    };
    let factor = match k {
        0 => 1.0,
        1 => mean,
        _ => mean * mean + var,
    };
    let log_abs = ln_z + factor.abs().ln();
    Ok(QuadratureResult {
        log_abs,
        sign: sign_of(factor),
        abs_error_estimate: 8.0 * f64::EPSILON * log_abs.exp(),
        converged: true,
    })
}

fn signed_log_sum(terms: &[QuadratureResult]) -> QuadratureResult {
    let pos = log_sum_exp(terms.iter().filter(|t| t.sign > 0.0).map(|t| t.log_abs));
    let neg = log_sum_exp(terms.iter().filter(|t| t.sign < 0.0).map(|t| t.log_abs));
    let err: f64 = terms.iter().map(|t| t.abs_error_estimate).sum();
    let (log_abs, sign) = if pos > neg {
        (pos + (-(neg - pos).exp()).ln_1p(), 1.0)
    } else if neg > pos {
        (neg + (-(pos - neg).exp()).ln_1p(), -1.0)
    } else {
        (f64::NEG_INFINITY, 0.0)
    };
    QuadratureResult {
        log_abs,
        sign,
        abs_error_estimate: err,
        converged: terms.iter().all(|t| t.converged),
    }
}

/// Tail-class divergence predicate for `∫ e^{γy²} u₀`.
fn diverges(d: &InitialDatum, gamma: f64, margin: f64) -> bool {
    match classify_tail(d) {
        TailClass::CompactSupport | TailClass::SuperGaussian { .. } => false,
        TailClass::Gaussian { rate } => gamma >= rate / 2.0 - margin,
        TailClass::SubGaussian => gamma > 0.0,
    }
}

/// `∫ e^{γy²} yᵏ u₀(y) dy`, reporting divergence within [`NEAR_DIVERGENCE`]
/// of the threshold.
pub fn weighted_moment(
    d: &InitialDatum,
    gamma: f64,
    k: u32,
    tol: f64,
) -> Result<QuadratureResult, QuadratureError> {
    if detect_divergence(d, gamma) {
        return Err(QuadratureError::Divergent);
    }
    datum_integral(d, GaussianWeight::Growth { gamma }, k, tol, IntegralPath::Auto)
}

/// Whether `∫ e^{γy²} u₀ = ∞`, decided from the tail class. Borderline
/// Gaussian rates (`γ ≥ a/2 − 1e−6`) count as divergent.
pub fn detect_divergence(d: &InitialDatum, gamma: f64) -> bool {
    diverges(d, gamma, NEAR_DIVERGENCE)
}

/// Numeric tail-growth probe: classifies the density from its far-field
/// logarithm and applies the same predicate as [`detect_divergence`].
pub fn probe_divergence<F: Fn(f64) -> f64>(density: F, domain: (f64, f64), gamma: f64) -> bool {
    match crate::model::probe_tail(density, domain) {
        TailClass::CompactSupport | TailClass::SuperGaussian { .. } => false,
        TailClass::Gaussian { rate } => gamma >= rate / 2.0 - NEAR_DIVERGENCE,
        TailClass::SubGaussian => gamma > 0.0,
    }
}
