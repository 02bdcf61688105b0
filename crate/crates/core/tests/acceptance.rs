//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line with the
//! measured quantities and its runtime; criteria run one at a time so the
//! runtimes are not distorted by each other.

use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use replens::analysis::{deviation_profile, distance_to_stationary, mass_drift, phase_diagram};
use replens::closed_form::{second_moment_harmonic, second_moment_inverted, stationary_profile_phi};
use replens::gaussian_dynamics::{
    extinction_time, extinction_time_by_bisection, propagate_harmonic, propagate_inverted, GaussianState,
};
use replens::model::{validate_datum, CustomDensity, Table};
use replens::pde_oracle::{compare, solve, OracleConfig};
use replens::transform_chain::chain_evaluate_grid;
use replens::{FitnessSign, InitialDatum, Parameters, SolutionField, Survival, TailClass, ValidatedDatum};

static SERIAL: Mutex<()> = Mutex::new(());

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        ok,
        detail: detail.into(),
    }
}

/// Prints the criterion line and fails the test if any check failed.
fn report(id: u32, title: &str, elapsed: Duration, limit: Option<Duration>, mut checks: Vec<Check>) {
    if let Some(limit) = limit {
        checks.push(check(
            "runtime",
            elapsed < limit,
            format!("{:.3} s < {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()),
        ));
    }
    let ok = checks.iter().all(|c| c.ok);
    println!(
        "{} criterion {id}: {title} [{:.3} s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    for c in &checks {
        println!("    {} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.ok).map(|c| c.name.as_str()).collect();
    assert!(failed.is_empty(), "criterion {id} failed: {failed:?}");
}

fn valid(d: InitialDatum) -> ValidatedDatum {
    validate_datum(d, 1e-8).unwrap()
}

fn field(sigma: f64, fitness: FitnessSign, d: InitialDatum) -> SolutionField {
    SolutionField::new(Parameters::new(sigma, fitness).unwrap(), valid(d))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn alive(s: Survival<Vec<f64>>) -> Vec<f64> {
    s.alive().expect("field is alive")
}

fn mixture() -> InitialDatum {
    InitialDatum::mixture(&[(0.3, 1.0, -1.0), (0.7, 4.0, 2.0)])
}

/// Asymmetric triangle on `[0, 2]` with its peak at `0.5`.
fn skew_tent() -> InitialDatum {
    InitialDatum::Tabulated(Table::new(vec![0.0, 0.5, 2.0], vec![0.0, 1.0, 0.0]).unwrap())
}

fn tent() -> InitialDatum {
    InitialDatum::Tabulated(Table::new(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]).unwrap())
}

fn box_datum() -> InitialDatum {
    InitialDatum::Tabulated(Table::uniform(-1.0, 1.0).unwrap())
}

#[test]
fn criterion_1_stationary_fixed_point() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let ts = linspace(0.01, 10.0, 60);
    let xs = linspace(-6.0, 6.0, 241);
    let mut checks = Vec::new();
    for sigma in [0.5, 1.0, 2.0] {
        let f = field(sigma, FitnessSign::Harmonic, InitialDatum::gaussian(1.0 / sigma, 0.0));
        let mut worst: f64 = 0.0;
        for &t in &ts {
            let u = alive(f.values(t, &xs).unwrap());
            for (&x, &v) in xs.iter().zip(&u) {
                worst = worst.max((v - stationary_profile_phi(sigma, x)).abs());
            }
        }
        checks.push(check(format!("σ={sigma}"), worst <= 1e-9, format!("sup|u−φ| = {worst:.3e} ≤ 1e-9")));
    }
    report(1, "stationary fixed point", start.elapsed(), Some(Duration::from_secs(1)), checks);
}

#[test]
fn criterion_2_universal_convergence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let sigma = 1.0;
    let times = [1.0, 2.0, 3.0, 5.0, 8.0];
    let grid = linspace(-6.0, 6.0, 2401);
    let data = [
        ("gaussian a=3 m=2", InitialDatum::gaussian(3.0, 2.0)),
        ("mixture", mixture()),
        ("compact table", skew_tent()),
    ];
    let mut checks = Vec::new();
    for (label, d) in data {
        let f = field(sigma, FitnessSign::Harmonic, d);
        let rep = deviation_profile(&f, &times, Some(&grid)).unwrap();
        let spread = rep.spread().unwrap();
        checks.push(check(
            format!("{label}: sinh-scaled deviation"),
            spread < 10.0,
            format!(
                "scaled = [{}], max/min = {spread:.3} < 10",
                rep.scaled.iter().map(|s| format!("{s:.4e}")).collect::<Vec<_>>().join(", ")
            ),
        ));
        let t = 10.0 / (2.0 * sigma);
        let dist = distance_to_stationary(&f, t, &grid).unwrap();
        checks.push(check(
            format!("{label}: distance to φ at 2σt=10"),
            dist <= 1e-5,
            format!("sup|u−φ| = {dist:.3e} ≤ 1e-5 (σ={sigma})"),
        ));
    }
    // Diagnostic only: the same distance for the Gaussian datum at larger σ.
    for s in [2.0, 5.0] {
        let f = field(s, FitnessSign::Harmonic, InitialDatum::gaussian(3.0, 2.0));
        let g = linspace(-6.0 * s.sqrt(), 6.0 * s.sqrt(), 2401);
        let dist = distance_to_stationary(&f, 10.0 / (2.0 * s), &g).unwrap();
        println!("    info gaussian a=3 m=2, σ={s}: sup|u−φ| at 2σt=10 is {dist:.3e}");
    }
    report(2, "universal convergence", start.elapsed(), Some(Duration::from_secs(10)), checks);
}

#[test]
fn criterion_3_gaussian_propagation() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let cases = [(1.0, 0.0, 1.0), (2.0, 1.0, 1.0), (0.5, -1.5, 0.7), (4.0, 0.3, 2.0)];
    let mut worst_h: f64 = 0.0;
    let mut worst_i: f64 = 0.0;
    let mut points = 0usize;
    for &(a, m, sigma) in &cases {
        let g = GaussianState::new(a, m);
        let big_t = (a * sigma).atan() / (2.0 * sigma);
        let xs = linspace(-4.0, 4.0, 16);
        let fh = field(sigma, FitnessSign::Harmonic, InitialDatum::gaussian(a, m));
        for &t in &linspace(0.0, 3.0, 16) {
            let u = alive(fh.values(t, &xs).unwrap());
            let p = propagate_harmonic(g, sigma, t);
            for (&x, &v) in xs.iter().zip(&u) {
                worst_h = worst_h.max((v - p.density(x)).abs());
                points += 1;
            }
        }
        let fi = field(sigma, FitnessSign::Inverted, InitialDatum::gaussian(a, m));
        for &t in &linspace(0.0, 0.99 * big_t, 16) {
            let u = alive(fi.values(t, &xs).unwrap());
            let p = propagate_inverted(g, sigma, t).alive().unwrap();
            for (&x, &v) in xs.iter().zip(&u) {
                worst_i = worst_i.max((v - p.density(x)).abs());
                points += 1;
            }
        }
    }
    let mut checks = vec![
        check("points", points >= 1000, format!("{points} (t,x) points")),
        check("harmonic", worst_h <= 1e-9, format!("max |u − Gaussian law| = {worst_h:.3e} ≤ 1e-9")),
        check("inverted", worst_i <= 1e-9, format!("max |u − Gaussian law| = {worst_i:.3e} ≤ 1e-9")),
    ];
    let mut boundary_ok = true;
    let mut notes = Vec::new();
    for &(a, m, sigma) in &cases {
        let big_t = (a * sigma).atan() / (2.0 * sigma);
        let f = field(sigma, FitnessSign::Inverted, InitialDatum::gaussian(a, m));
        let before = f.u(big_t.next_down(), 0.0).unwrap();
        let at = f.u(big_t, 0.0).unwrap();
        let after = f.u(big_t + 1e-9, 0.3).unwrap();
        let ok = !before.is_extinct() && at.is_extinct() && after.is_extinct();
        boundary_ok &= ok;
        notes.push(format!("a={a},σ={sigma}: T={big_t:.15}"));
    }
    let f = field(1.0, FitnessSign::Inverted, InitialDatum::gaussian(1.0, 0.0));
    let pi8 = f.u(PI / 8.0, 0.0).unwrap().is_extinct() && !f.u((PI / 8.0).next_down(), 0.0).unwrap().is_extinct();
    checks.push(check("extinct exactly from T", boundary_ok, notes.join("; ")));
    checks.push(check("a=σ=1 extinct at π/8", pi8, "alive just below π/8, extinct at π/8"));
    report(3, "Gaussian propagation", start.elapsed(), Some(Duration::from_secs(1)), checks);
}

#[test]
fn criterion_4_extinction_phase_diagram() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let exponential = InitialDatum::Custom(CustomDensity::new(|y: f64| 0.5 * (-y.abs()).exp(), None, (-20.0, 20.0)));
    let data = vec![
        ("compact".to_string(), box_datum()),
        ("gaussian a=1".to_string(), InitialDatum::gaussian(1.0, 0.0)),
        ("exponential".to_string(), exponential.clone()),
    ];
    let rows = phase_diagram(&data, 1.0);
    let mut checks = Vec::new();
    let by_label = |l: &str| rows.iter().find(|r| r.label == l).unwrap();
    let e = by_label("exponential");
    checks.push(check(
        "exponential tail",
        e.extinction_time == 0.0 && e.tail == TailClass::SubGaussian,
        format!("T = {} ({:?})", e.extinction_time, e.tail),
    ));
    let g = by_label("gaussian a=1");
    let bisect = extinction_time_by_bisection(&InitialDatum::gaussian(1.0, 0.0), 1.0).time;
    checks.push(check(
        "gaussian a=1 analytic",
        (g.extinction_time - PI / 8.0).abs() <= 1e-6,
        format!("T = {:.12}, |T − π/8| = {:.2e}", g.extinction_time, (g.extinction_time - PI / 8.0).abs()),
    ));
    checks.push(check(
        "gaussian a=1 bisection",
        (bisect - PI / 8.0).abs() <= 1e-6 && (bisect - g.extinction_time).abs() <= 1e-6,
        format!("T = {bisect:.12}, |T − analytic| = {:.2e}", (bisect - g.extinction_time).abs()),
    ));
    let probed = extinction_time(
        &InitialDatum::Custom(CustomDensity::new(
            |y: f64| (-y * y / 2.0).exp() / (2.0 * PI).sqrt(),
            None,
            (-6.0, 6.0),
        )),
        1.0,
    )
    .time;
    checks.push(check(
        "gaussian a=1 undeclared tail",
        (probed - PI / 8.0).abs() <= 1e-6,
        format!("numeric probe + bisection T = {probed:.12}"),
    ));
    let c = by_label("compact");
    checks.push(check(
        "compact support",
        c.extinction_time == PI / 4.0 && c.ratio_to_heat_cap == 1.0,
        format!("T = {:.15} (π/4 = {:.15})", c.extinction_time, PI / 4.0),
    ));
    let order: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    checks.push(check(
        "ordered by T",
        order == ["exponential", "gaussian a=1", "compact"],
        format!("{order:?}"),
    ));
    report(4, "extinction phase diagram", start.elapsed(), Some(Duration::from_secs(5)), checks);
}

#[test]
fn criterion_5_oracle_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks = Vec::new();

    let d = valid(InitialDatum::gaussian(2.0, 1.0));
    let f = SolutionField::new(Parameters::new(1.0, FitnessSign::Harmonic).unwrap(), d.clone());
    let snaps: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
    let cfg = OracleConfig::new(8.0, 801, 1e-4).with_snapshots(&snaps);
    let coarse = solve(&d, 1.0, FitnessSign::Harmonic, 1.0, &cfg).unwrap();
    let coarse_err = compare(&coarse, &f, Some((0.05, 1.0))).unwrap();
    let fine = solve(&d, 1.0, FitnessSign::Harmonic, 1.0, &cfg.refined()).unwrap();
    let fine_err = compare(&fine, &f, Some((0.05, 1.0))).unwrap();
    let ratio = coarse_err.max_linf / fine_err.max_linf;
    checks.push(check(
        "harmonic Linf",
        coarse_err.max_linf <= 1e-3,
        format!("L=8, nx=801, dt=1e-4: max Linf = {:.3e} ≤ 1e-3", coarse_err.max_linf),
    ));
    checks.push(check(
        "grid convergence",
        ratio >= 3.0,
        format!("(dt/4, dx/2): Linf {:.3e} → {:.3e}, ratio {ratio:.2} ≥ 3", coarse_err.max_linf, fine_err.max_linf),
    ));

    let tent = valid(tent());
    let fi = SolutionField::new(Parameters::new(1.0, FitnessSign::Inverted).unwrap(), tent.clone());
    let snaps: Vec<f64> = (1..=12).map(|k| 0.05 * k as f64).collect();
    let cfg = OracleConfig::reference(&tent, 1.0).with_snapshots(&snaps);
    let traj = solve(&tent, 1.0, FitnessSign::Inverted, 0.6, &cfg).unwrap();
    let inv = compare(&traj, &fi, Some((0.05, 0.6))).unwrap();
    checks.push(check(
        "inverted compact support",
        inv.max_linf <= 5e-3,
        format!("tent on [−1,1], L={}, t ≤ 0.6: max Linf = {:.3e} ≤ 5e-3", cfg.half_width, inv.max_linf),
    ));
    report(5, "oracle equivalence", start.elapsed(), Some(Duration::from_secs(60)), checks);
}

#[test]
fn criterion_6_mass_conservation() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks = Vec::new();
    let times = linspace(0.0, 6.0, 25);
    for (label, d, sigma) in [
        ("gaussian a=2 m=1", InitialDatum::gaussian(2.0, 1.0), 1.0),
        ("mixture", mixture(), 0.5),
        ("compact table", skew_tent(), 2.0),
    ] {
        let f = field(sigma, FitnessSign::Harmonic, d);
        let drift = mass_drift(&f, &times).unwrap();
        checks.push(check(
            format!("closed form, {label}, σ={sigma}"),
            drift <= 5e-7,
            format!("max |mass − 1| = {drift:.3e} ≤ 5e-7 over {} times", times.len()),
        ));
    }
    let d = valid(InitialDatum::gaussian(2.0, 1.0));
    let traj = solve(&d, 1.0, FitnessSign::Harmonic, 1.0, &OracleConfig::new(8.0, 801, 1e-4)).unwrap();
    let drift = traj.max_mass_drift();
    checks.push(check(
        "oracle reference run",
        drift <= 1e-3,
        format!("max per-step |mass − 1| = {drift:.3e} ≤ 1e-3 over {} steps", traj.mass.len()),
    ));
    report(6, "mass conservation", start.elapsed(), None, checks);
}

#[test]
fn criterion_7_mean_fitness_consistency() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks = Vec::new();
    let sigma = 1.0;
    for (label, d) in [("gaussian a=3 m=2", InitialDatum::gaussian(3.0, 2.0)), ("mixture", mixture()), ("compact table", skew_tent())] {
        for fitness in [FitnessSign::Harmonic, FitnessSign::Inverted] {
            let f = field(sigma, fitness, d.clone());
            let t_max = match f.extinction() {
                Some(r) => 0.95 * r.time,
                None => 5.0,
            };
            let mut worst: f64 = 0.0;
            for &t in &linspace(t_max / 20.0, t_max, 20) {
                let formula = f.second_moment(t).unwrap().alive().unwrap();
                let direct = f.field_moment(t, 2).unwrap().alive().unwrap();
                worst = worst.max((formula - direct).abs() / formula.abs());
            }
            checks.push(check(
                format!("{label}, {fitness}"),
                worst <= 1e-6,
                format!("max relative gap = {worst:.3e} ≤ 1e-6 at 20 times in (0, {t_max:.3}]"),
            ));
        }
    }
    let mut worst_limit: f64 = 0.0;
    for s in [0.5, 1.0, 2.0] {
        for d in [InitialDatum::gaussian(3.0, 2.0), mixture(), skew_tent()] {
            let m2 = second_moment_harmonic(&valid(d), s, 20.0 / (2.0 * s)).unwrap();
            worst_limit = worst_limit.max((m2 - s).abs());
        }
    }
    checks.push(check(
        "harmonic limit",
        worst_limit <= 1e-6,
        format!("max |second moment − σ| at 2σt=20 = {worst_limit:.3e} ≤ 1e-6"),
    ));
    let inv = second_moment_inverted(&valid(InitialDatum::gaussian(1.0, 0.0)), 1.0, 0.3).unwrap();
    checks.push(check(
        "inverted formula is finite before T",
        matches!(inv, Survival::Alive(v) if v.is_finite()),
        format!("{inv:?}"),
    ));
    report(7, "mean-fitness consistency", start.elapsed(), None, checks);
}

#[test]
fn criterion_8_transform_chain_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks = Vec::new();
    let xs = linspace(-4.0, 4.0, 64);
    for (label, d) in [("gaussian a=2 m=1", InitialDatum::gaussian(2.0, 1.0)), ("tabulated", skew_tent())] {
        for fitness in [FitnessSign::Harmonic, FitnessSign::Inverted] {
            let f = field(1.0, fitness, d.clone());
            let t_max = match f.extinction() {
                Some(r) => 0.9 * r.time,
                None => 3.0,
            };
            let ts = linspace(t_max / 64.0, t_max, 64);
            let mut worst: f64 = 0.0;
            for &t in &ts {
                let closed = alive(f.values(t, &xs).unwrap());
                let chain = alive(chain_evaluate_grid(f.datum(), 1.0, fitness, t, &xs).unwrap());
                for (a, b) in closed.iter().zip(&chain) {
                    worst = worst.max((a - b).abs());
                }
            }
            checks.push(check(
                format!("{label}, {fitness}"),
                worst <= 1e-8,
                format!("64×64 grid, t ≤ {t_max:.3}: max |chain − closed form| = {worst:.3e} ≤ 1e-8"),
            ));
        }
    }
    report(8, "transform-chain equivalence", start.elapsed(), None, checks);
}

#[test]
fn criterion_9_inverted_sup_bound() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut checks = Vec::new();
    for sigma in [0.5, 1.0, 2.0] {
        let cap = PI / (4.0 * sigma);
        let ts = linspace(cap / 50.0, 0.999 * cap, 50);
        for (label, d) in [("box", box_datum()), ("tent", tent()), ("skew tent", skew_tent())] {
            let f = field(sigma, FitnessSign::Inverted, d);
            let xs = linspace(-8.0, 8.0, 801);
            let mut violations = 0;
            let mut tightest = f64::INFINITY;
            for &t in &ts {
                let bound = 1.0 / (2.0 * PI * sigma * (2.0 * sigma * t).tan()).sqrt();
                let u = alive(f.values(t, &xs).unwrap());
                let peak = u.iter().copied().fold(0.0, f64::max);
                if peak > bound {
                    violations += 1;
                }
                tightest = tightest.min(bound - peak);
            }
            checks.push(check(
                format!("{label}, σ={sigma}"),
                violations == 0,
                format!("{violations} violations over {} times; min(bound − max u) = {tightest:.3e}", ts.len()),
            ));
        }
        let bounds: Vec<f64> = ts.iter().map(|&t| 1.0 / (2.0 * PI * sigma * (2.0 * sigma * t).tan()).sqrt()).collect();
        let decreasing = bounds.windows(2).all(|w| w[1] < w[0]);
        let near_cap = 1.0 / (2.0 * PI * sigma * (2.0 * sigma * (cap * (1.0 - 1e-12))).tan()).sqrt();
        checks.push(check(
            format!("bound shape, σ={sigma}"),
            decreasing && near_cap < 1e-5,
            format!("strictly decreasing; value at (1 − 1e-12)·π/(4σ) = {near_cap:.3e}"),
        ));
    }
    report(9, "inverted sup bound", start.elapsed(), None, checks);
}
