#![allow(dead_code)]

use ceqopt::problem::Problem;
use ceqopt::solver::SolverConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn example_1a() -> Problem {
    Problem::parse(&["x", "y"], "x^2 + 2*y^2", &[("x - y^2", 1.0)])
        .unwrap()
        .with_uniform_box(-3.0, 3.0)
        .unwrap()
}

pub fn example_1b() -> Problem {
    Problem::parse(&["x", "y"], "x^2 + 2*y^2 - 2*x*y^2", &[("x + y^2", 1.0)])
        .unwrap()
        .with_uniform_box(-3.0, 3.0)
        .unwrap()
}

pub fn example_2() -> Problem {
    Problem::parse(
        &["x", "y", "z"],
        "x^2 - 2*y + z^3",
        &[("x^2 + y + z", 1.0), ("y - z^2", -1.0)],
    )
    .unwrap()
    .with_uniform_box(-3.0, 3.0)
    .unwrap()
}

pub fn config(p: &Problem) -> SolverConfig {
    SolverConfig::new(p.bounds())
}

pub fn names(n: usize) -> Vec<String> {
    ["x", "y", "z", "w"][..n].iter().map(|s| s.to_string()).collect()
}

/// Random monomial `c*x_i^a*x_j^b...` of total degree at most `max_deg`.
fn monomial(rng: &mut ChaCha8Rng, names: &[String], max_deg: usize) -> String {
    let mut c: i32 = 0;
    while c == 0 {
        c = rng.gen_range(-3..=3);
    }
    let deg = rng.gen_range(1..=max_deg);
    let mut factors = vec![c.to_string()];
    for _ in 0..deg {
        factors.push(names.choose(rng).unwrap().clone());
    }
    factors.join("*")
}

fn poly(rng: &mut ChaCha8Rng, names: &[String], terms: usize, max_deg: usize) -> String {
    let mut parts: Vec<String> = (0..terms).map(|_| monomial(rng, names, max_deg)).collect();
    if rng.gen_bool(0.5) {
        parts.push(rng.gen_range(-3..=3).to_string());
    }
    parts.join(" + ")
}

/// Seeded random polynomial problem with `n` variables, objective and
/// constraints of degree at most 3, small integer coefficients. Each
/// constraint carries a linear term in its own variable so that the
/// constraint set is a curve.
pub fn random_polynomial_problem(seed: u64, n: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = names(n);
    let terms = rng.gen_range(2..=4);
    let f = poly(&mut rng, &names, terms, 3);
    let constraints: Vec<(String, f64)> = (1..n)
        .map(|k| {
            let mut lead: i32 = 0;
            while lead == 0 {
                lead = rng.gen_range(-2..=2);
            }
            let terms = rng.gen_range(1..=2);
            let rest = poly(&mut rng, &names, terms, 3);
            let target = rng.gen_range(-2..=2) as f64;
            (format!("{lead}*{} + {rest}", names[k]), target)
        })
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cs: Vec<(&str, f64)> = constraints.iter().map(|(s, t)| (s.as_str(), *t)).collect();
    Problem::parse(&refs, &f, &cs)
        .unwrap()
        .with_uniform_box(-2.0, 2.0)
        .unwrap()
}

pub struct SuiteCase {
    pub seed: u64,
    pub problem: Problem,
    pub determinant: Vec<ceqopt::stationary::StationaryPoint>,
    pub lagrange: Vec<ceqopt::lagrange::LagrangePoint>,
}

/// Smallest over largest singular value of the Jacobian of `system` at `x`.
pub fn conditioning(system: &[ceqopt::expr::Expr], x: &[f64]) -> f64 {
    let n = x.len();
    let entries: Vec<_> = system.iter().flat_map(|e| (0..n).map(move |j| e.differentiate(j))).collect();
    let Ok(v) = ceqopt::expr::Tape::new(&entries).eval(x) else {
        return 0.0;
    };
    let sv = nalgebra::DMatrix::from_row_slice(n, n, &v).singular_values();
    if sv.max() == 0.0 {
        0.0
    } else {
        sv.min() / sv.max()
    }
}

/// The `index`-th problem of the random suite with both methods' results.
/// Dimensions cycle through 2, 3, 4. Candidate seeds are skipped when no
/// method finds a stationary point in the box, or when some found point
/// with independent constraint gradients is not an isolated nondegenerate
/// root of `{Det J = 0, g = C}` (reducible constraint sets can carry whole
/// lines of stationary points).
pub fn random_suite_case(index: u64) -> SuiteCase {
    let n = [2, 3, 4][(index % 3) as usize];
    let mut seed = 1000 * index;
    loop {
        let p = random_polynomial_problem(seed, n);
        let cfg = suite_config(&p);
        let system = ceqopt::stationary::stationary_system(&p).unwrap();
        if !system[0].is_zero() {
            let det = ceqopt::stationary::find_stationary(&p, &cfg).unwrap();
            let lag = ceqopt::lagrange::find_stationary_lagrange(&p, &cfg).unwrap();
            let grads = ceqopt::lagrange::GradientTape::new(&p);
            let full_rank = |x: &[f64]| {
                grads
                    .least_squares(x)
                    .is_some_and(|l| l.2 > ceqopt::lagrange::RANK_TOL * l.3.max(1.0))
            };
            let isolated = det
                .iter()
                .map(|d| d.point.as_slice())
                .chain(lag.iter().map(|l| l.point.as_slice()))
                .filter(|x| full_rank(x))
                .all(|x| conditioning(&system, x) > 1e-9);
            if isolated && !(det.is_empty() && lag.is_empty()) {
                return SuiteCase {
                    seed,
                    problem: p,
                    determinant: det,
                    lagrange: lag,
                };
            }
        }
        seed += 1;
    }
}

/// Solver settings for the random suite: the default configuration with a
/// coarser grid in four dimensions.
pub fn suite_config(p: &Problem) -> SolverConfig {
    let mut cfg = config(p);
    if p.nvars() == 4 {
        cfg.grid_per_axis = 5;
    }
    cfg
}

/// Points on the constraint curve obtained by correcting random guesses
/// along a random axis.
pub fn curve_points(p: &Problem, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let tracer = ceqopt::trace::Tracer::new(p);
    let bounds = p.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count {
        attempts += 1;
        let guess: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        let k = rng.gen_range(0..p.nvars());
        if let Some(x) = tracer.correct(k, guess[k], &guess) {
            if x.iter().zip(&bounds).all(|(v, (lo, hi))| v >= lo && v <= hi) {
                out.push(x);
            }
        }
    }
    out
}

pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
