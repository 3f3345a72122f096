//! All four methods on a seeded Lasso instance, with support identification.

use polynewt::bench::{generate, solver_config, ExperimentSpec};
use polynewt::diagnostics::identification_report;
use polynewt::solvers::{reference_solution, solve, Method};

fn main() -> polynewt::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = ExperimentSpec::lasso(seed);
    let g = generate(&spec)?;
    let xr = reference_solution(&g.prob, 1e-12)?;
    println!("lasso m={} n={} seed={seed} λ={:.4}", spec.m, spec.n, g.lambda);
    println!("{:<13} {:>6} {:>10} {:>8} {:>11}", "method", "iters", "kkt", "newton", "identified");
    for m in [Method::Ista, Method::Fista, Method::NewtonIsta, Method::NewtonFista] {
        let t = solve(&g.prob, &solver_config(&spec, m), &g.x0)?;
        let id = identification_report(&t, &g.prob, &xr)?;
        let at = id.identified_at.map_or("-".to_string(), |k| k.to_string());
        println!("{:<13} {:>6} {:>10.2e} {:>8} {:>11}", m, t.iterations(), t.final_kkt(), t.newton_accepted(), at);
    }
    let support = xr.iter().filter(|v| v.abs() > 1e-10).count();
    println!("reference support size {support}");
    Ok(())
}
