//! Nonnegative sparse super-resolution of point sources from Poisson counts.
//!
//! Writes the truth/observation/reconstruction triptych and traces into the
//! directory given as the first argument (default `target/poisson_example`).

use std::path::PathBuf;

use polynewt::bench::{run_suite, suite};

fn main() -> polynewt::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("target/poisson_example"));
    let specs = suite("poisson", 7)?;
    let specs = &specs[..1];
    let p = specs[0].poisson.as_ref().expect("imaging parameters");
    println!("{}×{} image, downsampling {}, psf fwhm {}", p.side, p.side, p.factor, p.fwhm);
    let outcome = run_suite(specs, Some(&out))?;
    for r in outcome.records() {
        println!(
            "{:<13} {} iters {:>6} kkt {:.1e} newton {} recall {}",
            r.method,
            r.status.map_or_else(|| r.error.clone().unwrap_or_default(), |s| format!("{s:?}")),
            r.iterations,
            r.terminal_kkt,
            r.newton_steps_accepted,
            r.support_recall.map_or("-".into(), |v| format!("{v:.2}"))
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}
