//! Runs a named benchmark suite and prints iteration counts per method.
//!
//! `cargo run --release --example bench_suite -- paper51 7`

use polynewt::bench::{run_suite, suite};

fn main() -> polynewt::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "toy".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let outcome = run_suite(&suite(&name, seed)?, None)?;
    for r in outcome.records() {
        let status = r.status.map_or_else(|| r.error.clone().unwrap_or_default(), |s| format!("{s:?}"));
        println!("{:<8} {:<13} {:>6} iters  kkt {:.1e}  {status}", r.experiment, r.method, r.iterations, r.terminal_kkt);
    }
    println!("summary hash {}", outcome.summary_hash());
    Ok(())
}
