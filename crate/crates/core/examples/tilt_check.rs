//! Tilt-stability verdicts at a stable and an unstable stationary point.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use polynewt::diagnostics::check_tilt_stability;
use polynewt::losses::LeastSquaresLoss;
use polynewt::regularizers::L1Reg;
use polynewt::ProblemInstance;

fn report(prob: &ProblemInstance, x: &[f64]) -> polynewt::Result<()> {
    let r = check_tilt_stability(prob, &DVector::from_row_slice(x))?;
    println!(
        "{:<16} x = {x:?}: ker ∇²f dim {}, subspace dim {}, cosine {:.3}, tilt stable {}",
        prob.name, r.ker_dim, r.subspace_dim, r.max_principal_cosine, r.tilt_stable
    );
    if let Some(w) = r.warning {
        println!("    warning: {w}");
    }
    Ok(())
}

fn main() -> polynewt::Result<()> {
    let toy = LeastSquaresLoss::new(DMatrix::identity(2, 2), DVector::from_vec(vec![2.0, -1.0]))?;
    let toy = ProblemInstance::new("toy_l1_2d", Arc::new(toy), Arc::new(L1Reg::new(1.0)));
    report(&toy, &[1.0, 0.0])?;

    // A = (1 1) leaves a kernel direction that ∂g does not rule out at (½, ½)
    let flat = LeastSquaresLoss::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![2.0]))?;
    let flat = ProblemInstance::new("rank_deficient", Arc::new(flat), Arc::new(L1Reg::new(1.0)));
    report(&flat, &[0.5, 0.5])?;
    report(&flat, &[1.0, 0.0])?;
    Ok(())
}
