//! Newton-accelerated ISTA on `½‖x − (2, −1)‖² + ‖x‖₁`, whose minimizer is `(1, 0)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use polynewt::losses::LeastSquaresLoss;
use polynewt::regularizers::L1Reg;
use polynewt::solvers::{solve, Method, SolverConfig, StepMode};
use polynewt::ProblemInstance;

fn main() -> polynewt::Result<()> {
    let loss = LeastSquaresLoss::new(DMatrix::identity(2, 2), DVector::from_vec(vec![2.0, -1.0]))?;
    let prob = ProblemInstance::new("toy_l1_2d", Arc::new(loss), Arc::new(L1Reg::new(1.0)));
    let x0 = DVector::from_vec(vec![0.7, 0.2]);

    for method in [Method::Ista, Method::NewtonIsta] {
        let cfg = SolverConfig { step: StepMode::Fixed { alpha: 0.5 }, ..SolverConfig::with_method(method) };
        let t = solve(&prob, &cfg, &x0)?;
        println!(
            "{method:<12} {:?} after {:>2} iterations, x = ({:.3e}, {:.3e}), newton steps {}",
            t.status,
            t.iterations(),
            t.x[0],
            t.x[1],
            t.newton_accepted()
        );
        for r in &t.records {
            println!("    k={:<2} {:?} kkt {:.2e}", r.k, r.step_kind, r.kkt_residual);
        }
    }
    Ok(())
}
