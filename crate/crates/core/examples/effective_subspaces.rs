//! Effective subspace of each regularizer at a prox output.
//!
//! With `y = prox_{αg}(v)` and `u = (v − y)/α ∈ ∂g(y)`, the Newton step moves
//! inside `par ∂g*(u)`; its dimension is printed next to the Fenchel–Young check.

use std::sync::Arc;

use nalgebra::DVector;
use polynewt::problem::fenchel_young_check;
use polynewt::regularizers::{difference_matrix, CompositeReg, L1Reg, LInfReg, NonnegL1Reg, SortedL1Reg, TV1DReg};
use polynewt::Regularizer;

fn main() -> polynewt::Result<()> {
    let n = 6;
    let regs: Vec<(&str, Arc<dyn Regularizer>)> = vec![
        ("l1", Arc::new(L1Reg::new(0.5))),
        ("linf", Arc::new(LInfReg::new(2.0))),
        ("nonneg_l1", Arc::new(NonnegL1Reg::new(0.5))),
        ("tv1d", Arc::new(TV1DReg::new(0.4, n))),
        ("oscar", Arc::new(SortedL1Reg::oscar(n, 0.3, 0.1)?)),
        ("‖Dx‖₁", Arc::new(CompositeReg::new(difference_matrix(n), Arc::new(L1Reg::new(0.4)))?)),
    ];
    let v = DVector::from_vec(vec![1.3, 1.1, -0.2, 0.1, -1.4, 0.9]);
    let alpha = 1.0;
    println!("v = {:?}", v.as_slice());
    for (name, reg) in regs {
        let y = reg.prox(&v, alpha);
        let u = (&v - &y) / alpha;
        let s = reg.effective_subspace(&u)?;
        let fy = fenchel_young_check(reg.as_ref(), &y, &u)?;
        let y: Vec<String> = y.iter().map(|c| format!("{c:6.3}")).collect();
        println!("{name:<10} y = [{}]  dim {}  fenchel-young {fy}", y.join(" "), s.rank());
    }
    Ok(())
}
