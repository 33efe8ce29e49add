//! Control through the boundary of a Wentzell-Robin problem, tracking
//! targets in the bulk and on the boundary.

use std::path::Path;

use subdiff::adjoint_opt::optimize;
use subdiff::cli::{ProblemConfig, Setup};
use subdiff::control_cost::ControlSignal;

fn main() -> subdiff::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/wentzell_boundary.json");
    let setup = Setup::new(ProblemConfig::load(&path)?)?;
    let cp = &setup.problem;
    let zero = ControlSignal::zeros(cp.forward.grid(), cp.forward.control_dim());
    let (j0, _) = cp.objective(&zero)?;
    let (z, report) = optimize(cp, &zero, &setup.config.optimizer)?;
    println!("cost {:.6} -> {:.6} in {} iterations", j0.total, report.final_.cost, report.final_.outer_iterations);
    println!("vi residual {:.2e}", report.final_.vi_residual);
    let grid = cp.forward.grid();
    for j in (0..grid.len()).step_by(16) {
        println!("t = {:.4}  z(0) = {:+.6}  z(L) = {:+.6}", grid.nodes()[j], z.values[j][0], z.values[j][1]);
    }
    Ok(())
}
