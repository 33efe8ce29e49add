//! Box-constrained optimal control of the Allen-Cahn configuration by
//! projected gradient with Armijo backtracking.

use std::path::Path;

use subdiff::adjoint_opt::optimize;
use subdiff::cli::{ProblemConfig, Setup};

fn main() -> subdiff::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.json");
    let setup = Setup::new(ProblemConfig::load(&path)?)?;
    let (z, report) = optimize(&setup.problem, &setup.z0, &setup.config.optimizer)?;
    for (k, it) in report.iterations.iter().enumerate().step_by(10) {
        println!("{k:>4}  J = {:.10}  step = {:.3e}  vi = {:.3e}", it.cost, it.step, it.vi_residual);
    }
    let f = &report.final_;
    println!(
        "final: J = {:.10} (J1 {:.6}, J2 {:.6}), vi = {:.2e}, converged = {}, feasible = {}",
        f.cost, f.j1, f.j2, f.vi_residual, f.converged, f.feasible
    );
    let peak = z.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max |z| = {peak:.6}");
    Ok(())
}
