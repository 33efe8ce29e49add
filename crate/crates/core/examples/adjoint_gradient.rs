//! Reduced gradient by the adjoint, checked against central differences,
//! and the duality gap of both adjoint discretizations.

use std::path::Path;

use subdiff::adjoint_opt::{duality_gap, finite_difference_check, solve_adjoint_with, solve_linearized, AdjointScheme};
use subdiff::cli::{random_direction, ProblemConfig, Setup};

fn main() -> subdiff::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.json");
    let setup = Setup::new(ProblemConfig::load(&path)?)?;
    let cp = &setup.problem;
    let h = random_direction(cp.forward.grid(), cp.forward.control_dim(), 11);

    let eps: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
    let fd = finite_difference_check(cp, &setup.z0, &h, &eps)?;
    println!("directional derivative {:.12e}", fd.directional_derivative);
    for row in &fd.rows {
        println!("  eps {:.0e}: fd {:.12e}  rel err {:.2e}", row.epsilon, row.finite_difference, row.relative_error);
    }

    let ev = cp.evaluate(&setup.z0)?;
    let eta = solve_linearized(&cp.forward, &ev.state, &h)?;
    for scheme in [AdjointScheme::DiscreteTranspose, AdjointScheme::Continuous] {
        let w = solve_adjoint_with(&cp.forward, &ev.state, &ev.psi, scheme)?;
        println!("{scheme:?}: duality gap {:.2e}", duality_gap(&cp.forward, &ev.psi, &eta, &w, &h)?);
    }
    Ok(())
}
