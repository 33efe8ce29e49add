//! Allen-Cahn forward solve on a graded grid, with the mild-equation
//! residual and the weighted derivative seminorm.

use std::f64::consts::PI;
use std::sync::Arc;

use subdiff::control_cost::{ControlOperator, ControlSignal};
use subdiff::forward::{mild_residual, ForwardProblem, Nonlinearity, PicardOptions, ProblemIndices};
use subdiff::fracops::GradedTimeGrid;
use subdiff::specfun::SeriesControl;
use subdiff::spectral::{build_basis, OperatorSpec, PhysicalGrid};

fn main() -> subdiff::Result<()> {
    let spec = OperatorSpec::dirichlet(PI, 0.0);
    let basis = Arc::new(build_basis(&spec, 12, PhysicalGrid::for_operator(&spec, 96)?)?);
    let idx = ProblemIndices {
        gamma: 0.6,
        alpha: 0.5,
        alpha_tilde: 0.0,
        beta: 0.0,
        q: None,
        rho: 1.0,
    };
    let grid = GradedTimeGrid::new(1.0, 128, 2.0)?;
    let problem = ForwardProblem::new(
        basis.clone(),
        idx,
        Nonlinearity::AllenCahn { c1: 0.25, c2: 0.5 },
        ControlOperator::interior(),
        grid.clone(),
        SeriesControl::default(),
    )?;
    let x = basis.grid().nodes().to_vec();
    let u0 = basis.analyze(&x.iter().map(|x| x.sin() + 0.3 * (2.0 * x).sin()).collect::<Vec<_>>())?;
    let z = ControlSignal::from_fn(&grid, problem.control_dim(), |t, i| 0.5 * t * x[i].sin());

    let (traj, report) = problem.solve(&z, &u0, &PicardOptions::default())?;
    println!("status: {:?}", traj.status);
    println!("Picard sweeps: {}", report.picard_iterations.iter().sum::<usize>());
    println!("max |u|_alpha = {:.6}", report.max_valpha_norm);
    println!("Y seminorm = {:.6}", report.ynorm_seminorm);
    for j in [0, 1, 8, 32, 128] {
        let u = traj.nominal_state(j);
        println!("t = {:.6}  |u|_alpha = {:.6}", grid.nodes()[j], basis.valpha_norm(u, idx.alpha)?);
    }
    let res = mild_residual(&problem, &traj, &z, &u0)?;
    println!("max mild residual = {:.2e}", res.iter().copied().fold(0.0, f64::max));
    Ok(())
}
