//! Eigenpairs of the Dirichlet and Wentzell-Robin operators on an interval
//! and a synthesis/analysis round trip.

use std::f64::consts::PI;

use subdiff::spectral::{build_basis, EigenBasis, OperatorSpec, PhysicalGrid, SpectralField};

fn gram_deviation(b: &EigenBasis) -> f64 {
    let g = b.gram();
    let mut worst: f64 = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn main() -> subdiff::Result<()> {
    let spec = OperatorSpec::dirichlet(PI, 0.0);
    let dir = build_basis(&spec, 6, PhysicalGrid::for_operator(&spec, 128)?)?;
    println!("Dirichlet eigenvalues: {:?}", dir.eigenvalues());
    println!("Gram deviation: {:.2e}", gram_deviation(&dir));

    let spec = OperatorSpec::wentzell([1.0, 0.5], 1.0, 0.0);
    let went = build_basis(&spec, 6, PhysicalGrid::for_operator(&spec, 64)?)?;
    println!("Wentzell-Robin eigenvalues:");
    for (n, l) in went.eigenvalues().iter().enumerate() {
        println!("  {n}: {l:.12}  traces ({:+.6}, {:+.6})", went.mode_at(n, 0.0), went.mode_at(n, 1.0));
    }
    println!("Gram deviation under mu: {:.2e}", gram_deviation(&went));

    let u = SpectralField::new(vec![1.0, -0.5, 0.25, 0.0, 0.1, 0.0]);
    let back = went.analyze(&went.synthesize(&u)?)?;
    println!("round trip error: {:.2e}", back.sub(&u).norm());
    println!("|u|_1 = {:.6}", went.valpha_norm(&u, 1.0)?);
    Ok(())
}
