//! Finite-time blow-up of `∂^γ u + Au = su + u²` from a constant state,
//! for a few initial amplitudes.

use std::path::Path;

use subdiff::cli::{InitialDatum, PresetName, ProblemConfig, Setup};
use subdiff::forward::Status;

fn main() -> subdiff::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/blowup.json");
    for amplitude in [0.5, 1.0, 2.0, 4.0] {
        let mut config = ProblemConfig::load(&path)?;
        config.initial = InitialDatum::Preset {
            name: PresetName::Constant,
            amplitude,
            mode: 1,
        };
        let setup = Setup::new(config)?;
        let (traj, report) = setup.problem.state(&setup.z0)?;
        match traj.status {
            Status::BlowupAt { time, .. } => {
                println!("u0 = {amplitude}: blow-up at t = {time:.5} ({} inserted nodes)", report.inserted_nodes)
            }
            Status::Completed => println!("u0 = {amplitude}: no blow-up before T"),
        }
    }
    Ok(())
}
