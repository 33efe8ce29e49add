//! Mittag-Leffler and Wright function values, and the scalar kernels
//! `S`, `P`, `K` of a single mode.

use subdiff::propagators::ModeKernels;
use subdiff::specfun::{gamma_fn, ml_eval, wright_eval, SeriesControl};

fn main() -> subdiff::Result<()> {
    let ctl = SeriesControl::default();
    println!("{:>6} {:>22} {:>22}", "x", "E_1/2,1(x)", "E_1,1(x) - exp(x)");
    for x in [-20.0, -5.0, -1.0, 0.0, 1.0, 2.0] {
        let e = ml_eval(0.5, 1.0, x, ctl)?;
        let d = ml_eval(1.0, 1.0, x, ctl)? - f64::exp(x);
        println!("{x:>6} {e:>22.15e} {d:>22.3e}");
    }

    for gamma in [0.3, 0.5, 0.7] {
        let vals: Vec<String> = [0.0, 0.5, 1.0, 2.0]
            .iter()
            .map(|t| wright_eval(gamma, *t, ctl).map(|v| format!("{v:.6}")))
            .collect::<subdiff::Result<_>>()?;
        println!("Phi_{gamma}(0, 0.5, 1, 2) = {}", vals.join(", "));
    }
    println!("Gamma(0.75) = {:.15}", gamma_fn(0.75)?);

    let k = ModeKernels::new(0.6, ctl)?;
    let lambda = 4.0;
    for t in [1e-3, 1e-2, 0.1, 1.0] {
        println!("t = {t:<6} S = {:.6e}  P = {:.6e}  K = {:.6e}", k.s(lambda, t)?, k.p(lambda, t)?, k.k(lambda, t)?);
    }
    Ok(())
}
