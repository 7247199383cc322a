//! Recovering the drift from one simulated path.

use qv_core::estimators::{estimate, invert_to_theta};
use qv_core::kernels::{make_kernel, KernelFamily, TimeGrid};
use qv_core::ou_covariance::{limit_variance, ou_gram, OUSpec};
use qv_core::simulate::sample;
use qv_core::QuadConfig;

fn main() -> qv_core::Result<()> {
    let spec = OUSpec::new(make_kernel(KernelFamily::Sfbm, 0.6, None)?, 2.0)?;
    let f = limit_variance(&spec);
    for n in [100, 1000, 4000] {
        let c = ou_gram(&spec, &TimeGrid::integers(n), &QuadConfig::default())?;
        let path = sample(&c, 1, 42)?;
        let e = estimate(path.row(0), Some(&c), f)?;
        let theta = invert_to_theta(e.f_hat, &spec.kernel)?;
        println!(
            "n = {n}: f_hat = {:.6} (f = {f:.6}), theta_hat = {theta:.4}",
            e.f_hat
        );
    }
    Ok(())
}
