//! Exact sampling versus the fine-grid path simulator.

use qv_core::kernels::{make_kernel, KernelFamily, TimeGrid};
use qv_core::ou_covariance::{ou_gram, OUSpec};
use qv_core::simulate::{moments, path_oracle_batch, sample, PathConfig};
use qv_core::QuadConfig;

fn main() -> qv_core::Result<()> {
    let spec = OUSpec::new(make_kernel(KernelFamily::Sfbm, 0.7, None)?, 1.0)?;
    let n = 5;
    let c = ou_gram(&spec, &TimeGrid::integers(n), &QuadConfig::default())?;
    let exact = moments(&sample(&c, 20_000, 1)?);
    let oracle = moments(&path_oracle_batch(
        &spec,
        &PathConfig {
            fine_step: 0.01,
            horizon: n as f64,
        },
        20_000,
        2,
    )?);
    println!("i,exact var,oracle var,true var");
    for i in 0..n {
        println!(
            "{},{:.5},{:.5},{:.5}",
            i + 1,
            exact.cov[(i, i)],
            oracle.cov[(i, i)],
            c.get(i, i)
        );
    }
    Ok(())
}
