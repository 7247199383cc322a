//! Rate envelopes and limiting variances across memory regimes.

use qv_core::rates::{sfou_tv_branch, sigma2_bifou, sigma2_sfou, tv_branch, SeriesConfig};
use qv_core::QuadConfig;

fn main() -> qv_core::Result<()> {
    for beta in [0.5, 0.6, 2.0 / 3.0, 1.0] {
        let b = tv_branch(beta)?;
        println!(
            "beta = {beta:.4}: {} (n^{} log^{} n)",
            b.label, b.exponent, b.log_power
        );
    }
    for h in [0.4, 0.6, 0.75] {
        println!("sfOU H = {h}: {}", sfou_tv_branch(h)?.label);
    }

    let (cfg, q) = (SeriesConfig::default(), QuadConfig::default());
    println!("H,sigma2_sfou");
    for h in [0.3, 0.5, 0.6, 0.7] {
        println!("{h},{:.10}", sigma2_sfou(1.0, h, &cfg, &q)?);
    }
    println!(
        "bifOU H=0.6 K=0.8: {:.10}",
        sigma2_bifou(1.0, 0.6, 0.8, &cfg, &q)?
    );
    Ok(())
}
