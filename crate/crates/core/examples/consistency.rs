//! Monte-Carlo mean of the estimator against the stationary variance.

use qv_core::experiments::{run_consistency, ExperimentConfig};

fn main() -> qv_core::Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{"family":"bifbm","hurst":0.6,"k":0.8,"theta":1,"n_list":[50,200,800],
            "reps":500,"seed":1,"normalization":"exact_vn","distance":"wasserstein1"}"#,
    )?;
    let report = run_consistency(&cfg)?;
    println!("n,mean f_hat,sd f_hat,|mean - f|,bias term");
    for r in &report.rows {
        println!(
            "{},{:.6},{:.6},{:.2e},{:.3e}",
            r.n, r.mean_f_hat, r.sd_f_hat, r.distance, r.bias_term
        );
    }
    Ok(())
}
