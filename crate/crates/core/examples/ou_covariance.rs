//! Covariance of the Ornstein-Uhlenbeck process driven by each kernel, and
//! its convergence to the stationary variance.

use qv_core::kernels::{make_kernel, KernelFamily, TimeGrid};
use qv_core::ou_covariance::{
    fou_acf_asymptotic, limit_variance, ou_cov_pair, ou_gram, stationary_fou_acf, OUSpec,
};
use qv_core::QuadConfig;

fn main() -> qv_core::Result<()> {
    let q = QuadConfig::default();
    let spec = OUSpec::new(make_kernel(KernelFamily::Sfbm, 0.65, None)?, 1.0)?;
    let f = limit_variance(&spec);
    println!("f = {f:.12}");
    println!("t,E[X_t^2],E[X_t^2]-f");
    for t in [1.0, 5.0, 25.0, 125.0] {
        let v = ou_cov_pair(&spec, t, t, &q)?;
        println!("{t},{v:.12},{:.3e}", v - f);
    }

    let c = ou_gram(&spec, &TimeGrid::integers(200), &q)?;
    println!("E[X_199 X_200] = {:.12}", c.get(198, 199));

    println!("lag,rho,asymptotic");
    // the expansion is asymptotic, so it is only printed where it is accurate
    for lag in [10u64, 30, 100, 300] {
        let rho = stationary_fou_acf(0.65, 1.0, lag, &q)?;
        let asym = fou_acf_asymptotic(0.65, 1.0, lag as f64, 4).0;
        println!("{lag},{rho:.12},{asym:.12}");
    }
    Ok(())
}
