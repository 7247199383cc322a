//! Driver covariances of the three families and a Gram matrix on a grid.

use qv_core::kernels::{cov, gram, make_kernel, KernelFamily, TimeGrid};

fn main() -> qv_core::Result<()> {
    let specs = [
        make_kernel(KernelFamily::Fbm, 0.7, None)?,
        make_kernel(KernelFamily::Sfbm, 0.7, None)?,
        make_kernel(KernelFamily::Bifbm, 0.7, Some(0.6))?,
    ];
    println!("family,R(1,2),R(3,3)");
    for s in &specs {
        println!("{},{:.12},{:.12}", s.family, cov(s, 1.0, 2.0), cov(s, 3.0, 3.0));
    }

    let grid = TimeGrid::new(vec![0.5, 1.0, 2.0, 4.0])?;
    let g = gram(&specs[1], &grid)?;
    println!("sfBm Gram on {:?}:{}", grid.points(), g.matrix());
    Ok(())
}
