// Diffusion covariance Φ(r) and its symmetric square root.

use codedlb::covariance::{eigen_range, phi_matrix, sqrt_psd};
use codedlb::fluid::powerd_fixed_point;
use codedlb::{Code, SystemParams};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(100, 0.9, Code::new(2, 1)?, 1, 10.0)?;
    let r = powerd_fixed_point(2, 0.9, 8)?;
    let phi = phi_matrix(&r, &p);
    let a = sqrt_psd(&phi)?;
    let (lo, hi) = eigen_range(&phi);
    println!("eigenvalues in [{lo:.3e}, {hi:.3e}]");
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| format!("{:+.5}", phi.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }
    let max_row_sum = (0..phi.dim()).map(|i| phi.row(i).iter().sum::<f64>().abs()).fold(0.0, f64::max);
    let err = a.mul_sym(&a).sub(&phi).frobenius();
    println!("max |row sum| {max_row_sum:.1e}, |a a - phi| {err:.1e}");
    assert!(err <= 1e-8 * phi.frobenius().max(1.0));
    Ok(())
}

fn main() {
    run_example().unwrap();
}
