// Linearized drift G(x, r) against central differences of F.

use codedlb::drift::drift_g;
use codedlb::rates::drift_f;
use codedlb::{Code, FluctuationVector, QueuePmf, SystemParams};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(100, 0.9, Code::new(4, 2)?, 1, 10.0)?;
    let r = QueuePmf::new(vec![0.35, 0.3, 0.2, 0.1, 0.05, 0.0, 0.0], 0.0)?;
    let x = FluctuationVector::new(vec![0.5, -0.2, -0.1, -0.3, 0.1, 0.0, 0.0])?;
    let g = drift_g(&x, &r, &p);
    let eps = 1e-6;
    let shifted = |s: f64| -> codedlb::Result<Vec<f64>> {
        let probs: Vec<f64> = r.probs().iter().zip(x.coords()).map(|(a, b)| a + s * b).collect();
        Ok(drift_f(&QueuePmf::new(probs, 0.0)?, &p))
    };
    let (up, down) = (shifted(eps)?, shifted(-eps)?);
    for j in 0..g.len() {
        let fd = (up[j] - down[j]) / (2.0 * eps);
        println!("j={j}  G={:+.8}  fd={:+.8}", g[j], fd);
        assert!((g[j] - fd).abs() <= 1e-5 * g[j].abs().max(1.0));
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
