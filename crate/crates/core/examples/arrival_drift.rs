// Mean-field drift F(r) for batch sampling, checked against brute-force
// enumeration of sampled configurations.

use codedlb::rates::{arrival_component_oracle, drift_f, zeta_bar};
use codedlb::{Code, QueuePmf, SystemParams};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(100, 0.9, Code::new(3, 2)?, 1, 10.0)?;
    let r = QueuePmf::new(vec![0.4, 0.3, 0.2, 0.1, 0.0, 0.0], 0.0)?;
    let f = drift_f(&r, &p);
    println!("sum F = {:.2e}", f.iter().sum::<f64>());
    let kf = p.threshold() as f64;
    for j in 0..=4 {
        // arrival part = F_j minus the service terms
        let service = kf * (r.prob(j as isize + 1) - if j >= 1 { r.prob(j as isize) } else { 0.0 });
        let oracle = arrival_component_oracle(j, &r, &p);
        println!(
            "j={j}  F={:+.6}  arrival={:+.6}  oracle={:+.6}  zeta_bar={:.6}",
            f[j],
            f[j] - service,
            oracle,
            zeta_bar(j as isize, &r, p.code)
        );
        assert!((f[j] - service - oracle).abs() < 1e-10);
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
