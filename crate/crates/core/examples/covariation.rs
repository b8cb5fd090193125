// Short-window increments of the chain have covariance Φ·δ.

use codedlb::validation::{covariation_check, CovariationConfig};
use codedlb::{Code, SystemParams, TruncationConfig};

pub fn run_example() -> codedlb::Result<()> {
    let cfg = CovariationConfig {
        params: SystemParams::new(2000, 0.9, Code::new(2, 1)?, 1, 1.0)?,
        trunc: TruncationConfig::new(10, 1e-6)?,
        t0: 1.0,
        window: 0.01,
        chains: 8,
        windows_per_chain: 150,
        coords: 3,
        window_correction: true,
        seed: 2,
    };
    let table = covariation_check(&cfg)?;
    for e in &table.entries {
        println!(
            "({}, {})  empirical {:+.5}  phi*dt {:+.5}  z {:+.2}",
            e.i, e.j, e.empirical, e.expected, e.z
        );
    }
    println!("{}", serde_json::to_string(&table.verdict)?);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
