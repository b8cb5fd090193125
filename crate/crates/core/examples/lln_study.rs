// Distance between the chain and its fluid limit as n grows.

use codedlb::validation::{lln_convergence_study, LlnConfig};
use codedlb::{Code, QueuePmf, SystemParams, TruncationConfig};

pub fn run_example() -> codedlb::Result<()> {
    let table = lln_convergence_study(&LlnConfig {
        ns: vec![100, 1000, 10_000],
        params: SystemParams::new(100, 0.9, Code::power_of(2)?, 1, 2.0)?,
        trunc: TruncationConfig::default(),
        pi0: QueuePmf::point_mass(0, 20),
        grid_dt: 0.1,
        reps: 6,
        seed: 11,
    })?;
    for row in &table.rows {
        println!("n={:>6}  sup error {:.5} ± {:.5}", row.n, row.mean_error, row.std_error);
    }
    println!("{}", serde_json::to_string_pretty(&table.verdicts)?);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
