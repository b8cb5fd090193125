// One cell of the coverage experiment at a reduced scale: diffusion
// replicates set a 95% interval per metric, CTMC replicates are scored
// against it.

use std::collections::BTreeMap;

use codedlb::experiments::{run_coverage, CiMethod, CoverageConfig};
use codedlb::Code;

pub fn run_example() -> codedlb::Result<()> {
    let cfg = CoverageConfig {
        n: 500,
        horizon: 3.0,
        reps_diffusion: 100,
        reps_reference: 100,
        ci_method: CiMethod::Percentile,
        ..CoverageConfig::desk()
    };
    let report = run_coverage(&cfg, &[Code::new(2, 1)?], BTreeMap::new())?;
    for cell in &report.cells {
        for m in &cell.metrics {
            println!(
                "L={} k={} {:<12} CI [{:.2}, {:.2}]  coverage {:.2} ± {:.2}",
                cell.width,
                cell.threshold,
                m.metric.name(),
                m.ci_low,
                m.ci_high,
                m.coverage,
                m.std_error
            );
        }
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
