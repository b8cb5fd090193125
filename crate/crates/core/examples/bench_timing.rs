// Per-trial wall clock of the exact chain against one diffusion trial.

use codedlb::experiments::bench;
use codedlb::{Code, SystemParams, TruncationConfig};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(2000, 0.9, Code::new(2, 1)?, 1, 10.0)?;
    let report = bench(&p, &TruncationConfig::default(), 0.1, 3, 1)?;
    println!("setup      {:.4} s", report.setup_seconds);
    println!("ctmc       {:.5} s/trial ({:?} events)", report.ctmc_seconds, report.ctmc_events);
    println!("diffusion  {:.5} s/trial ({} steps)", report.diffusion_seconds, report.sde_steps);
    println!("speedup    {:.1}x", report.speedup);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
