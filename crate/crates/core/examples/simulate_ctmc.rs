// Exact simulation of the n-server chain from the empty state.
//
// ```bash
// cargo run --release --example simulate_ctmc
// ```

use codedlb::ctmc::simulate;
use codedlb::fluid::uniform_grid;
use codedlb::{Code, CountVector, SystemParams};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(2000, 0.9, Code::new(3, 2)?, 1, 5.0)?;
    let traj = simulate(&p, CountVector::empty_start(p.n)?, &uniform_grid(p.horizon, 1.0), 7)?;
    println!("{} events", traj.events);
    println!("{:>5} {:>7} {:>7} {:>9}", "t", "empty", "large", "mean_len");
    for s in &traj.snapshots {
        let m = s.metrics();
        println!("{:>5.1} {:>7} {:>7} {:>9.4}", s.time, m.empty_count, m.large_count, m.mean_len);
        assert_eq!(s.counts.n(), p.n as u64);
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
