// Mean-field ODE for power-of-two from the empty state, relaxing toward the
// supermarket fixed point 0.9^(2^m - 1).

use codedlb::fluid::{powerd_fixed_point, solve_ode, supermarket_tails, tail_sums};
use codedlb::{Code, QueuePmf, SystemParams, TruncationConfig};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(2, 0.9, Code::power_of(2)?, 1, 200.0)?;
    let trunc = TruncationConfig::new(20, 1e-6)?;
    let grid = [0.0, 10.0, 50.0, 100.0, 200.0];
    let traj = solve_ode(&QueuePmf::point_mass(0, 20), &p, &trunc, 0.01, &grid)?;
    let root = tail_sums(&powerd_fixed_point(2, 0.9, 20)?);
    let closed = supermarket_tails(2, 0.9, 20);
    println!("fixed point v1..v4: {:?}", &root[1..5]);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let v = tail_sums(s);
        let gap = (1..5).map(|m| (v[m] - closed[m]).abs()).fold(0.0, f64::max);
        println!("t={t:>5}  v1..v4 = {:.5} {:.5} {:.5} {:.5}  max gap {gap:.2e}", v[1], v[2], v[3], v[4]);
    }
    let v = tail_sums(traj.terminal());
    assert!((1..5).all(|m| (v[m] - root[m]).abs() < 1e-6));
    Ok(())
}

fn main() {
    run_example().unwrap();
}
