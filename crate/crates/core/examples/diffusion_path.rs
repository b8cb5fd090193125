// Euler-Maruyama path of the fluctuation process, the reconstructed
// empirical measure, and the exact covariance of the scheme.

use codedlb::diffusion::{propagate_covariance, reconstruct, simulate_sde, CoefficientTable};
use codedlb::seeding::{replicate_rng, Purpose};
use codedlb::{Code, FluctuationVector, QueuePmf, SystemParams, TruncationConfig};

pub fn run_example() -> codedlb::Result<()> {
    let p = SystemParams::new(10_000, 0.9, Code::new(2, 1)?, 1, 10.0)?;
    let trunc = TruncationConfig::new(15, 1e-6)?;
    let (fluid, table) = CoefficientTable::build(&QueuePmf::point_mass(0, 15), &p, &trunc, 0.1, 0.01)?;
    let mut rng = replicate_rng(42, Purpose::Diffusion, 0);
    let path = simulate_sde(&FluctuationVector::zeros(table.dim()), &table, &mut rng)?;
    let x = path.terminal();
    let pihat = reconstruct(fluid.terminal(), x, p.n)?;
    println!("X(T)[0..4] = {:?}", &x.coords()[..4]);
    println!("pi(T)[0..4] = {:?}", &fluid.terminal().probs()[..4]);
    println!("reconstructed [0..4] = {:?}", &pihat[..4]);
    let cov = propagate_covariance(&table);
    let c = cov.last().expect("at least one step");
    println!("Var X0(T) = {:.4}, Var X1(T) = {:.4}", c.get(0, 0), c.get(1, 1));
    println!("max projection {:.1e}", path.max_projection);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
