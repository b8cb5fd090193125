// Driving the command line in-process: a config file supplies defaults and
// flags override them.

use codedlb::cli::main_with_args;

pub fn run_example() -> codedlb::Result<()> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "# desk run\nn = 300\nlambda = 0.8\nL = 3\nk = 2\nT = 2\n")?;
    let out = dir.path().join("traj.csv");
    let code = main_with_args([
        "codedlb",
        "simulate-ctmc",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "5",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let provenance = std::fs::read_to_string(out.with_extension("provenance.json"))?;
    println!("{provenance}");
    assert_eq!(main_with_args(["codedlb", "simulate-ctmc", "--L", "2", "--k", "3"]), 1);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
