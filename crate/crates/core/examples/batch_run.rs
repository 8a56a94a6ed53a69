//! Drive the batch pipeline from a TOML configuration, as the binary does.
//!
//!     cargo run --release --example batch_run -- [out_dir]

use nodal_tangency::cli::commands::{estimate, sweep, Axis};
use nodal_tangency::cli::output::OutDir;
use nodal_tangency::cli::suites::{run_suite, Suite, SuiteParams};
use nodal_tangency::cli::RunConfig;

const CONFIG: &str = r#"
grid_h = 0.05
n_waves = 256
trials = 6
master_seed = 12345

[model]
variant = "annulus"
alpha = 0.5

[domain]
kind = "plane"
radius = 10.0

[vf]
variant = "constant"
angle_deg = 0.0

[output]
dir = "out"
svg = true
"#;

fn main() -> nodal_tangency::Result<()> {
    let mut cfg = RunConfig::from_toml(CONFIG)?;
    if let Some(dir) = std::env::args().nth(1) {
        cfg.output.dir = dir.into();
    }
    println!("config hash {}", cfg.hash());
    let out = OutDir::create(&cfg.output.dir)?;

    let body = estimate(&cfg, 0, &out)?;
    println!("estimate: {} components, sum C_k = {:.12}", body.distribution.total, body.table.sum_ck());

    sweep(&cfg, Axis::Alpha, &[0.0, 0.5, 1.0], 0, &out)?;
    println!("sweep written to {}", out.path("sweep.csv").display());

    for suite in [Suite::Identity, Suite::Sandwich] {
        let p = SuiteParams { sandwich_r: Some(2.0), ..Default::default() };
        let v = run_suite(suite, &cfg, &p, 0)?;
        println!("{}: {}", suite.name(), if v.passed { "pass" } else { "fail" });
    }
    Ok(())
}
