//! A small ensemble: the direction distribution, the C_k table and the
//! distance between two directions of the constant field.
//!
//!     cargo run --release --example direction_distribution

use nodal_tangency::cli::config::{ModelConfig, RunConfig, VfConfig};
use nodal_tangency::cli::run::run_ensemble;
use nodal_tangency::stats::estimate_Ck;

fn main() -> nodal_tangency::Result<()> {
    let mut cfg = RunConfig::plane(ModelConfig::Circle, 15.0);
    cfg.n_waves = 256;
    cfg.trials = 8;
    cfg.master_seed = 2024;

    let e0 = run_ensemble(&cfg, 0)?;
    let d0 = e0.histogram.finish()?;
    println!("{} components, mean k {:.3}", d0.total, d0.mean_k());
    for (k, p) in &d0.probabilities {
        println!("  k = {k:>2}: {p:.4}");
    }
    println!("mass on 0 and odd k: {:.5}", d0.odd_or_zero_mass());
    println!("ledger: {:?}", d0.exclusion_ledger);

    let table = estimate_Ck(&e0.summaries())?;
    print!("\n{}", table.to_csv());
    println!("sum C_k = {:.12}", table.sum_ck());
    println!("contained components per unit area: {:.4} ± {:.4}", table.ns_constant_estimate.mean, table.ns_constant_estimate.stderr);

    cfg.vf = VfConfig::Constant { angle_deg: 30.0 };
    cfg.master_seed = 2025;
    let d30 = run_ensemble(&cfg, 0)?.histogram.finish()?;
    println!("\nTV(0°, 30°) = {:.4}", d0.tv_distance(&d30));
    Ok(())
}
