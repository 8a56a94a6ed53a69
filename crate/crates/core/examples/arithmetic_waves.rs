//! Arithmetic random waves on the torus: the four-point degeneration and the
//! dependence of the distribution on the direction.
//!
//!     cargo run --release --example arithmetic_waves

use nodal_tangency::cli::config::{RunConfig, VfConfig};
use nodal_tangency::cli::run::run_ensemble;
use nodal_tangency::field::sample_field;
use nodal_tangency::nodal::{extract_nodal_set, Containment, ExtractParams, Region};
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;

fn main() -> nodal_tangency::Result<()> {
    let params = ExtractParams { grid_h: 0.01, ..Default::default() };
    for n in [1, 5, 13] {
        let model = SpectralModel::arithmetic(n)?;
        let (mut contractible, mut winding, mut total) = (0, 0, 0);
        for t in 0..50 {
            let f = sample_field(&model, 0, SeedRecord::new(1, t))?;
            let set = extract_nodal_set(&f, Region::Torus, params)?;
            contractible += set.count(Containment::Contained);
            winding += set.count(Containment::NonContractible);
            total += set.components.len();
        }
        println!("n = {n:>2}: {total} components, {contractible} contractible, {winding} winding");
    }

    let mut cfg = RunConfig::torus(5);
    cfg.grid_h = 0.02;
    cfg.trials = 200;
    let mut first = None;
    for angle in [0.0, 22.5, 45.0] {
        cfg.vf = VfConfig::Constant { angle_deg: angle };
        let d = run_ensemble(&cfg, 0)?.histogram.finish()?;
        let tv = first.as_ref().map_or(0.0, |f: &nodal_tangency::stats::DirectionDistribution| f.tv_distance(&d));
        println!("zeta = {angle:>4}°: {:?}, TV to 0° = {tv:.4}", d.probabilities);
        first.get_or_insert(d);
    }
    Ok(())
}
