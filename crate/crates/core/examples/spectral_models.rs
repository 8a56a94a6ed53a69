//! Spectral models, their moments and covariances.
//!
//!     cargo run --example spectral_models

use nodal_tangency::geom::Vec2;
use nodal_tangency::spectral::{lattice_points, SpectralModel};

fn main() -> nodal_tangency::Result<()> {
    let models = [
        SpectralModel::circle(),
        SpectralModel::annulus(0.5)?,
        SpectralModel::arithmetic(5)?,
        SpectralModel::cilleruelo(),
        SpectralModel::cilleruelo_tilted(),
    ];
    println!("{:<22} {:>8} {:>8} {:>8} {:>10}", "model", "mu20", "mu22", "mu40", "r(0.3,0)");
    for m in &models {
        println!(
            "{:<22} {:>8.4} {:>8.4} {:>8.4} {:>10.5}",
            m.name(),
            m.moment(2, 0),
            m.moment(2, 2),
            m.moment(4, 0),
            m.covariance_lag(Vec2::new(0.3, 0.0))
        );
    }

    println!("\nLambda_25 = {:?}", lattice_points(25)?);
    match SpectralModel::arithmetic(3) {
        Err(e) => println!("n = 3: {e}"),
        Ok(_) => unreachable!(),
    }

    // radial covariance of the circle model, B(r) = J0(2 pi r)
    let c = SpectralModel::circle();
    for r in [0.0, 0.25, 0.5, 1.0, 2.0] {
        println!("B({r:.2}) = {:+.6}", c.covariance(r)?);
    }
    Ok(())
}
