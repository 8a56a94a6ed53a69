//! Kac-Rice densities of tangencies and critical points.
//!
//!     cargo run --release --example kac_rice_oracle

use nodal_tangency::geom::Vec2;
use nodal_tangency::oracle::{
    isotropic_critical_density, isotropic_tangency_density, kac_rice_critical_density, kac_rice_tangency_density,
};
use nodal_tangency::spectral::SpectralModel;

fn main() -> nodal_tangency::Result<()> {
    let draws = 1 << 18;
    let circle = SpectralModel::circle();
    for angle in [0.0, 37.0] {
        let e = kac_rice_tangency_density(&circle, Vec2::from_angle_deg(angle), draws, 1)?;
        println!("circle, zeta = {angle:>4}°: {:.5} ± {:.5}", e.density, e.stderr);
    }
    println!("circle closed form: {:.5}", isotropic_tangency_density(&circle)?);
    let c = kac_rice_critical_density(&circle, draws, 2)?;
    println!("critical points: {:.5} ± {:.5} (closed form {:.5})", c.density, c.stderr, isotropic_critical_density(&circle)?);

    let a5 = SpectralModel::arithmetic(5)?;
    for angle in [0.0, 22.5, 45.0] {
        let e = kac_rice_tangency_density(&a5, Vec2::from_angle_deg(angle), draws, 3)?;
        println!("arithmetic n=5, zeta = {angle:>4}°: {:.5} ± {:.5}", e.density, e.stderr);
    }

    // the four-point measure degenerates when the derivative direction is diagonal
    match kac_rice_tangency_density(&SpectralModel::cilleruelo(), Vec2::from_angle_deg(45.0), draws, 4) {
        Err(e) => println!("cilleruelo at 45°: {e}"),
        Ok(e) => println!("cilleruelo at 45°: {:.5}", e.density),
    }
    let e = kac_rice_tangency_density(&SpectralModel::annulus(0.5)?, Vec2::new(1.0, 0.0), draws, 5)?;
    println!("\nannulus(0.5): {:.5} from {} draws, conditioning on {:?}", e.density, e.draws, e.labels);
    Ok(())
}
