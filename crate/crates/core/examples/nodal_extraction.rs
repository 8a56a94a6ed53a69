//! Nodal components of a planar realization on a disc.
//!
//!     cargo run --release --example nodal_extraction

use nodal_tangency::field::sample_field;
use nodal_tangency::nodal::{classify_components, extract_nodal_set, Containment, ExtractParams, Region, SizeClass};
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;

fn main() -> nodal_tangency::Result<()> {
    let f = sample_field(&SpectralModel::circle(), 512, SeedRecord::new(7, 0))?;
    let radius = 15.0;
    let mut set = extract_nodal_set(&f, Region::Disc { radius }, ExtractParams::default())?;
    classify_components(&mut set.components, 6.0, 0.01);

    let contained = set.count(Containment::Contained);
    let boundary = set.count(Containment::BoundaryIntersecting);
    println!("{} grid vertices, {} nudged", set.grid_vertices, set.nudged);
    println!("{contained} contained, {boundary} touching the boundary of B({radius})");
    println!(
        "density of contained components: {:.4} per unit area",
        contained as f64 / (std::f64::consts::PI * radius * radius)
    );

    let small = set.components.iter().filter(|c| c.size_class == SizeClass::XiSmall).count();
    let long = set.components.iter().filter(|c| c.size_class == SizeClass::DLong).count();
    println!("xi-small: {small}, D-long: {long}");

    let largest = set
        .components
        .iter()
        .filter(|c| c.containment == Containment::Contained)
        .max_by(|a, b| a.enclosed_area.partial_cmp(&b.enclosed_area).unwrap());
    if let Some(c) = largest {
        println!(
            "largest contained loop: {} vertices, area {:.3}, diameter {:.3}, simple: {}",
            c.len(),
            c.enclosed_area.unwrap_or(0.0),
            c.diameter,
            c.is_simple()
        );
    }
    Ok(())
}
