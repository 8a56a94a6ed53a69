//! Translation-average bounds on component counts, and spatial against
//! ensemble averages.
//!
//!     cargo run --release --example sandwich_and_ergodic

use nodal_tangency::field::sample_field;
use nodal_tangency::nodal::{extract_nodal_set, Containment, ExtractParams, Region};
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;
use nodal_tangency::stats::{ergodic_check, sandwich_check};
use nodal_tangency::tangency::{count_via_intersections, is_counted, VectorFieldSpec, DEFAULT_BETA};

fn main() -> nodal_tangency::Result<()> {
    let model = SpectralModel::circle();
    let (r, big_r) = (3.0, 15.0);
    let f = sample_field(&model, 256, SeedRecord::new(9, 0))?;
    let res = count_via_intersections(
        &f,
        &VectorFieldSpec::constant(0.0),
        Region::Disc { radius: big_r + 2.0 * r },
        ExtractParams::default(),
        DEFAULT_BETA,
    )?;
    let ks: Vec<Option<usize>> = res.set.components.iter().zip(&res.counts).map(|(c, n)| is_counted(c, n).then_some(n.k)).collect();
    for k in [None, Some(2), Some(4)] {
        let s = sandwich_check(&res.set, &ks, k, r, big_r, None)?;
        println!(
            "k = {k:?}: {:.2} <= {:.0} <= {:.2} (slack {:.2} / {:.2}), holds {}",
            s.lower, s.mid, s.upper, s.slack_lower, s.slack_upper, s.holds
        );
    }

    let params = ExtractParams::default();
    let count = |seed: SeedRecord, radius: f64| -> nodal_tangency::Result<u64> {
        let f = sample_field(&model, 256, seed)?;
        Ok(extract_nodal_set(&f, Region::Disc { radius }, params)?.count(Containment::Contained) as u64)
    };
    let small: Vec<u64> = (0..30).map(|t| count(SeedRecord::new(10, t), 8.0)).collect::<Result<_, _>>()?;
    let big = count(SeedRecord::new(11, 0), 30.0)?;
    let e = ergodic_check(big, 30.0, &small, 8.0)?;
    println!(
        "\nspatial {:.4} vs ensemble {:.4} ± {:.4} per unit area, gap {:.1}%",
        e.spatial_density,
        e.ensemble_density.mean,
        e.ensemble_density.stderr,
        100.0 * e.relative_gap
    );
    Ok(())
}
