//! Tangency counts per component with both counting methods, on the plane
//! with a constant field and on the torus with a field that has zeros.
//!
//!     cargo run --release --example tangency_counting

use std::collections::BTreeMap;

use nodal_tangency::field::sample_field;
use nodal_tangency::nodal::{ExtractParams, Region};
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;
use nodal_tangency::tangency::{count_via_intersections, cross_check, excise_zeros, is_counted, VectorFieldSpec, DEFAULT_BETA};

fn main() -> nodal_tangency::Result<()> {
    let f = sample_field(&SpectralModel::circle(), 256, SeedRecord::new(3, 0))?;
    let vf = VectorFieldSpec::constant(0.0);
    let mut b = count_via_intersections(&f, &vf, Region::Disc { radius: 12.0 }, ExtractParams::default(), DEFAULT_BETA)?;
    let a = cross_check(&mut b, &f, &vf, DEFAULT_BETA);

    let mut hist = BTreeMap::new();
    let mut disagree = 0;
    for ((c, kb), ka) in b.set.components.iter().zip(&b.counts).zip(&a) {
        if is_counted(c, kb) {
            *hist.entry(kb.k).or_insert(0) += 1;
            disagree += (ka.k != kb.k) as usize;
        }
    }
    println!("plane, V = e1: k histogram {hist:?}, method disagreements {disagree}");
    println!("joint zeros in B(12): {} ({} on unresolved loops)", b.joint_zeros_in_disc(12.0), b.orphans.len());

    let model = SpectralModel::arithmetic(13)?;
    let side = model.torus_side().unwrap();
    let t = sample_field(&model, 0, SeedRecord::new(3, 1))?;
    let vf = VectorFieldSpec::sin_sin(side, 0.05)?;
    let audit = vf.audit_zeros();
    println!("\ntorus side {side:.3}: V has {} zeros, index sum {}", vf.zeros.len(), audit.index_sum);
    let mut res = count_via_intersections(&t, &vf, Region::Torus, ExtractParams { grid_h: 0.02, ..Default::default() }, DEFAULT_BETA)?;
    let excised = excise_zeros(&vf, &mut res.set.components, vf.rho);
    for (c, n) in res.set.components.iter().zip(&res.counts) {
        println!(
            "  {:?} closed={} k={} min margin {:.3e}{}",
            c.containment,
            c.closed,
            n.k,
            n.min_margin(),
            if c.excision_flag { " (excised)" } else { "" }
        );
    }
    println!("{excised} components excised");
    Ok(())
}
