//! Perturb a realization by a small independent field and check that every
//! certified component keeps its tangency count.
//!
//!     cargo run --release --example stability_certificate

use nodal_tangency::field::sample_field;
use nodal_tangency::nodal::{ExtractParams, Region};
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;
use nodal_tangency::tangency::{stability_check, VectorFieldSpec, Verdict};

fn main() -> nodal_tangency::Result<()> {
    let beta = 1e-3;
    let f = sample_field(&SpectralModel::circle(), 256, SeedRecord::new(5, 0))?;
    let vf = VectorFieldSpec::constant(45.0);
    for b in [0.0, beta / 4.0] {
        let r = stability_check(&f, &vf, beta, b, Region::Disc { radius: 10.0 }, ExtractParams::default())?;
        println!(
            "b = {b:.2e}: psi scale {:.3e}, bound {:.3e}; {} certified, {} preserved, {} changed, {} ambiguous, {} unmatched",
            r.psi_scale, r.certified_bound, r.certified, r.preserved, r.changed, r.ambiguous, r.unmatched
        );
        for v in r.verdicts.iter().filter(|v| v.verdict != Verdict::Preserved) {
            println!("  component {} at ({:.2}, {:.2}): {:?}", v.component, v.anchor.x, v.anchor.y, v.verdict);
        }
    }
    if stability_check(&f, &vf, beta, beta, Region::Disc { radius: 2.0 }, ExtractParams::default()).is_err() {
        println!("b above beta/4 is rejected");
    }
    Ok(())
}
