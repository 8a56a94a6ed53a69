//! Draw a realization, evaluate exact jets, shift it, and round-trip JSON.
//!
//!     cargo run --example sample_and_eval

use nodal_tangency::field::{sample_field, FieldRealization};
use nodal_tangency::geom::Vec2;
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;

fn main() -> nodal_tangency::Result<()> {
    let f = sample_field(&SpectralModel::circle(), 1024, SeedRecord::new(42, 0))?;
    println!("{} waves, conditional variance {:.12}", f.terms().len(), f.conditional_variance());

    for x in [Vec2::ZERO, Vec2::new(0.5, -1.25), Vec2::new(3.0, 4.0)] {
        let j = f.eval(x);
        println!(
            "f({:.2}, {:.2}) = {:+.5}  grad = ({:+.4}, {:+.4})  hess = [{:+.3} {:+.3}; {:+.3}]",
            x.x, x.y, j.value, j.gradient.x, j.gradient.y, j.hessian.xx, j.hessian.xy, j.hessian.yy
        );
    }

    let u = Vec2::new(1.0, 2.0);
    let g = f.shift(u);
    println!("shift check: {:.3e}", (g.value(Vec2::new(4.0, 1.0)) - f.value(Vec2::new(3.0, -1.0))).abs());

    let json = f.to_json()?;
    let back = FieldRealization::from_json(&json)?;
    println!("JSON: {} bytes, replay identical: {}", json.len(), back.value(u) == f.value(u));

    // the arithmetic wave lives on the torus of side sqrt(n)
    let t = sample_field(&SpectralModel::arithmetic(5)?, 0, SeedRecord::new(42, 0))?;
    println!("arithmetic n=5: {} terms on {:?}", t.terms().len(), t.domain());
    Ok(())
}
