use actpc_geom::embedding::{gram_matrix, nystrom_fit, KernelItem, KernelSpec};
use actpc_geom::util::rng;
use nalgebra::DVector;
use rand::Rng;

fn main() -> actpc_geom::Result<()> {
    let mut r = rng(3);
    let items: Vec<KernelItem> = (0..40).map(|_| KernelItem::vector(DVector::from_fn(5, |_, _| r.random_range(-1.0..1.0)))).collect();
    let spec = KernelSpec::FlattenedRbf { sigma: 1.0 };
    let full = gram_matrix(&items, &spec)?;

    println!("{:>4} {:>14}", "m", "gram error");
    for m in [4, 8, 16, 32, 40] {
        let basis = nystrom_fit(&items, &spec, m, 4, 11)?;
        println!("{m:>4} {:>14.6e}", basis.gram_error.unwrap_or(f64::NAN));
    }

    let basis = nystrom_fit(&items, &spec, 16, 3, 11)?;
    let z = basis.project(&items[0])?;
    println!("embedding of item 0 (d = 3): {:.4?}", z.as_slice());
    println!("full Gram trace {:.3}", full.trace());
    Ok(())
}
