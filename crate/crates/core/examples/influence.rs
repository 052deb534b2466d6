use rppi::inference::{influence_sweep, simplex_lattice, InfluenceOperator};
use rppi::sampling::sample_rppi;
use rppi::{dataset2_estimates, pack, Composition};

fn main() -> rppi::Result<()> {
    let model = dataset2_estimates();
    let (reference, _) = sample_rppi(&model, 100_000, 5)?;
    let outlier = Composition::new(vec![0.4, 0.3, 0.2, 0.1, 0.0])?;
    let grid = simplex_lattice(5, 20);

    for c in [0.0, 1.25] {
        let op = InfluenceOperator::new(&pack(&model), c, 4, &reference)?;
        let at_outlier = op.evaluate(&outlier).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let sweep = influence_sweep(&op, &grid);
        println!(
            "c = {c:<4} |IF(outlier)| = {at_outlier:.3e}  sup over {} points = {:.3e}  finite: {}",
            sweep.n_points, sweep.sup_norm, sweep.all_finite
        );
    }
    Ok(())
}
