use rppi::sampling::{contaminate_counts, sample_counts};
use rppi::{dataset2_estimates, fit_robust, pack, proportions, Composition, RobustConfig};

fn main() -> rppi::Result<()> {
    let truth = dataset2_estimates();
    let clean = sample_counts(&truth, &vec![2000; 94], 3)?;
    let outlier = Composition::new(vec![0.4, 0.3, 0.2, 0.1, 0.0])?;
    let data = proportions(&contaminate_counts(&clean, 0.053, &outlier, 4)?)?;

    println!("true beta1 {:.3}", truth.beta()[0]);
    // The contaminated unweighted fit is too far off to start from.
    let init = Some(pack(&truth));
    for c in [0.0, 0.25, 0.5, 1.25] {
        let config = RobustConfig { init: init.clone(), ..RobustConfig::new(c, 4) };
        let fit = fit_robust(&data, &config)?;
        let lightest = fit.final_weights.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "c = {c:<4} beta1 = {:>9.3}  iterations {:>3}  smallest weight {lightest:.2e}",
            fit.params.beta()[0],
            fit.iterations
        );
    }
    Ok(())
}
