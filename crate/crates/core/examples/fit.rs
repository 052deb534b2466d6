use rppi::sampling::sample_counts;
use rppi::{dataset2_estimates, fit_from_counts};

fn main() -> rppi::Result<()> {
    // 94 samples of five taxa, most of them with zero counts somewhere.
    let counts = sample_counts(&dataset2_estimates(), &vec![2000; 94], 7)?;
    let zero_rows = counts.rows().iter().filter(|r| r.contains(&0)).count();
    println!("{zero_rows} of {} rows contain a zero", counts.n());

    let fit = fit_from_counts(&counts)?;
    for (label, value) in fit.pi_hat.layout().labels().iter().zip(fit.pi_hat.natural()) {
        println!("{label:>6} {value:>14.4}");
    }
    println!("condition number {:.3e}", fit.condition_number);
    Ok(())
}
