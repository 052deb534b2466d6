use rppi::inference::bootstrap_se;
use rppi::sampling::sample_counts;
use rppi::{dataset2_estimates, fit_robust, proportions, RobustConfig};

fn main() -> rppi::Result<()> {
    let counts = sample_counts(&dataset2_estimates(), &vec![2000; 94], 21)?;
    let config = RobustConfig::new(1.25, 4);
    let fit = fit_robust(&proportions(&counts)?, &config)?;

    let report = bootstrap_se(&fit, &counts, &config, 100, 22)?;
    println!("{:>6} {:>14} {:>12} {:>8}", "", "estimate", "se", "ratio");
    for k in 0..report.labels.len() {
        println!("{:>6} {:>14.4} {:>12.4} {:>8.2}", report.labels[k], report.estimate[k], report.se[k], report.ratio[k]);
    }
    if report.failed > 0 {
        println!("{} of {} replicates failed", report.failed, report.b);
    }
    Ok(())
}
