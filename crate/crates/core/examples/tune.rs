use rppi::inference::tune_c;
use rppi::sampling::sample_counts;
use rppi::{dataset2_estimates, RobustConfig};

fn main() -> rppi::Result<()> {
    let counts = sample_counts(&dataset2_estimates(), &vec![2000; 94], 11)?;
    let grid: Vec<f64> = (0..=6).map(|i| i as f64 * 0.25).collect();
    let report = tune_c(&counts, &grid, &RobustConfig::new(0.0, 4), 10_000, 12)?;

    println!("{:>5} {:>8} {:>8}", "c", "min p", "cv");
    for pt in &report.points {
        match (pt.min_p_value, pt.weight_cv) {
            (Some(p), Some(cv)) => println!("{:>5} {p:>8.3} {cv:>8.3}", pt.c),
            _ => println!("{:>5} failed: {}", pt.c, pt.error.as_deref().unwrap_or("")),
        }
    }
    println!("recommended c = {:?}", report.recommended_c);
    Ok(())
}
