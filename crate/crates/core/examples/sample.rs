use rppi::sampling::{sample_rppi, sample_rppi_mcmc};
use rppi::RppiParams;

fn mean(data: &[rppi::Composition], j: usize) -> f64 {
    data.iter().map(|u| u[j]).sum::<f64>() / data.len() as f64
}

fn main() -> rppi::Result<()> {
    let params = RppiParams::from_rows(&[vec![-2.0, 1.0], vec![1.0, -1.0]], vec![-0.3, 0.2, 0.0], 2)?;

    let (exact, report) = sample_rppi(&params, 20_000, 1)?;
    println!("rejection: acceptance {:.3}, max quadratic form {:.3}", report.acceptance_rate, report.envelope);

    let (chain, mh) = sample_rppi_mcmc(&params, 20_000, 2, 10_000, 10)?;
    println!("metropolis: acceptance {:.3}", mh.acceptance_rate);

    for j in 0..3 {
        println!("E[u{}]  {:.4}  {:.4}", j + 1, mean(&exact, j), mean(&chain, j));
    }
    Ok(())
}
