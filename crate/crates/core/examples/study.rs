use rppi::study::{preset, run_study};

fn main() -> rppi::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("sim7");
    let mut scenario = preset(name).expect("unknown preset");
    if let Some(r) = args.get(2) {
        scenario.replicates = r.parse().expect("replicates");
    }

    let table = run_study(&scenario)?;
    table.write_csv(std::io::stdout())?;
    eprintln!("failures per estimator: {:?}", table.failures);
    Ok(())
}
