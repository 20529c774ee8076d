//! Monte Carlo coverage of the checkpoint intervals.
//!
//! `cargo run --release --example coverage_study -- sim1b 200`

use nof1::{mc_coverage, TrialConfig};

fn main() -> nof1::Result<()> {
    let mut args = std::env::args().skip(1);
    let dgp = args.next().unwrap_or_else(|| "sim1a".into());
    let draws = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let table = mc_coverage(&TrialConfig::preset(&dgp)?, draws)?;
    println!("{dgp}, {} draws", table.n_draws);
    println!("n      coverage  var(psi_hat)  mean psi  mean truth");
    for k in 0..table.checkpoints.len() {
        println!(
            "{:<6} {:>6.2}    {:>10.2e}    {:.4}    {:.4}",
            table.checkpoints[k],
            table.coverage[k],
            table.variance[k].unwrap_or(f64::NAN),
            table.mean_psi[k],
            table.mean_truth[k]
        );
    }
    Ok(())
}
