//! One TMLE evaluation from hand-built checkpoint rows.

use nof1::tmle::{tmle_estimate, TmleInput, TmleRow};

fn main() -> nof1::Result<()> {
    // Rule treats everyone; the policy kept g(1) = 0.9 and the initial fit is biased low.
    let rows: Vec<TmleRow> = (0..500)
        .map(|i| {
            let a = u8::from(i % 10 != 0);
            let g_obs = if a == 1 { 0.9 } else { 0.1 };
            TmleRow { y: f64::from(i % 4 != 0), a, d: 1, g_obs, g_rule: 0.9, q_obs: 0.6, q_rule: 0.6 }
        })
        .collect();
    let report = tmle_estimate(&TmleInput::new(rows, 0.05)?, 0.05)?;
    println!("psi_hat   {:.4}", report.psi_hat);
    println!("epsilon   {:.4}", report.epsilon);
    println!("sigma2    {:.4}", report.sigma2_hat);
    println!("95% CI    ({:.4}, {:.4})", report.ci.0, report.ci.1);
    println!("mean EIC  {:.1e}", report.score_residual);
    Ok(())
}
