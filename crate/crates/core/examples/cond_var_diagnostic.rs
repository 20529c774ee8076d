//! Running average of the conditional EIC variance along one trial.

use nof1::harness::simulate_trial;
use nof1::tmle::{cond_var_path, default_grid, target, TmleInput, TmleRow};
use nof1::TrialConfig;

fn main() -> nof1::Result<()> {
    let cfg = TrialConfig::preset("sim1a")?;
    let trial = simulate_trial(&cfg, 5)?;
    let rows: Vec<TmleRow> = trial
        .steps
        .iter()
        .filter_map(|s| {
            Some(TmleRow {
                y: s.y,
                a: s.a,
                d: s.d?,
                g_obs: s.g_used?,
                g_rule: s.g_rule?,
                q_obs: s.q_obs?,
                q_rule: s.q_rule?,
            })
        })
        .collect();
    let n = rows.len();
    let input = TmleInput::new(rows, cfg.g_floor)?;
    let q_star = target(&input)?.q_rule;
    for (k, v) in cond_var_path(&input, &q_star, &default_grid(n))? {
        println!("{k:>5}  {v:.5}");
    }
    Ok(())
}
