//! IRLS working models and recursive-origin selection on a balanced Sim-1a run.

use nof1::harness::simulate_trial;
use nof1::regression::{select_recursive_origin, Candidate, FitSettings, TrainingRow};
use nof1::TrialConfig;

fn main() -> nof1::Result<()> {
    let mut cfg = TrialConfig::preset("sim1a")?;
    cfg.max_n = cfg.initial_n;
    let trial = simulate_trial(&cfg, 2)?;
    let rows: Vec<TrainingRow> = trial
        .steps
        .iter()
        .skip(4)
        .zip(trial.steps.iter().skip(3))
        .map(|(s, prev)| TrainingRow { features: vec![prev.y, prev.w[0]], a: s.a, y: s.y, g1: 0.5 })
        .collect();

    let candidates = [Candidate::GlmMain, Candidate::GlmInteract, Candidate::InterceptOnly, Candidate::LassoBlip { m: 2.0 }];
    let settings = FitSettings { g_floor: 0.05, ..FitSettings::default() };
    let sel = select_recursive_origin(&candidates, &rows, 30, &settings)?;
    for (c, loss) in candidates.iter().zip(&sel.validation_loss) {
        println!("{c:<16} validation quasi-NLL {}", loss.map_or("failed".into(), |l| format!("{l:.4}")));
    }
    println!("selected {}", candidates[sel.index]);
    if let nof1::regression::FittedCandidate::Glm { model } = &sel.fitted {
        println!("coefficients {:?}", model.coefficients);
    }
    Ok(())
}
