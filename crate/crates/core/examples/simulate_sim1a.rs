//! Draws a short balanced trajectory from the Sim-1a structural equations.

use nof1::dgp::{self, DgpSpec};
use nof1::TrialHistory;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nof1::Result<()> {
    let spec = DgpSpec::sim1a();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut history = TrialHistory::new(dgp::simulate_burn_in(&spec, &mut rng), spec.burn_in.blocks)?;
    while history.len() < 20 {
        let a = nof1::policy::draw_action(0.5, &mut rng);
        let block = dgp::step(&spec, &history, a, &mut rng)?;
        history.push(block)?;
    }
    println!("t  a  y  w1  w2");
    for (i, b) in history.blocks().iter().enumerate() {
        println!("{:<2} {}  {}  {}  {:+.3}", i + 1, b.a, b.y, b.w[0], b.w[1]);
    }
    Ok(())
}
