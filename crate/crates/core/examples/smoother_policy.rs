//! The exploration smoother and the probabilities it assigns.

use nof1::policy::{rule_decision, smoother, PolicyMode, PolicyState};
use nof1::ContextSummary;

fn main() -> nof1::Result<()> {
    let (c, e) = (0.1, 0.05);
    println!("x        G(x)");
    for i in -6..=6 {
        let x = f64::from(i) * 0.01;
        println!("{x:+.3}   {:.4}", smoother(x, c, e)?);
    }

    let blip = |ctx: &ContextSummary| Ok(0.02 - 0.1 * ctx.features[0]);
    let policy = PolicyState::new(PolicyMode::Smoother, c, e)?.with_blip(&blip);
    for w in [0.0, 1.0] {
        let ctx = ContextSummary::new(vec![w], 10);
        let b = policy.blip(&ctx)?;
        let d = rule_decision(b);
        println!(
            "w1 = {w}: blip {b:+.3}, rule {d}, g(rule) {:.4}, g(other) {:.4}",
            policy.assignment_prob(&ctx, d)?,
            policy.assignment_prob(&ctx, 1 - d)?
        );
    }
    Ok(())
}
