//! Indicator-basis lasso fit of the blip and its bootstrap band.

use nof1::dgp::expit;
use nof1::regression::{bootstrap_blip_ci, fit_blip_lasso, LassoOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nof1::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // noisy pseudo-outcomes around the Sim-1a blip on (Y(t-1), W1(t-1))
    let rows: Vec<(Vec<f64>, f64)> = (0..400)
        .map(|_| {
            let c = vec![f64::from(rng.random::<bool>()), f64::from(rng.random::<bool>())];
            let lp = 0.5 * c[0] - 1.1 * c[1];
            let blip = expit(1.5 + lp) - expit(lp);
            (c, blip + rng.random_range(-1.0..1.0))
        })
        .collect();

    let opts = LassoOptions::default();
    let fit = fit_blip_lasso(&rows, 0.3, &opts)?;
    println!("L1 norm {:.4} (budget {}), penalty {:.4}, {} terms", fit.l1_norm(), fit.l1_bound, fit.penalty, fit.terms.len());
    let ci = bootstrap_blip_ci(&fit, &rows, 200, 0.95, &opts, &mut rng)?;
    for c in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
        println!("context {c:?}: blip {:+.3} +- {:.3}", fit.predict(&c), ci.half_width(&c));
    }
    Ok(())
}
