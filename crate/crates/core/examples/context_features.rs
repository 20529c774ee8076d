//! Fixed-dimensional contexts built from lagged history.

use nof1::{extract_context, Block, ContextSpec, TrialHistory, Variable};

fn main() -> nof1::Result<()> {
    let blocks = [(1, 1.0, 0.0), (0, 0.0, 1.0), (1, 0.0, 1.0), (1, 1.0, 0.0)]
        .into_iter()
        .map(|(a, y, w)| Block::new(a, y, vec![w, 0.0]))
        .collect::<nof1::Result<Vec<_>>>()?;
    let history = TrialHistory::new(blocks, 4)?;

    let spec = ContextSpec::new(vec![(Variable::Y, vec![1, 3]), (Variable::W(0), vec![1])]);
    let ctx = extract_context(&history, 5, &spec, None)?;
    for (name, value) in spec.feature_names().iter().zip(&ctx.features) {
        println!("{name} = {value}");
    }

    let too_deep = ContextSpec::new(vec![(Variable::A, vec![5])]);
    if let Err(e) = extract_context(&history, 5, &too_deep, None) {
        println!("{e}");
    }
    Ok(())
}
