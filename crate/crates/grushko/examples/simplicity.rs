//! Simplicity verdicts with their witnesses.

use grushko::classify::{is_simple, SimplicityWitness};
use grushko::words::{parse_word, FactorKind, FactorSpec, Presentation};

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(
        vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
        2,
        &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
    )?;
    for text in ["b", "b a c b^-1 a^3 c^-1", "b c b c", "b a b^-1 c"] {
        let w = parse_word(text, &p)?;
        let v = is_simple(&p, &w)?;
        match &v.witness {
            SimplicityWitness::Simple { uncrossed, tree, moves, .. } => println!(
                "{text}: simple (edge {} uncrossed after {} moves)",
                tree.graph.edge_names[*uncrossed],
                moves.len()
            ),
            SimplicityWitness::NotSimple { reduced_tree, .. } => println!(
                "{text}: not simple (reduced tree with {} edges)",
                reduced_tree.graph.edge_pair_count()
            ),
        }
    }
    Ok(())
}
