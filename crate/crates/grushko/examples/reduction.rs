//! Runs Whitehead reduction from the standard rose of F(a,b) for the words
//! a^3 b (simple: ends at an uncrossed edge) and the commutator (not
//! simple: ends Whitehead reduced), printing the move log.

use grushko::tree::GrushkoTree;
use grushko::whitehead::{whitehead_reduce, CutKind, LineCollection, ReduceOutcome};
use grushko::words::{parse_word, Presentation};

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(vec![], 2, &[("a", "x1"), ("b", "x2")])?;
    let rose = GrushkoTree::standard_rose(&p)?;
    for text in ["a^3 b", "a b a^-1 b^-1"] {
        let w = parse_word(text, &p)?;
        let lines = LineCollection::single(&p, &w)?;
        println!("reducing for {text} (|L|_T = {}):", lines.total_length(&rose));
        match whitehead_reduce(&rose, &lines)? {
            ReduceOutcome::UncrossedEdge { tree, edge, moves, .. } => {
                for (i, m) in moves.iter().enumerate() {
                    let kind = match m.kind {
                        CutKind::TypeI => "type i",
                        CutKind::TypeII { .. } => "type ii",
                    };
                    println!("  move {}: {} at {}", i + 1, kind, m.vertex);
                }
                println!(
                    "  -> uncrossed edge {} after {} moves: the word is simple",
                    tree.graph.edge_names[edge],
                    moves.len()
                );
            }
            ReduceOutcome::Reduced { tree, moves } => {
                println!(
                    "  -> Whitehead reduced after {} moves ({} quotient edges): not simple",
                    moves.len(),
                    tree.graph.edge_pair_count()
                );
            }
        }
    }
    Ok(())
}
