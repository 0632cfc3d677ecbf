//! Builds the Whitehead graph of a line at the labeled vertex of the
//! standard rose of F(a,b,c) with peripheral factor <a>, and prints the
//! graph with its monodromy subgroup.

use grushko::io::whitehead_to_dot;
use grushko::tree::GrushkoTree;
use grushko::whitehead::{monodromy_induced, vertex_whitehead, LineCollection};
use grushko::words::{parse_word, FactorKind, FactorSpec, Presentation};
use std::collections::BTreeSet;

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(
        vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
        2,
        &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
    )?;
    let tree = GrushkoTree::standard_rose(&p)?;
    let g = parse_word("b a c b^-1 a^3 c^-1", &p)?;
    let lines = LineCollection::single(&p, &g)?;
    let w = vertex_whitehead(&tree, &lines, 0);
    println!("Whitehead graph at the <a>-vertex for g = {}:", g.display(&p));
    print!("{}", whitehead_to_dot(&tree, &w));
    let all: BTreeSet<usize> = (0..w.vertices.len()).collect();
    let mon = monodromy_induced(&p, &w, &all)?;
    println!(
        "monodromy: trivial={} whole-factor={} index={:?}",
        mon.is_trivial, mon.equals_whole_factor, mon.index
    );
    println!("is a circle: {}", w.is_circle());
    Ok(())
}
