//! The finite-subtree Whitehead graph machinery: the V_X vertex sets with
//! vhat, the eight-class cycle, and splicing two star graphs back together.

use grushko::io::subtree_whitehead_to_dot;
use grushko::tree::GrushkoTree;
use grushko::whitehead::{splice, subtree_whitehead, LineCollection, SubtreeSpec};
use grushko::words::{parse_word, FactorElement, FactorKind, FactorSpec, Presentation};

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(
        vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
        2,
        &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
    )?;
    let tree = GrushkoTree::standard_rose(&p)?;
    let g = parse_word("b a c b^-1 a^3 c^-1", &p)?;
    let lines = LineCollection::single(&p, &g)?;
    // X: the b-edge plus three twisted half edges
    let mut spec = SubtreeSpec::new(0);
    let w_node = spec.add_full(&tree, 0, None, 0)?;
    spec.add_half(&tree, 0, Some(FactorElement::generator(&p, 0, 0, -1)), 1)?;
    spec.add_half(&tree, w_node, None, 3)?;
    spec.add_half(&tree, w_node, Some(FactorElement::generator(&p, 0, 0, -4)), 1)?;
    let w = subtree_whitehead(&tree, &lines, &spec, 100_000)?;
    println!("subtree Whitehead graph ({} vertices, circle: {}):", w.vertices.len(), w.is_circle());
    print!("{}", subtree_whitehead_to_dot(&tree, &w));
    // split at the full edge's midpoint and splice back
    let (near, _, far, _) = spec.split_at(0)?;
    let wn = subtree_whitehead(&tree, &lines, &near, 100_000)?;
    let wf = subtree_whitehead(&tree, &lines, &far, 100_000)?;
    println!("star about v: {} vertices; star about w: {} vertices", wn.vertices.len(), wf.vertices.len());
    let spliced = splice(&wn, near.steps.len() - 1, &wf, far.steps.len() - 1)?;
    println!(
        "splice: {} vertices, {} edges, circle: {}",
        spliced.vertices.len(),
        spliced.edges.len(),
        spliced.is_circle()
    );
    Ok(())
}
