use grushko::tree::*;
use grushko::whitehead::*;
use grushko::words::*;
use grushko::harness::random_tree_in_ol;
use std::collections::BTreeSet;

fn main() {
    let p = Presentation::with_aliases(
        vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
        2,
        &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
    ).unwrap();
    let g = parse_word("a c b a b c^-1", &p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    // try many random starting trees; reduce; inspect criteria
    for seed in 0..60u64 {
        let t0 = match random_tree_in_ol(&p, &g, 12, seed, 3) { Ok(t) => t, Err(_) => continue };
        match whitehead_reduce(&t0, &lines) {
            Ok(ReduceOutcome::Reduced { tree, .. }) => {
                let mut per_edge = vec![0usize; tree.graph.edge_pair_count()];
                for cyc in lines.loops(&tree) {
                    for (e, _) in &cyc.steps { per_edge[pair_of(*e)] += 1; }
                }
                let circles: Vec<bool> = (0..tree.graph.vertex_count())
                    .map(|v| vertex_whitehead(&tree, &lines, v).is_circle()).collect();
                let twice = per_edge.iter().all(|&c| c == 2);
                let all_circ = circles.iter().all(|&b| b);
                if !twice || !all_circ {
                    println!("seed {seed}: edges={} crossings={:?} circles={:?} twice={twice}", tree.graph.edge_pair_count(), per_edge, circles);
                }
                // also check connectivity of each Wh
                for v in 0..tree.graph.vertex_count() {
                    let w = vertex_whitehead(&tree, &lines, v);
                    if !w.is_connected() {
                        println!("  seed {seed}: Wh at {} disconnected: comps={}", tree.graph.vertex_names[v], w.components().len());
                    }
                }
            }
            Ok(ReduceOutcome::UncrossedEdge { .. }) => println!("seed {seed}: became UNCROSSED?!"),
            Err(e) => println!("seed {seed}: err {e}"),
        }
    }
    println!("done");
}
