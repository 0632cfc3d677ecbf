//! Acceptance suite: golden-example reproduction from the figures plus
//! property-based batteries, each criterion printing one pass/fail line
//! (run with `--nocapture` to see them).
//!
//! Two independent oracles live here and nowhere else:
//! - a brute-force classical Whitehead-automorphism descent for simplicity
//!   over free groups (criterion 6), and
//! - windowed breadth-first unrolling of derived graphs (criterion 10).

use grushko::classify::{
    certify_projection, extract_short_element, find_short_cut_pair, is_quadratic, is_simple,
    Supplied,
};
use grushko::harness::{random_tree_in_ol, random_word};
use grushko::tree::{compute_bounds, pair_of, GrushkoTree};
use grushko::whitehead::{
    annular_whitehead, classify_components_minus, derived_components, derived_neighbors,
    is_whitehead_reduced, splice, subtree_whitehead, uncrossed_pairs, vertex_whitehead,
    whitehead_reduce, Count, DerivedVertex, LineCollection, ReduceOutcome, SubVertex, SubtreeSpec,
    WhEdge, WhiteheadGraph,
};
use grushko::words::{
    factor_subgroup, parse_word, FactorElement, FactorKind, FactorSpec, NormalWord, Presentation,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::sync::Arc;

fn ex41() -> Arc<Presentation> {
    Presentation::with_aliases(
        vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
        2,
        &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
    )
    .unwrap()
}

fn free_presentation(rank: usize) -> Arc<Presentation> {
    let names = ["a", "b", "c", "d", "e"];
    let aliases: Vec<(String, String)> =
        (0..rank).map(|i| (names[i].to_string(), format!("x{}", i + 1))).collect();
    let refs: Vec<(&str, &str)> = aliases.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    Presentation::with_aliases(vec![], rank, &refs).unwrap()
}

fn pass(name: &str) {
    println!("ACCEPTANCE {name}: PASS");
}

// ---------------------------------------------------------------------------
// 1. Example 4.1 reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_example_41() {
    let p = ex41();
    let t = GrushkoTree::standard_rose(&p).unwrap();
    let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    let w = vertex_whitehead(&t, &lines, 0);
    assert!(w.is_circle(), "the graph must be a 4-cycle");
    assert_eq!(w.vertices.len(), 4);
    assert_eq!(w.edges.len(), 4);
    let labels: Vec<Option<FactorElement>> = w.edges.iter().map(|e| e.label.clone()).collect();
    assert_eq!(labels.iter().filter(|l| l.is_none()).count(), 2);
    assert!(labels.contains(&Some(FactorElement::generator(&p, 0, 0, 1))));
    assert!(labels.contains(&Some(FactorElement::generator(&p, 0, 0, 3))));
    let all: BTreeSet<usize> = (0..4).collect();
    let mon = grushko::whitehead::monodromy_induced(&p, &w, &all).unwrap();
    assert!(!mon.is_trivial && !mon.equals_whole_factor);
    assert_eq!(mon.index, Some(4), "monodromy must be the index-4 subgroup <a^4>");
    pass("1 example-4.1 whitehead graph");
}

// ---------------------------------------------------------------------------
// 2. Fig 4 reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_derived_components() {
    let p = ex41();
    let t = GrushkoTree::standard_rose(&p).unwrap();
    let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    let w = vertex_whitehead(&t, &lines, 0);
    let rep = derived_components(&p, &w).unwrap();
    assert_eq!(rep.components.len(), 1, "one quotient component");
    let info = &rep.components[0];
    assert_eq!(info.monodromy.index, Some(4));
    assert_eq!(info.count, Count::Finite(4), "four derived line components");
    assert!(!info.each_finite, "the four components are infinite lines");
    pass("2 derived components (four lines)");
}

// ---------------------------------------------------------------------------
// 3. Example 7.2 / Fig 6 reproduction
// ---------------------------------------------------------------------------

fn example72_subtree(p: &Presentation, t: &GrushkoTree) -> SubtreeSpec {
    let mut spec = SubtreeSpec::new(0);
    let w_node = spec.add_full(t, 0, None, 0).unwrap();
    spec.add_half(t, 0, Some(FactorElement::generator(p, 0, 0, -1)), 1).unwrap();
    spec.add_half(t, w_node, None, 3).unwrap();
    spec.add_half(t, w_node, Some(FactorElement::generator(p, 0, 0, -4)), 1).unwrap();
    spec
}

#[test]
fn criterion_3_example_72() {
    let p = ex41();
    let t = GrushkoTree::standard_rose(&p).unwrap();
    let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    let w = vertex_whitehead(&t, &lines, 0);
    let id = FactorElement::identity(&p, 0);
    // V_X at v: remove a^-1 Y_b^- and Y_b^+: six components (3 lines, 2
    // rays, 1 singleton); V_X = {Y_c^+, vhat}
    let removed = BTreeSet::from([(1usize, FactorElement::generator(&p, 0, 0, -1)), (0usize, id.clone())]);
    let rep = classify_components_minus(&p, &w, &removed, 100_000).unwrap();
    assert_eq!(rep.finite_components, vec![vec![(2usize, id.clone())]], "single finite component {{Y_c^+}}");
    assert!(rep.infinite_components_met >= 1);
    // V_X at w = bv: remove Z_b^-, Z_c^-, a^-4 Z_b^-: V_X = {a^-3 Z_b^+, a^-3 Z_c^+, what}
    let removed = BTreeSet::from([
        (1usize, id.clone()),
        (3usize, id),
        (1usize, FactorElement::generator(&p, 0, 0, -4)),
    ]);
    let rep = classify_components_minus(&p, &w, &removed, 100_000).unwrap();
    let am3 = FactorElement::generator(&p, 0, 0, -3);
    assert_eq!(rep.finite_components, vec![vec![(0usize, am3.clone()), (2usize, am3)]]);
    assert!(rep.infinite_components_met >= 1);
    // the 8-cycle on the eight named classes
    let spec = example72_subtree(&p, &t);
    let sub = subtree_whitehead(&t, &lines, &spec, 100_000).unwrap();
    assert_eq!(sub.vertices.len(), 8);
    assert!(sub.is_circle(), "Wh(L, X) must be an 8-cycle");
    let am3 = FactorElement::generator(&p, 0, 0, -3);
    for v in [
        SubVertex::FiniteDir { node: 0, half: 2, twist: None },
        SubVertex::VHat { node: 0 },
        SubVertex::VHat { node: 1 },
        SubVertex::FiniteDir { node: 1, half: 0, twist: Some(am3.clone()) },
        SubVertex::FiniteDir { node: 1, half: 2, twist: Some(am3) },
        SubVertex::MidLeaf { step: 1 },
        SubVertex::MidLeaf { step: 2 },
        SubVertex::MidLeaf { step: 3 },
    ] {
        assert!(sub.vertex_id(&v).is_some(), "missing class {v:?}");
    }
    pass("3 example-7.2 V_X sets and the 8-cycle");
}

// ---------------------------------------------------------------------------
// 4. Fig 7 splicing and splice coherence
// ---------------------------------------------------------------------------

/// Comparable form of a subtree-graph vertex in original-spec coordinates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum CanonVertex {
    Trivial { node: usize, half: usize },
    Mid { parent: usize, twist: Option<FactorElement>, edge: usize },
    Finite { node: usize, half: usize, twist: Option<FactorElement> },
    VHat { node: usize },
}

fn canon_vertex(
    spec: &SubtreeSpec,
    node_map: Option<&[usize]>,
    v: &SubVertex,
) -> CanonVertex {
    let map = |n: usize| node_map.map(|m| m[n]).unwrap_or(n);
    match v {
        SubVertex::TrivialDir { node, half } => CanonVertex::Trivial { node: map(*node), half: *half },
        SubVertex::FiniteDir { node, half, twist } => {
            CanonVertex::Finite { node: map(*node), half: *half, twist: twist.clone() }
        }
        SubVertex::VHat { node } => CanonVertex::VHat { node: map(*node) },
        SubVertex::MidLeaf { step } => {
            let s = &spec.steps[*step];
            CanonVertex::Mid { parent: map(s.parent), twist: s.twist.clone(), edge: s.edge }
        }
    }
}

fn canon_edges(
    spec: &SubtreeSpec,
    node_map: Option<&[usize]>,
    w: &grushko::whitehead::SubtreeWhitehead,
) -> Vec<(CanonVertex, CanonVertex, usize)> {
    let mut out: Vec<(CanonVertex, CanonVertex, usize)> = w
        .edges
        .iter()
        .map(|e| {
            let a = canon_vertex(spec, node_map, &w.vertices[e.from]);
            let b = canon_vertex(spec, node_map, &w.vertices[e.to]);
            if a <= b {
                (a, b, e.line)
            } else {
                (b, a, e.line)
            }
        })
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_4_splicing() {
    let p = ex41();
    let t = GrushkoTree::standard_rose(&p).unwrap();
    let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    // Fig 7: star graphs are a 4-cycle and a 6-cycle; their splice is the 8-cycle
    let spec = example72_subtree(&p, &t);
    let (near, near_map, far, far_map) = spec.split_at(0).unwrap();
    let wn = subtree_whitehead(&t, &lines, &near, 100_000).unwrap();
    let wf = subtree_whitehead(&t, &lines, &far, 100_000).unwrap();
    assert_eq!((wn.vertices.len(), wf.vertices.len()), (4, 6));
    assert!(wn.is_circle() && wf.is_circle());
    let spliced = splice(&wn, near.steps.len() - 1, &wf, far.steps.len() - 1).unwrap();
    assert!(spliced.is_circle());
    assert_eq!(spliced.vertices.len(), 8);
    // exact agreement with the full graph, modulo the split midpoints
    let full = subtree_whitehead(&t, &lines, &spec, 100_000).unwrap();
    assert_eq!(spliced.edges.len(), full.edges.len());
    let _ = (near_map, far_map);

    // splice coherence on 100 random subtree decompositions
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut cases = 0;
    let mut attempts = 0;
    while cases < 100 && attempts < 3000 {
        attempts += 1;
        let (p, t, lines) = random_reduced_instance(&mut rng);
        let Some(spec) = random_subtree(&mut rng, &t, 4) else { continue };
        let full_steps: Vec<usize> =
            (0..spec.steps.len()).filter(|&s| spec.steps[s].child.is_some()).collect();
        if full_steps.is_empty() {
            continue;
        }
        let split_step = full_steps[rng.gen_range(0..full_steps.len())];
        let Ok(full) = subtree_whitehead(&t, &lines, &spec, 100_000) else { continue };
        let (near, near_map, far, far_map) = spec.split_at(split_step).unwrap();
        let wn = subtree_whitehead(&t, &lines, &near, 100_000).unwrap();
        let wf = subtree_whitehead(&t, &lines, &far, 100_000).unwrap();
        let spliced = splice(&wn, near.steps.len() - 1, &wf, far.steps.len() - 1)
            .unwrap_or_else(|e| panic!("splice failed on case {cases}: {e}"));
        // compare against the full graph in original coordinates, dropping
        // the two split midpoints (absent from the full graph)
        let mut canon_spliced: Vec<(CanonVertex, CanonVertex, usize)> = Vec::new();
        {
            // remap vertices of the spliced graph: near part then far part
            let remap = |v: &SubVertex, from_near: bool| -> CanonVertex {
                if from_near {
                    canon_vertex(&near, Some(&near_map), v)
                } else {
                    canon_vertex(&far, Some(&far_map), v)
                }
            };
            let near_vertex_count = wn.vertices.len() - 1;
            for e in &spliced.edges {
                let cv = |idx: usize| {
                    if idx < near_vertex_count {
                        remap(&spliced.vertices[idx], true)
                    } else {
                        remap(&spliced.vertices[idx], false)
                    }
                };
                let (a, b) = (cv(e.from), cv(e.to));
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                canon_spliced.push((a, b, e.line));
            }
            canon_spliced.sort();
        }
        let canon_full = canon_edges(&spec, None, &full);
        assert_eq!(canon_spliced, canon_full, "splice coherence failed (attempt {attempts})");
        let _ = p;
        cases += 1;
    }
    assert_eq!(cases, 100, "not enough splice cases generated");
    pass("4 fig-7 splicing and 100 splice-coherence cases");
}

/// A random reduced (tree, lines) instance over a pool of presentations.
fn random_reduced_instance(rng: &mut ChaCha8Rng) -> (Arc<Presentation>, GrushkoTree, LineCollection) {
    loop {
        let p = match rng.gen_range(0..3) {
            0 => ex41(),
            1 => free_presentation(2),
            _ => free_presentation(3),
        };
        let rose = GrushkoTree::standard_rose(&p).unwrap();
        let w = random_word(rng, &p, 8);
        if w.is_identity() || w.is_peripheral().is_some() {
            continue;
        }
        let Ok(lines) = LineCollection::single(&p, &w) else { continue };
        if lines.total_length(&rose) > 12 {
            continue;
        }
        match whitehead_reduce(&rose, &lines) {
            Ok(ReduceOutcome::Reduced { tree, .. }) => return (p, tree, lines),
            _ => continue,
        }
    }
}

/// A random subtree with a few full and half steps and random twists.
fn random_subtree(rng: &mut ChaCha8Rng, t: &GrushkoTree, max_steps: usize) -> Option<SubtreeSpec> {
    let root = rng.gen_range(0..t.graph.vertex_count());
    let mut spec = SubtreeSpec::new(root);
    let steps = rng.gen_range(2..=max_steps);
    for _ in 0..steps {
        let node = rng.gen_range(0..spec.nodes.len());
        let qv = spec.nodes[node].qv;
        let halves = t.graph.halves_at(qv);
        let edge = halves[rng.gen_range(0..halves.len())];
        let twist = match t.graph.labels[qv] {
            Some(f) => match rng.gen_range(0..3) {
                0 => None,
                1 => Some(FactorElement::generator(&t.presentation, f, rng.gen_range(0..t.presentation.factors[f].rank), 1)),
                _ => Some(FactorElement::generator(&t.presentation, f, rng.gen_range(0..t.presentation.factors[f].rank), -rng.gen_range(1..=4))),
            },
            None => None,
        };
        // avoid colliding with an existing direction of the subtree
        let dir_exists = {
            let key = (edge, twist.clone().filter(|x| !x.is_trivial()));
            spec.steps.iter().any(|s| {
                s.parent == node && (s.edge, s.twist.clone()) == key
            }) || spec.nodes[node].parent_step.is_some_and(|ps| {
                grushko::tree::reverse(spec.steps[ps].edge) == edge && twist.clone().filter(|x| !x.is_trivial()).is_none()
            })
        };
        if dir_exists {
            continue;
        }
        if rng.gen_bool(0.6) {
            spec.add_full(t, node, twist, edge).ok()?;
        } else {
            spec.add_half(t, node, twist, edge).ok()?;
        }
    }
    if spec.steps.is_empty() {
        return None;
    }
    Some(spec)
}

// ---------------------------------------------------------------------------
// 5. Reduction bound on seeded random instances
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_reduction_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut done = 0;
    let mut attempts = 0;
    while done < 200 && attempts < 5000 {
        attempts += 1;
        let p = match rng.gen_range(0..3) {
            0 => ex41(),
            1 => free_presentation(2),
            _ => free_presentation(3),
        };
        let rose = GrushkoTree::standard_rose(&p).unwrap();
        // a random starting tree, then a random line collection of total
        // length at most 12 on it
        let seed_word = random_word(&mut rng, &p, 4);
        if seed_word.is_identity() || seed_word.is_peripheral().is_some() {
            continue;
        }
        let tree_seed = rng.gen::<u64>();
        let t = random_tree_in_ol(&p, &seed_word, 24, tree_seed, rng.gen_range(0..3))
            .unwrap_or_else(|_| rose.clone());
        let mut words = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            let w = random_word(&mut rng, &p, 5);
            if !w.is_identity() && w.is_peripheral().is_none() {
                words.push(w);
            }
        }
        if words.is_empty() {
            continue;
        }
        let Ok(lines) = LineCollection::new(&p, &words) else { continue };
        let total = lines.total_length(&t);
        if total == 0 || total > 12 {
            continue;
        }
        let outcome = whitehead_reduce(&t, &lines).unwrap();
        assert!(
            outcome.moves().len() <= total,
            "instance {done}: {} moves > |L|_T = {total}",
            outcome.moves().len()
        );
        // |L| never increases along the move log
        let mut prev = total;
        for mv in outcome.moves() {
            let now = lines.total_length(&mv.after);
            assert!(now <= prev, "instance {done}: |L| increased {prev} -> {now}");
            prev = now;
        }
        match &outcome {
            ReduceOutcome::UncrossedEdge { tree, edge, splitting, .. } => {
                assert!(uncrossed_pairs(tree, &lines).contains(edge), "edge not truly uncrossed");
                for w in &lines.generators {
                    assert!(splitting.is_elliptic(w).unwrap().is_some());
                }
            }
            ReduceOutcome::Reduced { tree, .. } => {
                assert!(is_whitehead_reduced(tree, &lines), "outcome Reduced but a cut exists");
            }
        }
        done += 1;
    }
    assert_eq!(done, 200, "not enough reduction instances generated");
    pass("5 reduction bound on 200 seeded instances");
}

// ---------------------------------------------------------------------------
// 6. Simplicity oracle equivalence (classical Whitehead descent)
// ---------------------------------------------------------------------------

/// Cyclic word over letters 1..=r and their negatives.
type CWord = Vec<i32>;

fn cyc_reduce(mut w: CWord) -> CWord {
    loop {
        let mut out: CWord = Vec::with_capacity(w.len());
        for &l in &w {
            if out.last().is_some_and(|&p| p == -l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        while out.len() >= 2 && out.first().is_some_and(|&f| Some(-f) == out.last().copied()) {
            out.pop();
            out.remove(0);
        }
        if out == w {
            return out;
        }
        w = out;
    }
}

fn canon_cyc(w: &CWord) -> CWord {
    let mut best: Option<CWord> = None;
    for cand in [w.clone(), w.iter().rev().map(|&l| -l).collect::<CWord>()] {
        let n = cand.len();
        for r in 0..n.max(1) {
            let rot: CWord = (0..n).map(|i| cand[(r + i) % n]).collect();
            if best.as_ref().map_or(true, |b| rot < *b) {
                best = Some(rot);
            }
        }
    }
    best.unwrap_or_default()
}

/// All letter substitutions g -> one of {g, gx, x^-1 g, x^-1 g x} for a
/// fixed multiplier letter x, filtered to genuine automorphisms by a
/// Stallings generation check. This enumeration contains every Whitehead
/// automorphism of the second kind.
fn whitehead_like_autos(rank: usize) -> Vec<Vec<CWord>> {
    let mut out = Vec::new();
    let letters: Vec<i32> = (1..=rank as i32).flat_map(|g| [g, -g]).collect();
    for &x in &letters {
        let others: Vec<i32> = (1..=rank as i32).filter(|&g| g != x.abs()).collect();
        let choices = 4usize.pow(others.len() as u32);
        for mask in 0..choices {
            let mut images: Vec<CWord> = (1..=rank as i32).map(|g| vec![g]).collect();
            let mut m = mask;
            let mut nontrivial = false;
            for &g in &others {
                let img = match m % 4 {
                    0 => vec![g],
                    1 => vec![g, x],
                    2 => vec![-x, g],
                    _ => vec![-x, g, x],
                };
                if img.len() > 1 {
                    nontrivial = true;
                }
                images[(g - 1) as usize] = img;
                m /= 4;
            }
            if !nontrivial {
                continue;
            }
            // generation check via folding
            let words: Vec<Vec<i32>> = images.clone();
            let (_, whole, _) = fold_check(rank, &words);
            if whole {
                out.push(images);
            }
        }
    }
    out
}

/// Stallings generation check: do the words generate the whole free group?
fn fold_check(rank: usize, words: &[Vec<i32>]) -> (usize, bool, Option<u64>) {
    let p = Presentation::new(vec![FactorSpec { kind: FactorKind::Free, rank }], 1);
    let gens: Vec<FactorElement> = words
        .iter()
        .map(|w| {
            let mut acc = FactorElement::identity(&p, 0);
            for &l in w {
                acc = acc.mul(&FactorElement::generator(&p, 0, (l.unsigned_abs() - 1) as usize, l.signum() as i64));
            }
            acc
        })
        .collect();
    let rep = factor_subgroup(&p, &gens).unwrap();
    (rep.rank, rep.equals_whole_factor, rep.index)
}

fn apply_auto(w: &CWord, images: &[CWord]) -> CWord {
    let mut out = CWord::new();
    for &l in w {
        let img = &images[(l.abs() - 1) as usize];
        if l > 0 {
            out.extend_from_slice(img);
        } else {
            out.extend(img.iter().rev().map(|&x| -x));
        }
    }
    cyc_reduce(out)
}

/// Oracle: `w` is simple iff its orbit closure under non-increasing
/// Whitehead-automorphism moves contains a word omitting some generator.
fn oracle_simple(rank: usize, w: &CWord, autos: &[Vec<CWord>]) -> bool {
    let start = cyc_reduce(w.clone());
    if start.is_empty() {
        return true;
    }
    let mut min = start.len();
    let mut seen: BTreeSet<CWord> = BTreeSet::new();
    let mut frontier = vec![canon_cyc(&start)];
    seen.insert(frontier[0].clone());
    loop {
        let mut next = Vec::new();
        let mut improved = false;
        for w in &frontier {
            if w.len() > min {
                continue;
            }
            for auto in autos {
                let img = canon_cyc(&apply_auto(w, auto));
                if img.len() < min {
                    min = img.len();
                    improved = true;
                }
                if img.len() <= min && seen.insert(img.clone()) {
                    next.push(img);
                }
            }
        }
        if next.is_empty() && !improved {
            break;
        }
        frontier.extend(next);
        if improved {
            // drop entries longer than the new minimum
            frontier.retain(|w| w.len() <= min);
            seen.retain(|w| w.len() <= min);
        }
    }
    // simple iff some minimal representative omits a generator
    seen.iter().any(|w| {
        w.len() <= min && {
            let used: BTreeSet<i32> = w.iter().map(|l| l.abs()).collect();
            used.len() < rank
        }
    })
}

fn enumerate_cyclic_words(rank: usize, max_len: usize) -> Vec<CWord> {
    let letters: Vec<i32> = (1..=rank as i32).flat_map(|g| [g, -g]).collect();
    let mut out: Vec<CWord> = Vec::new();
    let mut seen: BTreeSet<CWord> = BTreeSet::new();
    let mut stack: Vec<CWord> = letters.iter().map(|&l| vec![l]).collect();
    while let Some(w) = stack.pop() {
        if cyc_reduce(w.clone()) == w && !w.is_empty() {
            let c = canon_cyc(&w);
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        if w.len() < max_len {
            for &l in &letters {
                if w.last().is_some_and(|&p| p == -l) {
                    continue;
                }
                let mut next = w.clone();
                next.push(l);
                stack.push(next);
            }
        }
    }
    out
}

fn cword_to_normal(w: &CWord, p: &Arc<Presentation>) -> NormalWord {
    let raw: Vec<grushko::words::Symbol> = w
        .iter()
        .map(|&l| grushko::words::Symbol {
            gen: grushko::words::Gen::Free { index: (l.abs() - 1) as usize },
            exp: l.signum() as i64,
        })
        .collect();
    grushko::words::normalize(&raw, p)
}

#[test]
fn criterion_6_simplicity_oracle() {
    for (rank, max_len) in [(2usize, 6usize), (3, 5)] {
        let p = free_presentation(rank);
        let autos = whitehead_like_autos(rank);
        let words = enumerate_cyclic_words(rank, max_len);
        assert!(!words.is_empty());
        for w in &words {
            let expected = oracle_simple(rank, w, &autos);
            let nw = cword_to_normal(w, &p);
            if nw.is_identity() || nw.is_peripheral().is_some() {
                continue;
            }
            let got = is_simple(&p, &nw).unwrap().is_simple;
            assert_eq!(
                got, expected,
                "disagreement on {w:?} in F{rank}: implementation {got}, oracle {expected}"
            );
        }
        println!("  rank {rank}: {} cyclic words checked", words.len());
    }
    pass("6 simplicity matches the classical Whitehead descent");
}

// ---------------------------------------------------------------------------
// 7. D0 bound at desk scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_d0_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    while done < 50 {
        let (p, g) = if done % 2 == 0 {
            let p = free_presentation(2);
            (p.clone(), parse_word("a b", &p).unwrap())
        } else {
            let p = ex41();
            (p.clone(), parse_word("b", &p).unwrap())
        };
        let l = 4;
        let s0 = rng.gen::<u64>();
        let s1 = rng.gen::<u64>();
        let Ok(t0) = random_tree_in_ol(&p, &g, l, s0, rng.gen_range(0..4)) else { continue };
        let Ok(t1) = random_tree_in_ol(&p, &g, l, s1, rng.gen_range(0..4)) else { continue };
        let cert = certify_projection(&p, &g, &t0, &t1, &Supplied::default()).unwrap();
        cert.validate().unwrap();
        let actual_l = t0.comb_length(&g).unwrap().max(t1.comb_length(&g).unwrap()) as u64;
        assert!(actual_l <= l as u64);
        assert!(
            (cert.length() as u64) <= 2 * actual_l + 3,
            "certificate length {} exceeds 2L+3 with L = {actual_l}",
            cert.length()
        );
        done += 1;
    }
    pass("7 D0 bound on 50 seeded pairs");
}

// ---------------------------------------------------------------------------
// 8. Quadraticity
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_quadraticity() {
    let p = ex41();
    let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
    assert!(is_quadratic(&p, &g).unwrap().is_quadratic);
    let p9 = Presentation::with_aliases(
        vec![
            FactorSpec { kind: FactorKind::Free, rank: 2 },
            FactorSpec { kind: FactorKind::Free, rank: 1 },
        ],
        2,
        &[("a", "a1.1"), ("b", "a1.2"), ("e", "a2.1"), ("c", "x1"), ("d", "x2")],
    )
    .unwrap();
    let g9 = parse_word("d^-1 a b c d c^-1 e", &p9).unwrap();
    assert!(is_quadratic(&p9, &g9).unwrap().is_quadratic);
    let f2 = free_presentation(2);
    let w = parse_word("a^2 b^3", &f2).unwrap();
    assert!(!is_quadratic(&f2, &w).unwrap().is_quadratic);
    // criteria agree on 100 random non-simple inputs: is_quadratic errors
    // with InternalInconsistency on any disagreement
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut done = 0;
    while done < 100 {
        let p = match rng.gen_range(0..3) {
            0 => ex41(),
            1 => free_presentation(2),
            _ => free_presentation(3),
        };
        let w = random_word(&mut rng, &p, 8);
        if w.is_identity() || w.is_peripheral().is_some() {
            continue;
        }
        if is_simple(&p, &w).unwrap().is_simple {
            continue;
        }
        is_quadratic(&p, &w).unwrap_or_else(|e| panic!("criteria disagreed on {w}: {e}"));
        done += 1;
    }
    pass("8 quadraticity examples and 100 criterion agreements");
}

// ---------------------------------------------------------------------------
// 9. Cut-pair pipeline
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_cut_pair_pipeline() {
    let p = free_presentation(3);
    let g = parse_word("a^2 b^2 a^2 b^2 c^2", &p).unwrap();
    let h = parse_word("a^2 b^2", &p).unwrap();
    let cands = find_short_cut_pair(&p, &g, 4, 300_000).unwrap();
    let rose = GrushkoTree::standard_rose(&p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    let tree = match whitehead_reduce(&rose, &lines).unwrap() {
        ReduceOutcome::Reduced { tree, .. } => tree,
        _ => panic!("g should not be simple"),
    };
    let hk = tree.axis_key(&h).unwrap();
    assert!(
        cands.iter().any(|c| c.axis_key == hk),
        "candidates must include the axis of a^2 b^2"
    );
    // every candidate revalidates from scratch
    for c in &cands {
        let rep = annular_whitehead(&tree, &lines, &c.a, 300_000).unwrap();
        assert_eq!(rep.component_count, c.component_count, "candidate {} does not revalidate", c.a);
        assert!(rep.component_count.at_least(2));
    }
    let ex = extract_short_element(&p, &g, &h, 1_000_000).unwrap();
    let l = tree.comb_length(&g).unwrap() as u64;
    let (xi, _) = p.complexity();
    let c = match annular_whitehead(&tree, &lines, &h, 300_000).unwrap().component_count {
        Count::Finite(c) => c,
        Count::Infinite => panic!("expected a finite count"),
    };
    let bounds = compute_bounds(l, xi, Some(c)).unwrap();
    assert_eq!(ex.r0, bounds.r0, "R0 must equal 2 xi c^L + 1");
    assert!(ex.comb_length as u64 <= ex.r0);
    assert!(ex.component_count.at_least(c));
    assert!(ex.axis_matches, "extracted element must share the axis of h");
    pass("9 cut-pair pipeline on (a^2 b^2)^2 c^2");
}

// ---------------------------------------------------------------------------
// 10. Voltage-component oracle (windowed brute-force unrolling)
// ---------------------------------------------------------------------------

/// Window-limited brute-force exploration of the derived graph: vertices
/// are capped by the syllable length of their twist.
fn window_component(
    p: &Presentation,
    w: &WhiteheadGraph,
    start: &DerivedVertex,
    removed: &BTreeSet<DerivedVertex>,
    window: usize,
) -> (BTreeSet<DerivedVertex>, bool) {
    let size = |x: &FactorElement| -> usize {
        match &x.payload {
            grushko::words::Payload::Word(l) => l.len(),
            grushko::words::Payload::Vector(v) => v.iter().map(|e| e.unsigned_abs() as usize).sum(),
        }
    };
    let mut seen = BTreeSet::from([start.clone()]);
    let mut frontier = vec![start.clone()];
    let mut hit_window = false;
    while let Some(x) = frontier.pop() {
        for n in derived_neighbors(p, w, &x) {
            if removed.contains(&n) || seen.contains(&n) {
                continue;
            }
            if size(&n.1) > window {
                hit_window = true;
                continue;
            }
            seen.insert(n.clone());
            frontier.push(n);
        }
    }
    (seen, hit_window)
}

fn random_voltage_graph(rng: &mut ChaCha8Rng, p: &Arc<Presentation>) -> WhiteheadGraph {
    let nv = rng.gen_range(2..=5);
    let ne = rng.gen_range(1..=8);
    let rank = p.factors[0].rank;
    let mut edges = Vec::new();
    for i in 0..ne {
        let label = match rng.gen_range(0..4) {
            0 => None,
            1 => Some(FactorElement::generator(p, 0, rng.gen_range(0..rank), 1)),
            2 => Some(FactorElement::generator(p, 0, rng.gen_range(0..rank), -1)),
            _ => {
                let a = FactorElement::generator(p, 0, rng.gen_range(0..rank), rng.gen_range(1..=2));
                let b = FactorElement::generator(p, 0, rng.gen_range(0..rank), -1);
                Some(a.mul(&b)).filter(|x| !x.is_trivial())
            }
        };
        edges.push(WhEdge { from: rng.gen_range(0..nv), to: rng.gen_range(0..nv), label, line: 0, turn: i });
    }
    WhiteheadGraph { at_vertex: 0, stab: Some(0), vertices: (0..nv).map(|i| 2 * i).collect(), edges }
}

#[test]
fn criterion_10_voltage_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pool: Vec<Arc<Presentation>> = vec![
        Presentation::new(vec![FactorSpec { kind: FactorKind::Free, rank: 1 }], 2),
        Presentation::new(vec![FactorSpec { kind: FactorKind::Free, rank: 2 }], 1),
        Presentation::new(vec![FactorSpec { kind: FactorKind::FreeAbelian, rank: 2 }], 1),
    ];
    for case in 0..100 {
        let p = &pool[case % pool.len()];
        let w = random_voltage_graph(&mut rng, p);
        let window = 3 * (w.vertices.len() + w.edges.len() + 2);
        // derived_components vs window exploration
        let rep = derived_components(p, &w).unwrap();
        for info in &rep.components {
            let h0 = *info.wh_vertices.iter().next().unwrap();
            let start = (h0, FactorElement::identity(p, 0));
            let (comp, hit) = window_component(p, &w, &start, &BTreeSet::new(), window);
            let oracle_finite = !hit;
            assert_eq!(
                info.each_finite, oracle_finite,
                "case {case}: finiteness disagrees (impl {:?}, window size {} hit={hit})",
                info.monodromy.index,
                comp.len()
            );
        }
        // classify_components_minus vs window exploration with removals
        let nremove = rng.gen_range(1..=3);
        let mut removed: BTreeSet<DerivedVertex> = BTreeSet::new();
        for _ in 0..nremove {
            let h = rng.gen_range(0..w.vertices.len());
            let t = match rng.gen_range(0..3) {
                0 => FactorElement::identity(p, 0),
                1 => FactorElement::generator(p, 0, rng.gen_range(0..p.factors[0].rank), 1),
                _ => FactorElement::generator(p, 0, rng.gen_range(0..p.factors[0].rank), -1),
            };
            removed.insert((h, t));
        }
        let Ok(rep) = classify_components_minus(p, &w, &removed, 200_000) else {
            continue; // budget exceeded is an allowed, reported outcome
        };
        // every implementation-finite component must match the window BFS
        for comp in &rep.finite_components {
            let (oracle_comp, hit) = window_component(p, &w, &comp[0], &removed, window);
            assert!(!hit, "case {case}: finite component hit the window");
            let impl_set: BTreeSet<DerivedVertex> = comp.iter().cloned().collect();
            assert_eq!(impl_set, oracle_comp, "case {case}: finite component mismatch");
        }
        // seeds adjacent to removals that the implementation left infinite
        // must escape the window
        let mut seeds: BTreeSet<DerivedVertex> = BTreeSet::new();
        for r in &removed {
            for n in derived_neighbors(p, &w, r) {
                if !removed.contains(&n) {
                    seeds.insert(n);
                }
            }
        }
        for seed in seeds {
            let impl_finite = rep.finite_vertex(&seed);
            let (_, hit) = window_component(p, &w, &seed, &removed, window);
            assert_eq!(impl_finite, !hit, "case {case}: seed {seed:?} classification mismatch");
        }
    }
    pass("10 voltage components agree with windowed unrolling on 100 graphs");
}

// ---------------------------------------------------------------------------
// Annular window cross-check backing criterion 9
// ---------------------------------------------------------------------------

#[test]
fn annular_counts_match_windowed_unrolling() {
    let p = free_presentation(3);
    let g = parse_word("a^2 b^2 a^2 b^2 c^2", &p).unwrap();
    let rose = GrushkoTree::standard_rose(&p).unwrap();
    let lines = LineCollection::single(&p, &g).unwrap();
    let tree = match whitehead_reduce(&rose, &lines).unwrap() {
        ReduceOutcome::Reduced { tree, .. } => tree,
        _ => panic!(),
    };
    for text in ["a^2 b^2", "c", "a", "a b"] {
        let a = parse_word(text, &p).unwrap();
        let rep = annular_whitehead(&tree, &lines, &a, 300_000).unwrap();
        // unroll the annular voltage graph over wraps [-W, W] and count the
        // components meeting the center levels
        let w = 6i64;
        let nv = rep.graph.vertices.len();
        let index = |v: usize, k: i64| -> usize { v * (2 * w as usize + 1) + (k + w) as usize };
        let mut dsu: Vec<usize> = (0..nv * (2 * w as usize + 1)).collect();
        fn find(d: &mut Vec<usize>, mut x: usize) -> usize {
            while d[x] != x {
                d[x] = d[d[x]];
                x = d[x];
            }
            x
        }
        for e in &rep.graph.edges {
            for k in -w..=w {
                let k2 = k + e.voltage;
                if k2 < -w || k2 > w {
                    continue;
                }
                let (x, y) = (find(&mut dsu, index(e.from, k)), find(&mut dsu, index(e.to, k2)));
                if x != y {
                    dsu[x.max(y)] = x.min(y);
                }
            }
        }
        let center: BTreeSet<usize> =
            (0..nv).map(|v| find(&mut dsu, index(v, 0))).collect();
        match rep.component_count {
            Count::Finite(c) => assert_eq!(
                center.len() as u64,
                c,
                "window count disagrees for {text}: {} vs {c}",
                center.len()
            ),
            Count::Infinite => assert!(center.len() as u64 >= 2),
        }
    }
    pass("annular window cross-check");
}
