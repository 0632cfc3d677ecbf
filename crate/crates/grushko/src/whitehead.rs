//! Labeled (voltage) Whitehead graphs at vertices and finite subtrees,
//! monodromy, admissible cuts, the Whitehead reduction loop, derived
//! component theory for `T_v(L)`, the `V_X` vertex sets with `vhat`,
//! splicing, annular graphs along axes, edge cut sets and peripheral cut
//! points.

use crate::error::{Error, Result};
use crate::tree::{
    pair_of, reverse, AdjacencyWitness, CyclicForm, CyclicLoop, EdgePair, GrushkoTree, OEdge,
    VertexId, VertexSplitData, ZSplitting,
};
use crate::words::{factor_subgroup, FactorElement, FactorSubgroupReport, NormalWord, Presentation};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// A periodic line collection: conjugacy representatives of its generators,
/// stored as indivisible roots with a canonical cyclic form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineCollection {
    pub presentation: Arc<Presentation>,
    pub generators: Vec<NormalWord>,
}

impl LineCollection {
    pub fn new(p: &Arc<Presentation>, words: &[NormalWord]) -> Result<LineCollection> {
        let mut reps: Vec<NormalWord> = Vec::new();
        let mut seen: BTreeSet<Vec<crate::words::Syllable>> = BTreeSet::new();
        for w in words {
            if w.is_peripheral().is_some() || w.is_identity() {
                return Err(Error::EllipticElement(w.to_string()));
            }
            let (_, core) = w.cyclically_reduce()?;
            let root = indivisible_root(&core);
            // dedupe up to conjugacy and inversion, keep the input orientation
            let canon = canonical_cyclic_word(&root);
            if seen.insert(canon.syllables.clone()) {
                reps.push(root);
            }
        }
        if reps.is_empty() {
            return Err(Error::ValidationFailure("empty line collection".into()));
        }
        Ok(LineCollection { presentation: p.clone(), generators: reps })
    }

    pub fn single(p: &Arc<Presentation>, w: &NormalWord) -> Result<LineCollection> {
        LineCollection::new(p, std::slice::from_ref(w))
    }

    /// The cyclically reduced loops of the generators in `tree`.
    pub fn loops(&self, tree: &GrushkoTree) -> Vec<CyclicLoop> {
        self.generators
            .iter()
            .map(|g| match tree.cyclic_form(&tree.word_to_loop(g)) {
                CyclicForm::Hyperbolic { cycle, .. } => cycle,
                CyclicForm::Elliptic { .. } => unreachable!("line generators are non-peripheral"),
            })
            .collect()
    }

    /// `|L|_T`: the sum of the combinatorial lengths of the generators.
    pub fn total_length(&self, tree: &GrushkoTree) -> usize {
        self.loops(tree).iter().map(|c| c.len()).sum()
    }

    pub fn union(&self, other: &LineCollection) -> Result<LineCollection> {
        let mut words = self.generators.clone();
        words.extend(other.generators.iter().cloned());
        LineCollection::new(&self.presentation, &words)
    }
}

/// Extracts the indivisible root of a cyclically reduced word.
fn indivisible_root(core: &NormalWord) -> NormalWord {
    let n = core.syllables.len();
    for d in 1..=n {
        if n % d != 0 {
            continue;
        }
        let root = NormalWord { syllables: core.syllables[..d].to_vec() };
        if root.pow((n / d) as i64) == *core {
            return root;
        }
    }
    core.clone()
}

/// Canonical representative of a cyclic word up to rotation and inversion.
fn canonical_cyclic_word(w: &NormalWord) -> NormalWord {
    let mut best: Option<NormalWord> = None;
    for cand in [w.clone(), w.invert()] {
        let n = cand.syllables.len();
        for r in 0..n.max(1) {
            let rotated = NormalWord {
                syllables: (0..n).map(|i| cand.syllables[(r + i) % n].clone()).collect(),
            };
            // rotations of a cyclically reduced word stay reduced
            if best.as_ref().map_or(true, |b| rotated < *b) {
                best = Some(rotated);
            }
        }
    }
    best.unwrap_or_else(|| w.clone())
}

/// A labeled Whitehead graph at one quotient vertex. Vertices are the
/// half-edges (direction classes); each line turn contributes one edge
/// labeled in the vertex stabilizer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WhiteheadGraph {
    pub at_vertex: VertexId,
    pub stab: Option<usize>,
    /// Direction classes: half-edges at the vertex, in id order.
    pub vertices: Vec<OEdge>,
    pub edges: Vec<WhEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WhEdge {
    pub from: usize,
    pub to: usize,
    /// Trivial when `None`; reversing an edge inverts the label.
    pub label: Option<FactorElement>,
    pub line: usize,
    pub turn: usize,
}

impl WhiteheadGraph {
    pub fn vertex_index(&self, half: OEdge) -> Option<usize> {
        self.vertices.iter().position(|&h| h == half)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().map(|e| (e.from == v) as usize + (e.to == v) as usize).sum()
    }

    /// Connected components as sorted vertex index sets.
    pub fn components(&self) -> Vec<BTreeSet<usize>> {
        let n = self.vertices.len();
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut Vec<usize>, mut x: usize) -> usize {
            while c[x] != x {
                c[x] = c[c[x]];
                x = c[x];
            }
            x
        }
        for e in &self.edges {
            let a = find(&mut comp, e.from);
            let b = find(&mut comp, e.to);
            if a != b {
                comp[a.max(b)] = a.min(b);
            }
        }
        let mut map: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for v in 0..n {
            let r = find(&mut comp, v);
            map.entry(r).or_default().insert(v);
        }
        map.into_values().collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Whether the graph is a single circle: connected, every vertex of
    /// degree exactly two, and at least one edge.
    pub fn is_circle(&self) -> bool {
        !self.edges.is_empty()
            && self.is_connected()
            && (0..self.vertices.len()).all(|v| self.degree(v) == 2)
    }
}

/// Builds the Whitehead graph of the line collection at a vertex.
pub fn vertex_whitehead(tree: &GrushkoTree, lines: &LineCollection, v: VertexId) -> WhiteheadGraph {
    let vertices = tree.graph.halves_at(v);
    let mut edges = Vec::new();
    for (j, cycle) in lines.loops(tree).iter().enumerate() {
        for (t, turn) in tree.cycle_turns(cycle).into_iter().enumerate() {
            if turn.vertex != v {
                continue;
            }
            let from_half = reverse(turn.in_edge);
            let to_half = turn.out_edge;
            let from = vertices.iter().position(|&h| h == from_half).expect("half at vertex");
            let to = vertices.iter().position(|&h| h == to_half).expect("half at vertex");
            edges.push(WhEdge { from, to, label: turn.label.filter(|x| !x.is_trivial()), line: j, turn: t });
        }
    }
    WhiteheadGraph { at_vertex: v, stab: tree.graph.labels[v], vertices, edges }
}

/// The monodromy subgroup of a connected subgraph: generated by label
/// products along closed paths through a spanning tree.
pub fn monodromy(
    p: &Presentation,
    w: &WhiteheadGraph,
    sub_vertices: &BTreeSet<usize>,
    sub_edges: &BTreeSet<usize>,
) -> Result<FactorSubgroupReport> {
    let Some(factor) = w.stab else {
        // trivial stabilizer: monodromy is trivial
        return factor_subgroup(p, &[]);
    };
    let id = || FactorElement::identity(p, factor);
    let Some(&root) = sub_vertices.iter().next() else {
        return factor_subgroup(p, &[]);
    };
    // BFS spanning tree assigning a potential to each vertex.
    let mut potential: BTreeMap<usize, FactorElement> = BTreeMap::new();
    potential.insert(root, id());
    let mut frontier = vec![root];
    let mut tree_edges: BTreeSet<usize> = BTreeSet::new();
    while let Some(x) = frontier.pop() {
        for (ei, e) in w.edges.iter().enumerate() {
            if !sub_edges.contains(&ei) {
                continue;
            }
            let lbl = e.label.clone().unwrap_or_else(id);
            for (from, to, label) in [(e.from, e.to, lbl.clone()), (e.to, e.from, lbl.inverse())] {
                if from == x && sub_vertices.contains(&to) && !potential.contains_key(&to) {
                    potential.insert(to, potential[&x].mul(&label));
                    tree_edges.insert(ei);
                    frontier.push(to);
                }
            }
        }
    }
    for v in sub_vertices {
        if !potential.contains_key(v) {
            return Err(Error::DisconnectedSubgraph);
        }
    }
    let mut gens = Vec::new();
    for (ei, e) in w.edges.iter().enumerate() {
        if !sub_edges.contains(&ei) || tree_edges.contains(&ei) {
            continue;
        }
        let lbl = e.label.clone().unwrap_or_else(id);
        // cycle word: potential(from) * label * potential(to)^-1
        let g = potential[&e.from].mul(&lbl).mul(&potential[&e.to].inverse());
        gens.push(g);
    }
    factor_subgroup(p, &gens)
}

/// Monodromy of an induced subgraph (all edges with both ends inside).
pub fn monodromy_induced(p: &Presentation, w: &WhiteheadGraph, verts: &BTreeSet<usize>) -> Result<FactorSubgroupReport> {
    let edges: BTreeSet<usize> = w
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| verts.contains(&e.from) && verts.contains(&e.to))
        .map(|(i, _)| i)
        .collect();
    monodromy(p, w, verts, &edges)
}

/// An admissible cut, normalized: representative twists make all labels in
/// the `U` side trivial.
#[derive(Clone, Debug)]
pub struct AdmissibleCut {
    pub vertex: VertexId,
    pub kind: CutKind,
    /// Wh-vertex indices of the `U` side.
    pub u_vertices: BTreeSet<usize>,
    /// Half-edges moved by the move constructor, with normalized twists.
    pub moved: BTreeMap<OEdge, FactorElement>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CutKind {
    TypeI,
    TypeII { cut_half: OEdge },
}

/// Outcome of the cut search at one graph.
#[derive(Clone, Debug)]
pub enum CutSearch {
    None,
    Found(Box<AdmissibleCut>),
    /// A paper-admissible type ii cut exists but every choice carries both
    /// halves of the cut edge in `U`, which the unfold constructor cannot
    /// realize. The tree is not Whitehead reduced.
    OnlyBlocked,
}

/// Normalizes representatives over an edge subset: returns twists making
/// all labels trivial, or `None` when the monodromy is nontrivial or the
/// subgraph is disconnected.
fn normalize_reps(
    p: &Presentation,
    w: &WhiteheadGraph,
    verts: &BTreeSet<usize>,
    edges: &BTreeSet<usize>,
) -> Option<BTreeMap<usize, FactorElement>> {
    let id = || match w.stab {
        Some(f) => FactorElement::identity(p, f),
        None => FactorElement { factor: 0, payload: crate::words::Payload::Word(Vec::new()) },
    };
    let Some(&root) = verts.iter().next() else { return Some(BTreeMap::new()) };
    let mut rep: BTreeMap<usize, FactorElement> = BTreeMap::new();
    rep.insert(root, id());
    let mut frontier = vec![root];
    while let Some(x) = frontier.pop() {
        for (ei, e) in w.edges.iter().enumerate() {
            if !edges.contains(&ei) {
                continue;
            }
            let lbl = e.label.clone().unwrap_or_else(id);
            for (from, to, label) in [(e.from, e.to, lbl.clone()), (e.to, e.from, lbl.inverse())] {
                if from == x && verts.contains(&to) && !rep.contains_key(&to) {
                    // new label rho_from * x * rho_to^-1 must be trivial
                    rep.insert(to, rep[&x].mul(&label));
                    frontier.push(to);
                }
            }
        }
    }
    if verts.iter().any(|v| !rep.contains_key(v)) {
        return None; // disconnected
    }
    // validate: every edge label becomes trivial
    for (ei, e) in w.edges.iter().enumerate() {
        if !edges.contains(&ei) {
            continue;
        }
        let lbl = e.label.clone().unwrap_or_else(id);
        let new = rep[&e.from].mul(&lbl).mul(&rep[&e.to].inverse());
        if !new.is_trivial() {
            return None; // nontrivial monodromy
        }
    }
    Some(rep)
}

/// Searches for an admissible cut at the vertex of `w`, type i first, then
/// type ii, with deterministic tie-breaking by canonical order.
pub fn find_admissible_cut(p: &Presentation, w: &WhiteheadGraph) -> CutSearch {
    let stab_trivial = w.stab.is_none();
    let id = || match w.stab {
        Some(f) => FactorElement::identity(p, f),
        None => FactorElement { factor: 0, payload: crate::words::Payload::Word(Vec::new()) },
    };
    // type i: a connected component with trivial monodromy; V nonempty when
    // the stabilizer is trivial.
    let comps = w.components();
    for comp in &comps {
        let edges: BTreeSet<usize> = w
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| comp.contains(&e.from))
            .map(|(i, _)| i)
            .collect();
        let Some(reps) = normalize_reps(p, w, comp, &edges) else { continue };
        let v_empty = comp.len() == w.vertices.len();
        if stab_trivial && v_empty {
            continue;
        }
        let moved: BTreeMap<OEdge, FactorElement> = comp
            .iter()
            .map(|&vi| (w.vertices[vi], reps.get(&vi).cloned().unwrap_or_else(id)))
            .collect();
        return CutSearch::Found(Box::new(AdmissibleCut {
            vertex: w.at_vertex,
            kind: CutKind::TypeI,
            u_vertices: comp.clone(),
            moved,
        }));
    }
    // type ii: a cut vertex [Y] with adjacent trivial-monodromy pieces.
    let mut blocked_seen = false;
    for y in 0..w.vertices.len() {
        // pieces: components of W - y
        let rest: BTreeSet<usize> = (0..w.vertices.len()).filter(|&v| v != y).collect();
        let mut piece_of: BTreeMap<usize, usize> = rest.iter().map(|&v| (v, v)).collect();
        fn find(m: &mut BTreeMap<usize, usize>, mut x: usize) -> usize {
            while m[&x] != x {
                let next = m[&m[&x]];
                m.insert(x, next);
                x = next;
            }
            x
        }
        for e in &w.edges {
            if e.from == y || e.to == y {
                continue;
            }
            let a = find(&mut piece_of, e.from);
            let b = find(&mut piece_of, e.to);
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                piece_of.insert(hi, lo);
            }
        }
        let mut pieces: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &v in &rest {
            let r = find(&mut piece_of, v);
            pieces.entry(r).or_default().insert(v);
        }
        // qualifying pieces: adjacent to y, trivial monodromy of piece + y
        let mut good_pieces: Vec<BTreeSet<usize>> = Vec::new();
        let mut blocked_pieces: Vec<BTreeSet<usize>> = Vec::new();
        let y_half = w.vertices[y];
        let rev_idx = w.vertex_index(reverse(y_half));
        for piece in pieces.values() {
            let adjacent = w.edges.iter().any(|e| {
                (e.from == y && piece.contains(&e.to)) || (e.to == y && piece.contains(&e.from))
            });
            if !adjacent {
                continue;
            }
            let mut verts = piece.clone();
            verts.insert(y);
            // edges inside the piece or between the piece and y, no y-self-loops
            let edges: BTreeSet<usize> = w
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    let f_in = piece.contains(&e.from) || e.from == y;
                    let t_in = piece.contains(&e.to) || e.to == y;
                    f_in && t_in && !(e.from == y && e.to == y)
                })
                .map(|(i, _)| i)
                .collect();
            if normalize_reps(p, w, &verts, &edges).is_none() {
                continue;
            }
            let contains_rev = rev_idx.is_some_and(|r| piece.contains(&r));
            if contains_rev {
                blocked_pieces.push(piece.clone());
            } else {
                good_pieces.push(piece.clone());
            }
        }
        // U is the union of [Y] with a maximal set of unblocked
        // trivial-monodromy pieces such that V keeps at least one edge.
        let u_data = |chosen: &[BTreeSet<usize>]| {
            let mut u_vertices: BTreeSet<usize> = BTreeSet::from([y]);
            for piece in chosen {
                u_vertices.extend(piece.iter().copied());
            }
            let u_edges: BTreeSet<usize> = w
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    u_vertices.contains(&e.from)
                        && u_vertices.contains(&e.to)
                        && !(e.from == y && e.to == y)
                })
                .map(|(i, _)| i)
                .collect();
            let v_has_edge = w.edges.iter().enumerate().any(|(i, _)| !u_edges.contains(&i));
            (u_vertices, u_edges, v_has_edge)
        };
        let mut chosen = good_pieces.clone();
        while !chosen.is_empty() {
            let (u_vertices, u_edges, v_has_edge) = u_data(&chosen);
            if !v_has_edge {
                chosen.pop();
                continue;
            }
            let Some(reps) = normalize_reps(p, w, &u_vertices, &u_edges) else {
                break;
            };
            let moved: BTreeMap<OEdge, FactorElement> = u_vertices
                .iter()
                .map(|&vi| (w.vertices[vi], reps.get(&vi).cloned().unwrap_or_else(id)))
                .collect();
            return CutSearch::Found(Box::new(AdmissibleCut {
                vertex: w.at_vertex,
                kind: CutKind::TypeII { cut_half: y_half },
                u_vertices,
                moved,
            }));
        }
        // admissible cuts realizable only with both halves of the cut edge
        // in U: record that a cut exists even though the move cannot run
        for piece in &blocked_pieces {
            let (_, _, v_has_edge) = u_data(std::slice::from_ref(piece));
            if v_has_edge {
                blocked_seen = true;
            }
        }
    }
    if blocked_seen {
        CutSearch::OnlyBlocked
    } else {
        CutSearch::None
    }
}

/// Applies the move encoded by an admissible cut.
pub fn apply_cut(
    tree: &GrushkoTree,
    cut: &AdmissibleCut,
    tracked: &[crate::tree::Loop],
) -> Result<crate::tree::MoveResult> {
    let data = VertexSplitData { vertex: cut.vertex, moved: cut.moved.clone() };
    match &cut.kind {
        CutKind::TypeI => tree.blow_up(&data, tracked),
        CutKind::TypeII { cut_half } => tree.unfold(&data, *cut_half, tracked),
    }
}

/// One move of the reduction loop.
#[derive(Clone, Debug)]
pub struct ReduceMove {
    pub vertex: String,
    pub kind: CutKind,
    pub witness: AdjacencyWitness,
    pub after: GrushkoTree,
}

/// Outcome of Whitehead reduction.
#[derive(Clone, Debug)]
pub enum ReduceOutcome {
    /// Some edge orbit is crossed by no line: collapsing onto it gives a
    /// free splitting in which every line generator is elliptic.
    UncrossedEdge { tree: GrushkoTree, edge: EdgePair, splitting: ZSplitting, moves: Vec<ReduceMove> },
    /// No vertex admits an admissible cut.
    Reduced { tree: GrushkoTree, moves: Vec<ReduceMove> },
}

impl ReduceOutcome {
    pub fn tree(&self) -> &GrushkoTree {
        match self {
            ReduceOutcome::UncrossedEdge { tree, .. } => tree,
            ReduceOutcome::Reduced { tree, .. } => tree,
        }
    }

    pub fn moves(&self) -> &[ReduceMove] {
        match self {
            ReduceOutcome::UncrossedEdge { moves, .. } => moves,
            ReduceOutcome::Reduced { moves, .. } => moves,
        }
    }
}

/// Edge pairs crossed by no line.
pub fn uncrossed_pairs(tree: &GrushkoTree, lines: &LineCollection) -> Vec<EdgePair> {
    let mut crossed = vec![false; tree.graph.edge_pair_count()];
    for cycle in lines.loops(tree) {
        for (e, _) in &cycle.steps {
            crossed[pair_of(*e)] = true;
        }
    }
    (0..tree.graph.edge_pair_count()).filter(|&p| !crossed[p]).collect()
}

/// Iterates admissible-cut moves until an uncrossed edge appears or the
/// tree is Whitehead reduced. Terminates within `|L|_T` moves; `|L|` never
/// increases.
pub fn whitehead_reduce(tree: &GrushkoTree, lines: &LineCollection) -> Result<ReduceOutcome> {
    let (xi, sporadic) = tree.presentation.complexity();
    if sporadic {
        return Err(Error::SporadicPresentation(xi));
    }
    let mut current = tree.clone();
    let mut moves: Vec<ReduceMove> = Vec::new();
    let initial_total = lines.total_length(&current);
    let hard_cap = initial_total + xi.max(0) as usize + 5;
    loop {
        let un = uncrossed_pairs(&current, lines);
        if let Some(&edge) = un.first() {
            let splitting = ZSplitting::collapse_to_edge(&current, edge);
            return Ok(ReduceOutcome::UncrossedEdge { tree: current, edge, splitting, moves });
        }
        let mut found: Option<AdmissibleCut> = None;
        let mut blocked = false;
        for v in 0..current.graph.vertex_count() {
            let w = vertex_whitehead(&current, lines, v);
            match find_admissible_cut(&current.presentation, &w) {
                CutSearch::Found(cut) => {
                    found = Some(*cut);
                    break;
                }
                CutSearch::OnlyBlocked => blocked = true,
                CutSearch::None => {}
            }
        }
        match found {
            Some(cut) => {
                let result = apply_cut(&current, &cut, &[])?;
                moves.push(ReduceMove {
                    vertex: current.graph.vertex_names[cut.vertex].clone(),
                    kind: cut.kind.clone(),
                    witness: result.witness.clone(),
                    after: result.tree.clone(),
                });
                current = result.tree;
                if moves.len() > hard_cap {
                    return Err(Error::InternalInconsistency(format!(
                        "reduction exceeded {hard_cap} moves"
                    )));
                }
            }
            None => {
                if blocked {
                    return Err(Error::InternalInconsistency(
                        "only blocked type ii cuts available; cannot realize the move".into(),
                    ));
                }
                return Ok(ReduceOutcome::Reduced { tree: current, moves });
            }
        }
    }
}

/// Whether the tree is Whitehead reduced for the collection (no vertex has
/// an admissible cut, blocked ones included).
pub fn is_whitehead_reduced(tree: &GrushkoTree, lines: &LineCollection) -> bool {
    for v in 0..tree.graph.vertex_count() {
        let w = vertex_whitehead(tree, lines, v);
        match find_admissible_cut(&tree.presentation, &w) {
            CutSearch::None => {}
            _ => return false,
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Derived (voltage) component theory
// ---------------------------------------------------------------------------

/// A vertex of the derived graph `T_v(L)`: a direction at the vertex,
/// written as a half-edge class representative translated by a stabilizer
/// element.
pub type DerivedVertex = (usize, FactorElement);

/// Count of components: finite or marked infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Count {
    Finite(u64),
    Infinite,
}

impl Count {
    pub fn at_least(&self, n: u64) -> bool {
        match self {
            Count::Finite(c) => *c >= n,
            Count::Infinite => true,
        }
    }

    pub fn add(self, other: Count) -> Count {
        match (self, other) {
            (Count::Finite(a), Count::Finite(b)) => Count::Finite(a + b),
            _ => Count::Infinite,
        }
    }
}

/// Per quotient component of the Whitehead graph: its monodromy and the
/// structure of the derived components above it.
#[derive(Clone, Debug)]
pub struct DerivedComponentInfo {
    pub wh_vertices: BTreeSet<usize>,
    pub monodromy: FactorSubgroupReport,
    /// Number of derived components: the index of the monodromy.
    pub count: Count,
    /// True when each derived component is finite (trivial monodromy).
    pub each_finite: bool,
}

#[derive(Clone, Debug)]
pub struct DerivedReport {
    pub components: Vec<DerivedComponentInfo>,
}

/// Analyzes `T_v(L)` as the derived graph of the voltage graph `w`.
pub fn derived_components(p: &Presentation, w: &WhiteheadGraph) -> Result<DerivedReport> {
    if w.stab.is_none() {
        return Err(Error::TrivialStabilizer);
    }
    let mut components = Vec::new();
    for comp in w.components() {
        let mon = monodromy_induced(p, w, &comp)?;
        let each_finite = mon.is_trivial;
        let count = if mon.is_trivial {
            Count::Infinite
        } else {
            match mon.index {
                Some(i) => Count::Finite(i),
                None => Count::Infinite,
            }
        };
        components.push(DerivedComponentInfo { wh_vertices: comp, monodromy: mon, count, each_finite });
    }
    Ok(DerivedReport { components })
}

/// Neighbors of a derived vertex.
pub fn derived_neighbors(p: &Presentation, w: &WhiteheadGraph, v: &DerivedVertex) -> Vec<DerivedVertex> {
    let factor = w.stab.expect("derived graphs live at labeled vertices");
    let id = FactorElement::identity(p, factor);
    let mut out = Vec::new();
    for e in &w.edges {
        let lbl = e.label.clone().unwrap_or_else(|| id.clone());
        if e.from == v.0 {
            out.push((e.to, v.1.mul(&lbl)));
        }
        if e.to == v.0 {
            out.push((e.from, v.1.mul(&lbl.inverse())));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Report of `classify_components_minus`: the finite components of
/// `T_v(L)` minus the removed directions, explicitly, plus the number of
/// component explorations certified infinite (aggregated by `vhat`).
#[derive(Clone, Debug, Default)]
pub struct MinusReport {
    pub finite_components: Vec<Vec<DerivedVertex>>,
    pub infinite_components_met: usize,
}

impl MinusReport {
    pub fn finite_vertex(&self, v: &DerivedVertex) -> bool {
        self.finite_components.iter().any(|c| c.contains(v))
    }
}

/// Is `y` a positive power of `delta` (both in the same factor)?
fn is_positive_power(p: &Presentation, delta: &FactorElement, y: &FactorElement) -> bool {
    if y.is_trivial() || delta.is_trivial() {
        return false;
    }
    match (&delta.payload, &y.payload) {
        (crate::words::Payload::Word(d), crate::words::Payload::Word(w)) => {
            if d.is_empty() || w.len() % d.len() != 0 {
                return false;
            }
            let n = (w.len() / d.len()) as i64;
            if n < 1 {
                return false;
            }
            let mut acc = FactorElement::identity(p, delta.factor);
            for _ in 0..n {
                acc = acc.mul(delta);
            }
            acc == *y
        }
        (crate::words::Payload::Vector(d), crate::words::Payload::Vector(w)) => {
            let mut ratio: Option<i64> = None;
            for (a, b) in d.iter().zip(w) {
                match (*a, *b) {
                    (0, 0) => {}
                    (0, _) | (_, 0) => return false,
                    (a, b) => {
                        if b % a != 0 {
                            return false;
                        }
                        let r = b / a;
                        if ratio.is_some_and(|x| x != r) {
                            return false;
                        }
                        ratio = Some(r);
                    }
                }
            }
            ratio.is_some_and(|r| r >= 1)
        }
        _ => false,
    }
}

/// Explores `T_v(L)` minus the removed directions by breadth-first search.
/// A component is finite when the search closes; infinite when a
/// translation certificate is found whose forward translates avoid the
/// removals. Exceeding the budget is an error, never a silent guess.
pub fn classify_components_minus(
    p: &Presentation,
    w: &WhiteheadGraph,
    removed: &BTreeSet<DerivedVertex>,
    budget: usize,
) -> Result<MinusReport> {
    if w.stab.is_none() {
        return Err(Error::TrivialStabilizer);
    }
    let mut seeds: BTreeSet<DerivedVertex> = BTreeSet::new();
    for r in removed {
        for n in derived_neighbors(p, w, r) {
            if !removed.contains(&n) {
                seeds.insert(n);
            }
        }
    }
    let mut report = MinusReport::default();
    let mut assigned: BTreeSet<DerivedVertex> = BTreeSet::new();
    for seed in seeds {
        if assigned.contains(&seed) {
            continue;
        }
        let mut visited: BTreeSet<DerivedVertex> = BTreeSet::from([seed.clone()]);
        let mut by_half: BTreeMap<usize, Vec<FactorElement>> = BTreeMap::new();
        by_half.entry(seed.0).or_default().push(seed.1.clone());
        let mut queue: std::collections::VecDeque<DerivedVertex> = [seed.clone()].into();
        let mut infinite = false;
        'bfs: while let Some(x) = queue.pop_front() {
            for n in derived_neighbors(p, w, &x) {
                if removed.contains(&n) || visited.contains(&n) {
                    continue;
                }
                // certificate: a previously visited direction over the same
                // half, translated by delta
                if let Some(prev) = by_half.get(&n.0) {
                    for q in prev {
                        let delta = n.1.mul(&q.inverse());
                        if delta.is_trivial() {
                            continue;
                        }
                        // forward translates of the visited region must
                        // avoid the removals
                        let mut ok = true;
                        'outer: for r in removed {
                            for vtx in visited.iter().chain([&n]) {
                                if vtx.0 != r.0 {
                                    continue;
                                }
                                let y = r.1.mul(&vtx.1.inverse());
                                if is_positive_power(p, &delta, &y) {
                                    ok = false;
                                    break 'outer;
                                }
                            }
                        }
                        if ok {
                            infinite = true;
                            visited.insert(n.clone());
                            break 'bfs;
                        }
                    }
                }
                visited.insert(n.clone());
                by_half.entry(n.0).or_default().push(n.1.clone());
                queue.push_back(n);
                if visited.len() > budget {
                    return Err(Error::BudgetExceeded(budget));
                }
            }
        }
        assigned.extend(visited.iter().cloned());
        if infinite {
            report.infinite_components_met += 1;
        } else {
            let mut comp: Vec<DerivedVertex> = visited.into_iter().collect();
            comp.sort();
            report.finite_components.push(comp);
        }
    }
    report.finite_components.sort();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Whitehead graphs relative to a finite subtree
// ---------------------------------------------------------------------------

/// A direction at a point of the subtree: a half-edge plus an optional
/// stabilizer twist (`None` is the trivial twist).
pub type Dir = (OEdge, Option<FactorElement>);

fn norm_twist(x: Option<FactorElement>) -> Option<FactorElement> {
    x.filter(|e| !e.is_trivial())
}

fn compose(dev: &Option<FactorElement>, y: &Option<FactorElement>) -> Option<FactorElement> {
    match (dev, y) {
        (None, None) => None,
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) => Some(b.clone()),
        (Some(a), Some(b)) => norm_twist(Some(a.mul(b))),
    }
}

/// A finite subtree of the Grushko tree, described in quotient coordinates:
/// a root lift plus, per added edge, the parent node, a twisting element and
/// the quotient edge. Half edges stop at midpoints.
#[derive(Clone, Debug)]
pub struct SubtreeSpec {
    pub root_qv: VertexId,
    pub nodes: Vec<SubNode>,
    pub steps: Vec<SubStep>,
}

#[derive(Clone, Debug)]
pub struct SubNode {
    pub qv: VertexId,
    pub parent_step: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SubStep {
    pub parent: usize,
    pub twist: Option<FactorElement>,
    pub edge: OEdge,
    /// Child node for full edges; `None` marks a half edge ending at the
    /// midpoint.
    pub child: Option<usize>,
}

impl SubtreeSpec {
    pub fn new(root_qv: VertexId) -> SubtreeSpec {
        SubtreeSpec { root_qv, nodes: vec![SubNode { qv: root_qv, parent_step: None }], steps: Vec::new() }
    }

    fn check_step(&self, tree: &GrushkoTree, parent: usize, twist: &Option<FactorElement>, edge: OEdge) -> Result<()> {
        let qv = self.nodes[parent].qv;
        if tree.graph.init(edge) != qv {
            return Err(Error::ValidationFailure("subtree step edge is not at the parent vertex".into()));
        }
        if let Some(t) = twist {
            if tree.graph.labels[qv] != Some(t.factor) {
                return Err(Error::ValidationFailure("subtree twist from the wrong factor".into()));
            }
        }
        Ok(())
    }

    /// Adds a full edge; returns the new node index.
    pub fn add_full(
        &mut self,
        tree: &GrushkoTree,
        parent: usize,
        twist: Option<FactorElement>,
        edge: OEdge,
    ) -> Result<usize> {
        let twist = norm_twist(twist);
        self.check_step(tree, parent, &twist, edge)?;
        let child = self.nodes.len();
        let step = self.steps.len();
        self.nodes.push(SubNode { qv: tree.graph.term(edge), parent_step: Some(step) });
        self.steps.push(SubStep { parent, twist, edge, child: Some(child) });
        Ok(child)
    }

    /// Adds a half edge ending at the midpoint; returns the step index.
    pub fn add_half(
        &mut self,
        tree: &GrushkoTree,
        parent: usize,
        twist: Option<FactorElement>,
        edge: OEdge,
    ) -> Result<usize> {
        let twist = norm_twist(twist);
        self.check_step(tree, parent, &twist, edge)?;
        // skip duplicates
        for (i, s) in self.steps.iter().enumerate() {
            if s.parent == parent && s.edge == edge && s.twist == twist && s.child.is_none() {
                return Ok(i);
            }
        }
        let step = self.steps.len();
        self.steps.push(SubStep { parent, twist, edge, child: None });
        Ok(step)
    }

    /// Directions of the subtree at a node: half-edge plus twist, with the
    /// step (or parent step) they lead to.
    fn x_dirs(&self, node: usize) -> BTreeMap<Dir, usize> {
        let mut out = BTreeMap::new();
        if let Some(ps) = self.nodes[node].parent_step {
            out.insert((reverse(self.steps[ps].edge), None), ps);
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.parent == node {
                out.insert((s.edge, s.twist.clone()), i);
            }
        }
        out
    }

    /// Splits a full step into two subtrees meeting at its midpoint. Returns
    /// the root-side spec (the step becomes a half edge) and the far-side
    /// spec rooted at the old child, with node maps into the original.
    pub fn split_at(&self, step: usize) -> Result<(SubtreeSpec, Vec<usize>, SubtreeSpec, Vec<usize>)> {
        let Some(split_child) = self.steps[step].child else {
            return Err(Error::ValidationFailure("cannot split a half step".into()));
        };
        // nodes on the far side: descendants of split_child
        let mut far: BTreeSet<usize> = BTreeSet::from([split_child]);
        loop {
            let mut grew = false;
            for s in &self.steps {
                if let Some(c) = s.child {
                    if far.contains(&s.parent) && !far.contains(&c) {
                        far.insert(c);
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        // Steps always point away from the root, so both halves keep their
        // step orientations: the near side keeps the root, the far side is
        // rooted at the old child.
        let build = |keep: &dyn Fn(usize) -> bool, root: usize, extra_half: (usize, Option<FactorElement>, OEdge)| {
            let mut spec = SubtreeSpec { root_qv: self.nodes[root].qv, nodes: Vec::new(), steps: Vec::new() };
            let mut node_map: BTreeMap<usize, usize> = BTreeMap::new();
            let mut order: Vec<usize> = vec![root];
            node_map.insert(root, 0);
            spec.nodes.push(SubNode { qv: self.nodes[root].qv, parent_step: None });
            let mut i = 0;
            while i < order.len() {
                let n = order[i];
                i += 1;
                for (si, s) in self.steps.iter().enumerate() {
                    if si == step || s.parent != n {
                        continue;
                    }
                    match s.child {
                        Some(t) if keep(t) => {
                            let child_idx = spec.nodes.len();
                            let st_idx = spec.steps.len();
                            spec.nodes.push(SubNode { qv: self.nodes[t].qv, parent_step: Some(st_idx) });
                            spec.steps.push(SubStep {
                                parent: node_map[&n],
                                twist: s.twist.clone(),
                                edge: s.edge,
                                child: Some(child_idx),
                            });
                            node_map.insert(t, child_idx);
                            order.push(t);
                        }
                        None => {
                            spec.steps.push(SubStep {
                                parent: node_map[&n],
                                twist: s.twist.clone(),
                                edge: s.edge,
                                child: None,
                            });
                        }
                        _ => {}
                    }
                }
            }
            let (at, twist, edge) = extra_half;
            spec.steps.push(SubStep { parent: node_map[&at], twist, edge, child: None });
            let mut back = vec![usize::MAX; spec.nodes.len()];
            for (orig, new) in &node_map {
                back[*new] = *orig;
            }
            (spec, back)
        };
        let near_keep = |n: usize| !far.contains(&n);
        let far_keep = |n: usize| far.contains(&n);
        let split = &self.steps[step];
        let (near, near_map) = build(&near_keep, 0, (split.parent, split.twist.clone(), split.edge));
        let (far_spec, far_map) = build(&far_keep, split_child, (split_child, None, reverse(split.edge)));
        Ok((near, near_map, far_spec, far_map))
    }
}

/// One vertex of a subtree Whitehead graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubVertex {
    /// A direction at a trivial-stabilizer node.
    TrivialDir { node: usize, half: OEdge },
    /// The outward direction at the midpoint of a half step.
    MidLeaf { step: usize },
    /// A direction in a finite component of `T_v(L) - X` at a labeled node.
    FiniteDir { node: usize, half: OEdge, twist: Option<FactorElement> },
    /// The aggregate vertex for the infinite components at a labeled node.
    VHat { node: usize },
}

#[derive(Clone, Debug)]
pub struct SubWhEdge {
    pub from: usize,
    pub to: usize,
    pub line: usize,
    /// X-edge crossings of the segment: (step, loop position).
    pub crossings: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct SubtreeWhitehead {
    pub vertices: Vec<SubVertex>,
    pub edges: Vec<SubWhEdge>,
}

impl SubtreeWhitehead {
    pub fn vertex_id(&self, v: &SubVertex) -> Option<usize> {
        self.vertices.iter().position(|x| x == v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().map(|e| (e.from == v) as usize + (e.to == v) as usize).sum()
    }

    pub fn components_excluding(&self, removed_edges: &BTreeSet<usize>) -> Vec<BTreeSet<usize>> {
        let n = self.vertices.len();
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut Vec<usize>, mut x: usize) -> usize {
            while c[x] != x {
                c[x] = c[c[x]];
                x = c[x];
            }
            x
        }
        for (i, e) in self.edges.iter().enumerate() {
            if removed_edges.contains(&i) {
                continue;
            }
            let a = find(&mut comp, e.from);
            let b = find(&mut comp, e.to);
            if a != b {
                comp[a.max(b)] = a.min(b);
            }
        }
        let mut map: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for v in 0..n {
            let r = find(&mut comp, v);
            map.entry(r).or_default().insert(v);
        }
        map.into_values().collect()
    }

    pub fn components(&self) -> Vec<BTreeSet<usize>> {
        self.components_excluding(&BTreeSet::new())
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    pub fn is_circle(&self) -> bool {
        !self.edges.is_empty() && self.is_connected() && (0..self.vertices.len()).all(|v| self.degree(v) == 2)
    }
}

struct SubtreeCtx<'a> {
    tree: &'a GrushkoTree,
    spec: &'a SubtreeSpec,
    xdirs: Vec<BTreeMap<Dir, usize>>,
    /// Per labeled node: its vertex Whitehead graph and classification of
    /// `T_v(L)` minus the X directions.
    node_class: Vec<Option<(WhiteheadGraph, MinusReport)>>,
}

impl<'a> SubtreeCtx<'a> {
    fn build(tree: &'a GrushkoTree, lines: &LineCollection, spec: &'a SubtreeSpec, budget: usize) -> Result<SubtreeCtx<'a>> {
        let xdirs: Vec<_> = (0..spec.nodes.len()).map(|n| spec.x_dirs(n)).collect();
        let mut node_class = Vec::new();
        for (n, node) in spec.nodes.iter().enumerate() {
            if tree.graph.labels[node.qv].is_none() {
                node_class.push(None);
                continue;
            }
            let w = vertex_whitehead(tree, lines, node.qv);
            let factor = tree.graph.labels[node.qv].unwrap();
            let removed: BTreeSet<DerivedVertex> = xdirs[n]
                .keys()
                .map(|(half, twist)| {
                    let idx = w.vertex_index(*half).expect("x direction at the node vertex");
                    let t = twist.clone().unwrap_or_else(|| FactorElement::identity(&tree.presentation, factor));
                    (idx, t)
                })
                .collect();
            let report = classify_components_minus(&tree.presentation, &w, &removed, budget)?;
            node_class.push(Some((w, report)));
        }
        Ok(SubtreeCtx { tree, spec, xdirs, node_class })
    }

    fn classify_exit(&self, node: usize, half: OEdge, twist: &Option<FactorElement>) -> SubVertex {
        match &self.node_class[node] {
            None => SubVertex::TrivialDir { node, half },
            Some((w, report)) => {
                let factor = self.tree.graph.labels[self.spec.nodes[node].qv].unwrap();
                let idx = w.vertex_index(half).expect("half at node vertex");
                let t = twist.clone().unwrap_or_else(|| FactorElement::identity(&self.tree.presentation, factor));
                if report.finite_vertex(&(idx, t)) {
                    SubVertex::FiniteDir { node, half, twist: norm_twist(twist.clone()) }
                } else {
                    SubVertex::VHat { node }
                }
            }
        }
    }

    /// Walks a line onward from a crossing: the edge at `pos` in `cycle` was
    /// just crossed, arriving at `node` with deviation `dev`. Crossing
    /// positions are mapped back to original loop coordinates when walking
    /// the inverted cycle.
    fn walk(
        &self,
        cycle: &CyclicLoop,
        inverted: bool,
        mut pos: usize,
        mut node: usize,
        mut dev: Option<FactorElement>,
        crossings: &mut Vec<(usize, usize)>,
    ) -> SubVertex {
        let n = cycle.len();
        let orig = |q: usize| if inverted { n - 1 - q } else { q };
        for _ in 0..self.spec.steps.len() + 2 {
            let y = cycle.steps[pos].1.clone();
            let f = cycle.steps[(pos + 1) % n].0;
            let d2 = compose(&dev, &y);
            let key: Dir = (f, norm_twist(d2.clone()));
            match self.xdirs[node].get(&key) {
                Some(&st) => {
                    pos = (pos + 1) % n;
                    crossings.push((st, orig(pos)));
                    let step = &self.spec.steps[st];
                    if Some(node) == step.child {
                        // upward crossing: arrive at the parent twisted
                        node = step.parent;
                        dev = step.twist.clone();
                    } else if let Some(child) = step.child {
                        node = child;
                        dev = None;
                    } else {
                        return SubVertex::MidLeaf { step: st };
                    }
                }
                None => return self.classify_exit(node, f, &d2),
            }
        }
        unreachable!("segment walks are bounded by the subtree size")
    }
}

/// The Whitehead graph of the line collection relative to a finite subtree.
/// Requires a Whitehead reduced tree.
pub fn subtree_whitehead(
    tree: &GrushkoTree,
    lines: &LineCollection,
    spec: &SubtreeSpec,
    budget: usize,
) -> Result<SubtreeWhitehead> {
    if !is_whitehead_reduced(tree, lines) {
        return Err(Error::NotReduced("subtree Whitehead graphs need a reduced tree".into()));
    }
    subtree_whitehead_unchecked(tree, lines, spec, budget)
}

pub(crate) fn subtree_whitehead_unchecked(
    tree: &GrushkoTree,
    lines: &LineCollection,
    spec: &SubtreeSpec,
    budget: usize,
) -> Result<SubtreeWhitehead> {
    let ctx = SubtreeCtx::build(tree, lines, spec, budget)?;
    // vertex set
    let mut vertices: Vec<SubVertex> = Vec::new();
    for (n, node) in spec.nodes.iter().enumerate() {
        match &ctx.node_class[n] {
            None => {
                for half in tree.graph.halves_at(node.qv) {
                    if !ctx.xdirs[n].contains_key(&(half, None)) {
                        vertices.push(SubVertex::TrivialDir { node: n, half });
                    }
                }
            }
            Some((w, report)) => {
                let mut dirs: Vec<SubVertex> = Vec::new();
                for comp in &report.finite_components {
                    for (idx, t) in comp {
                        dirs.push(SubVertex::FiniteDir {
                            node: n,
                            half: w.vertices[*idx],
                            twist: norm_twist(Some(t.clone())),
                        });
                    }
                }
                dirs.sort();
                vertices.extend(dirs);
                vertices.push(SubVertex::VHat { node: n });
            }
        }
    }
    for (st, step) in spec.steps.iter().enumerate() {
        if step.child.is_none() {
            vertices.push(SubVertex::MidLeaf { step: st });
        }
    }
    let graph_vid = |v: &SubVertex, vertices: &[SubVertex]| -> usize {
        vertices.iter().position(|x| x == v).expect("classified exit is enumerated")
    };
    let mut edges: Vec<SubWhEdge> = Vec::new();
    // segment events: line crossings of X edges
    let cycles = lines.loops(tree);
    let mut done: BTreeSet<(usize, usize, usize)> = BTreeSet::new(); // (line, step, pos)
    for (j, cycle) in cycles.iter().enumerate() {
        let n = cycle.len();
        let inv = cycle.inverted();
        for (st, step) in spec.steps.iter().enumerate() {
            for pos in 0..n {
                let fwd = cycle.steps[pos].0 == step.edge;
                let bwd = cycle.steps[pos].0 == reverse(step.edge);
                if !fwd && !bwd {
                    continue;
                }
                if done.contains(&(j, st, pos)) {
                    continue;
                }
                let mut crossings = vec![(st, pos)];
                let k = n - 1 - pos;
                let (exit_a, exit_b);
                if fwd {
                    // childward then parentward
                    exit_a = match step.child {
                        Some(child) => ctx.walk(cycle, false, pos, child, None, &mut crossings),
                        None => SubVertex::MidLeaf { step: st },
                    };
                    exit_b = ctx.walk(&inv, true, k, step.parent, step.twist.clone(), &mut crossings);
                } else {
                    exit_a = ctx.walk(cycle, false, pos, step.parent, step.twist.clone(), &mut crossings);
                    exit_b = match step.child {
                        Some(child) => ctx.walk(&inv, true, k, child, None, &mut crossings),
                        None => SubVertex::MidLeaf { step: st },
                    };
                }
                crossings.sort();
                crossings.dedup();
                for &(s2, p2) in &crossings {
                    done.insert((j, s2, p2));
                }
                let (a, b) = (graph_vid(&exit_a, &vertices), graph_vid(&exit_b, &vertices));
                if a != b {
                    edges.push(SubWhEdge { from: a.min(b), to: a.max(b), line: j, crossings });
                }
            }
        }
    }
    // touch events: lines meeting X at a single node
    for (j, cycle) in cycles.iter().enumerate() {
        let n = cycle.len();
        for (nd, node) in spec.nodes.iter().enumerate() {
            for pos in 0..n {
                let e_in = cycle.steps[pos].0;
                if tree.graph.term(e_in) != node.qv {
                    continue;
                }
                let y = cycle.steps[pos].1.clone();
                let f = cycle.steps[(pos + 1) % n].0;
                let s1_half = reverse(e_in);
                // candidate deviations: one per finite-component direction
                let mut cands: BTreeSet<Option<FactorElement>> = BTreeSet::new();
                match &ctx.node_class[nd] {
                    None => {
                        cands.insert(None);
                    }
                    Some((w, report)) => {
                        let i1 = w.vertex_index(s1_half).expect("half at node");
                        let i2 = w.vertex_index(f).expect("half at node");
                        for comp in &report.finite_components {
                            for (idx, t) in comp {
                                if *idx == i1 {
                                    cands.insert(norm_twist(Some(t.clone())));
                                }
                                if *idx == i2 {
                                    // d * y = t => d = t * y^-1
                                    let d = match &y {
                                        Some(yy) => t.mul(&yy.inverse()),
                                        None => t.clone(),
                                    };
                                    cands.insert(norm_twist(Some(d)));
                                }
                            }
                        }
                    }
                }
                for d in cands {
                    let s1: Dir = (s1_half, d.clone());
                    let s2: Dir = (f, norm_twist(compose(&d, &y)));
                    if ctx.xdirs[nd].contains_key(&s1) || ctx.xdirs[nd].contains_key(&s2) {
                        continue; // the line penetrates X: covered by segments
                    }
                    let va = ctx.classify_exit(nd, s1.0, &s1.1);
                    let vb = ctx.classify_exit(nd, s2.0, &s2.1);
                    if va == vb {
                        continue;
                    }
                    let (a, b) = (graph_vid(&va, &vertices), graph_vid(&vb, &vertices));
                    edges.push(SubWhEdge { from: a.min(b), to: a.max(b), line: j, crossings: Vec::new() });
                }
            }
        }
    }
    edges.sort_by(|x, y| (x.from, x.to, x.line, &x.crossings).cmp(&(y.from, y.to, y.line, &y.crossings)));
    Ok(SubtreeWhitehead { vertices, edges })
}

/// Splices two subtree Whitehead graphs along deleted midpoint vertices.
/// The midpoints must lie over the same edge midpoint from opposite sides;
/// loose ends are paired by the line provenance of their crossings of the
/// half steps (`a_step`, `b_step`). The result equals the graph of the
/// union subtree.
pub fn splice(
    a: &SubtreeWhitehead,
    a_step: usize,
    b: &SubtreeWhitehead,
    b_step: usize,
) -> Result<SubtreeWhitehead> {
    let a_mid = a
        .vertex_id(&SubVertex::MidLeaf { step: a_step })
        .ok_or_else(|| Error::PairingMismatch("left graph lacks the midpoint vertex".into()))?;
    let b_mid = b
        .vertex_id(&SubVertex::MidLeaf { step: b_step })
        .ok_or_else(|| Error::PairingMismatch("right graph lacks the midpoint vertex".into()))?;
    let key_of = |e: &SubWhEdge, step: usize| -> Option<(usize, usize)> {
        e.crossings.iter().find(|&&(st, _)| st == step).map(|&(_, pos)| (e.line, pos))
    };
    let mut a_loose: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, e) in a.edges.iter().enumerate() {
        if e.from == a_mid || e.to == a_mid {
            let key = key_of(e, a_step)
                .ok_or_else(|| Error::PairingMismatch("edge at the midpoint lacks a crossing key".into()))?;
            if a_loose.insert(key, i).is_some() {
                return Err(Error::PairingMismatch("duplicate crossing key".into()));
            }
        }
    }
    let mut b_loose: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, e) in b.edges.iter().enumerate() {
        if e.from == b_mid || e.to == b_mid {
            let key = key_of(e, b_step)
                .ok_or_else(|| Error::PairingMismatch("edge at the midpoint lacks a crossing key".into()))?;
            if b_loose.insert(key, i).is_some() {
                return Err(Error::PairingMismatch("duplicate crossing key".into()));
            }
        }
    }
    if a_loose.keys().collect::<Vec<_>>() != b_loose.keys().collect::<Vec<_>>() {
        return Err(Error::PairingMismatch(format!(
            "loose end keys differ: {:?} vs {:?}",
            a_loose.keys().collect::<Vec<_>>(),
            b_loose.keys().collect::<Vec<_>>()
        )));
    }
    // new vertex list: a-vertices minus mid, then b-vertices minus mid
    let mut vertices = Vec::new();
    let mut a_map: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, v) in a.vertices.iter().enumerate() {
        if i != a_mid {
            a_map.insert(i, vertices.len());
            vertices.push(v.clone());
        }
    }
    let mut b_map: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, v) in b.vertices.iter().enumerate() {
        if i != b_mid {
            b_map.insert(i, vertices.len());
            vertices.push(v.clone());
        }
    }
    let mut edges = Vec::new();
    for (i, e) in a.edges.iter().enumerate() {
        if e.from != a_mid && e.to != a_mid {
            edges.push(SubWhEdge { from: a_map[&e.from], to: a_map[&e.to], line: e.line, crossings: e.crossings.clone() });
        } else {
            let _ = i;
        }
    }
    for e in b.edges.iter() {
        if e.from != b_mid && e.to != b_mid {
            edges.push(SubWhEdge { from: b_map[&e.from], to: b_map[&e.to], line: e.line, crossings: e.crossings.clone() });
        }
    }
    for (key, &ai) in &a_loose {
        let bi = b_loose[key];
        let ea = &a.edges[ai];
        let eb = &b.edges[bi];
        let a_other = if ea.from == a_mid { ea.to } else { ea.from };
        let b_other = if eb.from == b_mid { eb.to } else { eb.from };
        if a_other == a_mid || b_other == b_mid {
            return Err(Error::PairingMismatch("edge with both ends at the midpoint".into()));
        }
        let (x, y) = (a_map[&a_other], b_map[&b_other]);
        let mut crossings = ea.crossings.clone();
        crossings.extend(eb.crossings.iter().copied());
        edges.push(SubWhEdge { from: x.min(y), to: x.max(y), line: ea.line, crossings });
    }
    Ok(SubtreeWhitehead { vertices, edges })
}

/// Lines crossing an edge pair: (line, loop position, forward orientation).
pub fn edge_crossings(tree: &GrushkoTree, lines: &LineCollection, pair: EdgePair) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    for (j, cycle) in lines.loops(tree).iter().enumerate() {
        for (pos, (e, _)) in cycle.steps.iter().enumerate() {
            if pair_of(*e) == pair {
                out.push((j, pos, *e == 2 * pair));
            }
        }
    }
    out
}

/// The edge cut set computation: builds the subtree `e-hat` (the edge plus
/// the near half of each continuation edge of each crossing line), computes
/// its Whitehead graph, removes the edges of the lines crossing `e`, and
/// returns the graph with the removal set.
pub fn edge_cut_graph(
    tree: &GrushkoTree,
    lines: &LineCollection,
    pair: EdgePair,
    budget: usize,
) -> Result<(SubtreeWhitehead, BTreeSet<usize>)> {
    if !is_whitehead_reduced(tree, lines) {
        return Err(Error::NotReduced("edge cut sets need a reduced tree".into()));
    }
    let crossings = edge_crossings(tree, lines, pair);
    if crossings.is_empty() {
        return Err(Error::NoLinesCrossE);
    }
    let e = 2 * pair;
    let mut spec = SubtreeSpec::new(tree.graph.init(e));
    let head = spec.add_full(tree, 0, None, e)?;
    let cycles = lines.loops(tree);
    for &(j, pos, fwd) in &crossings {
        let cycle = &cycles[j];
        let n = cycle.len();
        let inv = cycle.inverted();
        let k = n - 1 - pos;
        // continuation of the line beyond each endpoint of the crossing
        let (c1, p1, n1): (&CyclicLoop, usize, usize) = if fwd { (cycle, pos, head) } else { (cycle, pos, 0) };
        let y1 = c1.steps[p1].1.clone();
        let f1 = c1.steps[(p1 + 1) % n].0;
        spec.add_half(tree, n1, norm_twist(y1), f1)?;
        let (c2, p2, n2): (&CyclicLoop, usize, usize) = if fwd { (&inv, k, 0) } else { (&inv, k, head) };
        let y2 = c2.steps[p2].1.clone();
        let f2 = c2.steps[(p2 + 1) % n].0;
        spec.add_half(tree, n2, norm_twist(y2), f2)?;
    }
    let w = subtree_whitehead_unchecked(tree, lines, &spec, budget)?;
    // removal: the edges whose segments cross the e step (step index 0)
    let removed: BTreeSet<usize> = w
        .edges
        .iter()
        .enumerate()
        .filter(|(_, ed)| ed.crossings.iter().any(|&(st, _)| st == 0))
        .map(|(i, _)| i)
        .collect();
    Ok((w, removed))
}

/// Component count of `Wh_T(L, e-hat) - L_e`.
pub fn edge_cut_components(tree: &GrushkoTree, lines: &LineCollection, pair: EdgePair, budget: usize) -> Result<usize> {
    let (w, removed) = edge_cut_graph(tree, lines, pair, budget)?;
    Ok(w.components_excluding(&removed).len())
}

/// Labeled vertices that are peripheral cut points: the Whitehead graph is
/// disconnected, or connected with monodromy a proper subgroup of the
/// stabilizer.
pub fn peripheral_cut_points(tree: &GrushkoTree, lines: &LineCollection) -> Result<Vec<VertexId>> {
    if !is_whitehead_reduced(tree, lines) {
        return Err(Error::NotReduced("peripheral cut points need a reduced tree".into()));
    }
    let mut out = Vec::new();
    for v in 0..tree.graph.vertex_count() {
        if tree.graph.labels[v].is_none() {
            continue;
        }
        let w = vertex_whitehead(tree, lines, v);
        if !w.is_connected() {
            out.push(v);
            continue;
        }
        let all: BTreeSet<usize> = (0..w.vertices.len()).collect();
        let mon = monodromy_induced(&tree.presentation, &w, &all)?;
        if !mon.equals_whole_factor {
            out.push(v);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Annular Whitehead graphs along an axis
// ---------------------------------------------------------------------------

/// The quotient of `Wh_T(L, T_a)` by the axis period, a voltage graph over
/// the infinite cyclic group generated by `a`.
#[derive(Clone, Debug)]
pub struct AnnularGraph {
    pub period: usize,
    pub vertices: Vec<AnnularVertex>,
    pub edges: Vec<AnnularEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AnnularVertex {
    Trivial { slot: usize, half: OEdge },
    Finite { slot: usize, half: OEdge, twist: Option<FactorElement> },
    VHat { slot: usize },
}

#[derive(Clone, Debug)]
pub struct AnnularEdge {
    pub from: usize,
    pub to: usize,
    pub voltage: i64,
    pub line: usize,
    /// Wrap of the `from` endpoint in the normalized coordinates of
    /// `crossings`.
    pub from_wrap: i64,
    /// Axis-edge crossings in unrolled coordinates: (absolute slot, position).
    pub crossings: Vec<(i64, usize)>,
}

#[derive(Clone, Debug)]
pub struct AnnularReport {
    pub graph: AnnularGraph,
    pub component_count: Count,
    /// Per quotient vertex: (component index, potential).
    pub potentials: Vec<(usize, i64)>,
    /// Per component: the voltage monodromy generator (0 means trivial).
    pub comp_voltage: Vec<i64>,
}

impl AnnularReport {
    /// Derived component id of a vertex instance at the given wrap.
    pub fn derived_component(&self, vertex: usize, wrap: i64) -> (usize, i64) {
        let (comp, pot) = self.potentials[vertex];
        let d = self.comp_voltage[comp];
        let level = pot + wrap;
        if d == 0 {
            (comp, level)
        } else {
            (comp, level.rem_euclid(d))
        }
    }
}

struct AnnularCtx<'a> {
    tree: &'a GrushkoTree,
    axis: &'a CyclicLoop,
    /// Per slot: directions of the axis with their targets (slot offsets).
    xdirs: Vec<BTreeMap<Dir, i64>>,
    node_class: Vec<Option<(WhiteheadGraph, MinusReport)>>,
}

impl<'a> AnnularCtx<'a> {
    /// slot i hosts the vertex reached after crossing axis edge i.
    fn node_qv(&self, slot: usize) -> VertexId {
        self.tree.graph.term(self.axis.steps[slot].0)
    }

    fn classify_exit(&self, slot: usize, half: OEdge, twist: &Option<FactorElement>) -> AnnularVertex {
        match &self.node_class[slot] {
            None => AnnularVertex::Trivial { slot, half },
            Some((w, report)) => {
                let factor = self.tree.graph.labels[self.node_qv(slot)].unwrap();
                let idx = w.vertex_index(half).expect("half at axis vertex");
                let t = twist.clone().unwrap_or_else(|| FactorElement::identity(&self.tree.presentation, factor));
                if report.finite_vertex(&(idx, t)) {
                    AnnularVertex::Finite { slot, half, twist: norm_twist(twist.clone()) }
                } else {
                    AnnularVertex::VHat { slot }
                }
            }
        }
    }

    /// Walks onward from a crossing of axis edge `abs_slot` (arriving at the
    /// node of that slot when heading forward, or the previous node when
    /// heading backward). Returns `None` for lines that stay on the axis
    /// forever: their ends are the removed points, not directions.
    fn walk(
        &self,
        cycle: &CyclicLoop,
        inverted: bool,
        mut pos: usize,
        mut abs_node: i64, // unrolled node index: node k sits after axis edge k
        mut dev: Option<FactorElement>,
        crossings: &mut Vec<(i64, usize)>,
    ) -> Option<(AnnularVertex, i64)> {
        let n = cycle.len();
        let m = self.axis.len() as i64;
        let orig = |q: usize| if inverted { n - 1 - q } else { q };
        let mut seen: BTreeSet<(usize, usize, Option<FactorElement>)> = BTreeSet::new();
        loop {
            let slot = abs_node.rem_euclid(m) as usize;
            if !seen.insert((pos, slot, dev.clone())) {
                return None; // periodic along the axis, never exits
            }
            let y = cycle.steps[pos].1.clone();
            let f = cycle.steps[(pos + 1) % n].0;
            let d2 = compose(&dev, &y);
            let key: Dir = (f, norm_twist(d2.clone()));
            match self.xdirs[slot].get(&key) {
                Some(&offset) => {
                    pos = (pos + 1) % n;
                    // offset +1: crossing the next axis edge; -1: the previous
                    let crossed_abs = if offset > 0 { abs_node + 1 } else { abs_node };
                    crossings.push((crossed_abs, orig(pos)));
                    abs_node += offset;
                    let arrive_slot = abs_node.rem_euclid(m) as usize;
                    dev = if offset > 0 {
                        None
                    } else {
                        // arriving backward at node k: its forward direction
                        // carries the label twist
                        self.axis.steps[arrive_slot].1.clone()
                    };
                }
                None => {
                    let v = self.classify_exit(slot, f, &d2);
                    let wrap = abs_node.div_euclid(m);
                    return Some((v, wrap));
                }
            }
        }
    }
}

/// Builds the annular Whitehead graph of the lines along the axis of `a`,
/// as a voltage graph over the cyclic group of the axis period, and counts
/// the components of the derived (infinite) graph.
pub fn annular_whitehead(
    tree: &GrushkoTree,
    lines: &LineCollection,
    a: &NormalWord,
    budget: usize,
) -> Result<AnnularReport> {
    if !is_whitehead_reduced(tree, lines) {
        return Err(Error::NotReduced("annular graphs need a reduced tree".into()));
    }
    let form = tree.cyclic_form(&tree.word_to_loop(a));
    let CyclicForm::Hyperbolic { cycle: axis, .. } = form else {
        return Err(Error::EllipticElement(a.to_string()));
    };
    let m = axis.len();
    // per-slot axis directions
    let mut xdirs: Vec<BTreeMap<Dir, i64>> = Vec::new();
    for i in 0..m {
        let mut map = BTreeMap::new();
        // backward: the reverse of the edge arriving at node i
        map.insert((reverse(axis.steps[i].0), None), -1i64);
        // forward: the next axis edge, twisted by the label at node i
        let fwd_edge = axis.steps[(i + 1) % m].0;
        let fwd_twist = norm_twist(axis.steps[i].1.clone());
        map.insert((fwd_edge, fwd_twist), 1i64);
        if map.len() < 2 {
            return Err(Error::ValidationFailure("degenerate axis direction data".into()));
        }
        xdirs.push(map);
    }
    let mut node_class = Vec::new();
    for i in 0..m {
        let qv = tree.graph.term(axis.steps[i].0);
        if tree.graph.labels[qv].is_none() {
            node_class.push(None);
            continue;
        }
        let w = vertex_whitehead(tree, lines, qv);
        let factor = tree.graph.labels[qv].unwrap();
        let removed: BTreeSet<DerivedVertex> = xdirs[i]
            .keys()
            .map(|(half, twist)| {
                let idx = w.vertex_index(*half).expect("axis direction at vertex");
                let t = twist.clone().unwrap_or_else(|| FactorElement::identity(&tree.presentation, factor));
                (idx, t)
            })
            .collect();
        let report = classify_components_minus(&tree.presentation, &w, &removed, budget)?;
        node_class.push(Some((w, report)));
    }
    let ctx = AnnularCtx { tree, axis: &axis, xdirs, node_class };
    // vertex enumeration
    let mut vertices: Vec<AnnularVertex> = Vec::new();
    for i in 0..m {
        let qv = ctx.node_qv(i);
        match &ctx.node_class[i] {
            None => {
                for half in tree.graph.halves_at(qv) {
                    if !ctx.xdirs[i].contains_key(&(half, None)) {
                        vertices.push(AnnularVertex::Trivial { slot: i, half });
                    }
                }
            }
            Some((w, report)) => {
                let mut dirs = Vec::new();
                for comp in &report.finite_components {
                    for (idx, t) in comp {
                        dirs.push(AnnularVertex::Finite {
                            slot: i,
                            half: w.vertices[*idx],
                            twist: norm_twist(Some(t.clone())),
                        });
                    }
                }
                dirs.sort();
                vertices.extend(dirs);
                vertices.push(AnnularVertex::VHat { slot: i });
            }
        }
    }
    let vid = |v: &AnnularVertex, vertices: &[AnnularVertex]| vertices.iter().position(|x| x == v).expect("exit enumerated");
    let mut edges: Vec<AnnularEdge> = Vec::new();
    let cycles = lines.loops(tree);
    // segment events
    let mut done: BTreeSet<(usize, Vec<(i64, usize)>)> = BTreeSet::new();
    for (j, cycle) in cycles.iter().enumerate() {
        let n = cycle.len();
        let inv = cycle.inverted();
        for slot in 0..m {
            let e = axis.steps[slot].0;
            for pos in 0..n {
                let fwd = cycle.steps[pos].0 == e;
                let bwd = cycle.steps[pos].0 == reverse(e);
                if !fwd && !bwd {
                    continue;
                }
                let mut crossings = vec![(slot as i64, pos)];
                let k = n - 1 - pos;
                let (exit_a, exit_b);
                if fwd {
                    // forward crossing of axis edge `slot`: arrive at node slot
                    exit_a = ctx.walk(cycle, false, pos, slot as i64, None, &mut crossings);
                    // backward: arrive at node slot-1 with the twist of its forward direction
                    let prev = (slot + m - 1) % m;
                    let tw = norm_twist(axis.steps[prev].1.clone());
                    exit_b = ctx.walk(&inv, true, k, slot as i64 - 1, tw, &mut crossings);
                } else {
                    let prev = (slot + m - 1) % m;
                    let tw = norm_twist(axis.steps[prev].1.clone());
                    exit_a = ctx.walk(cycle, false, pos, slot as i64 - 1, tw, &mut crossings);
                    exit_b = ctx.walk(&inv, true, k, slot as i64, None, &mut crossings);
                }
                let (Some(exit_a), Some(exit_b)) = (exit_a, exit_b) else {
                    continue; // an end of the line lies on the axis boundary
                };
                crossings.sort();
                crossings.dedup();
                // canonical orbit representative: shift so the minimal
                // crossed slot lies in [0, m)
                let min_abs = crossings.iter().map(|c| c.0).min().unwrap();
                let shift = min_abs.div_euclid(m as i64);
                let normalized: Vec<(i64, usize)> =
                    crossings.iter().map(|&(s, p)| (s - shift * m as i64, p)).collect();
                if !done.insert((j, normalized.clone())) {
                    continue;
                }
                let (va, wa) = exit_a;
                let (vb, wb) = exit_b;
                let (ia, ib) = (vid(&va, &vertices), vid(&vb, &vertices));
                if ia == ib && wa == wb {
                    continue; // same derived vertex class instance
                }
                edges.push(AnnularEdge {
                    from: ia,
                    to: ib,
                    voltage: wb - wa,
                    line: j,
                    from_wrap: wa - shift,
                    crossings: normalized,
                });
            }
        }
    }
    // touch events at each slot (voltage 0)
    for (j, cycle) in cycles.iter().enumerate() {
        let n = cycle.len();
        for slot in 0..m {
            let qv = ctx.node_qv(slot);
            for pos in 0..n {
                let e_in = cycle.steps[pos].0;
                if tree.graph.term(e_in) != qv {
                    continue;
                }
                let y = cycle.steps[pos].1.clone();
                let f = cycle.steps[(pos + 1) % n].0;
                let s1_half = reverse(e_in);
                let mut cands: BTreeSet<Option<FactorElement>> = BTreeSet::new();
                match &ctx.node_class[slot] {
                    None => {
                        cands.insert(None);
                    }
                    Some((w, report)) => {
                        let i1 = w.vertex_index(s1_half).expect("half at vertex");
                        let i2 = w.vertex_index(f).expect("half at vertex");
                        for comp in &report.finite_components {
                            for (idx, t) in comp {
                                if *idx == i1 {
                                    cands.insert(norm_twist(Some(t.clone())));
                                }
                                if *idx == i2 {
                                    let d = match &y {
                                        Some(yy) => t.mul(&yy.inverse()),
                                        None => t.clone(),
                                    };
                                    cands.insert(norm_twist(Some(d)));
                                }
                            }
                        }
                    }
                }
                for d in cands {
                    let s1: Dir = (s1_half, d.clone());
                    let s2: Dir = (f, norm_twist(compose(&d, &y)));
                    if ctx.xdirs[slot].contains_key(&s1) || ctx.xdirs[slot].contains_key(&s2) {
                        continue;
                    }
                    let va = ctx.classify_exit(slot, s1.0, &s1.1);
                    let vb = ctx.classify_exit(slot, s2.0, &s2.1);
                    if va == vb {
                        continue;
                    }
                    let (ia, ib) = (vid(&va, &vertices), vid(&vb, &vertices));
                    edges.push(AnnularEdge {
                        from: ia,
                        to: ib,
                        voltage: 0,
                        line: j,
                        from_wrap: 0,
                        crossings: Vec::new(),
                    });
                }
            }
        }
    }
    // component analysis of the derived graph
    let nv = vertices.len();
    let mut comp: Vec<usize> = (0..nv).collect();
    fn find(c: &mut Vec<usize>, mut x: usize) -> usize {
        while c[x] != x {
            c[x] = c[c[x]];
            x = c[x];
        }
        x
    }
    for e in &edges {
        let a = find(&mut comp, e.from);
        let b = find(&mut comp, e.to);
        if a != b {
            comp[a.max(b)] = a.min(b);
        }
    }
    let mut comp_index: BTreeMap<usize, usize> = BTreeMap::new();
    for v in 0..nv {
        let r = find(&mut comp, v);
        let next = comp_index.len();
        comp_index.entry(r).or_insert(next);
    }
    let ncomp = comp_index.len();
    let mut potentials: Vec<Option<i64>> = vec![None; nv];
    let mut comp_voltage: Vec<i64> = vec![0; ncomp];
    for v in 0..nv {
        if potentials[v].is_some() {
            continue;
        }
        potentials[v] = Some(0);
        let mut frontier = vec![v];
        while let Some(x) = frontier.pop() {
            for e in &edges {
                for (from, to, volt) in [(e.from, e.to, e.voltage), (e.to, e.from, -e.voltage)] {
                    if from != x {
                        continue;
                    }
                    let pot = potentials[x].unwrap() + volt;
                    match potentials[to] {
                        None => {
                            potentials[to] = Some(pot);
                            frontier.push(to);
                        }
                        Some(existing) => {
                            let cyc = (pot - existing).abs();
                            if cyc != 0 {
                                let r = find(&mut comp, to);
                                let ci = comp_index[&r];
                                comp_voltage[ci] = gcd(comp_voltage[ci], cyc);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut count = Count::Finite(0);
    for ci in 0..ncomp {
        let c = if comp_voltage[ci] == 0 { Count::Infinite } else { Count::Finite(comp_voltage[ci] as u64) };
        count = count.add(c);
    }
    let potentials: Vec<(usize, i64)> = (0..nv)
        .map(|v| {
            let r = find(&mut comp, v);
            (comp_index[&r], potentials[v].unwrap_or(0))
        })
        .collect();
    Ok(AnnularReport {
        graph: AnnularGraph { period: m, vertices, edges },
        component_count: count,
        potentials,
        comp_voltage,
    })
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
