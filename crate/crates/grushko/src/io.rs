//! File formats: the presentation/tree/splitting text grammar, DOT export
//! of Whitehead graphs, and the JSON schema for verdicts and certificates.
//!
//! Grammar sketch:
//!
//! ```text
//! presentation { factors = [free:1]; free_rank = 2; alias a = a1.1; alias b = x1 }
//! vertices { v0 label=factor0 }
//! edges { b: v0 -> v0; c: v0 -> v0 }
//! marking { a = loop([a1.1]); b = loop(b); c = loop(c) }
//! edge_group(e1) = a^2 b^2
//! vertex_group(v0) = a | b
//! ```
//!
//! The first vertex listed is the base vertex. Markings read from files are
//! flagged unverified: loops are checked to be closed paths, but not that
//! they define an isomorphism.

use crate::classify::{BoundName, CertStep, EllipticityEvidence, PathCertificate};
use crate::error::{Error, Result};
use crate::tree::{
    reverse, AdjacencyWitness, GrushkoTree, Loop, QuotientGraph, Step, VertexGroup, ZSplitting,
};
use crate::whitehead::{SubVertex, SubtreeWhitehead, WhiteheadGraph};
use crate::words::{parse_word, FactorKind, FactorSpec, Gen, NormalWord, Presentation};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits the input into named blocks `name { body }` and loose statements.
fn blocks(text: &str) -> Result<(Vec<(String, String)>, Vec<String>)> {
    let text = strip_comments(text);
    let mut out = Vec::new();
    let mut loose = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if let Some(brace) = rest.find('{') {
            let head = rest[..brace].trim();
            // a loose statement contains '=' and a newline before the brace
            if let Some(nl) = head.find('\n') {
                let (stmt, _) = head.split_at(nl);
                if stmt.contains('=') {
                    loose.push(stmt.trim().to_string());
                    rest = rest[stmt.len()..].trim_start();
                    continue;
                }
            }
            let mut depth = 0usize;
            let mut end = None;
            for (i, ch) in rest.char_indices().skip(brace) {
                match ch {
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            end = Some(i);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            let end = end.ok_or_else(|| Error::Parse("unbalanced braces".into()))?;
            out.push((head.to_string(), rest[brace + 1..end].trim().to_string()));
            rest = rest[end + 1..].trim_start();
        } else {
            for line in rest.lines() {
                let line = line.trim();
                if !line.is_empty() {
                    loose.push(line.trim_end_matches(';').to_string());
                }
            }
            break;
        }
    }
    Ok((out, loose))
}

fn statements(body: &str) -> Vec<String> {
    body.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn parse_factor_list(text: &str) -> Result<Vec<FactorSpec>> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Parse(format!("expected [kind:rank, ...], got `{text}`")))?;
    let mut out = Vec::new();
    for item in inner.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (kind, rank) = item
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected kind:rank, got `{item}`")))?;
        let kind = match kind.trim() {
            "free" => FactorKind::Free,
            "abelian" | "free_abelian" => FactorKind::FreeAbelian,
            other => return Err(Error::Parse(format!("unknown factor kind `{other}`"))),
        };
        let rank: usize = rank.trim().parse().map_err(|_| Error::Parse(format!("bad rank in `{item}`")))?;
        out.push(FactorSpec { kind, rank });
    }
    Ok(out)
}

/// Parses a presentation block body.
fn parse_presentation_body(body: &str) -> Result<Arc<Presentation>> {
    let mut factors = Vec::new();
    let mut free_rank = 0usize;
    let mut aliases: Vec<(String, String)> = Vec::new();
    for stmt in statements(body) {
        let (lhs, rhs) = stmt
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected `key = value`, got `{stmt}`")))?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        if lhs == "factors" {
            factors = parse_factor_list(rhs)?;
        } else if lhs == "free_rank" {
            free_rank = rhs.parse().map_err(|_| Error::Parse(format!("bad free_rank `{rhs}`")))?;
        } else if let Some(name) = lhs.strip_prefix("alias ") {
            aliases.push((name.trim().to_string(), rhs.to_string()));
        } else {
            return Err(Error::Parse(format!("unknown presentation item `{lhs}`")));
        }
    }
    let alias_refs: Vec<(&str, &str)> = aliases.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    Presentation::with_aliases(factors, free_rank, &alias_refs)
}

/// Parses a standalone presentation file.
pub fn parse_presentation(text: &str) -> Result<Arc<Presentation>> {
    let (blocks, _) = blocks(text)?;
    for (name, body) in &blocks {
        if name == "presentation" {
            return parse_presentation_body(body);
        }
    }
    Err(Error::Parse("missing presentation block".into()))
}

/// Parses a loop expression `loop(e1 [a^3] e2^-1)`.
fn parse_loop(
    expr: &str,
    p: &Presentation,
    edge_ids: &BTreeMap<String, usize>,
    base: usize,
) -> Result<Loop> {
    let inner = expr
        .trim()
        .strip_prefix("loop(")
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("expected loop(...), got `{expr}`")))?;
    let mut steps = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('[') {
            let end = r.find(']').ok_or_else(|| Error::Parse("unterminated [element]".into()))?;
            let word = parse_word(&r[..end], p)?;
            if word.syllable_len() > 1 {
                return Err(Error::Parse("vertex element must lie in one factor".into()));
            }
            if let Some(crate::words::Syllable::Factor(fe)) = word.syllables.first() {
                steps.push(Step::Vertex(fe.clone()));
            } else if !word.is_identity() {
                return Err(Error::Parse("vertex element must be a factor element".into()));
            }
            rest = r[end + 1..].trim_start();
        } else {
            let token_end = rest.find([' ', '\t', '\n', '[']).unwrap_or(rest.len());
            let token = &rest[..token_end];
            let (name, inverted) = match token.strip_suffix("^-1") {
                Some(n) => (n, true),
                None => (token, false),
            };
            let &pair = edge_ids
                .get(name)
                .ok_or_else(|| Error::Parse(format!("unknown edge `{name}`")))?;
            let e = if inverted { reverse(2 * pair) } else { 2 * pair };
            steps.push(Step::Edge(e));
            rest = rest[token_end..].trim_start();
        }
    }
    Ok(Loop { base, steps })
}

/// A parsed tree or splitting file.
pub struct ParsedTree {
    pub tree: GrushkoTree,
    pub edge_groups: Vec<Option<NormalWord>>,
    pub vertex_groups: Vec<Option<VertexGroup>>,
}

impl ParsedTree {
    pub fn is_splitting(&self) -> bool {
        self.edge_groups.iter().any(|g| g.is_some()) || self.vertex_groups.iter().any(|g| g.is_some())
    }

    /// Views the parsed data as a splitting (without collapse provenance).
    pub fn to_splitting(&self) -> ZSplitting {
        let t = &self.tree;
        let vertex_groups = (0..t.graph.vertex_count())
            .map(|v| match &self.vertex_groups[v] {
                Some(g) => g.clone(),
                None => match t.graph.labels[v] {
                    Some(f) => VertexGroup::Factor(f),
                    None => VertexGroup::Trivial,
                },
            })
            .collect();
        ZSplitting {
            presentation: t.presentation.clone(),
            graph: t.graph.clone(),
            vertex_groups,
            edge_groups: self.edge_groups.clone(),
            provenance: None,
        }
    }
}

/// Parses a tree (or splitting) file.
pub fn parse_tree(text: &str) -> Result<ParsedTree> {
    let (blocks, loose) = blocks(text)?;
    let mut presentation: Option<Arc<Presentation>> = None;
    let mut graph = QuotientGraph::new();
    let mut vertex_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut edge_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut marking_stmts: Vec<String> = Vec::new();
    for (name, body) in &blocks {
        match name.as_str() {
            "presentation" => presentation = Some(parse_presentation_body(body)?),
            "vertices" => {
                for stmt in statements(body) {
                    let mut parts = stmt.split_whitespace();
                    let vname = parts.next().ok_or_else(|| Error::Parse("empty vertex item".into()))?;
                    let mut label = None;
                    for attr in parts {
                        if let Some(f) = attr.strip_prefix("label=factor") {
                            label = Some(
                                f.parse::<usize>()
                                    .map_err(|_| Error::Parse(format!("bad label `{attr}`")))?,
                            );
                        } else if attr.starts_with("length=") {
                            // carried but ignored
                        } else {
                            return Err(Error::Parse(format!("unknown vertex attribute `{attr}`")));
                        }
                    }
                    let id = graph.add_vertex(label, vname.to_string());
                    vertex_ids.insert(vname.to_string(), id);
                }
            }
            "edges" => {
                for stmt in statements(body) {
                    let (ename, rest) = stmt
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("expected `name: v -> w`, got `{stmt}`")))?;
                    let rest = rest.trim();
                    let rest = rest
                        .split_whitespace()
                        .filter(|t| !t.starts_with("length="))
                        .collect::<Vec<_>>()
                        .join(" ");
                    let (from, to) = rest
                        .split_once("->")
                        .ok_or_else(|| Error::Parse(format!("expected `v -> w`, got `{rest}`")))?;
                    let from = *vertex_ids
                        .get(from.trim())
                        .ok_or_else(|| Error::Parse(format!("unknown vertex `{}`", from.trim())))?;
                    let to = *vertex_ids
                        .get(to.trim())
                        .ok_or_else(|| Error::Parse(format!("unknown vertex `{}`", to.trim())))?;
                    let pair = graph.edge_pair_count();
                    graph.add_edge(from, to, ename.trim().to_string());
                    edge_ids.insert(ename.trim().to_string(), pair);
                }
            }
            "marking" => marking_stmts = statements(body),
            other => return Err(Error::Parse(format!("unknown block `{other}`"))),
        }
    }
    let p = presentation.ok_or_else(|| Error::Parse("missing presentation block".into()))?;
    if graph.vertex_count() == 0 {
        return Err(Error::Parse("missing vertices".into()));
    }
    let base = 0;
    // marking: every generator needs a loop
    let mut loops: BTreeMap<Gen, Loop> = BTreeMap::new();
    for stmt in &marking_stmts {
        let (lhs, rhs) = stmt
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected `gen = loop(...)`, got `{stmt}`")))?;
        let gen = p
            .lookup(lhs.trim())
            .ok_or_else(|| Error::UnknownGenerator(lhs.trim().to_string()))?;
        loops.insert(gen, parse_loop(rhs.trim(), &p, &edge_ids, base)?);
    }
    let mut marking = Vec::new();
    for g in p.generators() {
        let l = loops
            .remove(&g)
            .ok_or_else(|| Error::Parse(format!("marking missing generator `{}`", p.display_name(g))))?;
        marking.push(l);
    }
    let gamma = vec![NormalWord::identity(); graph.terminus.len()];
    let frame = vec![NormalWord::identity(); graph.vertex_count()];
    let tree = GrushkoTree {
        presentation: p.clone(),
        graph,
        base,
        marking,
        gamma,
        frame,
        marking_verified: false,
    };
    for l in &tree.marking {
        tree.check_loop(l)?;
    }
    // loose statements: edge_group(...) = word, vertex_group(...) = ...
    let mut edge_groups = vec![None; tree.graph.edge_pair_count()];
    let mut vertex_groups = vec![None; tree.graph.vertex_count()];
    for stmt in loose {
        let (lhs, rhs) = stmt
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected `item = value`, got `{stmt}`")))?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        if let Some(arg) = lhs.strip_prefix("edge_group(").and_then(|t| t.strip_suffix(')')) {
            let &pair = edge_ids
                .get(arg.trim())
                .ok_or_else(|| Error::Parse(format!("unknown edge `{arg}`")))?;
            let w = parse_word(rhs, &p)?;
            if w.is_identity() {
                return Err(Error::Parse("edge group generator must be nontrivial".into()));
            }
            if w.is_peripheral().is_some() {
                return Err(Error::ValidationFailure(
                    "edge groups of Z-splittings must be non-peripheral".into(),
                ));
            }
            edge_groups[pair] = Some(w);
        } else if let Some(arg) = lhs.strip_prefix("vertex_group(").and_then(|t| t.strip_suffix(')')) {
            let &v = vertex_ids
                .get(arg.trim())
                .ok_or_else(|| Error::Parse(format!("unknown vertex `{arg}`")))?;
            let group = if let Some(f) = rhs.strip_prefix("factor") {
                VertexGroup::Factor(
                    f.trim().parse().map_err(|_| Error::Parse(format!("bad factor `{rhs}`")))?,
                )
            } else if rhs == "trivial" {
                VertexGroup::Trivial
            } else {
                let gens: Result<Vec<NormalWord>> =
                    rhs.split('|').map(|w| parse_word(w.trim(), &p)).collect();
                VertexGroup::Generated(gens?)
            };
            vertex_groups[v] = Some(group);
        } else {
            return Err(Error::Parse(format!("unknown statement `{lhs}`")));
        }
    }
    Ok(ParsedTree { tree, edge_groups, vertex_groups })
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

pub fn presentation_to_text(p: &Presentation) -> String {
    let mut out = String::from("presentation {\n");
    let factors: Vec<String> = p
        .factors
        .iter()
        .map(|f| match f.kind {
            FactorKind::Free => format!("free:{}", f.rank),
            FactorKind::FreeAbelian => format!("abelian:{}", f.rank),
        })
        .collect();
    out.push_str(&format!("  factors = [{}];\n", factors.join(", ")));
    out.push_str(&format!("  free_rank = {};\n", p.free_rank));
    for (alias, gen) in &p.aliases {
        out.push_str(&format!("  alias {} = {};\n", alias, p.canonical_name(*gen)));
    }
    out.push_str("}\n");
    out
}

fn loop_to_text(l: &Loop, tree: &GrushkoTree) -> String {
    let p = &tree.presentation;
    let items: Vec<String> = l
        .steps
        .iter()
        .map(|s| match s {
            Step::Edge(e) => tree.graph.edge_name(*e),
            Step::Vertex(x) => {
                let word = NormalWord::single(crate::words::Syllable::Factor(x.clone()));
                format!("[{}]", word.display(p))
            }
        })
        .collect();
    format!("loop({})", items.join(" "))
}

pub fn tree_to_text(tree: &GrushkoTree) -> String {
    let mut out = presentation_to_text(&tree.presentation);
    out.push_str("vertices {\n");
    for i in 0..tree.graph.vertex_count() {
        // the base vertex is listed first
        let v = (i + tree.base) % tree.graph.vertex_count();
        match tree.graph.labels[v] {
            Some(f) => out.push_str(&format!("  {} label=factor{};\n", tree.graph.vertex_names[v], f)),
            None => out.push_str(&format!("  {};\n", tree.graph.vertex_names[v])),
        }
    }
    out.push_str("}\nedges {\n");
    for pr in 0..tree.graph.edge_pair_count() {
        let e = 2 * pr;
        out.push_str(&format!(
            "  {}: {} -> {};\n",
            tree.graph.edge_names[pr],
            tree.graph.vertex_names[tree.graph.init(e)],
            tree.graph.vertex_names[tree.graph.term(e)]
        ));
    }
    out.push_str("}\nmarking {\n");
    for (i, g) in tree.presentation.generators().iter().enumerate() {
        out.push_str(&format!(
            "  {} = {};\n",
            tree.presentation.display_name(*g),
            loop_to_text(&tree.marking[i], tree)
        ));
    }
    out.push_str("}\n");
    out
}

pub fn splitting_to_text(s: &ZSplitting) -> String {
    let mut out = presentation_to_text(&s.presentation);
    out.push_str("vertices {\n");
    for v in 0..s.graph.vertex_count() {
        out.push_str(&format!("  {};\n", s.graph.vertex_names[v]));
    }
    out.push_str("}\nedges {\n");
    for pr in 0..s.graph.edge_pair_count() {
        let e = 2 * pr;
        out.push_str(&format!(
            "  {}: {} -> {};\n",
            s.graph.edge_names[pr],
            s.graph.vertex_names[s.graph.init(e)],
            s.graph.vertex_names[s.graph.term(e)]
        ));
    }
    out.push_str("}\n");
    for (v, g) in s.vertex_groups.iter().enumerate() {
        match g {
            VertexGroup::Trivial => {}
            VertexGroup::Factor(f) => {
                out.push_str(&format!("vertex_group({}) = factor{}\n", s.graph.vertex_names[v], f))
            }
            VertexGroup::Generated(gens) => {
                let words: Vec<String> = gens.iter().map(|w| w.display(&s.presentation)).collect();
                out.push_str(&format!(
                    "vertex_group({}) = {}\n",
                    s.graph.vertex_names[v],
                    words.join(" | ")
                ));
            }
        }
    }
    for (pr, g) in s.edge_groups.iter().enumerate() {
        if let Some(w) = g {
            out.push_str(&format!(
                "edge_group({}) = {}\n",
                s.graph.edge_names[pr],
                w.display(&s.presentation)
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// DOT export
// ---------------------------------------------------------------------------

fn half_name(tree: &GrushkoTree, half: usize) -> String {
    let pair = crate::tree::pair_of(half);
    let sign = if half % 2 == 0 { "+" } else { "-" };
    format!("Y{}{}", tree.graph.edge_names[pair], sign)
}

/// DOT export of a vertex Whitehead graph; byte-stable across runs.
pub fn whitehead_to_dot(tree: &GrushkoTree, w: &WhiteheadGraph) -> String {
    let p = &tree.presentation;
    let mut out = String::from("graph whitehead {\n");
    for &half in &w.vertices {
        out.push_str(&format!("  \"{}\";\n", half_name(tree, half)));
    }
    for e in &w.edges {
        let label = match &e.label {
            Some(x) => NormalWord::single(crate::words::Syllable::Factor(x.clone())).display(p),
            None => "1".to_string(),
        };
        out.push_str(&format!(
            "  \"{}\" -- \"{}\" [label=\"{}\", line=\"{}\"];\n",
            half_name(tree, w.vertices[e.from]),
            half_name(tree, w.vertices[e.to]),
            label,
            e.line
        ));
    }
    out.push_str("}\n");
    out
}

fn sub_vertex_name(tree: &GrushkoTree, v: &SubVertex) -> String {
    let p = &tree.presentation;
    match v {
        SubVertex::TrivialDir { node, half } => format!("n{}:{}", node, half_name(tree, *half)),
        SubVertex::MidLeaf { step } => format!("mid{}", step),
        SubVertex::FiniteDir { node, half, twist } => {
            let t = match twist {
                Some(x) => NormalWord::single(crate::words::Syllable::Factor(x.clone())).display(p),
                None => "1".to_string(),
            };
            format!("n{}:{}.{}", node, t, half_name(tree, *half))
        }
        SubVertex::VHat { node } => format!("n{}:vhat", node),
    }
}

/// DOT export of a subtree Whitehead graph.
pub fn subtree_whitehead_to_dot(tree: &GrushkoTree, w: &SubtreeWhitehead) -> String {
    let mut out = String::from("graph whitehead {\n");
    for v in &w.vertices {
        out.push_str(&format!("  \"{}\";\n", sub_vertex_name(tree, v)));
    }
    for e in &w.edges {
        out.push_str(&format!(
            "  \"{}\" -- \"{}\" [line=\"{}\"];\n",
            sub_vertex_name(tree, &w.vertices[e.from]),
            sub_vertex_name(tree, &w.vertices[e.to]),
            e.line
        ));
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// JSON schemas
// ---------------------------------------------------------------------------

fn evidence_json(ev: &EllipticityEvidence) -> Value {
    json!({
        "vertex": ev.vertex,
        "conjugator": ev.conjugator.to_string(),
        "expression": ev.expression,
    })
}

fn step_json(step: &CertStep) -> Value {
    match &step.witness {
        AdjacencyWitness::Compatible { refinement, collapse_left, collapse_right } => json!({
            "type": "compatible",
            "refinement": tree_to_text(refinement),
            "collapse_left": collapse_left.iter().map(|&p| refinement.graph.edge_names[p].clone()).collect::<Vec<_>>(),
            "collapse_right": collapse_right.iter().map(|&p| refinement.graph.edge_names[p].clone()).collect::<Vec<_>>(),
        }),
        AdjacencyWitness::CommonElliptic { g } => json!({
            "type": "common_elliptic",
            "g": g.to_string(),
            "evidence_left": step.evidence_left.as_ref().map(evidence_json),
            "evidence_right": step.evidence_right.as_ref().map(evidence_json),
        }),
    }
}

fn node_json(s: &ZSplitting) -> Value {
    match &s.provenance {
        Some(view) => json!({
            "tree": tree_to_text(&view.tree),
            "collapsed": view.collapsed.iter().map(|&p| view.tree.graph.edge_names[p].clone()).collect::<Vec<_>>(),
        }),
        None => json!({ "splitting": splitting_to_text(s) }),
    }
}

/// Serializes a certificate to the stable JSON schema. Certificates embed
/// all splittings in the tree grammar, so third parties can re-check.
pub fn certificate_json(cert: &PathCertificate, l: u64) -> Value {
    let bound_key = match cert.bound_name {
        BoundName::D0 => "D0",
        BoundName::D1 => "D1",
        BoundName::D2 => "D2",
    };
    json!({
        "verdict": "certified",
        "bound": { "L": l, bound_key: cert.claimed_bound },
        "length": cert.length(),
        "nodes": cert.nodes.iter().map(node_json).collect::<Vec<_>>(),
        "moves": cert.steps.iter().map(step_json).collect::<Vec<_>>(),
    })
}

fn names_to_pairs(tree: &GrushkoTree, names: &Value) -> Result<std::collections::BTreeSet<usize>> {
    let mut out = std::collections::BTreeSet::new();
    for n in names.as_array().ok_or_else(|| Error::Parse("expected a name list".into()))? {
        let name = n.as_str().ok_or_else(|| Error::Parse("edge name must be a string".into()))?;
        let pair = tree
            .graph
            .edge_names
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| Error::Parse(format!("unknown edge `{name}` in certificate")))?;
        out.insert(pair);
    }
    Ok(out)
}

fn evidence_from_json(v: &Value, p: &Arc<Presentation>) -> Result<Option<EllipticityEvidence>> {
    if v.is_null() {
        return Ok(None);
    }
    let vertex = v["vertex"].as_u64().ok_or_else(|| Error::Parse("evidence vertex".into()))? as usize;
    let conjugator = parse_word(v["conjugator"].as_str().unwrap_or("1"), p)?;
    let expression: Vec<(usize, i64)> = v["expression"]
        .as_array()
        .ok_or_else(|| Error::Parse("evidence expression".into()))?
        .iter()
        .map(|e| {
            let arr = e.as_array().ok_or_else(|| Error::Parse("expression entry".into()))?;
            Ok((
                arr[0].as_u64().ok_or_else(|| Error::Parse("expression index".into()))? as usize,
                arr[1].as_i64().ok_or_else(|| Error::Parse("expression exponent".into()))?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(Some(EllipticityEvidence { vertex, conjugator, expression }))
}

/// Re-reads a certificate from its JSON form for independent checking.
/// Markings inside embedded trees are flagged unverified; validation only
/// relies on loop computations, which remain available.
pub fn certificate_from_json(v: &Value) -> Result<PathCertificate> {
    let mut nodes = Vec::new();
    for n in v["nodes"].as_array().ok_or_else(|| Error::Parse("certificate nodes".into()))? {
        if let Some(text) = n["tree"].as_str() {
            let parsed = parse_tree(text)?;
            let collapsed = names_to_pairs(&parsed.tree, &n["collapsed"])?;
            nodes.push(ZSplitting::from_collapse(parsed.tree, collapsed));
        } else if let Some(text) = n["splitting"].as_str() {
            nodes.push(parse_tree(text)?.to_splitting());
        } else {
            return Err(Error::Parse("certificate node missing tree/splitting".into()));
        }
    }
    let p = nodes
        .first()
        .map(|n| n.presentation.clone())
        .ok_or_else(|| Error::Parse("empty certificate".into()))?;
    let mut steps = Vec::new();
    for m in v["moves"].as_array().ok_or_else(|| Error::Parse("certificate moves".into()))? {
        match m["type"].as_str() {
            Some("compatible") => {
                let refinement =
                    parse_tree(m["refinement"].as_str().ok_or_else(|| Error::Parse("refinement".into()))?)?.tree;
                let collapse_left = names_to_pairs(&refinement, &m["collapse_left"])?;
                let collapse_right = names_to_pairs(&refinement, &m["collapse_right"])?;
                steps.push(CertStep {
                    witness: AdjacencyWitness::Compatible {
                        refinement: Box::new(refinement),
                        collapse_left,
                        collapse_right,
                    },
                    evidence_left: None,
                    evidence_right: None,
                });
            }
            Some("common_elliptic") => {
                let g = parse_word(m["g"].as_str().ok_or_else(|| Error::Parse("element".into()))?, &p)?;
                steps.push(CertStep {
                    witness: AdjacencyWitness::CommonElliptic { g },
                    evidence_left: evidence_from_json(&m["evidence_left"], &p)?,
                    evidence_right: evidence_from_json(&m["evidence_right"], &p)?,
                });
            }
            other => return Err(Error::Parse(format!("unknown step type {other:?}"))),
        }
    }
    let bound = &v["bound"];
    let (bound_name, claimed_bound) = if let Some(b) = bound["D0"].as_u64() {
        (BoundName::D0, b)
    } else if let Some(b) = bound["D1"].as_u64() {
        (BoundName::D1, b)
    } else if let Some(b) = bound["D2"].as_u64() {
        (BoundName::D2, b)
    } else {
        return Err(Error::Parse("certificate bound".into()));
    };
    Ok(PathCertificate { nodes, steps, claimed_bound, bound_name })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::FactorElement;

    fn ex41() -> Arc<Presentation> {
        Presentation::with_aliases(
            vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
            2,
            &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
        )
        .unwrap()
    }

    #[test]
    fn presentation_round_trip() {
        let p = ex41();
        let text = presentation_to_text(&p);
        let q = parse_presentation(&text).unwrap();
        assert_eq!(*p, *q);
    }

    #[test]
    fn tree_round_trip() {
        let p = ex41();
        let t = GrushkoTree::standard_rose(&p).unwrap();
        let text = tree_to_text(&t);
        let parsed = parse_tree(&text).unwrap();
        assert!(!parsed.is_splitting());
        let t2 = parsed.tree;
        assert_eq!(t2.graph.vertex_count(), 1);
        assert_eq!(t2.graph.edge_pair_count(), 2);
        assert!(!t2.marking_verified);
        // loops still compute: |g|_T through the parsed marking
        let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
        assert_eq!(t2.comb_length(&g).unwrap(), 4);
    }

    #[test]
    fn splitting_text_contains_groups() {
        let p = ex41();
        let h = parse_word("b a", &p).unwrap();
        let mut graph = QuotientGraph::new();
        let v0 = graph.add_vertex(None, "v0");
        let v1 = graph.add_vertex(None, "v1");
        graph.add_edge(v0, v1, "e1");
        let s = ZSplitting {
            presentation: p.clone(),
            graph,
            vertex_groups: vec![VertexGroup::Factor(0), VertexGroup::Generated(vec![h.clone()])],
            edge_groups: vec![Some(h)],
            provenance: None,
        };
        let text = splitting_to_text(&s);
        assert!(text.contains("edge_group(e1)"));
        assert!(text.contains("vertex_group(v0) = factor0"));
    }

    #[test]
    fn dot_is_stable() {
        let p = ex41();
        let t = GrushkoTree::standard_rose(&p).unwrap();
        let g = parse_word("b a c b^-1 a^3 c^-1", &p).unwrap();
        let lines = crate::whitehead::LineCollection::single(&p, &g).unwrap();
        let w = crate::whitehead::vertex_whitehead(&t, &lines, 0);
        let d1 = whitehead_to_dot(&t, &w);
        let d2 = whitehead_to_dot(&t, &crate::whitehead::vertex_whitehead(&t, &lines, 0));
        assert_eq!(d1, d2);
        assert!(d1.contains("\"Yb+\""));
        assert!(d1.contains("label=\"a^3\"") || d1.contains("label=\"a1.1^3\""));
    }

    #[test]
    fn parse_rejects_unknown_edges() {
        let text = "presentation { factors = []; free_rank = 2 }\nvertices { v0 }\nedges { e1: v0 -> v0 }\nmarking { x1 = loop(e1); x2 = loop(zz) }";
        assert!(parse_tree(text).is_err());
    }

    #[test]
    fn certificate_json_round_trip() {
        let p = ex41();
        let b = parse_word("b", &p).unwrap();
        let rose = GrushkoTree::standard_rose(&p).unwrap();
        let cert = crate::classify::certify_projection(
            &p,
            &b,
            &rose,
            &rose,
            &crate::classify::Supplied::default(),
        )
        .unwrap();
        let j = certificate_json(&cert, 1);
        let back = certificate_from_json(&j).unwrap();
        back.validate().unwrap();
        assert_eq!(back.length(), cert.length());
        assert_eq!(back.claimed_bound, cert.claimed_bound);
    }

    #[test]
    fn vertex_element_loops_parse() {
        let p = ex41();
        let t = GrushkoTree::standard_rose(&p).unwrap();
        let ids: BTreeMap<String, usize> = BTreeMap::from([("b".into(), 0), ("c".into(), 1)]);
        let l = parse_loop("loop(b [a^3] c^-1)", &p, &ids, 0).unwrap();
        assert_eq!(l.edge_count(), 2);
        assert!(matches!(&l.steps[1], Step::Vertex(x) if *x == FactorElement::generator(&p, 0, 0, 3)));
        t.check_loop(&l).unwrap();
    }
}
