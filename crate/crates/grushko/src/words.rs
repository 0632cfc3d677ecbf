//! Normal forms and arithmetic for elements of `G = A_1 * ... * A_k * F_N`.
//!
//! Peripheral factors are finite-rank free or free-abelian groups. Elements
//! of `G` are kept in free-product normal form: an alternating sequence of
//! syllables, each a nontrivial factor element or a power of a free
//! generator, with no two adjacent syllables mergeable.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Kind of a peripheral factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactorKind {
    Free,
    FreeAbelian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub kind: FactorKind,
    pub rank: usize,
}

/// A generator symbol of the presentation. Factor generator `j` of factor
/// `i` is named `a<i+1>.<j+1>`, free generator `m` is named `x<m+1>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gen {
    Factor { factor: usize, index: usize },
    Free { index: usize },
}

/// The pair `(G, A)`: peripheral factor specs plus the free rank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub factors: Vec<FactorSpec>,
    pub free_rank: usize,
    /// User aliases for generator names, e.g. `a -> a1.1`.
    pub aliases: BTreeMap<String, Gen>,
}

impl Presentation {
    pub fn new(factors: Vec<FactorSpec>, free_rank: usize) -> Arc<Presentation> {
        assert!(
            !factors.is_empty() || free_rank > 0,
            "presentation must have at least one factor or free generator"
        );
        assert!(factors.iter().all(|f| f.rank >= 1), "factor ranks must be >= 1");
        Arc::new(Presentation { factors, free_rank, aliases: BTreeMap::new() })
    }

    /// Convenience constructor with aliases given as `(name, canonical)` pairs.
    pub fn with_aliases(
        factors: Vec<FactorSpec>,
        free_rank: usize,
        aliases: &[(&str, &str)],
    ) -> Result<Arc<Presentation>> {
        let mut p = Presentation { factors, free_rank, aliases: BTreeMap::new() };
        for (name, canon) in aliases {
            let g = p.lookup_canonical(canon).ok_or_else(|| Error::UnknownGenerator(canon.to_string()))?;
            p.aliases.insert(name.to_string(), g);
        }
        Ok(Arc::new(p))
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Complexity `xi = 2k + 3N - 3` and the sporadic flag.
    pub fn complexity(&self) -> (i64, bool) {
        let k = self.factors.len() as i64;
        let n = self.free_rank as i64;
        let xi = 2 * k + 3 * n - 3;
        let sporadic = matches!((k, n), (0, 0) | (1, 0) | (0, 1) | (2, 0) | (1, 1));
        (xi, sporadic)
    }

    pub fn canonical_name(&self, g: Gen) -> String {
        match g {
            Gen::Factor { factor, index } => format!("a{}.{}", factor + 1, index + 1),
            Gen::Free { index } => format!("x{}", index + 1),
        }
    }

    fn lookup_canonical(&self, name: &str) -> Option<Gen> {
        if let Some(rest) = name.strip_prefix('a') {
            let (i, j) = rest.split_once('.')?;
            let factor = i.parse::<usize>().ok()?.checked_sub(1)?;
            let index = j.parse::<usize>().ok()?.checked_sub(1)?;
            if factor < self.factors.len() && index < self.factors[factor].rank {
                return Some(Gen::Factor { factor, index });
            }
            return None;
        }
        if let Some(rest) = name.strip_prefix('x') {
            let index = rest.parse::<usize>().ok()?.checked_sub(1)?;
            if index < self.free_rank {
                return Some(Gen::Free { index });
            }
        }
        None
    }

    /// Resolves a user name: alias first, then canonical.
    pub fn lookup(&self, name: &str) -> Option<Gen> {
        self.aliases.get(name).copied().or_else(|| self.lookup_canonical(name))
    }

    /// Preferred display name for a generator (shortest alias if any).
    pub fn display_name(&self, g: Gen) -> String {
        self.aliases
            .iter()
            .filter(|(_, gen)| **gen == g)
            .map(|(name, _)| name.clone())
            .min_by_key(|n| (n.len(), n.clone()))
            .unwrap_or_else(|| self.canonical_name(g))
    }

    /// All generators in canonical order (factors first, then free).
    pub fn generators(&self) -> Vec<Gen> {
        let mut out = Vec::new();
        for (factor, spec) in self.factors.iter().enumerate() {
            for index in 0..spec.rank {
                out.push(Gen::Factor { factor, index });
            }
        }
        for index in 0..self.free_rank {
            out.push(Gen::Free { index });
        }
        out
    }
}

/// Payload of a factor element: reduced word for free factors, exponent
/// vector for free-abelian factors. Letters in `Word` are 1-based signed
/// generator indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Payload {
    Word(Vec<i32>),
    Vector(Vec<i64>),
}

/// A nontrivial-or-trivial element of one peripheral factor in normal form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactorElement {
    pub factor: usize,
    pub payload: Payload,
}

fn reduce_free_word(letters: &[i32]) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::with_capacity(letters.len());
    for &l in letters {
        if l == 0 {
            continue;
        }
        if out.last().is_some_and(|&p| p == -l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

impl FactorElement {
    pub fn identity(p: &Presentation, factor: usize) -> FactorElement {
        match p.factors[factor].kind {
            FactorKind::Free => FactorElement { factor, payload: Payload::Word(Vec::new()) },
            FactorKind::FreeAbelian => {
                FactorElement { factor, payload: Payload::Vector(vec![0; p.factors[factor].rank]) }
            }
        }
    }

    pub fn generator(p: &Presentation, factor: usize, index: usize, exp: i64) -> FactorElement {
        match p.factors[factor].kind {
            FactorKind::Free => {
                let letter = (index + 1) as i32;
                let n = exp.unsigned_abs() as usize;
                let l = if exp >= 0 { letter } else { -letter };
                FactorElement { factor, payload: Payload::Word(vec![l; n]) }
            }
            FactorKind::FreeAbelian => {
                let mut v = vec![0; p.factors[factor].rank];
                v[index] = exp;
                FactorElement { factor, payload: Payload::Vector(v) }
            }
        }
    }

    pub fn is_trivial(&self) -> bool {
        match &self.payload {
            Payload::Word(w) => w.is_empty(),
            Payload::Vector(v) => v.iter().all(|&e| e == 0),
        }
    }

    pub fn mul(&self, other: &FactorElement) -> FactorElement {
        assert_eq!(self.factor, other.factor, "factor elements from different factors");
        let payload = match (&self.payload, &other.payload) {
            (Payload::Word(a), Payload::Word(b)) => {
                let mut w = a.clone();
                w.extend_from_slice(b);
                Payload::Word(reduce_free_word(&w))
            }
            (Payload::Vector(a), Payload::Vector(b)) => {
                Payload::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => unreachable!("mismatched payloads within one factor"),
        };
        FactorElement { factor: self.factor, payload }
    }

    pub fn inverse(&self) -> FactorElement {
        let payload = match &self.payload {
            Payload::Word(w) => Payload::Word(w.iter().rev().map(|&l| -l).collect()),
            Payload::Vector(v) => Payload::Vector(v.iter().map(|&e| -e).collect()),
        };
        FactorElement { factor: self.factor, payload }
    }

    /// Expands the element into generator symbols, merging runs.
    pub fn symbols(&self) -> Vec<(usize, i64)> {
        match &self.payload {
            Payload::Word(w) => {
                let mut out: Vec<(usize, i64)> = Vec::new();
                for &l in w {
                    let sym = ((l.unsigned_abs() as usize) - 1, if l > 0 { 1 } else { -1 });
                    match out.last_mut() {
                        Some((idx, exp)) if *idx == sym.0 && exp.signum() == sym.1 => *exp += sym.1,
                        _ => out.push(sym),
                    }
                }
                out
            }
            Payload::Vector(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &e)| e != 0)
                .map(|(i, &e)| (i, e))
                .collect(),
        }
    }
}

/// One syllable of a normal word.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Syllable {
    Factor(FactorElement),
    Free { gen: usize, pow: i64 },
}

impl Syllable {
    fn is_trivial(&self) -> bool {
        match self {
            Syllable::Factor(fe) => fe.is_trivial(),
            Syllable::Free { pow, .. } => *pow == 0,
        }
    }

    fn mergeable(&self, other: &Syllable) -> bool {
        match (self, other) {
            (Syllable::Factor(a), Syllable::Factor(b)) => a.factor == b.factor,
            (Syllable::Free { gen: a, .. }, Syllable::Free { gen: b, .. }) => a == b,
            _ => false,
        }
    }

    fn merge(&self, other: &Syllable) -> Syllable {
        match (self, other) {
            (Syllable::Factor(a), Syllable::Factor(b)) => Syllable::Factor(a.mul(b)),
            (Syllable::Free { gen, pow: p }, Syllable::Free { pow: q, .. }) => {
                Syllable::Free { gen: *gen, pow: p + q }
            }
            _ => unreachable!(),
        }
    }

    fn inverse(&self) -> Syllable {
        match self {
            Syllable::Factor(fe) => Syllable::Factor(fe.inverse()),
            Syllable::Free { gen, pow } => Syllable::Free { gen: *gen, pow: -pow },
        }
    }
}

/// A signed generator symbol, the raw input of [`normalize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub gen: Gen,
    pub exp: i64,
}

/// An element of `G` in free-product normal form. The identity is the empty
/// syllable sequence.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormalWord {
    pub syllables: Vec<Syllable>,
}

impl NormalWord {
    pub fn identity() -> NormalWord {
        NormalWord { syllables: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn syllable_len(&self) -> usize {
        self.syllables.len()
    }

    fn push_reduced(syllables: &mut Vec<Syllable>, s: Syllable) {
        if s.is_trivial() {
            return;
        }
        if let Some(last) = syllables.last() {
            if last.mergeable(&s) {
                let merged = last.merge(&s);
                syllables.pop();
                Self::push_reduced(syllables, merged);
                return;
            }
        }
        syllables.push(s);
    }

    fn from_syllables(iter: impl IntoIterator<Item = Syllable>) -> NormalWord {
        let mut syllables = Vec::new();
        for s in iter {
            Self::push_reduced(&mut syllables, s);
        }
        NormalWord { syllables }
    }

    pub fn single(s: Syllable) -> NormalWord {
        Self::from_syllables([s])
    }

    pub fn multiply(&self, other: &NormalWord) -> NormalWord {
        Self::from_syllables(self.syllables.iter().chain(other.syllables.iter()).cloned())
    }

    pub fn invert(&self) -> NormalWord {
        NormalWord { syllables: self.syllables.iter().rev().map(|s| s.inverse()).collect() }
    }

    pub fn pow(&self, n: i64) -> NormalWord {
        let base = if n >= 0 { self.clone() } else { self.invert() };
        let mut out = NormalWord::identity();
        for _ in 0..n.unsigned_abs() {
            out = out.multiply(&base);
        }
        out
    }

    pub fn conjugate(&self, by: &NormalWord) -> NormalWord {
        by.multiply(self).multiply(&by.invert())
    }

    /// Writes `self = conjugator * core * conjugator^-1` with a cyclically
    /// reduced core.
    pub fn cyclically_reduce(&self) -> Result<(NormalWord, NormalWord)> {
        if self.is_identity() {
            return Err(Error::IdentityWord);
        }
        let mut conj = NormalWord::identity();
        let mut core = self.clone();
        loop {
            if core.syllables.len() < 2 {
                break;
            }
            let first = core.syllables.first().unwrap().clone();
            let last = core.syllables.last().unwrap().clone();
            if !last.mergeable(&first) {
                break;
            }
            // core = s u t with t,s mergeable: core -> u (t s), conj -> conj s
            let inner: Vec<Syllable> = core.syllables[1..core.syllables.len() - 1].to_vec();
            let tail = last.merge(&first);
            let mut syl = Vec::new();
            for s in inner {
                Self::push_reduced(&mut syl, s);
            }
            Self::push_reduced(&mut syl, tail);
            conj = conj.multiply(&NormalWord::single(first));
            core = NormalWord { syllables: syl };
            if core.is_identity() {
                // fully cancels: the word was conj * conj^-1 = 1, impossible
                // since self is not the identity unless the loop consumed it.
                break;
            }
        }
        Ok((conj, core))
    }

    /// Peripheral status: `Trivial`, `Peripheral(factor)` for conjugates into
    /// a factor, `NonPeripheral` otherwise.
    pub fn peripheral_status(&self) -> PeripheralStatus {
        if self.is_identity() {
            return PeripheralStatus::Trivial;
        }
        let (_, core) = self.cyclically_reduce().expect("nonidentity");
        if core.syllables.len() == 1 {
            if let Syllable::Factor(fe) = &core.syllables[0] {
                return PeripheralStatus::Peripheral(fe.factor);
            }
        }
        PeripheralStatus::NonPeripheral
    }

    pub fn is_peripheral(&self) -> Option<usize> {
        match self.peripheral_status() {
            PeripheralStatus::Peripheral(f) => Some(f),
            _ => None,
        }
    }

    /// Expands into raw symbols (inverse of [`normalize`] up to reduction).
    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        for s in &self.syllables {
            match s {
                Syllable::Factor(fe) => {
                    for (index, exp) in fe.symbols() {
                        out.push(Symbol { gen: Gen::Factor { factor: fe.factor, index }, exp });
                    }
                }
                Syllable::Free { gen, pow } => {
                    out.push(Symbol { gen: Gen::Free { index: *gen }, exp: *pow });
                }
            }
        }
        out
    }

    pub fn display(&self, p: &Presentation) -> String {
        if self.is_identity() {
            return "1".to_string();
        }
        let parts: Vec<String> = self
            .symbols()
            .iter()
            .map(|s| {
                let name = p.display_name(s.gen);
                if s.exp == 1 {
                    name
                } else {
                    format!("{}^{}", name, s.exp)
                }
            })
            .collect();
        parts.join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeripheralStatus {
    Trivial,
    Peripheral(usize),
    NonPeripheral,
}

/// Builds the normal form of a raw symbol sequence.
pub fn normalize(raw: &[Symbol], p: &Presentation) -> NormalWord {
    NormalWord::from_syllables(raw.iter().map(|s| match s.gen {
        Gen::Factor { factor, index } => {
            Syllable::Factor(FactorElement::generator(p, factor, index, s.exp))
        }
        Gen::Free { index } => Syllable::Free { gen: index, pow: s.exp },
    }))
}

/// Parses the word grammar: whitespace-separated tokens `name` or
/// `name^<integer>`.
pub fn parse_word(text: &str, p: &Presentation) -> Result<NormalWord> {
    let mut raw = Vec::new();
    for token in text.split_whitespace() {
        if token == "1" {
            continue;
        }
        let (name, exp) = match token.split_once('^') {
            Some((n, e)) => {
                let exp: i64 = e.parse().map_err(|_| Error::Parse(format!("bad exponent in `{token}`")))?;
                (n, exp)
            }
            None => (token, 1),
        };
        let gen = p.lookup(name).ok_or_else(|| Error::UnknownGenerator(name.to_string()))?;
        raw.push(Symbol { gen, exp });
    }
    Ok(normalize(&raw, p))
}

/// Report on the subgroup of one factor generated by a list of elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorSubgroupReport {
    pub factor: usize,
    pub generators: Vec<FactorElement>,
    pub is_trivial: bool,
    pub equals_whole_factor: bool,
    /// Rank of the subgroup (free kind: rank of the folded core; abelian
    /// kind: rank of the lattice).
    pub rank: usize,
    /// Index in the factor when finite, `None` when infinite.
    pub index: Option<u64>,
}

/// Decides triviality, whole-factor equality, rank and index for the
/// subgroup generated by `gens` inside one factor. Free factors go through
/// Stallings folding, free-abelian ones through integer row reduction.
pub fn factor_subgroup(p: &Presentation, gens: &[FactorElement]) -> Result<FactorSubgroupReport> {
    let factors: std::collections::BTreeSet<usize> = gens.iter().map(|g| g.factor).collect();
    if factors.len() > 1 {
        return Err(Error::MixedFactors);
    }
    let factor = factors.iter().next().copied().unwrap_or(0);
    let nontrivial: Vec<&FactorElement> = gens.iter().filter(|g| !g.is_trivial()).collect();
    if nontrivial.is_empty() {
        return Ok(FactorSubgroupReport {
            factor,
            generators: gens.to_vec(),
            is_trivial: true,
            equals_whole_factor: p.factors.get(factor).is_none(),
            rank: 0,
            index: None,
        });
    }
    let spec = p.factors[factor];
    let (rank, equals_whole, index) = match spec.kind {
        FactorKind::Free => {
            let words: Vec<Vec<i32>> = nontrivial
                .iter()
                .map(|g| match &g.payload {
                    Payload::Word(w) => w.clone(),
                    Payload::Vector(_) => unreachable!(),
                })
                .collect();
            fold_subgroup(spec.rank, &words)
        }
        FactorKind::FreeAbelian => {
            let rows: Vec<Vec<i64>> = nontrivial
                .iter()
                .map(|g| match &g.payload {
                    Payload::Vector(v) => v.clone(),
                    Payload::Word(_) => unreachable!(),
                })
                .collect();
            lattice_reduce(spec.rank, &rows)
        }
    };
    Ok(FactorSubgroupReport {
        factor,
        generators: gens.to_vec(),
        is_trivial: false,
        equals_whole_factor: equals_whole,
        rank,
        index,
    })
}

/// Stallings folding of the wedge of generator words. Returns
/// (rank, equals whole factor, index when finite).
fn fold_subgroup(ambient_rank: usize, words: &[Vec<i32>]) -> (usize, bool, Option<u64>) {
    // Graph: vertices 0.., edges (from, to, label in 1..=ambient_rank).
    // Union-find for fold identifications.
    let mut parent: Vec<usize> = vec![0]; // base vertex
    let mut edges: Vec<(usize, usize, i32)> = Vec::new();
    for w in words {
        let mut cur = 0usize;
        for (pos, &l) in w.iter().enumerate() {
            let next = if pos + 1 == w.len() {
                0
            } else {
                parent.push(parent.len());
                parent.len() - 1
            };
            if l > 0 {
                edges.push((cur, next, l));
            } else {
                edges.push((next, cur, -l));
            }
            cur = next;
        }
    }
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // Fold until no two edges with the same label share an endpoint.
    loop {
        let mut merged = false;
        let mut seen_out: BTreeMap<(usize, i32), usize> = BTreeMap::new();
        let mut seen_in: BTreeMap<(usize, i32), usize> = BTreeMap::new();
        for &(f, t, l) in &edges {
            let (fr, tr) = (find(&mut parent, f), find(&mut parent, t));
            if let Some(&other) = seen_out.get(&(fr, l)) {
                let o = find(&mut parent, other);
                if o != tr {
                    parent[o.max(tr)] = o.min(tr);
                    merged = true;
                    break;
                }
            } else {
                seen_out.insert((fr, l), tr);
            }
            if let Some(&other) = seen_in.get(&(tr, l)) {
                let o = find(&mut parent, other);
                if o != fr {
                    parent[o.max(fr)] = o.min(fr);
                    merged = true;
                    break;
                }
            } else {
                seen_in.insert((tr, l), fr);
            }
        }
        if !merged {
            break;
        }
    }
    // Collapse to representative vertices, dedupe parallel folded edges.
    let mut vset: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    let mut eset: std::collections::BTreeSet<(usize, usize, i32)> = std::collections::BTreeSet::new();
    let base = find(&mut parent, 0);
    vset.insert(base);
    for &(f, t, l) in &edges.clone() {
        let (fr, tr) = (find(&mut parent, f), find(&mut parent, t));
        vset.insert(fr);
        vset.insert(tr);
        eset.insert((fr, tr, l));
    }
    // Prune non-base degree-1 vertices (core graph).
    loop {
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for &(f, t, _) in &eset {
            *degree.entry(f).or_insert(0) += 1;
            *degree.entry(t).or_insert(0) += 1;
        }
        let prune: Vec<usize> = vset
            .iter()
            .copied()
            .filter(|&v| v != base && degree.get(&v).copied().unwrap_or(0) <= 1)
            .collect();
        if prune.is_empty() {
            break;
        }
        for v in prune {
            vset.remove(&v);
            eset.retain(|&(f, t, _)| f != v && t != v);
        }
    }
    let v = vset.len();
    let e = eset.len();
    let rank = e + 1 - v.min(e + 1);
    // Covering test: every vertex has exactly one in- and one out-edge per label.
    let mut complete = true;
    for &vx in &vset {
        for l in 1..=ambient_rank as i32 {
            let outs = eset.iter().filter(|&&(f, _, el)| f == vx && el == l).count();
            let ins = eset.iter().filter(|&&(_, t, el)| t == vx && el == l).count();
            if outs != 1 || ins != 1 {
                complete = false;
            }
        }
    }
    let index = if complete { Some(v as u64) } else { None };
    let equals_whole = complete && v == 1;
    (rank, equals_whole, index)
}

/// Integer row reduction of the exponent lattice. Returns
/// (rank, equals whole factor, index when finite).
fn lattice_reduce(ambient_rank: usize, rows: &[Vec<i64>]) -> (usize, bool, Option<u64>) {
    let mut m: Vec<Vec<i64>> = rows.to_vec();
    let (nr, nc) = (m.len(), ambient_rank);
    let mut pivot_row = 0usize;
    for col in 0..nc {
        // Euclidean elimination in this column below pivot_row.
        loop {
            let mut best: Option<(usize, i64)> = None;
            for r in pivot_row..nr {
                let v = m[r][col];
                if v != 0 && best.map_or(true, |(_, bv)| v.abs() < bv.abs()) {
                    best = Some((r, v));
                }
            }
            let Some((br, bv)) = best else { break };
            m.swap(pivot_row, br);
            let mut done = true;
            for r in pivot_row + 1..nr {
                let q = m[r][col] / bv;
                if q != 0 {
                    for c in 0..nc {
                        m[r][c] -= q * m[pivot_row][c];
                    }
                }
                if m[r][col] != 0 {
                    done = false;
                }
            }
            if done {
                pivot_row += 1;
                break;
            }
        }
        if pivot_row == nr {
            break;
        }
    }
    let rank = (0..nr).filter(|&r| m[r].iter().any(|&v| v != 0)).count();
    if rank < ambient_rank {
        return (rank, false, None);
    }
    // Full rank: index = |det| of the pivot matrix (rows echelonized).
    let mut det: i64 = 1;
    let mut used = vec![false; nr];
    for col in 0..nc {
        let r = (0..nr).find(|&r| !used[r] && m[r][col] != 0 && m[r][..col].iter().all(|&v| v == 0));
        match r {
            Some(r) => {
                used[r] = true;
                det = det.saturating_mul(m[r][col]);
            }
            None => return (rank, false, None),
        }
    }
    let index = det.unsigned_abs();
    (rank, index == 1, Some(index))
}

impl fmt::Display for NormalWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .symbols()
            .iter()
            .map(|s| {
                let name = match s.gen {
                    Gen::Factor { factor, index } => format!("a{}.{}", factor + 1, index + 1),
                    Gen::Free { index } => format!("x{}", index + 1),
                };
                if s.exp == 1 {
                    name
                } else {
                    format!("{name}^{}", s.exp)
                }
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Example 4.1 presentation: F(a,b,c) with one rank-1 free factor <a>.
    pub fn ex41() -> Arc<Presentation> {
        Presentation::with_aliases(
            vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
            2,
            &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
        )
        .unwrap()
    }

    #[test]
    fn normalize_free_cancellation() {
        let p = ex41();
        let w = parse_word("b a a^-1 c", &p).unwrap();
        assert_eq!(w, parse_word("b c", &p).unwrap());
    }

    #[test]
    fn normalize_same_factor_merge() {
        let p = ex41();
        assert_eq!(parse_word("a^3 a", &p).unwrap(), parse_word("a^4", &p).unwrap());
    }

    #[test]
    fn normalize_full_cancellation() {
        let p = ex41();
        let w = parse_word("x1 a1.1 x1^-1 x1 a1.1^-1 x1^-1", &p).unwrap();
        assert!(w.is_identity());
    }

    #[test]
    fn multiply_and_invert() {
        let p = ex41();
        let u = parse_word("b a", &p).unwrap();
        let v = parse_word("a^-1 c", &p).unwrap();
        assert_eq!(u.multiply(&v), parse_word("b c", &p).unwrap());
        let w = parse_word("b a c", &p).unwrap();
        assert_eq!(w.invert(), parse_word("c^-1 a^-1 b^-1", &p).unwrap());
        assert!(w.multiply(&w.invert()).is_identity());
        assert_eq!(NormalWord::identity().multiply(&w), w);
    }

    #[test]
    fn cyclic_reduction() {
        let p = ex41();
        let w = parse_word("b a b^-1", &p).unwrap();
        let (conj, core) = w.cyclically_reduce().unwrap();
        assert_eq!(conj, parse_word("b", &p).unwrap());
        assert_eq!(core, parse_word("a", &p).unwrap());
        for text in ["b a c b^-1 a^3 c^-1", "c b c^-1 b^-1"] {
            let w = parse_word(text, &p).unwrap();
            let (conj, core) = w.cyclically_reduce().unwrap();
            assert!(conj.is_identity());
            assert_eq!(core, w);
        }
        // reassembly returns the input
        let w = parse_word("c b a^2 b^-1 c^-1", &p).unwrap();
        let (conj, core) = w.cyclically_reduce().unwrap();
        assert_eq!(conj.multiply(&core).multiply(&conj.invert()), w);
    }

    #[test]
    fn peripheral_detection() {
        let p = ex41();
        assert_eq!(parse_word("a^5", &p).unwrap().is_peripheral(), Some(0));
        assert_eq!(parse_word("b a b^-1", &p).unwrap().is_peripheral(), Some(0));
        assert_eq!(parse_word("b a c b^-1 a^3 c^-1", &p).unwrap().is_peripheral(), None);
        assert_eq!(NormalWord::identity().peripheral_status(), PeripheralStatus::Trivial);
    }

    #[test]
    fn complexity_and_sporadic() {
        let p = ex41();
        assert_eq!(p.complexity(), (5, false));
        let z = Presentation::new(vec![], 1);
        assert_eq!(z.complexity(), (0, true));
        let two = Presentation::new(
            vec![
                FactorSpec { kind: FactorKind::Free, rank: 1 },
                FactorSpec { kind: FactorKind::Free, rank: 1 },
            ],
            0,
        );
        assert_eq!(two.complexity(), (1, true));
    }

    #[test]
    fn subgroup_free_kind() {
        let p = ex41();
        // <a^4> inside <a>: nontrivial, proper, index 4.
        let a4 = FactorElement::generator(&p, 0, 0, 4);
        let rep = factor_subgroup(&p, &[a4]).unwrap();
        assert!(!rep.is_trivial);
        assert!(!rep.equals_whole_factor);
        assert_eq!(rep.rank, 1);
        assert_eq!(rep.index, Some(4));
        // empty generating set
        let rep = factor_subgroup(&p, &[]).unwrap();
        assert!(rep.is_trivial);
        // {a, b} generates F(a, b)
        let p2 = Presentation::new(vec![FactorSpec { kind: FactorKind::Free, rank: 2 }], 1);
        let a = FactorElement::generator(&p2, 0, 0, 1);
        let b = FactorElement::generator(&p2, 0, 1, 1);
        let rep = factor_subgroup(&p2, &[a.clone(), b]).unwrap();
        assert!(rep.equals_whole_factor);
        assert_eq!(rep.index, Some(1));
        // {a, a^2} is <a>, infinite index in F_2
        let a2 = FactorElement::generator(&p2, 0, 0, 2);
        let rep = factor_subgroup(&p2, &[a, a2]).unwrap();
        assert_eq!(rep.rank, 1);
        assert_eq!(rep.index, None);
        assert!(!rep.equals_whole_factor);
    }

    #[test]
    fn subgroup_abelian_kind() {
        let p = Presentation::new(vec![FactorSpec { kind: FactorKind::FreeAbelian, rank: 2 }], 1);
        let e1 = FactorElement::generator(&p, 0, 0, 1);
        let e2 = FactorElement::generator(&p, 0, 1, 1);
        let rep = factor_subgroup(&p, &[e1.clone(), e2.clone()]).unwrap();
        assert!(rep.equals_whole_factor);
        let two_e1 = FactorElement::generator(&p, 0, 0, 2);
        let rep = factor_subgroup(&p, &[two_e1, e2]).unwrap();
        assert!(!rep.equals_whole_factor);
        assert_eq!(rep.index, Some(2));
        assert_eq!(rep.rank, 2);
        let rep = factor_subgroup(&p, &[e1]).unwrap();
        assert_eq!(rep.rank, 1);
        assert_eq!(rep.index, None);
    }

    #[test]
    fn mixed_factors_rejected() {
        let p = Presentation::new(
            vec![
                FactorSpec { kind: FactorKind::Free, rank: 1 },
                FactorSpec { kind: FactorKind::Free, rank: 1 },
            ],
            1,
        );
        let g1 = FactorElement::generator(&p, 0, 0, 1);
        let g2 = FactorElement::generator(&p, 1, 0, 1);
        assert!(matches!(factor_subgroup(&p, &[g1, g2]), Err(Error::MixedFactors)));
    }

    #[test]
    fn power_lengths() {
        let p = ex41();
        let g = parse_word("b a c", &p).unwrap();
        assert_eq!(g.pow(3), g.multiply(&g).multiply(&g));
        assert_eq!(g.pow(-1), g.invert());
        assert!(g.pow(0).is_identity());
    }
}
