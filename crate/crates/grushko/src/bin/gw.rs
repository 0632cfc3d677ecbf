//! Thin command-line front end over the grushko library.
//!
//! Exit codes: 0 success, 1 domain/validation failure, 2 usage error.

use clap::{Args, Parser, Subcommand};
use grushko::classify::{
    certify_projection, find_short_cut_pair, is_quadratic, is_simple, SimplicityWitness, Supplied,
};
use grushko::harness::{env_budget, env_seed, random_tree_in_ol, survey, ElementSource, SurveyConfig};
use grushko::io::{
    certificate_from_json, certificate_json, parse_presentation, parse_tree,
    tree_to_text, whitehead_to_dot,
};
use grushko::tree::GrushkoTree;
use grushko::whitehead::{
    edge_cut_components, vertex_whitehead, whitehead_reduce, LineCollection, ReduceOutcome,
};
use grushko::words::{NormalWord, Presentation};
use serde_json::json;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "gw", about = "Decision procedures on Grushko trees of free products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PresentationArg {
    /// Presentation file (a `presentation { ... }` block).
    #[arg(long)]
    presentation: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a word and report its peripheral status.
    Parse {
        #[command(flatten)]
        pres: PresentationArg,
        #[arg(long)]
        word: String,
    },
    /// Combinatorial length of a word in a tree.
    Length {
        /// Tree file; defaults to the standard rose of --presentation.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        presentation: Option<PathBuf>,
        #[arg(long)]
        word: String,
    },
    /// Whitehead graph of a line collection at a vertex.
    Whitehead {
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        presentation: Option<PathBuf>,
        /// File of line generator words, one per line.
        #[arg(long)]
        lines: PathBuf,
        /// Vertex name (default: the base vertex).
        #[arg(long)]
        vertex: Option<String>,
        /// Write DOT output here.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Whitehead reduction of a tree for a line collection.
    Reduce {
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        presentation: Option<PathBuf>,
        #[arg(long)]
        lines: PathBuf,
        /// Write the resulting tree here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simplicity verdict for a word.
    Simple {
        #[command(flatten)]
        pres: PresentationArg,
        #[arg(long)]
        word: String,
    },
    /// Quadraticity verdict for a non-simple word.
    Quadratic {
        #[command(flatten)]
        pres: PresentationArg,
        #[arg(long)]
        word: String,
    },
    /// Search for short loxodromic cut pairs.
    Cutpair {
        #[command(flatten)]
        pres: PresentationArg,
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 4)]
        radius: usize,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Produce or check a projection-distance certificate.
    Certify {
        #[arg(long)]
        presentation: Option<PathBuf>,
        #[arg(long)]
        word: Option<String>,
        #[arg(long)]
        tree0: Option<PathBuf>,
        #[arg(long)]
        tree1: Option<PathBuf>,
        /// Check an existing certificate JSON instead of producing one.
        #[arg(long)]
        check: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded survey over elements: classification and certificates.
    Survey {
        #[command(flatten)]
        pres: PresentationArg,
        /// File of words, one per line; otherwise random elements.
        #[arg(long)]
        elements: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long, default_value_t = 4)]
        l: usize,
        #[arg(long, default_value_t = 4)]
        radius: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Edge cut set component count for a reduced tree.
    Edgecut {
        #[command(flatten)]
        pres: PresentationArg,
        #[arg(long)]
        word: String,
        #[arg(long)]
        edge: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Seeded random tree in O_L(g).
    RandomTree {
        #[command(flatten)]
        pres: PresentationArg,
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 4)]
        l: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> grushko::Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn load_presentation(path: &PathBuf) -> grushko::Result<Arc<Presentation>> {
    parse_presentation(&read(path)?)
}

fn load_tree(
    tree: &Option<PathBuf>,
    presentation: &Option<PathBuf>,
) -> grushko::Result<(Arc<Presentation>, GrushkoTree)> {
    match tree {
        Some(path) => {
            let parsed = parse_tree(&read(path)?)?;
            Ok((parsed.tree.presentation.clone(), parsed.tree))
        }
        None => {
            let path = presentation.as_ref().ok_or_else(|| {
                grushko::Error::Parse("need --tree or --presentation".into())
            })?;
            let p = load_presentation(path)?;
            let t = GrushkoTree::standard_rose(&p)?;
            Ok((p, t))
        }
    }
}

fn load_lines(path: &PathBuf, p: &Arc<Presentation>) -> grushko::Result<LineCollection> {
    let text = read(path)?;
    let words: grushko::Result<Vec<NormalWord>> = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| grushko::words::parse_word(l, p))
        .collect();
    LineCollection::new(p, &words?)
}

fn emit(path: &Option<PathBuf>, content: &str) -> grushko::Result<()> {
    match path {
        Some(p) => std::fs::write(p, content)?,
        None => println!("{content}"),
    }
    Ok(())
}

fn run(cli: Cli) -> grushko::Result<()> {
    match cli.command {
        Command::Parse { pres, word } => {
            let p = load_presentation(&pres.presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let status = match w.peripheral_status() {
                grushko::words::PeripheralStatus::Trivial => "trivial".to_string(),
                grushko::words::PeripheralStatus::Peripheral(f) => format!("peripheral(factor{f})"),
                grushko::words::PeripheralStatus::NonPeripheral => "non-peripheral".to_string(),
            };
            println!("{}", json!({ "normal_form": w.display(&p), "status": status }));
        }
        Command::Length { tree, presentation, word } => {
            let (p, t) = load_tree(&tree, &presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let n = t.comb_length(&w)?;
            println!("{}", json!({ "word": w.display(&p), "length": n }));
        }
        Command::Whitehead { tree, presentation, lines, vertex, dot } => {
            let (p, t) = load_tree(&tree, &presentation)?;
            let lines = load_lines(&lines, &p)?;
            let v = match vertex {
                Some(name) => t
                    .graph
                    .vertex_names
                    .iter()
                    .position(|n| *n == name)
                    .ok_or_else(|| grushko::Error::Parse(format!("unknown vertex `{name}`")))?,
                None => t.base,
            };
            let w = vertex_whitehead(&t, &lines, v);
            let dot_text = whitehead_to_dot(&t, &w);
            if let Some(path) = dot {
                std::fs::write(path, &dot_text)?;
            } else {
                print!("{dot_text}");
            }
        }
        Command::Reduce { tree, presentation, lines, out } => {
            let (p, t) = load_tree(&tree, &presentation)?;
            let lines = load_lines(&lines, &p)?;
            match whitehead_reduce(&t, &lines)? {
                ReduceOutcome::UncrossedEdge { tree, edge, moves, .. } => {
                    println!(
                        "{}",
                        json!({
                            "outcome": "uncrossed-edge",
                            "edge": tree.graph.edge_names[edge],
                            "moves": moves.len(),
                        })
                    );
                    emit(&out, &tree_to_text(&tree))?;
                }
                ReduceOutcome::Reduced { tree, moves } => {
                    println!("{}", json!({ "outcome": "reduced", "moves": moves.len() }));
                    emit(&out, &tree_to_text(&tree))?;
                }
            }
        }
        Command::Simple { pres, word } => {
            let p = load_presentation(&pres.presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let verdict = is_simple(&p, &w)?;
            let out = match &verdict.witness {
                SimplicityWitness::Simple { uncrossed, tree, moves, .. } => json!({
                    "verdict": "simple",
                    "uncrossed_edge": tree.graph.edge_names[*uncrossed],
                    "moves": moves.len(),
                }),
                SimplicityWitness::NotSimple { reduced_tree, moves } => json!({
                    "verdict": "not-simple",
                    "reduced_edges": reduced_tree.graph.edge_pair_count(),
                    "moves": moves.len(),
                }),
            };
            println!("{out}");
        }
        Command::Quadratic { pres, word } => {
            let p = load_presentation(&pres.presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let v = is_quadratic(&p, &w)?;
            println!(
                "{}",
                json!({
                    "verdict": if v.is_quadratic { "quadratic" } else { "not-quadratic" },
                    "edge_crossings": v.per_edge_crossings,
                    "vertex_circles": v.per_vertex_circle,
                })
            );
        }
        Command::Cutpair { pres, word, radius, budget } => {
            let p = load_presentation(&pres.presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let budget = budget.unwrap_or_else(env_budget);
            let cands = find_short_cut_pair(&p, &w, radius, budget)?;
            println!(
                "{}",
                json!({
                    "candidates": cands.iter().map(|c| json!({
                        "a": c.a.display(&p),
                        "length": c.comb_length,
                        "components": format!("{:?}", c.component_count),
                    })).collect::<Vec<_>>(),
                })
            );
        }
        Command::Certify { presentation, word, tree0, tree1, check, out } => {
            if let Some(path) = check {
                let v: serde_json::Value = serde_json::from_str(&read(&path)?)
                    .map_err(|e| grushko::Error::Parse(e.to_string()))?;
                let cert = certificate_from_json(&v)?;
                cert.validate()?;
                println!(
                    "{}",
                    json!({ "check": "pass", "length": cert.length(), "bound": cert.claimed_bound })
                );
                return Ok(());
            }
            let word = word.ok_or_else(|| grushko::Error::Parse("need --word".into()))?;
            let (p, t0) = load_tree(&tree0, &presentation)?;
            let t1 = match &tree1 {
                Some(path) => parse_tree(&read(path)?)?.tree,
                None => t0.clone(),
            };
            let w = grushko::words::parse_word(&word, &p)?;
            let l = t0.comb_length(&w)?.max(t1.comb_length(&w)?) as u64;
            let cert = certify_projection(&p, &w, &t0, &t1, &Supplied::default())?;
            let j = certificate_json(&cert, l);
            emit(&out, &serde_json::to_string_pretty(&j).expect("json"))?;
        }
        Command::Survey { pres, elements, count, max_len, l, radius, seed, budget, workers, out } => {
            let p = load_presentation(&pres.presentation)?;
            let source = match elements {
                Some(path) => {
                    let text = read(&path)?;
                    let words: grushko::Result<Vec<NormalWord>> = text
                        .lines()
                        .map(|s| s.trim())
                        .filter(|s| !s.is_empty() && !s.starts_with('#'))
                        .map(|s| grushko::words::parse_word(s, &p))
                        .collect();
                    ElementSource::Explicit(words?)
                }
                None => ElementSource::Random { count, max_len },
            };
            let config = SurveyConfig {
                elements: source,
                l,
                radius,
                budget: budget.unwrap_or_else(env_budget),
                seed: seed.unwrap_or_else(env_seed),
                workers,
            };
            let report = survey(&p, &config)?;
            emit(&out, &serde_json::to_string_pretty(&report).expect("json"))?;
        }
        Command::Edgecut { pres, word, edge, budget } => {
            let p = load_presentation(&pres.presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let lines = LineCollection::single(&p, &w)?;
            let rose = GrushkoTree::standard_rose(&p)?;
            let tree = match whitehead_reduce(&rose, &lines)? {
                ReduceOutcome::Reduced { tree, .. } => tree,
                ReduceOutcome::UncrossedEdge { .. } => return Err(grushko::Error::SimpleElement),
            };
            let pair = tree
                .graph
                .edge_names
                .iter()
                .position(|n| *n == edge)
                .ok_or_else(|| grushko::Error::Parse(format!("unknown edge `{edge}`")))?;
            let n = edge_cut_components(&tree, &lines, pair, budget.unwrap_or_else(env_budget))?;
            println!("{}", json!({ "edge": edge, "components": n }));
        }
        Command::RandomTree { pres, word, l, seed, steps, out } => {
            let p = load_presentation(&pres.presentation)?;
            let w = grushko::words::parse_word(&word, &p)?;
            let t = random_tree_in_ol(&p, &w, l, seed.unwrap_or_else(env_seed), steps)?;
            emit(&out, &tree_to_text(&t))?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            std::process::exit(1);
        }
    }
}

