//! Short loxodromic cut pairs: search along annular Whitehead graphs and
//! pigeonhole extraction of a bounded-length element with the same axis.

use grushko::classify::{extract_short_element, find_short_cut_pair};
use grushko::words::{parse_word, Presentation};

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(vec![], 3, &[("a", "x1"), ("b", "x2"), ("c", "x3")])?;
    let g = parse_word("a^2 b^2 a^2 b^2 c^2", &p)?;
    let h = parse_word("a^2 b^2", &p)?;
    println!("searching cut pairs for g = {} up to radius 4", g.display(&p));
    for cand in find_short_cut_pair(&p, &g, 4, 200_000)? {
        println!(
            "  candidate a = {} (|a|_T = {}, annular components {:?})",
            cand.a.display(&p),
            cand.comb_length,
            cand.component_count
        );
    }
    let ex = extract_short_element(&p, &g, &h, 500_000)?;
    println!(
        "extracted from the axis of {}: a = {} with |a|_T = {} <= R0 = {}, components {:?}, same axis: {}",
        h.display(&p),
        ex.a.display(&p),
        ex.comb_length,
        ex.r0,
        ex.component_count,
        ex.axis_matches
    );
    Ok(())
}
