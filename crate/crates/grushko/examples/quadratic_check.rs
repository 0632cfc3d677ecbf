//! Quadraticity: the circle criterion and the crossed-twice criterion must
//! agree on the reduced tree.

use grushko::classify::is_quadratic;
use grushko::words::{parse_word, FactorKind, FactorSpec, Presentation};

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(
        vec![FactorSpec { kind: FactorKind::Free, rank: 1 }],
        2,
        &[("a", "a1.1"), ("b", "x1"), ("c", "x2")],
    )?;
    let g = parse_word("b a c b^-1 a^3 c^-1", &p)?;
    let v = is_quadratic(&p, &g)?;
    println!(
        "g = {}: quadratic={} edge crossings {:?}",
        g.display(&p),
        v.is_quadratic,
        v.per_edge_crossings
    );
    // the torus-with-three-boundary-components element
    let p9 = Presentation::with_aliases(
        vec![
            FactorSpec { kind: FactorKind::Free, rank: 2 },
            FactorSpec { kind: FactorKind::Free, rank: 1 },
        ],
        2,
        &[("a", "a1.1"), ("b", "a1.2"), ("e", "a2.1"), ("c", "x1"), ("d", "x2")],
    )?;
    let g9 = parse_word("d^-1 a b c d c^-1 e", &p9)?;
    let v9 = is_quadratic(&p9, &g9)?;
    println!("g = {}: quadratic={}", g9.display(&p9), v9.is_quadratic);
    let f2 = Presentation::with_aliases(vec![], 2, &[("a", "x1"), ("b", "x2")])?;
    let w = parse_word("a^2 b^3", &f2)?;
    let v = is_quadratic(&f2, &w)?;
    println!("g = {}: quadratic={}", w.display(&f2), v.is_quadratic);
    Ok(())
}
