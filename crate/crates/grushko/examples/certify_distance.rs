//! Produces and re-checks a projection-distance certificate for a simple
//! element between two seeded random trees in O_L(g).

use grushko::classify::{certify_projection, Supplied};
use grushko::harness::random_tree_in_ol;
use grushko::io::certificate_json;
use grushko::words::{parse_word, Presentation};

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(vec![], 2, &[("a", "x1"), ("b", "x2")])?;
    let g = parse_word("a b", &p)?;
    let l = 4;
    let t0 = random_tree_in_ol(&p, &g, l, 11, 3)?;
    let t1 = random_tree_in_ol(&p, &g, l, 12, 3)?;
    println!("|g|_T0 = {}, |g|_T1 = {}", t0.comb_length(&g)?, t1.comb_length(&g)?);
    let cert = certify_projection(&p, &g, &t0, &t1, &Supplied::default())?;
    println!(
        "certificate: length {} within bound {} ({:?})",
        cert.length(),
        cert.claimed_bound,
        cert.bound_name
    );
    cert.validate()?;
    println!("independent checker: pass");
    let json = certificate_json(&cert, l as u64);
    println!("serialized bytes: {}", serde_json::to_string(&json).expect("json").len());
    Ok(())
}
