//! Runs a small seeded survey over random elements of F(a,b).

use grushko::harness::{survey, ElementSource, SurveyConfig};
use grushko::words::Presentation;

fn main() -> grushko::Result<()> {
    let p = Presentation::with_aliases(vec![], 2, &[("a", "x1"), ("b", "x2")])?;
    let config = SurveyConfig {
        elements: ElementSource::Random { count: 8, max_len: 5 },
        l: 4,
        radius: 2,
        budget: 50_000,
        seed: 5,
        workers: 2,
    };
    let report = survey(&p, &config)?;
    for row in report["rows"].as_array().unwrap() {
        println!(
            "{:<24} {}",
            row["element"].as_str().unwrap_or("?"),
            row["classification"].as_str().unwrap_or("?")
        );
    }
    Ok(())
}
