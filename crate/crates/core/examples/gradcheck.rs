//! Compares every analytic gradient against central finite differences and
//! prints the per-component table.

use skelfit::gradcheck::{run, GradcheckConfig};

fn main() -> skelfit::Result<()> {
    let samples = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let report = run(&GradcheckConfig {
        samples,
        ..Default::default()
    })?;
    println!("{report}");
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}
