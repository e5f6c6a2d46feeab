//! Verify every hand-written backward pass against central finite
//! differences: each layer, each fusion strategy, and the whole model for
//! all fifteen modality-by-fusion combinations.
//!
//! Run with: `cargo run --release --example gradient_check`

use medfuse::gradcheck::run_full_suite;

fn main() -> medfuse::Result<()> {
    let (tol, eps) = (1e-4, 1e-5);
    let started = std::time::Instant::now();
    let report = run_full_suite(tol, eps, &[1, 2, 3])?;

    let mut worst: Option<&medfuse::gradcheck::GroupResult> = None;
    for g in &report.groups {
        if worst.map(|w| g.worst_rel_err > w.worst_rel_err).unwrap_or(true) {
            worst = Some(g);
        }
    }
    println!(
        "{} parameter groups checked in {:?}",
        report.groups.len(),
        started.elapsed()
    );
    if let Some(w) = worst {
        println!("worst relative error: {:e} ({})", w.worst_rel_err, w.name);
    }
    for g in report.failures() {
        println!("FAIL {} {:e}", g.name, g.worst_rel_err);
    }
    println!("all pass at tol {tol:e}: {}", report.all_pass());
    Ok(())
}
