//! Random check that dominant-material regions are convex cones.

use polycone::synth::theorem_suite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = std::time::Instant::now();
    let instances = theorem_suite(20, 2000, 42, 6, 12)?;
    for (i, inst) in instances.iter().enumerate() {
        let r = &inst.report;
        println!(
            "#{i:2} d = {:2}, m = {}: {} convexity, {} homogeneity, {} membership checks, {} ties, {} counterexamples",
            inst.bands,
            inst.materials,
            r.convexity_checks,
            r.homogeneity_checks,
            r.membership_checks,
            r.ties_skipped,
            r.counterexamples
        );
    }
    let total: usize = instances.iter().map(|i| i.report.counterexamples).sum();
    println!("{total} counterexamples in {:.2}s", clock.elapsed().as_secs_f64());
    Ok(())
}
