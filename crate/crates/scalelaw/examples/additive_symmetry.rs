//! A two-term additive power law and a single-break kernel are the same
//! function in different coordinates; convert between them and check the
//! tangent hyperplane.
//!
//! Run with: cargo run --example additive_symmetry

use scalelaw::algebra::{additive_to_single_break, single_break_to_additive, tangent_hyperplane, AdditivePair};
use scalelaw::forms::eval::eval_mbnsl;

fn main() -> scalelaw::Result<()> {
    // y = 3.5 x1^{-0.8} x2^{-0.3} + 0.9 x1^{0.1} x2^{0.4}
    let pair = AdditivePair {
        log_b: 3.5f64.ln(),
        c0: vec![0.8, 0.3],
        log_g: 0.9f64.ln(),
        h: vec![0.1, 0.4],
    };
    let kernel = additive_to_single_break(&pair)?;
    println!("single-break form of the pair:");
    println!("  break exponents: {:?}", kernel.breaks[0].exponents);
    println!("  log location:    {:.6}", kernel.breaks[0].log_location);
    println!("  sharpness:       {}", kernel.breaks[0].sharpness);

    println!("\n{:>10} {:>10} {:>14} {:>14}", "x1", "x2", "additive", "kernel");
    for &(x1, x2) in &[(1.0f64, 1.0f64), (10.0, 5.0), (1e3, 1e2), (1e-2, 1e4)] {
        let direct = 3.5 * x1.powf(-0.8) * x2.powf(-0.3) + 0.9 * x1.powf(0.1) * x2.powf(0.4);
        let via = eval_mbnsl(&kernel, &[x1, x2])?;
        println!("{x1:>10.2e} {x2:>10.2e} {direct:>14.8e} {via:>14.8e}");
    }

    let back = single_break_to_additive(&kernel)?;
    println!("\nround trip recovers b = {:.6}, g = {:.6}", back.log_b.exp(), back.log_g.exp());

    // The tangent hyperplane at a point is the local power law the full
    // form looks like there.
    let plane = tangent_hyperplane(&kernel, &[100.0, 100.0])?;
    println!(
        "local power law at (100, 100): exponents {:?}, prefactor {:.4}",
        plane.w_c,
        plane.log_wb.exp()
    );
    Ok(())
}
