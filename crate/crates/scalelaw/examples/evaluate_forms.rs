//! Build a form by hand, evaluate it, and inspect its exact gradients.
//!
//! Run with: cargo run --example evaluate_forms

use scalelaw::forms::eval::eval_form;
use scalelaw::forms::grad::grad_form;
use scalelaw::forms::{Break, FormKind, FormSpec, MbnslParams, ParamSet};

fn main() -> scalelaw::Result<()> {
    // A single broken-power-law kernel over two inputs: a plateau that
    // bends into a joint power-law decay once x1^0.6 x2^0.4 passes e^5.
    let spec = FormSpec::new(FormKind::A1, 2);
    let mut params = ParamSet::default();
    params.insert_kernel(MbnslParams {
        kernel_id: 0,
        index_set: vec![1, 2],
        log_offset: 0.0,
        init_exponents: vec![0.0, 0.0],
        breaks: vec![Break {
            exponents: vec![0.6, 0.4],
            log_location: 5.0,
            sharpness: 1.0,
        }],
    });

    println!("{:>12} {:>12} {:>14}", "x1", "x2", "y");
    for exp in 0..7 {
        let x = 10f64.powi(exp);
        let y = eval_form(&spec, &params, &[x, x])?;
        println!("{:>12.0} {:>12.0} {:>14.6e}", x, x, y);
    }

    // Gradients with respect to every stored constant and both inputs,
    // from the reverse-mode tape (exact, not finite differences).
    let x = [1e4, 1e4];
    let (dparams, dx) = grad_form(&spec, &params, &x)?;
    println!("\nat x = {x:?}:");
    println!("  dy/dx1 = {:+.3e}, dy/dx2 = {:+.3e}", dx[0], dx[1]);
    println!("  dy/d(log_offset) = {:+.3e}", dparams[0]);
    println!("  dy/d(break sharpness) = {:+.3e}", dparams[5]);
    Ok(())
}
