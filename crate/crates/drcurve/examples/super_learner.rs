//! The stacking ensemble on its own: out-of-fold predictions per member,
//! simplex weights minimizing cross-validated loss.

use drcurve::learners::LearnerKind;
use drcurve::stack::{fit_stack, StackLoss};
use drcurve::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> drcurve::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 2000;
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
    let y: Vec<f64> = xs
        .iter()
        .map(|&x| 1.0 + 0.5 * x - 0.4 * x * x + (x * 1.5).sin() + 0.3 * (rng.random::<f64>() - 0.5))
        .collect();
    let mut flat = Vec::with_capacity(n * 2);
    for &x in &xs {
        flat.extend_from_slice(&[1.0, x]);
    }
    let design = Matrix::from_flat(flat, n, 2);

    let kinds = [
        LearnerKind::MeanOnly,
        LearnerKind::MedianOnly,
        LearnerKind::Ols,
        LearnerKind::PolynomialOls { degree: 2 },
        LearnerKind::Lasso,
        LearnerKind::stumps(),
        LearnerKind::splines(),
    ];
    let stack = fit_stack(&kinds, &design, &y, 10, StackLoss::Squared, 7, 1e-9)?;

    println!("member            weight   cv risk");
    for ((kind, w), risk) in stack.kinds.iter().zip(&stack.weights).zip(&stack.cv_risk) {
        println!("{:<18} {:>6.3}   {:>7.4}", kind.label(), w, risk);
    }
    println!("stack out-of-fold risk: {:.4} (never above the best member's)", stack.stack_risk);
    println!("prediction at x = 1.0: {:.4}", stack.predict_row(&[1.0, 1.0]));
    Ok(())
}
