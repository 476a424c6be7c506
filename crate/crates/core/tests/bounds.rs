use adl::staleness::{
    constant_lr, constant_lr_gradient_bound, ergodic_gradient_bound, one_step_descent_bound, BoundInputs,
};

fn toy() -> BoundInputs<f64> {
    BoundInputs {
        lr: 0.1,
        grad_norm_sq: 0.0,
        grad_bound: 1.0,
        lipschitz: 1.0,
        accumulation: 1,
        staleness_sum: 0.0,
        updates: 1,
        initial_gap: 1.0,
        epsilon: 1.0,
    }
}

fn harmonic(updates: usize) -> Vec<f64> {
    (0..updates).map(|s| 1.0 / (s as f64 + 1.0)).collect()
}

#[test]
fn degenerate_one_step_is_zero() {
    let mut inputs = toy();
    inputs.lr = 0.0;
    assert_eq!(one_step_descent_bound(&inputs).unwrap(), 0.0);
}

#[test]
fn harmonic_ergodic_bound_shrinks_towards_zero() {
    let inputs = toy();
    let mut previous = f64::INFINITY;
    let mut values = Vec::new();
    for exp in 1..=6 {
        let s = 10usize.pow(exp);
        let bound = ergodic_gradient_bound(&inputs, &harmonic(s)).unwrap();
        assert!(bound < previous, "S = {s}: {bound} >= {previous}");
        previous = bound;
        values.push(bound);
    }
    // ~ (2 + 2 π²/6) / ln S
    assert!(values[5] < 0.4);
    assert!(values[5] < values[0] / 3.0);
}

#[test]
fn doubling_accumulation_shrinks_the_staleness_term() {
    let mut inputs = toy();
    inputs.staleness_sum = 6.0;
    let schedule = vec![0.1; 20];
    let mut last = f64::INFINITY;
    for m in [1, 2, 4, 8] {
        inputs.accumulation = m;
        let b = ergodic_gradient_bound(&inputs, &schedule).unwrap();
        assert!(b < last);
        last = b;
    }
}

#[test]
fn constant_rate_scaling_laws() {
    let mut inputs = toy();
    inputs.updates = 4;
    let lr4 = constant_lr(&inputs).unwrap().lr;
    let b4 = constant_lr_gradient_bound(&inputs).unwrap();
    inputs.updates = 16;
    assert_eq!(constant_lr(&inputs).unwrap().lr, lr4 / 2.0);
    assert_eq!(constant_lr_gradient_bound(&inputs).unwrap(), b4 / 2.0);
    inputs.updates = 1;
    inputs.lipschitz = 100.0;
    inputs.grad_bound = 0.0001;
    let big = constant_lr(&inputs).unwrap();
    assert!(!big.admissible, "L·γ = {}", 100.0 * big.lr);
}
