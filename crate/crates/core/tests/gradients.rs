mod common;

use common::{lstm_toy, max_relative_error, mlp_toy, GRAD_FLOOR as FLOOR, GRAD_STEP as STEP};
use plancost::learn::{LstmModel, SequenceInput};

#[test]
fn mlp_gradient_matches_finite_differences() {
    let (model, x, y) = mlp_toy();
    let (_, grad) = model.loss_gradient(&x, &y);
    let mut probe = model.clone();
    let err = max_relative_error(&model.params, &grad, STEP, FLOOR, |p| {
        probe.params.copy_from_slice(p);
        probe.loss(&x, &y)
    });
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn lstm_gradient_matches_finite_differences() {
    for layers in [1, 2] {
        let (model, inputs, y) = lstm_toy(layers);
        let (loss, grad) = model.loss_gradient(&inputs, &y);
        assert_eq!(loss, model.loss(&inputs, &y));
        let mut probe = model.clone();
        let err = max_relative_error(&model.params, &grad, STEP, FLOOR, |p| {
            probe.params.copy_from_slice(p);
            probe.loss(&inputs, &y)
        });
        assert!(err < 1e-3, "{layers} layer(s): max relative error {err}");
    }
}

#[test]
fn zero_lstm_predicts_head_bias() {
    let mut model = LstmModel::zeros(3, 4, 1, 0);
    *model.params.last_mut().unwrap() = 0.25;
    let input = SequenceInput {
        nodes: vec![vec![0.0; 3]],
        semantic: vec![],
    };
    assert_eq!(model.predict(&input).unwrap(), 0.25);
}
