use mbnn::data::separable_2d;
use mbnn::network::{init_network, NetworkShape};
use mbnn::trainer::{train, train_margin, train_squared_error, Algorithm, TrainConfig};

fn shape() -> NetworkShape {
    NetworkShape::new(2, 1, 4, 2).unwrap()
}

#[test]
fn margin_trainer_separates_the_fixed_set() {
    let config = TrainConfig {
        epochs: 500,
        ..TrainConfig::default()
    };
    let log = train_margin(&separable_2d(), shape(), &config).unwrap();
    assert_eq!(log.final_train_accuracy(), 1.0);
    assert_eq!(log.per_epoch_objective.len(), 500);
    assert_eq!(log.per_epoch_train_accuracy.len(), 500);
}

#[test]
fn squared_error_trainer_separates_the_fixed_set() {
    let config = TrainConfig {
        epochs: 500,
        algorithm: Algorithm::SquaredError,
        ..TrainConfig::default()
    };
    let log = train_squared_error(&separable_2d(), shape(), &config).unwrap();
    assert_eq!(log.final_train_accuracy(), 1.0);
}

#[test]
fn training_is_deterministic() {
    let config = TrainConfig {
        epochs: 30,
        seed: 3,
        ..TrainConfig::default()
    };
    let data = separable_2d();
    assert_eq!(train(&data, shape(), &config).unwrap(), train(&data, shape(), &config).unwrap());
    let ann = config.with_algorithm(Algorithm::SquaredError);
    assert_eq!(train(&data, shape(), &ann).unwrap(), train(&data, shape(), &ann).unwrap());
}

#[test]
fn zero_learning_rate_keeps_the_initial_network() {
    let config = TrainConfig {
        epochs: 1,
        alpha: 0.0,
        seed: 9,
        ..TrainConfig::default()
    };
    let log = train(&separable_2d(), shape(), &config).unwrap();
    assert_eq!(log.final_network, init_network(shape(), 9));
    let ann = train(&separable_2d(), shape(), &config.with_algorithm(Algorithm::SquaredError)).unwrap();
    assert_eq!(ann.final_network, init_network(shape(), 9));
}

#[test]
fn full_batch_ascent_is_monotone() {
    let config = TrainConfig {
        epochs: 200,
        alpha: 1e-3,
        full_batch: true,
        ..TrainConfig::default()
    };
    let log = train(&separable_2d(), shape(), &config).unwrap();
    for (k, w) in log.per_epoch_objective.windows(2).enumerate() {
        assert!(w[1] - w[0] >= -1e-6, "iteration {k}: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn paper_mode_trains() {
    let config = TrainConfig {
        epochs: 300,
        gradient_mode: mbnn::gradients::GradientMode::Paper,
        ..TrainConfig::default()
    };
    let deep = NetworkShape::new(2, 2, 4, 2).unwrap();
    let log = train(&separable_2d(), deep, &config).unwrap();
    assert!(log.final_network.weights().iter().all(|w| w.as_slice().iter().all(|v| v.is_finite())));
}

#[test]
fn mismatched_inputs_are_rejected() {
    let wrong = NetworkShape::new(3, 1, 4, 2).unwrap();
    assert!(train(&separable_2d(), wrong, &TrainConfig::default()).is_err());
    let too_few_outputs = NetworkShape::new(2, 1, 4, 1).unwrap();
    assert!(train(&separable_2d(), too_few_outputs, &TrainConfig::default()).is_err());
    assert!(train_squared_error(&separable_2d(), shape(), &TrainConfig::default()).is_err());
}
