//! Shared fixtures for the benchmark targets: simulated training data and
//! fitted models, built once per process.

use nalgebra::{DMatrix, DVector};

use hblr_core::{
    make_supervised, simulate_msd, train_segmented, train_test_split, Dataset, HyperParams,
    SdeConfig, SegmentedModel, TrainOptions,
};

/// The standard oscillator training split: 1340 samples, three input
/// columns (position, velocity, time), two responses.
pub fn msd_training_data() -> Dataset {
    let traj = simulate_msd(&SdeConfig::msd_defaults(7), 3.0, 1.0).expect("simulation");
    let data = make_supervised(&traj, false).expect("supervised pairs");
    let (train, _) = train_test_split(&data, 0.33, 7).expect("split");
    train
}

/// One response column of the training data as a plain (inputs, targets)
/// pair for single-model fitting.
pub fn msd_regression_pair() -> (DMatrix<f64>, DVector<f64>) {
    let train = msd_training_data();
    let targets = train.responses.column(0).into_owned();
    (train.inputs, targets)
}

/// A model fitted on the standard training split, with the hyperparameters
/// it was fitted under.
pub fn fitted_msd() -> (SegmentedModel, HyperParams) {
    let train = msd_training_data();
    let params = HyperParams::default();
    let (model, _) =
        train_segmented(&train, &params, &TrainOptions::default()).expect("training");
    (model, params)
}
