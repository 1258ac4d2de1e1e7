//! Cross-checks of the simulators against independent references: a
//! fourth-order Runge-Kutta integrator written here from scratch, energy
//! arguments, and eigenvalue analysis of the regulated pendulum loop.

use nalgebra::{DMatrix, DVector};

use hblr_core::sim::{dipc_closed_loop, msd_drift_matrix, simulate_dipc, simulate_msd, SdeConfig};

fn rk4_path(a: &DMatrix<f64>, x0: DVector<f64>, dt: f64, steps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x.clone());
    for _ in 0..steps {
        let k1 = a * &x;
        let k2 = a * (&x + &k1 * (dt / 2.0));
        let k3 = a * (&x + &k2 * (dt / 2.0));
        let k4 = a * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(x.clone());
    }
    out
}

fn noiseless_msd(dt: f64, duration: f64) -> hblr_core::Trajectory {
    let config = SdeConfig {
        dt,
        duration,
        noise: false,
        ..SdeConfig::msd_defaults(0)
    };
    simulate_msd(&config, 3.0, 1.0).unwrap()
}

fn max_abs_state_error(traj: &hblr_core::Trajectory, reference: &[DVector<f64>]) -> f64 {
    assert_eq!(traj.n_states(), reference.len());
    let mut worst: f64 = 0.0;
    for (i, r) in reference.iter().enumerate() {
        for j in 0..traj.state_dim() {
            worst = worst.max((traj.true_states[(i, j)] - r[j]).abs());
        }
    }
    worst
}

#[test]
fn oscillator_euler_path_tracks_a_fourth_order_reference() {
    let a = msd_drift_matrix(3.0, 1.0);
    let x0 = DVector::from_row_slice(&[3.0, 0.0]);

    let coarse = noiseless_msd(0.005, 10.0);
    let err_coarse = max_abs_state_error(&coarse, &rk4_path(&a, x0.clone(), 0.005, 2000));
    assert!(
        err_coarse < 0.2,
        "first-order path drifted {err_coarse} from the reference"
    );

    // Refining the step by 10x should cut the global error by roughly 10x —
    // the signature of a first-order scheme. A second-order scheme would
    // give ~100x, a broken one ~1x.
    let fine = noiseless_msd(0.0005, 10.0);
    let err_fine = max_abs_state_error(&fine, &rk4_path(&a, x0, 0.0005, 20_000));
    let ratio = err_coarse / err_fine;
    assert!(
        ratio > 5.0 && ratio < 20.0,
        "error ratio {ratio} is not first-order (errors {err_coarse} vs {err_fine})"
    );
}

#[test]
fn damped_oscillator_energy_decays() {
    let traj = noiseless_msd(0.005, 10.0);
    let energy: Vec<f64> = (0..traj.n_states())
        .map(|i| {
            let x = traj.true_states[(i, 0)];
            let v = traj.true_states[(i, 1)];
            9.0 * x * x + v * v
        })
        .collect();
    for w in energy.windows(2) {
        assert!(
            w[1] <= w[0] * 1.0005,
            "energy rose from {} to {}",
            w[0],
            w[1]
        );
    }
    assert!(
        energy[energy.len() - 1] / energy[0] < 1e-3,
        "energy only fell to {} of its start",
        energy[energy.len() - 1] / energy[0]
    );
}

#[test]
fn regulated_pendulum_loop_is_stable() {
    let eigenvalues = dipc_closed_loop().complex_eigenvalues();
    let abscissa = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        abscissa < 0.0,
        "closed loop has an unstable mode at {abscissa}"
    );
    // The slowest mode sets the settling time of the whole benchmark.
    assert!(
        (abscissa - (-0.11952)).abs() < 1e-3,
        "slowest closed-loop mode moved to {abscissa}"
    );
}

#[test]
fn regulated_pendulum_returns_to_rest() {
    let config = SdeConfig {
        noise: false,
        ..SdeConfig::dipc_defaults(0)
    };
    let traj = simulate_dipc(&config).unwrap();
    let n = traj.n_states();
    let norm_at = |i: usize| -> f64 {
        (0..6)
            .map(|j| traj.true_states[(i, j)] * traj.true_states[(i, j)])
            .sum::<f64>()
            .sqrt()
    };
    let peak = (0..n).map(norm_at).fold(0.0, f64::max);
    assert!(peak < 10.0, "transient peaked at {peak}");
    let final_norm = norm_at(n - 1);
    assert!(
        final_norm < 1e-9,
        "state only settled to {final_norm} after 200 s"
    );
    // Noise off means the measured path is the true path.
    assert_eq!(traj.measured_states, traj.true_states);
}

#[test]
fn measurement_noise_has_the_declared_spread() {
    let traj = simulate_msd(&SdeConfig::msd_defaults(42), 3.0, 1.0).unwrap();
    let n = traj.n_states();
    for (j, expected) in [0.1, 0.4].into_iter().enumerate() {
        let mut sum_sq = 0.0;
        for i in 0..n {
            let d = traj.measured_states[(i, j)] - traj.true_states[(i, j)];
            sum_sq += d * d;
        }
        let std = (sum_sq / n as f64).sqrt();
        assert!(
            (std - expected).abs() < 0.1 * expected,
            "channel {j}: measured-noise spread {std}, declared {expected}"
        );
    }
}
