//! Stochastic benchmark systems: a mass-spring-damper driven by white noise
//! and an LQR-regulated double inverted pendulum on a cart, both integrated
//! by Euler-Maruyama and wrapped into supervised next-state datasets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::segmentation::Dataset;

/// RNG stream of the process (dynamics) noise.
pub const PROCESS_NOISE_STREAM: u64 = 0;
/// RNG stream of the measurement noise.
pub const MEASUREMENT_NOISE_STREAM: u64 = 1;

/// Mass-spring-damper initial state `[position, velocity]`.
pub const MSD_INITIAL_STATE: [f64; 2] = [3.0, 0.0];
/// Measurement-noise standard deviation per MSD state.
pub const MSD_MEASUREMENT_NOISE_STD: [f64; 2] = [0.1, 0.4];

/// Pendulum-cart initial state `[x, th1, th2, dx, dth1, dth2]`.
pub const DIPC_INITIAL_STATE: [f64; 6] = [0.0, 0.175, -0.175, 0.0, 0.0, 0.0];
/// Measurement-noise standard deviation per pendulum-cart state.
pub const DIPC_MEASUREMENT_NOISE_STD: [f64; 6] = [0.5, 0.3, 0.25, 0.8, 0.3, 0.2];
/// State-feedback gain of the cart controller, `F = -K x`.
pub const DIPC_GAIN: [f64; 6] = [-3.162, 589.127, -842.986, -29.493, 4.469, -133.079];
/// Diagonal of the state-cost matrix the gain was designed for.
pub const DIPC_LQR_STATE_WEIGHTS: [f64; 6] = [10.0, 100.0, 100.0, 700.0, 700.0, 700.0];
/// Control cost the gain was designed for.
pub const DIPC_LQR_CONTROL_WEIGHT: f64 = 1.0;

/// Integration settings shared by both simulators.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig {
    /// Integration step (seconds).
    pub dt: f64,
    /// Total simulated time (seconds); the trajectory holds
    /// `round(duration / dt) + 1` states including both endpoints.
    pub duration: f64,
    /// Seed for the process- and measurement-noise streams.
    pub seed: u64,
    /// Disables both noise sources when false (deterministic dynamics).
    pub noise: bool,
}

impl SdeConfig {
    pub fn msd_defaults(seed: u64) -> Self {
        SdeConfig {
            dt: 0.005,
            duration: 10.0,
            seed,
            noise: true,
        }
    }

    pub fn dipc_defaults(seed: u64) -> Self {
        SdeConfig {
            dt: 0.01,
            duration: 200.0,
            seed,
            noise: true,
        }
    }

    fn steps(&self) -> Result<usize> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.duration.is_finite() || self.duration < self.dt {
            return Err(Error::invalid(format!(
                "duration must be at least one step, got {} at dt {}",
                self.duration, self.dt
            )));
        }
        Ok((self.duration / self.dt).round() as usize)
    }
}

/// A simulated state history: true states, noisy measurements of them, and
/// the control applied at each state (when the system has a controller).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: DVector<f64>,
    pub true_states: DMatrix<f64>,
    pub measured_states: DMatrix<f64>,
    /// Control at each state, recorded from the true state before
    /// measurement noise is applied.
    pub controls: Option<DVector<f64>>,
}

impl Trajectory {
    pub fn n_states(&self) -> usize {
        self.true_states.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.true_states.ncols()
    }
}

fn rng_pair(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut process = ChaCha8Rng::seed_from_u64(seed);
    process.set_stream(PROCESS_NOISE_STREAM);
    let mut measurement = ChaCha8Rng::seed_from_u64(seed);
    measurement.set_stream(MEASUREMENT_NOISE_STREAM);
    (process, measurement)
}

fn measure(
    true_states: &DMatrix<f64>,
    stds: &[f64],
    rng: &mut ChaCha8Rng,
    noise: bool,
) -> DMatrix<f64> {
    if !noise {
        return true_states.clone();
    }
    let mut measured = true_states.clone();
    for i in 0..measured.nrows() {
        for j in 0..measured.ncols() {
            measured[(i, j)] += stds[j] * rng.sample::<f64, _>(StandardNormal);
        }
    }
    measured
}

/// Drift matrix of the mass-spring-damper for natural frequency `nu` and
/// damping `gamma`: position feeds velocity, velocity feeds back with
/// `-nu^2` (spring) and `-gamma` (damper).
pub fn msd_drift_matrix(nu: f64, gamma: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -nu * nu, -gamma])
}

/// Simulates the stochastic mass-spring-damper.
///
/// Euler-Maruyama with the white-noise force on the velocity channel:
/// `x_{k+1} = x_k + dt * A x_k + b * sqrt(dt) * w_k`, `w_k ~ N(0,1)`,
/// then per-state measurement noise with [`MSD_MEASUREMENT_NOISE_STD`].
pub fn simulate_msd(config: &SdeConfig, nu: f64, gamma: f64) -> Result<Trajectory> {
    if !nu.is_finite() || nu <= 0.0 {
        return Err(Error::invalid(format!("natural frequency must be positive, got {nu}")));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("damping must be non-negative, got {gamma}")));
    }
    let steps = config.steps()?;
    let n = steps + 1;
    let a = msd_drift_matrix(nu, gamma);
    let sqrt_dt = config.dt.sqrt();
    let (mut process_rng, mut measurement_rng) = rng_pair(config.seed);

    let mut true_states = DMatrix::zeros(n, 2);
    let mut x = DVector::from_row_slice(&MSD_INITIAL_STATE);
    true_states.set_row(0, &x.transpose());
    for k in 0..steps {
        let mut next = &x + (&a * &x) * config.dt;
        if config.noise {
            let w: f64 = process_rng.sample(StandardNormal);
            // The force enters only the velocity equation.
            next[1] += sqrt_dt * w;
        }
        x = next;
        true_states.set_row(k + 1, &x.transpose());
    }

    let measured_states = measure(
        &true_states,
        &MSD_MEASUREMENT_NOISE_STD,
        &mut measurement_rng,
        config.noise,
    );
    Ok(Trajectory {
        times: DVector::from_fn(n, |i, _| i as f64 * config.dt),
        true_states,
        measured_states,
        controls: None,
    })
}

/// Linearized pendulum-cart dynamics as `(A, B, D)`: drift, control gain,
/// and disturbance gain. States are `[x, th1, th2, dx, dth1, dth2]`;
/// gravity couples the pendulum angles into all three accelerations.
pub fn dipc_system() -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let a = DMatrix::from_row_slice(
        6,
        6,
        &[
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, 1.0, //
            0.0, -7.49, 0.798, 0.0, 0.0, 0.0, //
            0.0, 74.93, -33.71, 0.0, 0.0, 0.0, //
            0.0, -59.94, 52.12, 0.0, 0.0, 0.0, //
        ],
    );
    let b = DVector::from_row_slice(&[0.0, 0.0, 0.0, -0.61, 1.5, -0.3]);
    let d = DVector::from_row_slice(&[0.0, 0.0, 0.0, 0.1, 0.1, 0.1]);
    (a, b, d)
}

/// Closed-loop drift `A - B K` under the gain [`DIPC_GAIN`].
pub fn dipc_closed_loop() -> DMatrix<f64> {
    let (a, b, _) = dipc_system();
    let k = DVector::from_row_slice(&DIPC_GAIN);
    &a - &b * k.transpose()
}

/// Simulates the regulated pendulum-cart around the origin.
///
/// Per step: `F_k = -K x_k` (recorded), then
/// `x_{k+1} = x_k + dt * (A x_k + B F_k) + D * w_k` with a scalar
/// `w_k ~ N(0,1)`. The disturbance is a per-step kick of fixed size `D`
/// rather than a sqrt(dt)-scaled increment, which keeps the regulated
/// states' stationary spread at the scale the measurement-noise floors
/// assume. Measurement noise uses [`DIPC_MEASUREMENT_NOISE_STD`].
pub fn simulate_dipc(config: &SdeConfig) -> Result<Trajectory> {
    let steps = config.steps()?;
    let n = steps + 1;
    let (a, b, d) = dipc_system();
    let k_gain = DVector::from_row_slice(&DIPC_GAIN);
    let (mut process_rng, mut measurement_rng) = rng_pair(config.seed);

    let mut true_states = DMatrix::zeros(n, 6);
    let mut controls = DVector::zeros(n);
    let mut x = DVector::from_row_slice(&DIPC_INITIAL_STATE);
    true_states.set_row(0, &x.transpose());
    for k in 0..steps {
        let force = -k_gain.dot(&x);
        controls[k] = force;
        let mut next = &x + (&a * &x + &b * force) * config.dt;
        if config.noise {
            let w: f64 = process_rng.sample(StandardNormal);
            next += &d * w;
        }
        x = next;
        true_states.set_row(k + 1, &x.transpose());
    }
    controls[steps] = -k_gain.dot(&x);

    let measured_states = measure(
        &true_states,
        &DIPC_MEASUREMENT_NOISE_STD,
        &mut measurement_rng,
        config.noise,
    );
    Ok(Trajectory {
        times: DVector::from_fn(n, |i, _| i as f64 * config.dt),
        true_states,
        measured_states,
        controls: Some(controls),
    })
}

/// Turns a trajectory into next-state supervised pairs: inputs are the
/// measured states (plus the control column when requested, plus the time
/// column), responses are the measured states one step later. The result
/// has one row fewer than the trajectory.
pub fn make_supervised(traj: &Trajectory, include_control: bool) -> Result<Dataset> {
    let n = traj.n_states();
    if n < 2 {
        return Err(Error::invalid("a supervised pair needs at least two states"));
    }
    if include_control && traj.controls.is_none() {
        return Err(Error::invalid("trajectory has no control signal to include"));
    }
    let rows = n - 1;
    let q = traj.state_dim();
    let d = q + usize::from(include_control) + 1;

    let mut inputs = DMatrix::zeros(rows, d);
    let mut responses = DMatrix::zeros(rows, q);
    for i in 0..rows {
        for j in 0..q {
            inputs[(i, j)] = traj.measured_states[(i, j)];
            responses[(i, j)] = traj.measured_states[(i + 1, j)];
        }
        let mut col = q;
        if include_control {
            inputs[(i, col)] = traj.controls.as_ref().unwrap()[i];
            col += 1;
        }
        inputs[(i, col)] = traj.times[i];
    }
    Ok(Dataset {
        inputs,
        responses,
        control_column: include_control.then_some(q),
        time_column: Some(q + usize::from(include_control)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msd_trajectories_are_seed_deterministic() {
        let config = SdeConfig {
            duration: 1.0,
            ..SdeConfig::msd_defaults(7)
        };
        let a = simulate_msd(&config, 3.0, 1.0).unwrap();
        let b = simulate_msd(&config, 3.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = simulate_msd(&SdeConfig { seed: 8, ..config }, 3.0, 1.0).unwrap();
        assert_ne!(a.true_states, c.true_states);
    }

    #[test]
    fn state_counts_follow_the_duration() {
        let config = SdeConfig::msd_defaults(1);
        let traj = simulate_msd(&config, 3.0, 1.0).unwrap();
        assert_eq!(traj.n_states(), 2001);
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(traj.times[2000], 2000.0 * 0.005);
    }

    #[test]
    fn zero_diffusion_reduces_to_forward_euler() {
        let config = SdeConfig {
            duration: 0.5,
            noise: false,
            ..SdeConfig::msd_defaults(3)
        };
        let traj = simulate_msd(&config, 3.0, 1.0).unwrap();
        // Hand-rolled forward Euler of the drift must agree bit for bit.
        let a = msd_drift_matrix(3.0, 1.0);
        let mut x = DVector::from_row_slice(&MSD_INITIAL_STATE);
        for k in 0..traj.n_states() - 1 {
            x = &x + (&a * &x) * config.dt;
            assert_eq!(traj.true_states.row(k + 1).transpose(), x);
        }
        assert_eq!(traj.measured_states, traj.true_states);
    }

    #[test]
    fn dipc_records_the_control_of_the_true_state() {
        let config = SdeConfig {
            duration: 1.0,
            ..SdeConfig::dipc_defaults(11)
        };
        let traj = simulate_dipc(&config).unwrap();
        let k = DVector::from_row_slice(&DIPC_GAIN);
        let controls = traj.controls.as_ref().unwrap();
        for i in 0..traj.n_states() {
            let expected = -k.dot(&traj.true_states.row(i).transpose());
            assert_eq!(controls[i], expected);
        }
    }

    #[test]
    fn dipc_trajectories_are_seed_deterministic() {
        let config = SdeConfig {
            duration: 2.0,
            ..SdeConfig::dipc_defaults(5)
        };
        let a = simulate_dipc(&config).unwrap();
        let b = simulate_dipc(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn supervised_pairs_shift_the_measured_states() {
        let config = SdeConfig {
            duration: 0.05,
            ..SdeConfig::msd_defaults(2)
        };
        let traj = simulate_msd(&config, 3.0, 1.0).unwrap();
        let data = make_supervised(&traj, false).unwrap();
        assert_eq!(data.n_samples(), traj.n_states() - 1);
        assert_eq!(data.input_dim(), 3);
        assert_eq!(data.response_dim(), 2);
        assert_eq!(data.control_column, None);
        assert_eq!(data.time_column, Some(2));
        for i in 0..data.n_samples() {
            assert_eq!(data.inputs[(i, 0)], traj.measured_states[(i, 0)]);
            assert_eq!(data.responses[(i, 1)], traj.measured_states[(i + 1, 1)]);
            assert_eq!(data.inputs[(i, 2)], traj.times[i]);
        }
    }

    #[test]
    fn the_pendulum_dataset_has_eight_input_dimensions() {
        let config = SdeConfig {
            duration: 0.2,
            ..SdeConfig::dipc_defaults(2)
        };
        let traj = simulate_dipc(&config).unwrap();
        let data = make_supervised(&traj, true).unwrap();
        assert_eq!(data.input_dim(), 8);
        assert_eq!(data.response_dim(), 6);
        assert_eq!(data.control_column, Some(6));
        assert_eq!(data.time_column, Some(7));
        let controls = traj.controls.as_ref().unwrap();
        for i in 0..data.n_samples() {
            assert_eq!(data.inputs[(i, 6)], controls[i]);
        }
    }

    #[test]
    fn two_states_make_one_pair() {
        let config = SdeConfig {
            dt: 0.005,
            duration: 0.005,
            seed: 1,
            noise: true,
        };
        let traj = simulate_msd(&config, 3.0, 1.0).unwrap();
        assert_eq!(traj.n_states(), 2);
        let data = make_supervised(&traj, false).unwrap();
        assert_eq!(data.n_samples(), 1);
    }

    #[test]
    fn control_column_requires_a_controller() {
        let traj = simulate_msd(&SdeConfig::msd_defaults(1), 3.0, 1.0).unwrap();
        assert!(make_supervised(&traj, true).is_err());
    }

    #[test]
    fn bad_integration_settings_are_rejected() {
        let config = SdeConfig {
            dt: 0.0,
            ..SdeConfig::msd_defaults(1)
        };
        assert!(simulate_msd(&config, 3.0, 1.0).is_err());
        let config = SdeConfig {
            duration: 0.001,
            ..SdeConfig::msd_defaults(1)
        };
        assert!(simulate_msd(&config, 3.0, 1.0).is_err());
        assert!(simulate_msd(&SdeConfig::msd_defaults(1), -3.0, 1.0).is_err());
    }
}
