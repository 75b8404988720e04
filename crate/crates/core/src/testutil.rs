//! Shared fixtures for the unit tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, SymMatrix};
use crate::sim::{
    collect_cl_data, collect_irl_data, gaussian_matrix, simulate_zoh, ClData, ExcitationConfig,
    IrlData, LinearSystem, SampleSchedule, Trajectory,
};

pub fn scalar_system(a: f64, b: f64, q: f64, r: f64) -> LinearSystem {
    LinearSystem::new(
        Matrix::from_element(1, 1, a),
        Matrix::from_element(1, 1, b),
        SymMatrix::new(Matrix::from_element(1, 1, q)).unwrap(),
        SymMatrix::new(Matrix::from_element(1, 1, r)).unwrap(),
    )
    .unwrap()
}

pub fn double_integrator() -> LinearSystem {
    LinearSystem::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
        SymMatrix::identity(2),
        SymMatrix::identity(1),
    )
    .unwrap()
}

/// Dense Gaussian n=4, m=2 plant satisfying the standing assumptions.
pub fn random_benchmark_system(seed: u64) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = gaussian_matrix(&mut rng, 4, 4);
        let b = gaussian_matrix(&mut rng, 4, 2);
        if let Ok(sys) = LinearSystem::new(a, b, SymMatrix::identity(4), SymMatrix::identity(2)) {
            return sys;
        }
    }
}

/// System + one excitation trajectory at the benchmark settings
/// (T = 20 windows of δ = 0.1 s, holds of 0.01 s). Violently unstable
/// draws that trip the trajectory cap are redrawn.
pub fn benchmark_setup(seed: u64) -> (LinearSystem, Trajectory, SampleSchedule) {
    let schedule = SampleSchedule::uniform(20, 0.1, 10);
    for attempt in 0..100u64 {
        let s = seed.wrapping_add(attempt.wrapping_mul(7919));
        let sys = random_benchmark_system(s);
        let excitation = ExcitationConfig::new(0.01, 1.0, s.wrapping_add(17));
        if let Ok(traj) = simulate_zoh(&sys, &excitation, schedule.horizon(), 10) {
            return (sys, traj, schedule);
        }
    }
    unreachable!("no simulable system found in 100 draws");
}

/// Benchmark system together with both collected data sets; marginal
/// excitation draws are retried with a fresh seed.
pub fn benchmark_data(seed: u64) -> (LinearSystem, ClData, IrlData) {
    let (sys, traj, schedule) = benchmark_setup(seed);
    let mut traj = traj;
    for retry in 0..20u64 {
        match (
            collect_cl_data(&traj, &schedule),
            collect_irl_data(&traj, &schedule),
        ) {
            (Ok(cl), Ok(irl)) => return (sys, cl, irl),
            _ => {
                let excitation =
                    ExcitationConfig::new(0.01, 1.0, seed.wrapping_add(1000 + retry));
                traj = simulate_zoh(&sys, &excitation, schedule.horizon(), 10).unwrap();
            }
        }
    }
    unreachable!("no informative excitation found in 20 retries");
}
