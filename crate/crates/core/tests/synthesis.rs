mod common;

use proptest::prelude::*;

use subspace_tbd::scenario::{ncv_propagate, KinematicState, MotionModel};
use subspace_tbd::synth::ObservationTensor;

#[test]
fn realized_snr_matches_request_on_paper_configuration() {
    common::realized_snr(3).assert();
}

#[test]
fn sinc_kernel_closed_forms() {
    common::sinc_points().assert();
}

#[test]
fn noise_covariance_converges_to_loaded_sinc() {
    common::noise_covariance(21).assert();
}

#[test]
fn source_draws_are_uncorrelated() {
    common::source_uncorrelated(8).assert();
}

#[test]
fn synthesis_is_bit_reproducible() {
    common::synthesis_reproducible(40).assert();
}

#[test]
fn observation_dump_round_trips_through_a_file() {
    let mut rng = common::rng(6);
    let data = common::random_vector(&mut rng, 3 * 4 * 5);
    let obs = ObservationTensor::from_vec(3, 4, 5, data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.bin");
    obs.write_binary(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"STBDOBS1");
    assert_eq!(bytes.len(), 8 + 3 * 8 + 60 * 16);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4);
    assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 5);
    let first_re = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    assert_eq!(first_re.to_bits(), obs.data()[0].re.to_bits());
    assert_eq!(ObservationTensor::read_binary(&path).unwrap(), obs);
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(ObservationTensor::read_binary(&path).is_err());
}

proptest! {
    // The noiseless NCV step is linear in the state and the noise enters
    // additively.
    #[test]
    fn ncv_step_is_affine(
        a in prop::array::uniform4(-5.0f64..5.0),
        b in prop::array::uniform4(-5.0f64..5.0),
        u in prop::array::uniform2(-3.0f64..3.0),
        c in -3.0f64..3.0,
        dt in 0.01f64..1.0,
        q in 0.0f64..1.0,
    ) {
        let model = MotionModel::new(dt, q);
        let combo: [f64; 4] = std::array::from_fn(|i| a[i] + c * b[i]);
        let lhs = model.predict(&KinematicState::from_array(combo)).as_array();
        let pa = model.predict(&KinematicState::from_array(a)).as_array();
        let pb = model.predict(&KinematicState::from_array(b)).as_array();
        for i in 0..4 {
            prop_assert!((lhs[i] - (pa[i] + c * pb[i])).abs() < 1e-9);
        }
        let noisy = ncv_propagate(&KinematicState::from_array(a), &model, u).as_array();
        let h = 0.5 * dt * dt;
        let shift = [h * q * u[0], h * q * u[1], dt * q * u[0], dt * q * u[1]];
        for i in 0..4 {
            prop_assert!((noisy[i] - pa[i] - shift[i]).abs() < 1e-9);
        }
    }
}
