use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn cfg() -> SimConfig {
    SimConfig::default()
}

#[test]
fn upright_normal_at_zero_angles() {
    let n = paddle_normal(0.0, 0.0);
    assert_eq!(n, Vec3::new(0.0, 0.0, 1.0));
}

#[test]
fn normal_components_follow_roll_and_pitch() {
    let n = paddle_normal(0.1, 0.0);
    assert_relative_eq!(n.x, 0.0, epsilon = 1e-12);
    assert_relative_eq!(n.y, -0.0998334166, epsilon = 1e-5);
    assert_relative_eq!(n.z, 0.9950041653, epsilon = 1e-5);

    let n = paddle_normal(0.0, 0.2);
    assert_relative_eq!(n.x, 0.2_f64.sin(), epsilon = 1e-12);
    assert_relative_eq!(n.y, 0.0, epsilon = 1e-12);
    assert_relative_eq!(n.z, 0.2_f64.cos(), epsilon = 1e-12);
}

#[test]
fn normal_is_always_unit_length() {
    for i in -10..=10 {
        for j in -10..=10 {
            let n = paddle_normal(0.15 * i as f64, 0.15 * j as f64);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn moving_flat_paddle_rebound_matches_hand_values() {
    let v = impact(
        Vec3::new(1.0, 0.0, -4.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, 1.0),
        0.8,
    )
    .unwrap();
    assert!((v.x - 0.8).abs() < 1e-12);
    assert!(v.y.abs() < 1e-12);
    assert!((v.z - 5.0).abs() < 1e-12);
}

#[test]
fn flat_resting_paddle_scales_tangent_and_reverses_normal() {
    let v_in = Vec3::new(0.7, -1.3, -3.0);
    let v = impact(v_in, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 0.8).unwrap();
    assert_relative_eq!(v.x, 0.8 * v_in.x, epsilon = 1e-12);
    assert_relative_eq!(v.y, 0.8 * v_in.y, epsilon = 1e-12);
    assert_relative_eq!(v.z, -0.8 * v_in.z, epsilon = 1e-12);
}

#[test]
fn separating_contact_is_rejected() {
    let err = impact(
        Vec3::new(0.0, 0.0, 2.0),
        Vec3::ZERO,
        Vec3::new(0.0, 0.0, 1.0),
        0.8,
    )
    .unwrap_err();
    assert!(matches!(err, crate::error::Error::NoImpact));
    // Grazing (zero relative normal speed) also counts as no contact.
    assert!(impact(
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::ZERO,
        Vec3::new(0.0, 0.0, 1.0),
        0.8
    )
    .is_err());
}

#[test]
fn relative_speed_shrinks_by_exactly_the_restitution_factor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut v = || rand::Rng::gen_range(&mut rng, -3.0..3.0);
        let v_ball = Vec3::new(v(), v(), -(v().abs() + 0.5));
        let v_paddle = Vec3::new(0.3 * v(), 0.3 * v(), 0.3 * v());
        let n = paddle_normal(0.3 * v(), 0.3 * v());
        let alpha = 0.25 + 0.15 * v().abs();
        if n.dot(v_ball - v_paddle) >= -1e-6 {
            continue;
        }
        let out = impact(v_ball, v_paddle, n, alpha).unwrap();
        assert_relative_eq!(
            (out - v_paddle).norm(),
            alpha * (v_ball - v_paddle).norm(),
            epsilon = 1e-12
        );
    }
}

#[test]
fn faulty_model_tilts_the_rebound_sideways() {
    let config = SimConfig {
        observation_roll_error: 0.1,
        ..cfg()
    };
    let inputs = ImpactInputs {
        ball_vel: Vec3::new(0.0, 0.0, -4.0),
        roll: 0.0,
        pitch: 0.0,
        paddle_vel: Vec3::ZERO,
    };
    let predicted = analytic_prediction(&inputs, &config);
    let truth = impact_map(inputs.ball_vel, inputs.paddle_vel, paddle_normal(0.0, 0.0), 0.8);
    assert_eq!(truth, Vec3::new(0.0, 0.0, 3.2));
    // The believed normal tips toward -y, so the predicted rebound gains a
    // sideways component of alpha * |v| * sin(2 * err).
    let expected_y = -0.8 * 4.0 * (2.0_f64 * 0.1).sin();
    assert_relative_eq!(predicted.y, expected_y, epsilon = 1e-12);
    assert!(predicted.z < truth.z);

    let doubled = analytic_prediction(
        &inputs,
        &SimConfig {
            observation_roll_error: 0.2,
            ..config
        },
    );
    let ratio = doubled.y / predicted.y;
    assert!(
        (1.9..2.0).contains(&ratio),
        "sideways error should roughly double: {ratio}"
    );
}

#[test]
fn zero_observation_error_makes_the_analytic_model_exact() {
    let config = SimConfig {
        observation_roll_error: 0.0,
        ..cfg()
    };
    let inputs = ImpactInputs {
        ball_vel: Vec3::new(0.4, -0.2, -3.5),
        roll: 0.07,
        pitch: -0.12,
        paddle_vel: Vec3::new(0.1, 0.0, 1.2),
    };
    let predicted = analytic_prediction(&inputs, &config);
    let truth = impact_map(
        inputs.ball_vel,
        inputs.paddle_vel,
        paddle_normal(inputs.roll, inputs.pitch),
        config.restitution,
    );
    assert_eq!(predicted, truth);
}

#[test]
fn sample_transition_round_trips_the_contact() {
    let sample = ImpactSample {
        inputs: ImpactInputs {
            ball_vel: Vec3::new(1.0, 2.0, -3.0),
            roll: 0.1,
            pitch: -0.2,
            paddle_vel: Vec3::new(0.0, 0.1, 0.9),
        },
        ball_vel_out: Vec3::new(0.5, -0.5, 2.5),
    };
    let t = sample.to_transition();
    assert_eq!(t.state, vec![1.0, 2.0, -3.0]);
    assert_eq!(t.action, vec![0.1, -0.2, 0.0, 0.1, 0.9]);
    assert_eq!(t.label, vec![0.5, -0.5, 2.5]);
    let back = ImpactInputs::from_model_input(&t.model_input()).unwrap();
    assert_eq!(back, sample.inputs);
}

fn resting_drop(z: f64) -> SimState {
    SimState {
        ball_pos: Vec3::new(0.0, 0.0, z),
        ball_vel: Vec3::ZERO,
        paddle_pos: Vec3::ZERO,
        paddle_roll: 0.0,
        paddle_pitch: 0.0,
        paddle_vel: Vec3::ZERO,
    }
}

#[test]
fn free_fall_matches_closed_form_kinematics() {
    let state = resting_drop(1.0);
    let stepped = flight_step(&state, 0.1, &cfg());
    assert_relative_eq!(stepped.ball_vel.z, -0.981, epsilon = 1e-12);
    assert_relative_eq!(stepped.ball_pos.z, 1.0 - 0.04905, epsilon = 1e-12);
    assert_eq!(stepped.paddle_pos, state.paddle_pos);
}

#[test]
fn zero_gravity_flight_is_a_straight_line() {
    let config = SimConfig {
        gravity: 0.0,
        ..cfg()
    };
    let state = SimState {
        ball_vel: Vec3::new(1.0, -2.0, 0.5),
        ..resting_drop(0.3)
    };
    let (pos, vel) = ball_state_at(&state, 2.0, &config);
    assert_eq!(vel, state.ball_vel);
    assert_eq!(pos, state.ball_pos + 2.0 * state.ball_vel);
}

#[test]
fn two_half_steps_equal_one_full_step() {
    let state = SimState {
        ball_vel: Vec3::new(0.3, -0.4, 2.0),
        ..resting_drop(0.5)
    };
    let once = flight_step(&state, 0.2, &cfg());
    let twice = flight_step(&flight_step(&state, 0.1, &cfg()), 0.1, &cfg());
    assert_relative_eq!(once.ball_pos.z, twice.ball_pos.z, epsilon = 1e-12);
    assert_relative_eq!(once.ball_vel.z, twice.ball_vel.z, epsilon = 1e-12);
}

#[test]
fn plane_crossing_of_a_pure_drop() {
    let state = resting_drop(1.0);
    let (t, pos, vel) = plane_crossing(&state, &cfg()).unwrap();
    assert_relative_eq!(t, (2.0 / 9.81_f64).sqrt(), epsilon = 1e-12);
    assert_relative_eq!(pos.z, 0.0, epsilon = 1e-12);
    assert!(vel.z < 0.0);
}

#[test]
fn rising_ball_crosses_on_the_way_down() {
    let state = SimState {
        ball_vel: Vec3::new(0.5, 0.0, 3.0),
        ..resting_drop(0.2)
    };
    let (t, pos, vel) = plane_crossing(&state, &cfg()).unwrap();
    // Largest root: up, over the apex, back down to the plane.
    assert!(t > 2.0 * 3.0 / 9.81);
    assert_relative_eq!(pos.z, 0.0, epsilon = 1e-9);
    assert!(vel.z < 0.0);
    assert_relative_eq!(pos.x, 0.5 * t, epsilon = 1e-12);
}

#[test]
fn ball_below_plane_and_sinking_never_crosses() {
    let state = SimState {
        ball_vel: Vec3::new(0.0, 0.0, -1.0),
        ..resting_drop(-0.5)
    };
    assert!(plane_crossing(&state, &cfg()).is_none());
}

#[test]
fn impact_detection_bisects_the_contact_time() {
    let config = cfg();
    let state = SimState {
        ball_vel: Vec3::new(0.0, 0.0, -1.0),
        ..resting_drop(0.01)
    };
    // 0.01 = t + g t^2 / 2 at contact.
    let g = config.gravity;
    let expected = (-1.0 + (1.0 + 2.0 * g * 0.01).sqrt()) / g;
    let t = detect_impact(&state, config.flight_dt, &config).unwrap();
    assert_relative_eq!(t, expected, epsilon = 1e-6);
}

#[test]
fn receding_ball_makes_no_contact() {
    let state = SimState {
        ball_vel: Vec3::new(0.0, 0.0, 1.0),
        ..resting_drop(0.01)
    };
    assert!(detect_impact(&state, cfg().flight_dt, &cfg()).is_none());
}

#[test]
fn crossing_outside_the_disc_makes_no_contact() {
    let state = SimState {
        ball_pos: Vec3::new(0.3, 0.0, 0.005),
        ball_vel: Vec3::new(0.0, 0.0, -1.0),
        ..resting_drop(0.0)
    };
    assert!(detect_impact(&state, cfg().flight_dt, &cfg()).is_none());
}

fn quiet_decay_policy(seed: u64) -> DecayPolicy {
    DecayPolicy {
        rng: ChaCha8Rng::seed_from_u64(seed),
        tilt_jitter: 0.0,
        vel_jitter: 0.0,
    }
}

fn drop_setup(z: f64) -> EpisodeSetup {
    EpisodeSetup {
        initial: resting_drop(z),
        p_desired: [0.0, 0.0],
    }
}

#[test]
fn passive_episode_decays_to_a_dead_rebound() {
    let mut policy = quiet_decay_policy(0);
    let trace = run_episode(&mut policy, &drop_setup(0.5), &cfg(), 60);
    assert_eq!(trace.termination, Termination::Failure(FailureKind::BelowPlane));
    // Apex falls by restitution^2 per bounce: 0.64^k * 0.5 < 1e-4.
    assert!(
        (15..25).contains(&trace.bounces.len()),
        "{} bounces",
        trace.bounces.len()
    );
    let mut prev = 0.0;
    for b in &trace.bounces {
        assert!(b.time > prev);
        prev = b.time;
        assert!(b.target_error < 1e-9, "straight drop lands on target");
        assert!(b.solve.is_none());
    }
    // Labels store the ground-truth rebound of the recorded inputs.
    for b in &trace.bounces {
        let t = b.sample.to_transition();
        let again = impact_map(
            b.sample.inputs.ball_vel,
            b.sample.inputs.paddle_vel,
            paddle_normal(b.sample.inputs.roll, b.sample.inputs.pitch),
            cfg().restitution,
        );
        assert_eq!(t.label, again.to_array().to_vec());
    }
}

#[test]
fn zero_bounce_budget_completes_immediately() {
    let mut policy = quiet_decay_policy(0);
    let trace = run_episode(&mut policy, &drop_setup(0.5), &cfg(), 0);
    assert_eq!(trace.termination, Termination::Completed);
    assert!(trace.bounces.is_empty());
    assert_eq!(trace.sim_time, 0.0);
}

#[test]
fn episodes_replay_bit_identically() {
    let run = |seed| {
        let mut policy = DecayPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
            tilt_jitter: 0.02,
            vel_jitter: 0.05,
        };
        run_episode(&mut policy, &drop_setup(0.8), &cfg(), 25)
    };
    let a = run(9);
    let b = run(9);
    assert_eq!(a.bounces, b.bounces);
    assert_eq!(a.termination, b.termination);
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.sim_time.to_bits(), b.sim_time.to_bits());
    let c = run(10);
    assert_ne!(a.bounces, c.bounces);
}

#[test]
fn out_of_workspace_intercept_fails_the_episode() {
    let setup = EpisodeSetup {
        initial: SimState {
            ball_vel: Vec3::new(7.0, 0.0, 0.0),
            ..resting_drop(1.0)
        },
        p_desired: [0.0, 0.0],
    };
    let mut policy = quiet_decay_policy(0);
    let trace = run_episode(&mut policy, &setup, &cfg(), 5);
    assert_eq!(
        trace.termination,
        Termination::Failure(FailureKind::OutOfWorkspace)
    );
    assert!(trace.bounces.is_empty());
}

#[test]
fn trajectory_recording_follows_the_flight() {
    let config = SimConfig {
        record_trajectory: true,
        ..cfg()
    };
    let mut policy = quiet_decay_policy(0);
    let trace = run_episode(&mut policy, &drop_setup(0.5), &config, 3);
    assert!(trace.trajectory.len() > 10);
    for w in trace.trajectory.windows(2) {
        assert!(w[1].time >= w[0].time);
    }
    let quiet = run_episode(&mut quiet_decay_policy(0), &drop_setup(0.5), &cfg(), 3);
    assert!(quiet.trajectory.is_empty());
}

proptest! {
    #[test]
    fn impact_never_speeds_up_the_relative_motion(
        vx in -3.0..3.0f64,
        vy in -3.0..3.0f64,
        vz in -6.0..-0.5f64,
        roll in -0.3..0.3f64,
        pitch in -0.3..0.3f64,
        pvz in 0.0..1.5f64,
        alpha in 0.3..1.0f64,
    ) {
        let v_ball = Vec3::new(vx, vy, vz);
        let v_paddle = Vec3::new(0.0, 0.0, pvz);
        let n = paddle_normal(roll, pitch);
        prop_assume!(n.dot(v_ball - v_paddle) < -1e-9);
        let out = impact(v_ball, v_paddle, n, alpha).unwrap();
        let before = (v_ball - v_paddle).norm();
        let after = (out - v_paddle).norm();
        prop_assert!(after <= before + 1e-12);
        // Normal component flips from approaching to separating.
        prop_assert!(n.dot(out - v_paddle) > 0.0);
    }

    #[test]
    fn plane_crossing_time_solves_the_quadratic(
        z in 0.05..2.0f64,
        vz in -3.0..3.0f64,
        vx in -2.0..2.0f64,
    ) {
        let state = SimState {
            ball_vel: Vec3::new(vx, 0.0, vz),
            ..resting_drop(z)
        };
        let (t, pos, _) = plane_crossing(&state, &cfg()).unwrap();
        prop_assert!(t > 0.0);
        prop_assert!(pos.z.abs() < 1e-9);
    }

    #[test]
    fn detected_impacts_lie_inside_the_window(
        z in 0.0005..0.009f64,
        vz in -2.0..-0.2f64,
    ) {
        let config = cfg();
        let state = SimState {
            ball_vel: Vec3::new(0.0, 0.0, vz),
            ..resting_drop(z)
        };
        if let Some(t) = detect_impact(&state, config.flight_dt, &config) {
            prop_assert!(t >= 0.0 && t <= config.flight_dt);
            let (pos, vel) = ball_state_at(&state, t, &config);
            prop_assert!(pos.z.abs() < 1e-7);
            prop_assert!(vel.z < 0.0);
        } else {
            // Misses only when the fall does not reach the plane in time.
            let (pos, _) = ball_state_at(&state, config.flight_dt, &config);
            prop_assert!(pos.z > -1e-9);
        }
    }
}
