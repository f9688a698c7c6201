use nalgebra::{Unit, Vector3};
use proptest::prelude::*;

use endohaptics::sensor::PhotoNoiseModel;
use endohaptics::teleop::{
    run_scenario, ControlMode, Environment, InputScript, MasterTrajectory, Profile, Scenario, SpringWall,
    TraceRecord, TransportModel,
};
use endohaptics::JointState7;

fn transport() -> impl Strategy<Value = TransportModel> {
    (0.0f64..15.0, 0.0f64..1.0, 0.0f64..0.2, any::<u64>())
        .prop_map(|(base, j, drop, seed)| TransportModel::new(base, base * j, drop, seed).unwrap())
}

fn pose_waypoints() -> impl Strategy<Value = Vec<(u64, [f64; 3])>> {
    prop::collection::vec(prop::array::uniform3(-40.0f64..40.0), 1..5).prop_map(|pts| {
        std::iter::once((0, [0.0; 3]))
            .chain(pts.into_iter().enumerate().map(|(i, p)| (50 * (i as u64 + 1), p)))
            .collect()
    })
}

fn pose_script(points: Vec<(u64, [f64; 3])>, presses: Vec<u64>) -> InputScript {
    InputScript {
        master: MasterTrajectory::Pose { reference_q: JointState7::default(), offsets: Profile::new(points).unwrap() },
        grip: Profile::new(vec![(0, [0.0]), (150, [7.0]), (300, [2.0])]).unwrap(),
        pedal_presses: presses,
    }
}

fn run(s: &Scenario) -> (Vec<TraceRecord>, endohaptics::teleop::SummaryStats) {
    let mut rows = Vec::new();
    let summary = run_scenario(s, &mut rows, None).unwrap();
    (rows, summary)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_hold_under_lossy_jittery_links(
        t in transport(),
        points in pose_waypoints(),
        mut presses in prop::collection::vec(0u64..400, 0..4),
    ) {
        presses.sort_unstable();
        let mut s = Scenario::quiescent(400);
        s.transport = t;
        s.noise = PhotoNoiseModel::new(0.02, 0.0, 5).unwrap();
        s.input = pose_script(points, presses.clone());
        let (rows, summary) = run(&s);

        prop_assert_eq!(rows.len(), 400);
        prop_assert_eq!(summary.mode_switches, presses.len() as u64);
        for w in rows.windows(2) {
            prop_assert!(w[0].dropped_msgs <= w[1].dropped_msgs);
            if w[0].mode == ControlMode::CameraArm && w[1].mode == ControlMode::CameraArm {
                prop_assert_eq!(w[0].slave_position, w[1].slave_position);
            }
        }
        let m = &summary.messages;
        prop_assert!(m.lost_detected <= m.dropped);
        prop_assert!(m.delivered + m.dropped + m.retracted <= m.sent);
        if let Some(min) = summary.feedback_latency.min_ms {
            let floor = 2.0 * (s.transport.base_latency_ms() - s.transport.jitter_ms());
            prop_assert!(min as f64 >= floor.floor());
        }
    }

    #[test]
    fn slave_motion_is_scaled_master_motion(t in transport(), points in pose_waypoints()) {
        let t = TransportModel::new(t.base_latency_ms(), t.jitter_ms(), 0.0, t.seed()).unwrap();
        let mut s = Scenario::quiescent(400);
        s.transport = t;
        let end = points.last().unwrap().1;
        s.input = pose_script(points, vec![]);
        let (_, summary) = run(&s);
        prop_assert_eq!(summary.saturation.workspace_clamps, 0);
        let scale = s.scaling.translation_scale();
        let master = Vector3::from(summary.master_translation_commanded);
        let applied = Vector3::from(summary.slave_translation_applied);
        prop_assert!((applied - master * scale).abs().max() < 1e-9);
        let moved = Vector3::from(summary.slave_final_position) - Vector3::from(summary.slave_initial_position);
        prop_assert!((moved - Vector3::from(end) * scale).abs().max() < 1e-9);
    }
}

#[test]
fn pressing_into_a_wall_reflects_force() {
    let mut s = Scenario::quiescent(600);
    let start = s.slave_initial.position;
    // Tool shaft points along +x at home; the wall faces it 1 mm ahead.
    s.environment = Environment::Wall(SpringWall {
        point: start + Vector3::new(1.0, 0.0, 0.0),
        normal: Unit::new_normalize(Vector3::new(-1.0, 0.0, 0.0)),
        stiffness: 1.0,
        tip_offset: 0.0,
    });
    s.input = pose_script(vec![(0, [0.0; 3]), (500, [24.0, 0.0, 0.0])], vec![]);
    let (rows, summary) = run(&s);

    let first_contact = rows.iter().position(|r| r.true_wrench.fz != 0.0).unwrap();
    assert!(rows[..first_contact].iter().all(|r| r.tau == [0.0; 7]));
    let last = rows.last().unwrap();
    // 24 mm master travel -> 6 mm slave travel -> 5 mm into the wall -> 5 N,
    // pushing back against the shaft.
    assert!((last.true_wrench.fz - -5.0).abs() < 1e-9, "{:?}", last.true_wrench);
    assert!(last.tau.iter().any(|t| t.abs() > 1.0));
    // 5 N over three springs is about 8.5 mm each, past the 5.6 mm travel limit.
    assert!(summary.saturation.sensor_ticks > 0);
    assert!(rows.iter().any(|r| r.sensor_saturated));
}

#[test]
fn feedback_lags_sensing_by_one_uplink_hop() {
    let mut s = Scenario::quiescent(200);
    s.transport = TransportModel::new(7.0, 0.0, 0.0, 1).unwrap();
    s.environment = Environment::Scripted(Profile::new(vec![(0, [0.0; 3]), (50, [0.0; 3]), (51, [0.5, 0.0, 0.0])]).unwrap());
    let (rows, _) = run(&s);
    let sensed_at = rows.iter().position(|r| r.sensed_wrench.fz != 0.0).unwrap();
    let felt_at = rows.iter().position(|r| r.tau != [0.0; 7]).unwrap();
    assert_eq!(sensed_at, 51);
    assert_eq!(felt_at - sensed_at, 7);
}
