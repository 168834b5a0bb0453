use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use seed6d::estimator::corpus::{load_frame, save_frame};
use seed6d::estimator::flow::FlowOptions;
use seed6d::estimator::patch::PatchOptions;
use seed6d::estimator::pose::{estimate_zero_pitch_frame, raw_pitch};
use seed6d::estimator::render::{add_salt_and_pepper, membrane_contact, no_contact_pose};
use seed6d::estimator::{
    calibrate, estimate_contact_patch, estimate_flow, estimate_relative_pose, render_synthetic, BubbleGeometry,
    CameraIntrinsics, EstimatorParams, SensorFrame, Side,
};
use seed6d::se3::{Frame, RigidTransform, RollPitchYaw};

const PRESS: f64 = 0.003;

fn geometry() -> BubbleGeometry {
    BubbleGeometry::default()
}

/// Tool radius that indents each membrane by `PRESS` at the nominal grasp.
fn press_radius() -> f64 {
    geometry().membrane_offset + PRESS
}

fn tool(rpy: [f64; 3], t: [f64; 3]) -> RigidTransform {
    RigidTransform::from_rpy(Frame::GripperBody, Frame::Tool, &RollPitchYaw::new(rpy[0], rpy[1], rpy[2]), Vector3::from(t))
}

fn render(x: &RigidTransform, radius: f64) -> SensorFrame {
    render_synthetic(x, radius, &geometry(), &CameraIntrinsics::default())
}

/// Patch centroid in the gripper frame.
fn centroid(frame: &SensorFrame, background: &SensorFrame, side: Side) -> Vector3<f64> {
    let view = frame.view(side);
    let patch = estimate_contact_patch(
        &background.view(side).depth,
        &view.depth,
        &view.intrinsics,
        &PatchOptions::default(),
        side,
    )
    .unwrap();
    view.extrinsics.transform_point(&patch.centroid)
}

/// In-membrane coordinates (x, z) of a gripper-frame point.
fn in_plane(p: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(p.x, p.z)
}

#[test]
fn far_tool_gives_zero_flow() {
    let background = render(&no_contact_pose(), 0.015);
    for side in [Side::Left, Side::Right] {
        let ir = &background.view(side).ir;
        let field = estimate_flow(ir, ir, &FlowOptions::default()).unwrap();
        assert!(field.vx.iter().chain(&field.vy).all(|v| *v == 0.0));
    }
}

#[test]
fn centered_press_centroid_matches_contact_center() {
    let background = render(&no_contact_pose(), press_radius());
    for offset in [[0.0, 0.0, 0.0], [0.004, 0.0, 0.0], [0.0, 0.0, 0.005], [-0.003, 0.0, -0.004]] {
        let x = tool([0.0; 3], offset);
        let frame = render(&x, press_radius());
        for side in [Side::Left, Side::Right] {
            let truth = membrane_contact(side, &x, press_radius(), &geometry());
            assert!((truth.penetration - PRESS).abs() < 1e-12);
            let c = centroid(&frame, &background, side);
            let err = (in_plane(&c) - truth.center).norm();
            assert!(err < 1e-3, "{side:?} offset {offset:?}: centroid {c:?}, truth {:?}", truth.center);
            // The centroid lies on the indented side of the resting membrane.
            let depth_into = side.sign() * c.y - geometry().membrane_offset;
            assert!(depth_into > 0.0 && depth_into < PRESS, "{depth_into}");
        }
    }
}

#[test]
fn centroid_is_robust_to_salt_and_pepper_noise() {
    let background = render(&no_contact_pose(), press_radius());
    let clean = render(&tool([0.0; 3], [0.0; 3]), press_radius());
    let reference = [centroid(&clean, &background, Side::Left), centroid(&clean, &background, Side::Right)];
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let noisy = add_salt_and_pepper(&clean, 5e-4, 0.02, 5e-3, seed);
        for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            worst = worst.max((centroid(&noisy, &background, side) - reference[i]).norm());
        }
    }
    assert!(worst < 2e-3, "worst centroid shift {worst}");
}

#[test]
fn translation_along_y_is_equivariant() {
    let radius = 0.015;
    let background = render(&no_contact_pose(), radius);
    let params = EstimatorParams::default();
    let base = estimate_zero_pitch_frame(&render(&tool([0.0; 3], [0.0; 3]), radius), &background.left.depth, &background.right.depth, &params)
        .unwrap();
    for dy in [-0.005, -0.002, 0.001, 0.004] {
        let shifted = render(&tool([0.0; 3], [0.0, dy, 0.0]), radius);
        let est = estimate_zero_pitch_frame(&shifted, &background.left.depth, &background.right.depth, &params).unwrap();
        let delta = est.translation - base.translation;
        assert!((delta.y - dy).abs() < 1e-3, "dy {dy}: estimated {}", delta.y);
    }
}

#[test]
fn calibrated_pitch_recovers_rotation() {
    let radius = 0.015;
    let background = render(&no_contact_pose(), radius);
    let reference = render(&tool([0.0; 3], [0.0; 3]), radius);
    let sweep: Vec<(SensorFrame, f64)> = (-4..=4)
        .map(|i| {
            let p = (3.0 * i as f64).to_radians();
            (render(&tool([0.0, p, 0.0], [0.0; 3]), radius), p)
        })
        .collect();
    let cal = calibrate(&background, &reference, &sweep, &EstimatorParams::default()).unwrap();
    for deg in [-5.0, 5.0, 10.0] {
        let truth = tool([0.0, f64::to_radians(deg), 0.0], [0.0; 3]);
        let frame = render(&truth, radius);
        let est = estimate_relative_pose(&frame, &reference, &cal).unwrap();
        let pitch = est.rpy().unwrap().pitch.to_degrees();
        assert!((pitch - deg).abs() < 0.5, "{deg}°: estimated {pitch}°");
    }
    // A pure translation leaves the flow curl-free.
    let shifted = render(&tool([0.0; 3], [0.0, 0.0, 0.002]), radius);
    let theta = cal.k_curl * raw_pitch(&shifted, &reference, &cal.params.flow).unwrap();
    assert!(theta.to_degrees().abs() < 0.1, "{}", theta.to_degrees());
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_frame")
}

#[test]
fn rendered_frame_matches_golden_capture() {
    let x = tool([0.1, -0.05, 0.08], [0.001, -0.002, 0.003]);
    let frame = render(&x, 0.015);
    if std::env::var_os("SEED6D_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        save_frame(&golden_dir(), &frame, Some(&x)).unwrap();
    }
    let (golden, meta) = load_frame(&golden_dir()).unwrap();
    assert_eq!(frame, golden);
    let (dt, dr) = meta.truth.unwrap().to_transform().unwrap().distance(&x);
    assert!(dt < 1e-15 && dr < 1e-15);
}
