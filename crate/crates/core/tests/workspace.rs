use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use robench_core::fixtures::{self, DISASSEMBLY_WORKSPACE};
use robench_core::workspace::{follow_tool, DEFAULT_LINK_RADIUS};
use robench_core::*;
use serde_json::Value;

fn arm_setup() -> RobotSetup {
    RobotSetup {
        urdf: "builtin:arm7".into(),
        placement: Transform::identity(),
        tool_offset: None,
        home: fixtures::ARM7_HOME.to_vec(),
    }
}

fn gap(a: &Transform, b: &Transform) -> f64 {
    let (t, r) = a.distance(b);
    t.max(r)
}

fn empty() -> Workspace {
    Workspace::new(arm_setup())
}

/// Structural equality with numbers compared to `tol`.
fn assert_close(a: &Value, b: &Value, tol: f64, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= tol, "{path}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}: length");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                assert_close(u, v, tol, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{path}: keys");
            for (k, u) in x {
                assert_close(u, &y[k], tol, &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn manual_placement() {
    let ws = place_robot_manual(&empty(), Vector3::zeros(), 0.0);
    assert_eq!(ws.robot.placement, Transform::identity());

    let ws = place_robot_manual(&ws, Vector3::new(1.0, 2.0, 0.0), FRAC_PI_2);
    assert_eq!(ws.robot.placement.translation, Vector3::new(1.0, 2.0, 0.0));
    let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
    assert!(ws.robot.placement.rotation.angle_to(&expected) < 1e-15);

    let scene = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    let moved = place_robot_manual(&scene, Vector3::new(0.3, 0.0, 0.0), 1.0);
    let moved = place_robot_manual(&moved, Vector3::new(-1.0, 0.5, 0.0), -0.2);
    assert_eq!(moved.robot.placement.translation, Vector3::new(-1.0, 0.5, 0.0));
    let mut restored = moved.clone();
    restored.robot.placement = scene.robot.placement;
    assert_eq!(restored, scene);
}

#[test]
fn marker_calibration() {
    let id = Transform::identity();
    assert_eq!(calibrate_from_marker(&id, &id), id);

    let base = calibrate_from_marker(&Transform::from_translation(1.0, 0.0, 0.0), &Transform::from_translation(0.0, 1.0, 0.0));
    assert!((base.translation - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-15);

    // Marker turned half a revolution: the offset flips sign in the world.
    let marker = Transform::new(
        Vector3::new(0.4, -0.3, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI),
    );
    let base = calibrate_from_marker(&marker, &Transform::from_translation(1.0, 0.0, 0.0));
    let m = marker.to_homogeneous() * Transform::from_translation(1.0, 0.0, 0.0).to_homogeneous();
    let oracle = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    assert!((base.translation - oracle).norm() < 1e-12);
    assert!((base.translation - Vector3::new(-0.6, -0.3, 0.0)).norm() < 1e-12);
}

fn arb_transform() -> impl Strategy<Value = Transform> {
    (
        prop::array::uniform3(-2.0..2.0f64),
        prop::array::uniform4(-1.0..1.0f64).prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-2),
    )
        .prop_map(|(t, q)| Transform::from_wxyz(Vector3::from(t), q).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibration_identities(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
        let id = Transform::identity();
        prop_assert!(gap(&calibrate_from_marker(&a, &id), &a) < 1e-12);
        prop_assert!(gap(&calibrate_from_marker(&id, &a), &a) < 1e-12);
        let left = calibrate_from_marker(&calibrate_from_marker(&a, &b), &c);
        let right = calibrate_from_marker(&a, &b.compose(&c));
        prop_assert!(gap(&left, &right) < 1e-12);
    }
}

#[test]
fn object_edits() {
    let sphere = SceneObject::new("ball", ShapePrimitive::Sphere { radius: 0.05 }, Transform::identity(), ObjectRole::Object);
    let ws = upsert_object(&empty(), sphere.clone()).unwrap();
    assert_eq!(ws.objects, vec![sphere.clone()]);

    let moved = SceneObject {
        pose: Transform::from_translation(0.1, 0.2, 0.3),
        ..sphere
    };
    let ws = upsert_object(&ws, moved.clone()).unwrap();
    assert_eq!(ws.objects.len(), 1);
    assert_eq!(ws.objects[0].pose, moved.pose);

    let err = remove_object(&ws, "nope").unwrap_err();
    assert!(err.to_string().contains("no such object"), "{err}");
    assert!(remove_object(&ws, "ball").unwrap().objects.is_empty());

    let bad = SceneObject::new("bad", ShapePrimitive::Cylinder { radius: 0.0, height: 1.0 }, Transform::identity(), ObjectRole::Object);
    assert!(matches!(upsert_object(&ws, bad), Err(WorkspaceError::InvalidDimensions(_))));
}

#[test]
fn empty_document_round_trips() {
    let ws = empty();
    let doc = save_workspace(&ws);
    let v: Value = serde_json::from_str(&doc).unwrap();
    assert_eq!(v["version"], 1);
    assert!(v["robot"].is_object());
    for key in ["objects", "keypoints"] {
        assert_eq!(v[key], Value::Array(vec![]), "{key}");
    }
    assert_eq!(v["trajectories"], Value::Object(Default::default()));
    assert_eq!(load_workspace(&doc).unwrap(), ws);
}

#[test]
fn golden_fixture_is_byte_stable() {
    let ws = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    assert_eq!(ws.objects.len(), 3);
    assert_eq!(ws.keypoints.len(), 4);
    assert_eq!(ws.trajectories.len(), 1);
    assert_eq!(save_workspace(&ws), DISASSEMBLY_WORKSPACE);
}

#[test]
fn load_rejections() {
    let doc = save_workspace(&empty());
    let mut v: Value = serde_json::from_str(&doc).unwrap();
    v["version"] = 2.into();
    assert!(matches!(load_workspace(&v.to_string()), Err(WorkspaceError::UnknownVersion(2))));

    let ball = upsert_object(
        &empty(),
        SceneObject::new("ball", ShapePrimitive::Sphere { radius: 0.05 }, Transform::identity(), ObjectRole::Object),
    )
    .unwrap();
    let doc = save_workspace(&ball).replace("\"radius\": 0.05", "\"radius\": -1.0");
    let err = load_workspace(&doc).unwrap_err();
    assert!(err.to_string().contains("invalid dimensions"), "{err}");

    let doc = save_workspace(&ball).replace("\"radius\": 0.05", "\"radius\": NaN");
    assert!(
        matches!(load_workspace(&doc), Err(WorkspaceError::NonFinite(ref p)) if p == "objects[0].shape.radius"),
        "{:?}",
        load_workspace(&doc)
    );
    let doc = save_workspace(&ball).replace("\"radius\": 0.05", "\"radius\": -Infinity");
    assert!(matches!(load_workspace(&doc), Err(WorkspaceError::NonFinite(_))));
    let doc = save_workspace(&ball).replace("\"radius\": 0.05", "\"radius\": 1e400");
    assert!(matches!(load_workspace(&doc), Err(WorkspaceError::NonFinite(_))));

    // NaN inside a string is just text.
    let named = upsert_object(
        &empty(),
        SceneObject::new("NaN", ShapePrimitive::Sphere { radius: 0.05 }, Transform::identity(), ObjectRole::Object),
    )
    .unwrap();
    assert_eq!(load_workspace(&save_workspace(&named)).unwrap(), named);

    let mut attached = ball.clone();
    attached.objects[0].role = ObjectRole::Obstacle;
    attached.objects[0].attached_to_gripper = true;
    assert!(load_workspace(&save_workspace(&attached)).is_err());

    let mut dup = ball.clone();
    dup.objects.push(dup.objects[0].clone());
    assert!(matches!(load_workspace(&save_workspace(&dup)), Err(WorkspaceError::DuplicateId(_))));

    let mut scene = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    scene.keypoints.retain(|k| k.id != "lift");
    assert!(matches!(
        load_workspace(&save_workspace(&scene)),
        Err(WorkspaceError::UnknownKeypoint { ref keypoint, .. }) if keypoint == "lift"
    ));

    assert!(matches!(load_workspace("{\"version\": 1}"), Err(WorkspaceError::Schema(_))));
    assert!(matches!(load_workspace("not json"), Err(WorkspaceError::Schema(_))));
}

fn arb_shape() -> impl Strategy<Value = ShapePrimitive> {
    prop_oneof![
        prop::array::uniform3(1e-3..2.0f64).prop_map(|extents| ShapePrimitive::Cuboid { extents }),
        (1e-3..1.0f64).prop_map(|radius| ShapePrimitive::Sphere { radius }),
        (1e-3..1.0f64, 1e-3..2.0f64).prop_map(|(radius, height)| ShapePrimitive::Cylinder { radius, height }),
    ]
}

fn arb_keypoint(id: String) -> impl Strategy<Value = Keypoint> {
    (
        arb_transform(),
        arb_transform(),
        prop::array::uniform3(1e-3..1.0f64),
        1.0..1e4f64,
        0..3u8,
    )
        .prop_map(move |(pose, frame, axes, w, action)| {
            let cov = covariance_from_ellipsoid(&frame.rotation, &Vector3::from(axes)).unwrap();
            let action = [GripperAction::None, GripperAction::Grasp, GripperAction::Release][action as usize];
            Keypoint {
                id: id.clone(),
                pose,
                covariance: cov,
                orientation_precision: w,
                gripper_action: action,
            }
        })
}

fn arb_workspace() -> impl Strategy<Value = Workspace> {
    let objects = prop::collection::vec((arb_shape(), arb_transform(), any::<bool>()), 0..6);
    let keypoints = (0usize..5).prop_flat_map(|n| (0..n).map(|i| arb_keypoint(format!("kp{i}"))).collect::<Vec<_>>());
    let trajectories = prop::collection::vec(
        (2usize..12, 1e-3..0.1f64, prop::collection::vec(-3.0..3.0f64, 7 * 12)),
        0..3,
    );
    (
        arb_transform(),
        prop::option::of(arb_transform()),
        prop::option::of(arb_transform()),
        prop::collection::vec(-2.5..2.5f64, 7),
        objects,
        keypoints,
        trajectories,
    )
        .prop_map(|(placement, tool, marker, home, objects, keypoints, trajectories)| {
            let mut ws = Workspace::new(RobotSetup {
                urdf: "builtin:arm7".into(),
                placement,
                tool_offset: tool,
                home,
            });
            let mut attached = false;
            for (i, (shape, pose, obstacle)) in objects.into_iter().enumerate() {
                let role = if obstacle { ObjectRole::Obstacle } else { ObjectRole::Object };
                let mut obj = SceneObject::new(format!("obj{i}"), shape, pose, role);
                if role == ObjectRole::Object && !attached {
                    obj.attached_to_gripper = i % 2 == 0;
                    attached = obj.attached_to_gripper;
                }
                ws.objects.push(obj);
            }
            for (n, (steps, dt, values)) in trajectories.into_iter().enumerate() {
                let configs: Vec<_> = values.chunks(7).take(steps).map(DVector::from_column_slice).collect();
                let mut idx = BTreeMap::new();
                for (k, kp) in keypoints.iter().enumerate() {
                    idx.insert(kp.id.clone(), (k * 3 + n) % configs.len());
                }
                ws.trajectories.insert(format!("traj{n}"), Trajectory::new(dt, configs, idx));
            }
            ws.keypoints = keypoints;
            ws.marker = marker.map(|marker_to_base| robench_core::workspace::MarkerCalibration { marker_to_base });
            ws
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn save_load_round_trip(ws in arb_workspace()) {
        prop_assert!(ws.violations().is_empty(), "{:?}", ws.violations());
        let doc = save_workspace(&ws);
        let back = load_workspace(&doc).unwrap();
        let a = serde_json::to_value(&ws).unwrap();
        let b = serde_json::to_value(&back).unwrap();
        assert_close(&a, &b, 1e-12, "");
        prop_assert_eq!(save_workspace(&back), doc);
    }
}

fn scene_chain(ws: &Workspace) -> Chain {
    ws.load_chain(None).unwrap()
}

#[test]
fn collisions_basic() {
    let scene = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    let chain = scene_chain(&scene);
    let traj = &scene.trajectories["disassembly"];

    let mut bare = scene.clone();
    bare.objects.clear();
    assert!(check_collisions(&chain, traj, &bare, DEFAULT_LINK_RADIUS).unwrap().is_empty());

    assert!(check_collisions(&chain, traj, &scene, DEFAULT_LINK_RADIUS).unwrap().is_empty());

    let step = 40;
    let tool = scene.tool_pose(&chain, &traj.configs[step]).unwrap();
    let ball = SceneObject::new("ball", ShapePrimitive::Sphere { radius: 0.1 }, Transform::new(tool.translation, tool.rotation), ObjectRole::Obstacle);
    let ws = upsert_object(&bare, ball).unwrap();
    let report = check_collisions(&chain, traj, &ws, DEFAULT_LINK_RADIUS).unwrap();
    let tool_link = chain.dof();
    let hit = report
        .entries
        .iter()
        .find(|e| e.step == step && e.link == tool_link)
        .expect("tool sphere inside ball");
    assert!((hit.penetration - 0.15).abs() < 1e-12);
    assert!(report.entries.iter().all(|e| e.penetration > 0.0 && e.obstacle == "ball"));

    let far = SceneObject::new("far", ShapePrimitive::Sphere { radius: 0.1 }, Transform::from_translation(1000.0, 0.0, 0.0), ObjectRole::Obstacle);
    let ws = upsert_object(&bare, far).unwrap();
    assert!(check_collisions(&chain, traj, &ws, DEFAULT_LINK_RADIUS).unwrap().is_empty());

    // Objects are not obstacles.
    let mut ws = upsert_object(
        &bare,
        SceneObject::new("ball", ShapePrimitive::Sphere { radius: 0.1 }, tool, ObjectRole::Object),
    )
    .unwrap();
    assert!(check_collisions(&chain, traj, &ws, DEFAULT_LINK_RADIUS).unwrap().is_empty());
    ws.objects[0].role = ObjectRole::Obstacle;
    assert!(!check_collisions(&chain, traj, &ws, DEFAULT_LINK_RADIUS).unwrap().is_empty());
}

/// Points on the surface of `shape` in its local frame, spaced by about `h`.
fn surface_samples(shape: &ShapePrimitive, h: f64) -> Vec<Vector3<f64>> {
    let steps = |len: f64| ((len / h).ceil() as usize).max(1);
    let mut pts = Vec::new();
    match *shape {
        ShapePrimitive::Cuboid { extents } => {
            let half = Vector3::from(extents) / 2.0;
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let (nu, nv) = (steps(extents[u]), steps(extents[v]));
                for sign in [-1.0, 1.0] {
                    for i in 0..=nu {
                        for j in 0..=nv {
                            let mut p = Vector3::zeros();
                            p[axis] = sign * half[axis];
                            p[u] = -half[u] + extents[u] * i as f64 / nu as f64;
                            p[v] = -half[v] + extents[v] * j as f64 / nv as f64;
                            pts.push(p);
                        }
                    }
                }
            }
        }
        ShapePrimitive::Sphere { radius } => {
            let nt = steps(PI * radius);
            for i in 0..=nt {
                let theta = PI * i as f64 / nt as f64;
                let np = steps(2.0 * PI * radius * theta.sin());
                for j in 0..np {
                    let phi = 2.0 * PI * j as f64 / np as f64;
                    pts.push(radius * Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
                }
            }
        }
        ShapePrimitive::Cylinder { radius, height } => {
            let na = steps(2.0 * PI * radius);
            let nz = steps(height);
            for i in 0..na {
                let a = 2.0 * PI * i as f64 / na as f64;
                for k in 0..=nz {
                    let z = -height / 2.0 + height * k as f64 / nz as f64;
                    pts.push(Vector3::new(radius * a.cos(), radius * a.sin(), z));
                }
            }
            let nr = steps(radius);
            for sign in [-1.0, 1.0] {
                for r in 0..=nr {
                    let rr = radius * r as f64 / nr as f64;
                    let nc = steps(2.0 * PI * rr);
                    for i in 0..nc {
                        let a = 2.0 * PI * i as f64 / nc as f64;
                        pts.push(Vector3::new(rr * a.cos(), rr * a.sin(), sign * height / 2.0));
                    }
                }
            }
        }
    }
    pts
}

fn contains_local(shape: &ShapePrimitive, p: &Vector3<f64>) -> bool {
    match *shape {
        ShapePrimitive::Cuboid { extents } => (0..3).all(|i| p[i].abs() <= extents[i] / 2.0),
        ShapePrimitive::Sphere { radius } => p.norm() <= radius,
        ShapePrimitive::Cylinder { radius, height } => p.xy().norm() <= radius && p.z.abs() <= height / 2.0,
    }
}

/// Overlap depth of a sphere and a shape from a 1 mm surface sampling.
fn sampled_penetration(shape: &ShapePrimitive, pose: &Transform, center: &Vector3<f64>, r: f64) -> f64 {
    let local = pose.invert().transform_point(center);
    let nearest = surface_samples(shape, 1e-3)
        .iter()
        .map(|p| (p - local).norm())
        .fold(f64::INFINITY, f64::min);
    if contains_local(shape, &local) {
        r + nearest
    } else {
        r - nearest
    }
}

#[test]
fn collision_depth_matches_surface_sampling() {
    let scene = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    let chain = scene_chain(&scene);
    let traj = &scene.trajectories["disassembly"];
    let tilt = UnitQuaternion::from_euler_angles(0.3, -0.2, 0.7);
    let shapes = [
        ShapePrimitive::Cuboid { extents: [0.12, 0.2, 0.08] },
        ShapePrimitive::Sphere { radius: 0.07 },
        ShapePrimitive::Cylinder { radius: 0.05, height: 0.16 },
    ];
    let mut compared = 0;
    for (s, shape) in shapes.iter().enumerate() {
        for (c, &step) in [10usize, 50, 90].iter().enumerate() {
            let frames = chain.link_frames(&traj.configs[step]).unwrap();
            let target = frames[3 + (s + c) % 5].translation;
            let offset = Vector3::new(0.04, -0.03, 0.05 * (c as f64 - 1.0));
            let obstacle = SceneObject::new("probe", shape.clone(), Transform::new(target + offset, tilt), ObjectRole::Obstacle);
            let mut single = Trajectory::new(0.02, vec![traj.configs[step].clone()], BTreeMap::new());
            single.keypoint_indices.clear();
            let mut ws = scene.clone();
            ws.objects = vec![obstacle.clone()];
            let report = check_collisions(&chain, &single, &ws, DEFAULT_LINK_RADIUS).unwrap();
            for (link, frame) in frames.iter().enumerate() {
                let oracle = sampled_penetration(shape, &obstacle.pose, &frame.translation, DEFAULT_LINK_RADIUS);
                match report.entries.iter().find(|e| e.link == link) {
                    Some(e) => {
                        assert!((e.penetration - oracle).abs() < 2e-3, "{shape:?} link {link}: {} vs {oracle}", e.penetration);
                        compared += 1;
                    }
                    None => assert!(oracle < 2e-3, "{shape:?} link {link}: missed overlap {oracle}"),
                }
            }
        }
    }
    assert!(compared >= 9, "only {compared} overlaps compared");
}

#[test]
fn keypoints_in_base_frame() {
    let mut ws = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    let world = ws.keypoints.clone();
    ws.robot.placement = Transform::new(Vector3::new(0.2, -0.1, 0.0), UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.4));
    let cov = covariance_from_ellipsoid(&UnitQuaternion::identity(), &Vector3::new(0.01, 0.02, 0.03)).unwrap();
    ws.keypoints[0].covariance = cov;
    let base = ws.keypoints_in_base();
    for (w, b) in ws.keypoints.iter().zip(&base) {
        assert!(gap(&ws.robot.placement.compose(&b.pose), &w.pose) < 1e-12);
    }
    let r: Matrix3<f64> = ws.robot.placement.rotation_matrix();
    assert!((r * base[0].covariance * r.transpose() - cov).amax() < 1e-15);
    assert_eq!(world[1..], ws.keypoints[1..]);
}

#[test]
fn grasp_and_release() {
    let scene = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    let chain = scene_chain(&scene);
    let traj = &scene.trajectories["disassembly"];
    let grasp_q = &traj.configs[traj.keypoint_indices["grasp"]];
    let release_q = &traj.configs[traj.keypoint_indices["release"]];

    let (far, outcome) = apply_gripper_action(&scene, &chain, &scene.home(), GripperAction::Grasp).unwrap();
    assert_eq!(outcome, GripperOutcome::NothingGrasped);
    assert_eq!(far, scene);

    // Peg 10 cm below the tool: out of reach.
    let tool = scene.tool_pose(&chain, grasp_q).unwrap();
    let mut low = scene.clone();
    let peg = low.objects.iter_mut().find(|o| o.id == "peg").unwrap();
    peg.pose = Transform::from_translation(tool.translation.x, tool.translation.y, tool.translation.z - 0.1 - 0.06);
    let (_, outcome) = apply_gripper_action(&low, &chain, grasp_q, GripperAction::Grasp).unwrap();
    assert_eq!(outcome, GripperOutcome::NothingGrasped);

    let (held, outcome) = apply_gripper_action(&scene, &chain, grasp_q, GripperAction::Grasp).unwrap();
    assert_eq!(outcome, GripperOutcome::Grasped("peg".into()));
    assert!(held.object("peg").unwrap().attached_to_gripper);
    for id in ["board", "disposal_box"] {
        assert_eq!(held.object(id), scene.object(id));
    }

    let (_, again) = apply_gripper_action(&held, &chain, grasp_q, GripperAction::Grasp).unwrap();
    assert_eq!(again, GripperOutcome::AlreadyHolding("peg".into()));

    let mut carried = held.clone();
    follow_tool(&mut carried, &chain, release_q).unwrap();
    let release_tool = scene.tool_pose(&chain, release_q).unwrap();
    assert!(gap(&carried.object("peg").unwrap().pose, &release_tool) < 1e-12);

    let (dropped, outcome) = apply_gripper_action(&carried, &chain, release_q, GripperAction::Release).unwrap();
    assert_eq!(outcome, GripperOutcome::Released("peg".into()));
    let peg = dropped.object("peg").unwrap();
    assert!(!peg.attached_to_gripper);
    assert!(gap(&peg.pose, &release_tool) < 1e-12);
    for id in ["board", "disposal_box"] {
        assert_eq!(dropped.object(id), scene.object(id));
    }

    let (_, outcome) = apply_gripper_action(&dropped, &chain, release_q, GripperAction::Release).unwrap();
    assert_eq!(outcome, GripperOutcome::NothingToRelease);
}

#[test]
fn obstacles_never_grasped() {
    let scene = load_workspace(DISASSEMBLY_WORKSPACE).unwrap();
    let chain = scene_chain(&scene);
    let q = scene.home();
    let tool = scene.tool_pose(&chain, &q).unwrap();
    let ws = upsert_object(
        &empty(),
        SceneObject::new("wall", ShapePrimitive::Sphere { radius: 0.05 }, tool, ObjectRole::Obstacle),
    )
    .unwrap();
    let (after, outcome) = apply_gripper_action(&ws, &chain, &q, GripperAction::Grasp).unwrap();
    assert_eq!(outcome, GripperOutcome::NothingGrasped);
    assert_eq!(after, ws);
}
