use editsim_core::material::{MaterialField, MaterialModel};
use editsim_core::mpm::{build_state, simulate, step, SceneObject, SimConfig, SimulationState, Transform};
use editsim_core::schedule::{compile_schedule, InstructionSchedule, SceneInfo};

fn block(id: u32, n: usize, spacing: f64, base: [f64; 3], velocity: [f64; 3], model: MaterialModel) -> SceneObject {
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push([
                    base[0] + (i as f64 + 0.5) * spacing,
                    base[1] + (j as f64 + 0.5) * spacing,
                    base[2] + (k as f64 + 0.5) * spacing,
                ]);
            }
        }
    }
    SceneObject {
        id,
        name: format!("block{id}"),
        field: MaterialField::uniform(pts, model, 1e5, 0.3, 1000.0),
        particle_spacing: spacing,
        transform: Transform::default(),
        velocity,
        kinematic: false,
    }
}

fn weightless() -> SimConfig {
    SimConfig {
        gravity: [0.0; 3],
        ..SimConfig::default()
    }
}

#[test]
fn colliding_blocks_conserve_momentum() {
    let cfg = weightless();
    let mut s = build_state(
        &[
            block(0, 4, 0.01, [0.40, 0.45, 0.45], [0.5, 0.0, 0.0], MaterialModel::Elastic),
            block(1, 4, 0.01, [0.46, 0.46, 0.45], [-0.5, 0.1, 0.0], MaterialModel::Plasticine),
        ],
        &cfg,
    )
    .unwrap();
    let scale = s.total_mass() * 0.5;
    let mut prev = s.momentum();
    for _ in 0..200 {
        step(&mut s, 2e-4).unwrap();
        let now = s.momentum();
        assert!((now - prev).norm() < 1e-9 * scale, "drift {}", (now - prev).norm());
        prev = now;
    }
}

#[test]
fn mass_is_conserved_through_a_run() {
    let cfg = SimConfig {
        frames: 6,
        ..SimConfig::default()
    };
    let mut s = build_state(&[block(0, 5, 0.01, [0.4, 0.1, 0.4], [0.0; 3], MaterialModel::Sand)], &cfg).unwrap();
    let before: Vec<f64> = s.mass.clone();
    let total = s.total_mass();
    simulate(&mut s, &InstructionSchedule::default(), &cfg).unwrap();
    assert_eq!(s.mass, before);
    assert_eq!(s.total_mass(), total);
}

fn velocities(s: &SimulationState) -> Vec<[f64; 3]> {
    s.velocity.iter().map(|v| [v.x, v.y, v.z]).collect()
}

#[test]
fn zero_gravity_edit_freezes_velocity() {
    let cfg = SimConfig {
        frames: 4,
        fps: 30.0,
        ..SimConfig::default()
    };
    let mut s = build_state(&[block(0, 3, 0.01, [0.45, 0.7, 0.45], [0.0; 3], MaterialModel::Elastic)], &cfg).unwrap();
    let sched = compile_schedule("at t=0.05 set all gravity (0, 0, 0)", &SceneInfo::from_state(&s)).unwrap();
    simulate(&mut s, &sched, &cfg).unwrap();
    assert!(s.time > 0.05);
    assert_eq!(s.objects[0].gravity, [0.0; 3]);
    let v0 = velocities(&s);
    assert!(v0[0][1] < -0.4);
    for _ in 0..10 {
        step(&mut s, 5e-4).unwrap();
    }
    for (a, b) in v0.iter().zip(velocities(&s)) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn dropped_block_does_not_gain_height() {
    let cfg = SimConfig {
        frames: 20,
        fps: 40.0,
        ..SimConfig::default()
    };
    let mut s = build_state(&[block(0, 4, 0.01, [0.45, 0.2, 0.45], [0.0; 3], MaterialModel::Elastic)], &cfg).unwrap();
    let t = simulate(&mut s, &InstructionSchedule::default(), &cfg).unwrap();
    let release = t.frames[0].objects[0].aabb_max[1];
    assert!(t.frames.iter().all(|f| f.objects[0].aabb_max[1] <= release));
    // It reaches the ground and comes back up lower than it started.
    assert!(t.frames.iter().any(|f| f.objects[0].aabb_min[1] < 0.1));
}
