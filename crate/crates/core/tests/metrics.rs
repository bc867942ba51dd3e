use memvo_core::eval::{
    associate, kitti_drift, path_lengths, saliency_maps, speed_table, tum_rmse_drift, Aggregation,
    DriftOptions, SaliencyMode, TumDriftOptions, KITTI_LENGTHS,
};
use memvo_core::geometry::{euler_to_matrix, integrate_relative, rot_z, Pose6DoF, PoseSE3, Similarity};
use memvo_core::io::Trajectory;
use memvo_core::memory::MemoryPolicy;
use memvo_core::model::{ModelConfig, Preset, VoModel};
use memvo_core::pipeline::PipelineOptions;
use memvo_core::training::{make_synthetic_sequence, Pattern, SyntheticSequenceSpec};
use nalgebra::{Matrix4, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn straight_line(n: usize, step: f64) -> Vec<PoseSE3> {
    (0..n)
        .map(|i| PoseSE3::from_translation(Vector3::new(0.0, 0.0, step * i as f64)))
        .collect()
}

/// A winding drive with ~`step` m between frames.
fn random_drive(rng: &mut ChaCha8Rng, n: usize, step: f64) -> Vec<PoseSE3> {
    let rel: Vec<Pose6DoF> = (0..n - 1)
        .map(|_| {
            Pose6DoF::new(
                Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05), step),
                Vector3::new(
                    rng.random_range(-0.01..0.01),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.01..0.01),
                ),
            )
        })
        .collect();
    integrate_relative(&rel, &PoseSE3::identity())
}

fn perturb(rng: &mut ChaCha8Rng, gt: &[PoseSE3]) -> Vec<PoseSE3> {
    let rel: Vec<Pose6DoF> = gt
        .windows(2)
        .map(|w| {
            let r = w[0].between(&w[1]).to_pose6();
            let noise_t = Vector3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.1..0.1),
            );
            let noise_r = Vector3::new(
                rng.random_range(-2e-3..2e-3),
                rng.random_range(-2e-3..2e-3),
                rng.random_range(-2e-3..2e-3),
            );
            Pose6DoF::new(r.translation + noise_t, r.rotation + noise_r)
        })
        .collect();
    integrate_relative(&rel, &gt[0])
}

/// The subsegment definition evaluated from raw 4×4 matrices, with the
/// rotation angle taken from a quaternion.
fn definitional_drift(est: &[PoseSE3], gt: &[PoseSE3], lengths: &[f64]) -> (f64, f64, usize) {
    let m = |p: &PoseSE3| p.to_matrix();
    let inv = |a: Matrix4<f64>| a.try_inverse().unwrap();
    let mut dist = vec![0.0];
    for i in 1..gt.len() {
        let d = (m(&gt[i]) - m(&gt[i - 1])).fixed_view::<3, 1>(0, 3).norm();
        dist.push(dist[i - 1] + d);
    }
    let (mut t_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
    for start in 0..gt.len() {
        for &len in lengths {
            let Some(end) = (start..gt.len()).find(|&j| dist[j] >= dist[start] + len) else {
                continue;
            };
            let g = inv(m(&gt[start])) * m(&gt[end]);
            let e = inv(m(&est[start])) * m(&est[end]);
            let err = inv(g) * e;
            let t = err.fixed_view::<3, 1>(0, 3).norm();
            let rot = Rotation3::from_matrix_unchecked(err.fixed_view::<3, 3>(0, 0).into_owned());
            let angle = UnitQuaternion::from_rotation_matrix(&rot).angle();
            t_sum += t / len;
            r_sum += angle / len;
            n += 1;
        }
    }
    (
        100.0 * t_sum / n as f64,
        (r_sum / n as f64).to_degrees() * 100.0,
        n,
    )
}

// -------------------------------------------------------------- KITTI drift

#[test]
fn identical_trajectories_have_zero_drift() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt = random_drive(&mut rng, 400, 2.5);
    let r = kitti_drift(&gt, &gt, &DriftOptions::default()).unwrap();
    assert_eq!((r.t_rel, r.r_rel), (0.0, 0.0));
    assert!(!r.segments.is_empty());
}

#[test]
fn one_percent_scale_error_on_a_straight_line() {
    let gt = straight_line(900, 1.0);
    let est: Vec<PoseSE3> = gt
        .iter()
        .map(|p| PoseSE3::from_translation(p.translation() * 1.01))
        .collect();
    let r = kitti_drift(&est, &gt, &DriftOptions::default()).unwrap();
    assert!((r.t_rel - 1.0).abs() < 1e-9, "{}", r.t_rel);
    assert_eq!(r.r_rel, 0.0);
    for row in &r.per_length {
        assert!((row.t_rel - 1.0).abs() < 1e-9);
        assert_eq!(row.count, 900 - row.length as usize);
    }
}

#[test]
fn short_trajectory_gives_an_empty_table() {
    let gt = straight_line(50, 1.0);
    let r = kitti_drift(&gt, &gt, &DriftOptions::default()).unwrap();
    assert!(r.segments.is_empty());
    assert!(r.per_length.iter().all(|row| row.count == 0));
    assert!(kitti_drift(&gt, &gt[..10], &DriftOptions::default()).is_err());
}

#[test]
fn matches_definitional_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let n = rng.random_range(150..260);
        let gt = random_drive(&mut rng, n, 4.0);
        let est = perturb(&mut rng, &gt);
        let r = kitti_drift(&est, &gt, &DriftOptions::default()).unwrap();
        let (t, rot, count) = definitional_drift(&est, &gt, &KITTI_LENGTHS);
        assert_eq!(r.segments.len(), count, "case {case}");
        assert!((r.t_rel - t).abs() < 1e-9, "case {case}: {} vs {t}", r.t_rel);
        assert!((r.r_rel - rot).abs() < 1e-9, "case {case}: {} vs {rot}", r.r_rel);
    }
}

#[test]
fn invariant_to_a_shared_rigid_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = random_drive(&mut rng, 200, 4.0);
    let est = perturb(&mut rng, &gt);
    let g = PoseSE3::new(
        euler_to_matrix(&Vector3::new(0.3, -1.1, 2.0)),
        Vector3::new(10.0, -4.0, 7.0),
    )
    .unwrap();
    let moved = |t: &[PoseSE3]| t.iter().map(|p| g.compose(p)).collect::<Vec<_>>();
    let a = kitti_drift(&est, &gt, &DriftOptions::default()).unwrap();
    let b = kitti_drift(&moved(&est), &moved(&gt), &DriftOptions::default()).unwrap();
    assert!((a.t_rel - b.t_rel).abs() < 1e-9);
    assert!((a.r_rel - b.r_rel).abs() < 1e-9);
}

#[test]
fn rmse_aggregation_dominates_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt = random_drive(&mut rng, 200, 4.0);
    let est = perturb(&mut rng, &gt);
    let mean = kitti_drift(&est, &gt, &DriftOptions::default()).unwrap();
    let rmse = kitti_drift(
        &est,
        &gt,
        &DriftOptions {
            aggregation: Aggregation::Rmse,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(rmse.t_rel >= mean.t_rel && rmse.r_rel >= mean.r_rel);
    let direct =
        (rmse.segments.iter().map(|s| s.t_err * s.t_err).sum::<f64>() / rmse.segments.len() as f64).sqrt();
    assert!((rmse.t_rel - 100.0 * direct).abs() < 1e-12);
}

#[test]
fn speed_bins_partition_the_segments() {
    let gt = straight_line(900, 1.0);
    let r = kitti_drift(&gt, &gt, &DriftOptions::default()).unwrap();
    let table = speed_table(&r, 2.0).unwrap();
    assert_eq!(table.iter().map(|row| row.count).sum::<usize>(), r.segments.len());
    // 1 m per frame at 10 Hz: every subsegment runs just under 10 m/s.
    assert!(table.iter().all(|row| row.speed == 8.0));
    assert!(speed_table(&r, 0.0).is_err());
}

#[test]
fn path_length_accumulates() {
    assert_eq!(path_lengths(&straight_line(4, 2.0)), [0.0, 2.0, 4.0, 6.0]);
}

// ---------------------------------------------------------------- TUM drift

fn circle(n: usize, dt: f64, radius: f64, omega: f64) -> Trajectory {
    let stamps: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let poses = stamps
        .iter()
        .map(|&t| {
            let a = omega * t;
            PoseSE3::new(
                rot_z(a + std::f64::consts::FRAC_PI_2),
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.3),
            )
            .unwrap()
        })
        .collect();
    Trajectory::new(stamps, poses).unwrap()
}

#[test]
fn tum_zero_for_identical_and_scaled_estimates() {
    let gt = circle(160, 0.125, 2.0, 0.5);
    let opts = TumDriftOptions::default();
    assert!(tum_rmse_drift(&gt, &gt, &opts).unwrap().rmse < 1e-12);
    let scaled = Trajectory::new(
        gt.stamps().to_vec(),
        gt.poses()
            .iter()
            .map(|p| PoseSE3::new(*p.rotation(), p.translation() * 2.0).unwrap())
            .collect(),
    )
    .unwrap();
    let r = tum_rmse_drift(&scaled, &gt, &opts).unwrap();
    assert!(r.rmse < 1e-9, "{}", r.rmse);
    assert!((r.alignment.scale - 0.5).abs() < 1e-12);
}

#[test]
fn tum_recovers_constructed_drift() {
    // Positions match exactly, so alignment is the identity; a constant
    // heading offset δ turns each one-second chord c into a translation
    // error of 2·sin(δ/2)·c.
    let (radius, omega, drift) = (2.0, 0.5, 0.05);
    let gt = circle(160, 0.125, radius, omega);
    let chord = 2.0 * radius * (omega / 2.0).sin();
    let delta = 2.0 * (drift / (2.0 * chord)).asin();
    let offset = rot_z(delta);
    let est = Trajectory::new(
        gt.stamps().to_vec(),
        gt.poses()
            .iter()
            .map(|p| PoseSE3::new(p.rotation() * offset, *p.translation()).unwrap())
            .collect(),
    )
    .unwrap();
    let r = tum_rmse_drift(&est, &gt, &TumDriftOptions::default()).unwrap();
    assert!((r.rmse - drift).abs() < 1e-6, "{}", r.rmse);
    assert_eq!(r.pairs, 160 - 8);
}

#[test]
fn tum_invariant_to_similarity_of_the_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = circle(120, 0.1, 1.5, 0.7);
    let est_poses = perturb(&mut rng, gt.poses());
    let est = Trajectory::new(gt.stamps().to_vec(), est_poses.clone()).unwrap();
    let sim = Similarity {
        scale: 3.7,
        rotation: euler_to_matrix(&Vector3::new(0.4, 0.2, -1.3)),
        translation: Vector3::new(5.0, -2.0, 1.0),
    };
    let moved = Trajectory::new(
        gt.stamps().to_vec(),
        est_poses.iter().map(|p| sim.apply_pose(p)).collect(),
    )
    .unwrap();
    let opts = TumDriftOptions::default();
    let a = tum_rmse_drift(&est, &gt, &opts).unwrap().rmse;
    let b = tum_rmse_drift(&moved, &gt, &opts).unwrap().rmse;
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn association_is_greedy_one_to_one() {
    let est = [0.0, 0.010, 0.5, 1.0];
    let gt = [0.005, 0.012, 0.9];
    assert_eq!(associate(&est, &gt, 0.02), [(0, 0), (1, 1)]);
    let far = Trajectory::new(vec![10.0, 11.0], vec![PoseSE3::identity(); 2]).unwrap();
    let gt = circle(10, 0.1, 1.0, 1.0);
    assert!(tum_rmse_drift(&far, &gt, &TumDriftOptions::default()).is_err());
}

// ----------------------------------------------------------------- saliency

fn desk_model() -> VoModel {
    VoModel::init(ModelConfig::for_preset(Preset::Desk), 17).unwrap()
}

fn square_window() -> Vec<memvo_tensor::Tensor> {
    make_synthetic_sequence(&SyntheticSequenceSpec {
        frames: 4,
        pattern: Pattern::Square { side: 14.0 },
        velocity: [0.15, 0.05],
        ..Default::default()
    })
    .unwrap()
    .sequence
    .frames
}

#[test]
fn future_frames_have_zero_saliency_without_refining() {
    let frames = square_window();
    let opts = PipelineOptions::default();
    let maps = saliency_maps(&desk_model(), &frames, 1, SaliencyMode::TrackingOnly, &opts).unwrap();
    assert_eq!(maps.len(), 4);
    assert!(!maps[0].is_zero() && !maps[1].is_zero());
    assert!(maps[2].is_zero() && maps[3].is_zero());
    assert!(saliency_maps(&desk_model(), &frames, 0, SaliencyMode::Refined, &opts).is_err());
    assert!(saliency_maps(&desk_model(), &frames, 4, SaliencyMode::Refined, &opts).is_err());
}

#[test]
fn refined_saliency_is_nonnegative_and_finite() {
    let frames = square_window();
    let opts = PipelineOptions {
        policy: MemoryPolicy::store_all(4),
        detach_memory: false,
    };
    let maps = saliency_maps(&desk_model(), &frames, 2, SaliencyMode::Refined, &opts).unwrap();
    for m in &maps {
        assert_eq!((m.height, m.width), (64, 64));
        assert!(m.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(m.to_tensor().shape(), [64, 64]);
    }
    // With attached memory every frame feeds the stored states.
    assert!(maps.iter().all(|m| !m.is_zero()));
}

#[test]
fn saliency_concentrates_on_the_moving_square() {
    let frames = square_window();
    let maps = saliency_maps(
        &desk_model(),
        &frames,
        3,
        SaliencyMode::Refined,
        &PipelineOptions::default(),
    )
    .unwrap();
    let swept: Vec<bool> = (0..64 * 64)
        .map(|p| {
            frames
                .iter()
                .any(|f| (0..3).any(|c| f.data()[c * 64 * 64 + p] != 0.0))
        })
        .collect();
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for m in &maps {
        for (v, &s) in m.values.iter().zip(&swept) {
            let acc = if s { &mut inside } else { &mut outside };
            acc.0 += v;
            acc.1 += 1;
        }
    }
    assert!(inside.1 > 0 && outside.1 > 0);
    let (mi, mo) = (inside.0 / inside.1 as f64, outside.0 / outside.1 as f64);
    assert!(mi > mo, "inside {mi:e}, outside {mo:e}");
}
