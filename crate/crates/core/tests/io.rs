use std::f64::consts::FRAC_PI_2;

use memvo_core::geometry::{euler_to_matrix, rot_z, PoseSE3};
use memvo_core::io::{
    format_decimal, parse_kitti_poses, parse_tum_trajectory, read_dataset, read_sequence, write_dataset,
    write_kitti_poses, write_sequence, write_tum_trajectory, CsvTable, Sequence, Trajectory,
};
use memvo_core::training::DatasetSpec;
use memvo_core::Error;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn parse_line(err: Error) -> usize {
    match err {
        Error::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other}"),
    }
}

fn bits(p: &PoseSE3) -> Vec<u64> {
    p.to_matrix().iter().map(|x| x.to_bits()).collect()
}

// ------------------------------------------------------------------ KITTI

#[test]
fn kitti_identity_line() {
    let t = parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();
    assert_eq!(t.poses(), [PoseSE3::identity()]);
    assert_eq!(t.stamps(), [0.0]);
}

#[test]
fn kitti_translation_round_trip() {
    let p = PoseSE3::from_translation(Vector3::new(1.0, 2.0, 3.0));
    let text = write_kitti_poses(&[p]);
    assert_eq!(parse_kitti_poses(&text).unwrap().poses(), [p]);
}

#[test]
fn kitti_keeps_line_order() {
    let text: String = (0..5).map(|i| format!("1 0 0 {i} 0 1 0 0 0 0 1 0\n")).collect();
    let t = parse_kitti_poses(&text).unwrap();
    assert_eq!(t.len(), 5);
    for (i, p) in t.poses().iter().enumerate() {
        assert_eq!(p.translation().x, i as f64);
    }
}

#[test]
fn kitti_malformed_lines_report_line_numbers() {
    let good = "1 0 0 0 0 1 0 0 0 0 1 0\n";
    let cases = [
        format!("{good}1 0 0 0 0 1 0 0 0 0 1\n"),
        format!("{good}{good}1 0 0 0 0 1 0 0 0 0 1 0 7\n"),
        format!("{good}1 0 0 0 0 1 0 0 0 0 1 x\n"),
        format!("{good}1 0 0 0 0 1 0 0 0 0 1 nan\n"),
        format!("{good}-1 0 0 0 0 1 0 0 0 0 1 0\n"),
        format!("{good}0 0 0 0 0 0 0 0 0 0 0 0\n"),
    ];
    let expected_lines = [2, 3, 2, 2, 2, 2];
    for (text, line) in cases.iter().zip(expected_lines) {
        assert_eq!(parse_line(parse_kitti_poses(text).unwrap_err()), line, "{text}");
    }
}

#[test]
fn kitti_nearly_orthonormal_rotation_is_projected() {
    let text = "1.01 0 0 0 0 0.99 0 0 0 0 1 0\n";
    let p = parse_kitti_poses(text).unwrap().poses()[0];
    assert!((p.rotation() - Matrix3::identity()).norm() < 1e-12);
}

fn pose_strategy() -> impl Strategy<Value = PoseSE3> {
    (
        prop::array::uniform3(-3.0..3.0f64),
        prop::array::uniform3(-1e3..1e3f64),
    )
        .prop_map(|(e, t)| PoseSE3::new(euler_to_matrix(&Vector3::from(e)), Vector3::from(t)).unwrap())
}

proptest! {
    #[test]
    fn kitti_round_trip_is_bit_exact(poses in prop::collection::vec(pose_strategy(), 1..20)) {
        let back = parse_kitti_poses(&write_kitti_poses(&poses)).unwrap();
        prop_assert_eq!(back.len(), poses.len());
        for (a, b) in back.poses().iter().zip(&poses) {
            prop_assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn tum_round_trip_is_close(poses in prop::collection::vec(pose_strategy(), 1..20)) {
        let stamps: Vec<f64> = (0..poses.len()).map(|i| 0.5 + i as f64 * 0.033).collect();
        let t = Trajectory::new(stamps, poses).unwrap();
        let back = parse_tum_trajectory(&write_tum_trajectory(&t).unwrap()).unwrap();
        prop_assert_eq!(back.stamps(), t.stamps());
        for (a, b) in back.poses().iter().zip(t.poses()) {
            prop_assert!((a.to_matrix() - b.to_matrix()).norm() < 1e-12);
        }
    }
}

// -------------------------------------------------------------------- TUM

#[test]
fn tum_identity_and_comments() {
    let t = parse_tum_trajectory("# recorded\n\n0.0 0 0 0 0 0 0 1\n# more\n").unwrap();
    assert_eq!(t.stamps(), [0.0]);
    assert!((t.poses()[0].to_matrix() - nalgebra::Matrix4::identity()).norm() < 1e-15);
}

#[test]
fn tum_quarter_turn_quaternion() {
    let h = 0.5f64.sqrt();
    let t = parse_tum_trajectory(&format!("1.5 1 2 3 0 0 {h} {h}\n")).unwrap();
    let p = t.poses()[0];
    assert!((p.rotation() - rot_z(FRAC_PI_2)).norm() < 1e-9);
    assert_eq!(*p.translation(), Vector3::new(1.0, 2.0, 3.0));
}

#[test]
fn tum_non_unit_quaternion_is_normalized() {
    let t = parse_tum_trajectory("0 0 0 0 0 0 0 2\n").unwrap();
    assert!((t.poses()[0].rotation() - Matrix3::identity()).norm() < 1e-15);
}

#[test]
fn tum_malformed_input_rejected() {
    let ok = "0.0 0 0 0 0 0 0 1\n";
    assert_eq!(
        parse_line(parse_tum_trajectory(&format!("{ok}0.0 0 0 0 0 0 0 1\n")).unwrap_err()),
        2
    );
    assert_eq!(
        parse_line(parse_tum_trajectory(&format!("# c\n{ok}-1 0 0 0 0 0 0 1\n")).unwrap_err()),
        3
    );
    assert_eq!(
        parse_line(parse_tum_trajectory("0 0 0 0 0 0 1\n").unwrap_err()),
        1
    );
    assert_eq!(
        parse_line(parse_tum_trajectory("0 0 0 0 0 0 0 0\n").unwrap_err()),
        1
    );
    assert_eq!(
        parse_line(parse_tum_trajectory("0 0 0 0 a 0 0 1\n").unwrap_err()),
        1
    );
}

#[test]
fn trajectory_rejects_unordered_stamps() {
    let p = vec![PoseSE3::identity(); 2];
    assert!(Trajectory::new(vec![1.0, 1.0], p.clone()).is_err());
    assert!(Trajectory::new(vec![0.0], p).is_err());
}

// ---------------------------------------------------------------- container

fn dataset() -> Vec<Sequence> {
    DatasetSpec {
        sequences: 2,
        frames: 3,
        height: 16,
        width: 16,
        ..Default::default()
    }
    .generate()
    .unwrap()
}

#[test]
fn sequence_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let seq = &dataset()[0];
    write_sequence(dir.path(), seq).unwrap();
    let back = read_sequence(dir.path()).unwrap();
    assert_eq!(&back, seq);
}

#[test]
fn dataset_round_trip_and_single_sequence_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    write_dataset(dir.path(), &data).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap(), data);
    assert_eq!(
        read_dataset(&dir.path().join("seq_001")).unwrap(),
        vec![data[1].clone()]
    );
    assert!(read_dataset(&dir.path().join("nothing")).is_err());
}

#[test]
fn tampered_container_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &dataset()[0]).unwrap();
    let manifest = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();

    std::fs::write(
        &manifest,
        text.replace("\"frame_count\": 3", "\"frame_count\": 4"),
    )
    .unwrap();
    assert!(read_sequence(dir.path()).is_err());

    std::fs::write(
        &manifest,
        text.replace("frame_000001.votb", "../frame_000001.votb"),
    )
    .unwrap();
    assert!(read_sequence(dir.path()).is_err());

    std::fs::write(&manifest, text.replace("\"width\": 16", "\"width\": 8")).unwrap();
    assert!(read_sequence(dir.path()).is_err());

    std::fs::write(&manifest, &text).unwrap();
    std::fs::write(dir.path().join("poses.txt"), "1 0 0\n").unwrap();
    assert!(read_sequence(dir.path()).is_err());
}

// ---------------------------------------------------------------------- CSV

#[test]
fn csv_empty_table_is_header_only() {
    assert_eq!(CsvTable::new(&["a", "b"]).to_csv(), "a,b\n");
}

#[test]
fn csv_row_round_trip() {
    let mut t = CsvTable::new(&["length", "t_rel", "r_rel"]);
    t.push(vec![100.0, 1.234567891234, -0.000123456789123]).unwrap();
    let text = t.to_csv();
    assert_eq!(text, "length,t_rel,r_rel\n100,1.23456789,-0.000123456789\n");
    let back = CsvTable::parse(&text).unwrap();
    assert_eq!(back.header, t.header);
    assert_eq!(back.rows, vec![vec![100.0, 1.23456789, -0.000123456789]]);
    assert!(t.push(vec![1.0]).is_err());
}

#[test]
fn decimal_format_is_fixed_point() {
    assert_eq!(format_decimal(0.0), "0");
    assert_eq!(format_decimal(3.0), "3");
    assert_eq!(format_decimal(0.5), "0.500000000");
    assert_eq!(format_decimal(9.9999999999), "10.0000000");
    assert_eq!(format_decimal(123456.789012), "123456.789");
    assert_eq!(format_decimal(1.5e-7), "0.000000150000000");
    assert!(!format_decimal(1234.5).contains(','));
}
