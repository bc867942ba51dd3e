use memvo_tensor::{votb, Tensor};
use proptest::prelude::*;

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        // Arbitrary bit patterns: subnormals, infinities, signed zeros and NaNs.
        prop::collection::vec(any::<u64>(), n).prop_map(move |raw| {
            Tensor::new(shape.clone(), raw.into_iter().map(f64::from_bits).collect()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn round_trip_is_bit_exact(t in tensor()) {
        let back = votb::decode(&votb::encode(&t)).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn any_truncation_is_rejected(t in tensor(), cut in any::<prop::sample::Index>()) {
        let bytes = votb::encode(&t);
        let len = cut.index(bytes.len());
        prop_assert!(votb::decode(&bytes[..len]).is_err());
    }
}

#[test]
fn file_round_trip() {
    let dir = std::env::temp_dir().join(format!("votb-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("t.votb");
    let t = Tensor::new(vec![2, 3], vec![0.1, -0.0, 1e-310, f64::INFINITY, 3.0, -7.25]).unwrap();
    votb::write_file(&path, &t).unwrap();
    assert_eq!(bits(&votb::read_file(&path).unwrap()), bits(&t));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn corrupt_headers_rejected() {
    let good = votb::encode(&Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(votb::decode(&bad_magic).is_err());
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    assert!(votb::decode(&bad_version).is_err());
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(votb::decode(&trailing).is_err());
    let mut huge = good;
    huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(votb::decode(&huge).is_err());
}
