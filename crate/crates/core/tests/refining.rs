use memvo_core::model::{Conv, ConvLstm, Se3Head};
use memvo_core::refining::{
    fuse_features, guided_memory, guided_observation, refine_sequence, spatial_weights, temporal_weights,
};
use memvo_tensor::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// `Σ_i α_i β_ij m_i[j]`, written out element by element.
fn oracle(guidance: &Tensor, memory: &[Tensor]) -> Vec<f64> {
    let shape = guidance.shape();
    let (c, plane) = (shape[0], shape[1] * shape[2]);
    let alpha = softmax(
        &memory
            .iter()
            .map(|m| cos(guidance.data(), m.data()))
            .collect::<Vec<_>>(),
    );
    let mut out = vec![0.0; c * plane];
    for (i, m) in memory.iter().enumerate() {
        let scores: Vec<f64> = (0..c)
            .map(|j| {
                cos(
                    &guidance.data()[j * plane..(j + 1) * plane],
                    &m.data()[j * plane..(j + 1) * plane],
                )
            })
            .collect();
        let beta: Vec<f64> = softmax(&scores).iter().map(|b| b * c as f64).collect();
        for j in 0..c {
            for p in 0..plane {
                out[j * plane + p] += alpha[i] * beta[j] * m.data()[j * plane + p];
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Case {
    guidance: Tensor,
    memory: Vec<Tensor>,
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-2.0..2.0))
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..7, 1usize..4, 1usize..4, 1usize..7, any::<u64>()).prop_map(|(c, h, w, n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [c, h, w];
        Case {
            guidance: random_tensor(&mut rng, shape),
            memory: (0..n).map(|_| random_tensor(&mut rng, shape)).collect(),
        }
    })
}

fn alpha_of(guidance: &Tensor, memory: &[Tensor]) -> Vec<f64> {
    let mut tape = Tape::new();
    let g = tape.constant(guidance.clone());
    let m: Vec<_> = memory.iter().map(|t| tape.constant(t.clone())).collect();
    let a = temporal_weights(&mut tape, g, &m).unwrap();
    tape.value(a).to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn attention_weights_are_normalized_and_match_oracle(case in case()) {
        let mut tape = Tape::new();
        let g = tape.constant(case.guidance.clone());
        let m: Vec<_> = case.memory.iter().map(|t| tape.constant(t.clone())).collect();
        let selected = guided_memory(&mut tape, g, &m).unwrap();
        let w = selected.weights(&tape);
        prop_assert!((w.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for row in &w.beta {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|b| *b > 0.0));
        }
        let expected = oracle(&case.guidance, &case.memory);
        let got = tape.value(selected.value);
        prop_assert_eq!(got.shape(), case.guidance.shape());
        for (a, b) in got.data().iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn alpha_is_invariant_to_positive_scaling(case in case(), k in -8i32..8, c in 0.01..100.0f64) {
        let base = alpha_of(&case.guidance, &case.memory);
        // Powers of two scale every intermediate exactly.
        let p = 2f64.powi(k);
        let scaled_g = case.guidance.map(|x| x * p);
        prop_assert_eq!(&alpha_of(&scaled_g, &case.memory), &base);
        let scaled_m: Vec<Tensor> = case.memory.iter().map(|m| m.map(|x| x * p)).collect();
        prop_assert_eq!(&alpha_of(&case.guidance, &scaled_m), &base);
        // Any other positive factor agrees to rounding.
        let scaled = alpha_of(&case.guidance.map(|x| x * c), &case.memory);
        for (a, b) in scaled.iter().zip(&base) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn single_slot_gets_full_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_tensor(&mut rng, [3, 2, 2]);
    let m = random_tensor(&mut rng, [3, 2, 2]);
    assert_eq!(alpha_of(&g, &[m]), vec![1.0]);
}

#[test]
fn zero_guidance_gives_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let g = tape.constant(Tensor::zeros(vec![4, 2, 3]));
    let m: Vec<_> = (0..5)
        .map(|_| tape.constant(random_tensor(&mut rng, [4, 2, 3])))
        .collect();
    let sel = guided_memory(&mut tape, g, &m).unwrap();
    let w = sel.weights(&tape);
    assert!(w.alpha.iter().all(|a| (a - 0.2).abs() < 1e-15));
    assert!(w.beta.iter().flatten().all(|b| (b - 1.0).abs() < 1e-15));
    // Uniform β leaves the observation unchanged.
    let x = tape.constant(random_tensor(&mut rng, [4, 2, 3]));
    let obs = guided_observation(&mut tape, g, x).unwrap();
    assert!(tape.value(obs).max_abs_diff(tape.value(x)) < 1e-15);
}

#[test]
fn identical_slots_average_to_the_slot() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let slot = random_tensor(&mut rng, [2, 3, 3]);
    let mut tape = Tape::new();
    let g = tape.constant(slot.clone());
    let m: Vec<_> = (0..3).map(|_| tape.constant(slot.clone())).collect();
    let sel = guided_memory(&mut tape, g, &m).unwrap();
    // Perfect correlation in every channel: β = 1, α = 1/3.
    assert!(tape.value(sel.value).max_abs_diff(&slot) < 1e-14);
}

#[test]
fn beta_prefers_the_correlated_channel() {
    let mut tape = Tape::new();
    let g = tape.constant(Tensor::new(vec![2, 1, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap());
    let m = tape.constant(Tensor::new(vec![2, 1, 2], vec![1.0, 0.0, -1.0, 0.0]).unwrap());
    let beta = spatial_weights(&mut tape, g, m).unwrap();
    let b = tape.value(beta).to_vec();
    assert!(b[0] > 1.0 && b[1] < 1.0);
    assert!((b[0] + b[1] - 2.0).abs() < 1e-15);
}

#[test]
fn empty_memory_and_shape_mismatch_rejected() {
    let mut tape = Tape::new();
    let g = tape.constant(Tensor::zeros(vec![2, 2, 2]));
    assert!(guided_memory(&mut tape, g, &[]).is_err());
    let bad = tape.constant(Tensor::zeros(vec![2, 3, 2]));
    assert!(guided_memory(&mut tape, g, &[bad]).is_err());
    let fusion = [
        Conv {
            weight: tape.constant(Tensor::zeros(vec![2, 4, 3, 3])),
            bias: tape.constant(Tensor::zeros(vec![2])),
        },
        Conv {
            weight: tape.constant(Tensor::zeros(vec![2, 2, 3, 3])),
            bias: tape.constant(Tensor::zeros(vec![2])),
        },
    ];
    assert!(fuse_features(&mut tape, g, bad, &fusion).is_err());
}

#[test]
fn refining_emits_one_pose_per_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (c, h) = (4, 3);
    let mut tape = Tape::new();
    let mut param = |shape: Vec<usize>| tape.leaf(Tensor::from_fn(shape, |_| rng.random_range(-0.3..0.3)));
    let fusion = [
        Conv {
            weight: param(vec![c, 2 * c, 3, 3]),
            bias: param(vec![c]),
        },
        Conv {
            weight: param(vec![c, c, 3, 3]),
            bias: param(vec![c]),
        },
    ];
    let cell = ConvLstm {
        wx: param(vec![4 * c, c, 3, 3]),
        wh: param(vec![4 * c, c, 3, 3]),
        bias: param(vec![4 * c]),
    };
    let head = Se3Head {
        weight: param(vec![6, c]),
        bias: param(vec![6]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features: Vec<_> = (0..4)
        .map(|_| tape.constant(random_tensor(&mut rng, [c, h, h])))
        .collect();
    let memory = &features[..2];
    let out = refine_sequence(&mut tape, &features, memory, &fusion, &cell, &head).unwrap();
    assert_eq!(out.absolute.len(), 4);
    assert!(out.absolute.iter().all(|&p| tape.shape(p) == [6]));
    assert!(out.attention.iter().all(|a| a.weights(&tape).alpha.len() == 2));
    assert!(refine_sequence(&mut tape, &features, &[], &fusion, &cell, &head).is_err());
}
