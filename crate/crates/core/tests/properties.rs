//! Randomized property tests over the numeric invariants.

use proptest::prelude::*;

use tempo4d::meshio::{denormalize_sequence, normalize_sequence, Centering, MeshFrame, MeshSequence};
use tempo4d::swattn::{apply_rope, vanilla_attention, windowed_attention, FrameTokens, RotaryConfig};
use tempo4d::tensor::Tensor;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        rows in 1usize..5,
        cols in 1usize..9,
        seed in 0u64..1000,
        shift in -50.0f64..50.0,
    ) {
        let x = Tensor::<f64>::gaussian(&[rows, cols], seed, 0.0, 3.0).unwrap();
        let y = x.softmax_lastdim().unwrap();
        for r in 0..rows {
            let sum: f64 = (0..cols).map(|c| y.at(&[r, c])).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
        let shifted = x.shift(shift).softmax_lastdim().unwrap();
        for (a, b) in y.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rope_preserves_token_norms(
        t in -20_000i64..20_000,
        seed in 0u64..1000,
        half_dim in 1usize..9,
    ) {
        let d = half_dim * 2;
        let cfg = RotaryConfig::new(d).unwrap();
        let x = Tensor::<f64>::gaussian(&[3, d], seed, 0.0, 2.0).unwrap();
        let y = apply_rope(&x, t, &cfg).unwrap();
        for row in 0..3 {
            let nx: f64 = (0..d).map(|c| x.at(&[row, c]).powi(2)).sum::<f64>().sqrt();
            let ny: f64 = (0..d).map(|c| y.at(&[row, c]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((nx - ny).abs() < 1e-12);
        }
    }

    #[test]
    fn windowed_w0_matches_vanilla(
        t_len in 1usize..6,
        n in 1usize..5,
        half_dim in 1usize..5,
        seed in 0u64..500,
    ) {
        let d = half_dim * 2;
        let cfg = RotaryConfig::new(d).unwrap();
        let frames = FrameTokens::new(
            Tensor::<f64>::gaussian(&[t_len, n, d], seed * 3, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t_len, n, d], seed * 3 + 1, 0.0, 1.0).unwrap(),
            Tensor::<f64>::gaussian(&[t_len, n, d], seed * 3 + 2, 0.0, 1.0).unwrap(),
        ).unwrap();
        let windowed = windowed_attention(&frames, 0, &cfg).unwrap();
        for t in 0..t_len {
            let q = frames.q.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            let k = frames.k.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            let v = frames.v.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
            let plain = vanilla_attention(&q, &k, &v).unwrap();
            for i in 0..n {
                for c in 0..d {
                    prop_assert!((windowed.at(&[t, i, c]) - plain.at(&[i, c])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn normalization_round_trips(
        frames in 1usize..5,
        seed in 0u64..500,
    ) {
        let mut seqs = Vec::new();
        for f in 0..frames {
            let verts = Tensor::<f64>::gaussian(&[4, 3], seed * 7 + f as u64, 2.0, 5.0).unwrap();
            let vertices: Vec<[f64; 3]> = (0..4)
                .map(|i| [verts.at(&[i, 0]), verts.at(&[i, 1]), verts.at(&[i, 2])])
                .collect();
            seqs.push(MeshFrame::new(vertices, vec![[0, 1, 2], [0, 1, 3]]).unwrap());
        }
        let seq = MeshSequence::new(seqs).unwrap();
        // Degenerate rest poses (zero extent) are rejected, not normalized.
        match normalize_sequence(&seq, 0, Centering::BoundingBox) {
            Err(_) => {}
            Ok((norm, record)) => {
                let back = denormalize_sequence(&norm, &record).unwrap();
                for (a, b) in back.frames().iter().zip(seq.frames()) {
                    for (va, vb) in a.vertices().iter().zip(b.vertices()) {
                        for c in 0..3 {
                            prop_assert!((va[c] - vb[c]).abs() < 1e-9);
                        }
                    }
                }
                let mut max_abs = 0.0f64;
                for frame in norm.frames() {
                    for v in frame.vertices() {
                        for c in 0..3 {
                            max_abs = max_abs.max(v[c].abs());
                        }
                    }
                }
                prop_assert!((max_abs - 1.0).abs() < 1e-9);
            }
        }
    }
}

/// 32-bit variants of the exactness claims, at their widened tolerances.
mod f32_support {
    use tempo4d::swattn::{vanilla_attention, windowed_attention, FrameTokens, RotaryConfig};
    use tempo4d::tensor::{grad_check, Tensor};

    #[test]
    fn lossless_w0_in_f32() {
        let mut worst = 0.0f32;
        for seed in 0..50u64 {
            let (t_len, n, d) = (1 + (seed as usize % 4), 1 + (seed as usize % 5), 8);
            let frames = FrameTokens::new(
                Tensor::<f32>::gaussian(&[t_len, n, d], seed * 3, 0.0, 1.0).unwrap(),
                Tensor::<f32>::gaussian(&[t_len, n, d], seed * 3 + 1, 0.0, 1.0).unwrap(),
                Tensor::<f32>::gaussian(&[t_len, n, d], seed * 3 + 2, 0.0, 1.0).unwrap(),
            )
            .unwrap();
            let cfg = RotaryConfig::new(d).unwrap();
            let windowed = windowed_attention(&frames, 0, &cfg).unwrap();
            for t in 0..t_len {
                let q = frames.q.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
                let k = frames.k.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
                let v = frames.v.narrow0(t, 1).unwrap().reshape(&[n, d]).unwrap();
                let plain = vanilla_attention(&q, &k, &v).unwrap();
                for i in 0..n {
                    for c in 0..d {
                        worst = worst.max((windowed.at(&[t, i, c]) - plain.at(&[i, c])).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-4, "f32 lossless deviation {worst}");
    }

    #[test]
    fn grad_check_in_f32() {
        let mut worst = 0.0f32;
        for seed in 0..20u64 {
            let x = Tensor::<f32>::gaussian(&[5], seed, 0.0, 1.0).unwrap();
            let err = grad_check(
                |x: &Tensor<f32>| Ok(x.mul(x)?.sum()),
                &x,
                5e-3f32,
            )
            .unwrap();
            worst = worst.max(err);
            let err = grad_check(
                |x: &Tensor<f32>| Ok(x.softmax_lastdim()?.narrow0(0, 1)?.sum()),
                &x,
                5e-3f32,
            )
            .unwrap();
            worst = worst.max(err);
        }
        assert!(worst < 1e-3, "f32 gradient error {worst}");
    }
}
