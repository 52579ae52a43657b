//! Property tests for the augmentation transforms.

use proptest::prelude::*;

use pdaug::augment::{
    crop_traced, jitter, magnitude_warp, permute, rotate, scale, time_warp, AugmentConfig,
    AugmentPipeline, TransformKind,
};
use pdaug::rng::derive_stream;
use pdaug::window::{Window, CHANNELS};

fn window_strategy() -> impl Strategy<Value = Window> {
    (8usize..120, any::<u64>()).prop_map(|(t_len, seed)| {
        let mut rng = derive_stream(seed, 12345);
        let rows: Vec<[f64; CHANNELS]> = (0..t_len)
            .map(|_| {
                [
                    rng.uniform(-2.0, 2.0),
                    rng.uniform(-2.0, 2.0),
                    rng.uniform(-2.0, 2.0),
                ]
            })
            .collect();
        Window::from_rows(&rows, 120.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Same (window, stream state, config) gives bitwise-identical output;
    /// shape and finiteness are preserved by every transform.
    #[test]
    fn transforms_deterministic_and_shape_preserving(
        w in window_strategy(),
        seed in any::<u64>(),
        stream in any::<u64>(),
    ) {
        let cfg = AugmentConfig::default();
        for kind in TransformKind::ALL {
            let apply = |rng: &mut pdaug::rng::RngStream| match kind {
                TransformKind::Jitter => jitter(&w, rng, &cfg),
                TransformKind::Scale => scale(&w, rng, &cfg),
                TransformKind::Rot => rotate(&w, rng),
                TransformKind::Perm => permute(&w, rng, &cfg),
                TransformKind::MagW => magnitude_warp(&w, rng, &cfg),
                TransformKind::TimeW => time_warp(&w, rng, &cfg),
                TransformKind::Crop => crop_traced(&w, rng, &cfg).map(|(out, _)| out),
            };
            let a = apply(&mut derive_stream(seed, stream)).unwrap();
            let b = apply(&mut derive_stream(seed, stream)).unwrap();
            prop_assert_eq!(a.samples().data(), b.samples().data());
            prop_assert_eq!(a.len(), w.len());
            prop_assert!(a.samples().all_finite());
        }
    }

    /// A full pipeline threads one stream deterministically.
    #[test]
    fn pipeline_deterministic(w in window_strategy(), seed in any::<u64>()) {
        let p = AugmentPipeline::parse(
            "jitter+scale+rot+perm+magw+timew+crop",
            AugmentConfig::default(),
        ).unwrap();
        let a = p.apply(&w, &mut derive_stream(seed, 1)).unwrap();
        let b = p.apply(&w, &mut derive_stream(seed, 1)).unwrap();
        prop_assert_eq!(a.samples().data(), b.samples().data());
        prop_assert_eq!(a.len(), w.len());
    }

    /// Rotation is an isometry on every sample row.
    #[test]
    fn rotation_preserves_norms(w in window_strategy(), seed in any::<u64>()) {
        let out = rotate(&w, &mut derive_stream(seed, 2)).unwrap();
        for t in 0..w.len() {
            let na: f64 = w.row(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = out.row(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((na - nb).abs() < 1e-9);
        }
    }

    /// Permutation preserves the exact multiset of rows and the per-channel
    /// means up to reordering error.
    #[test]
    fn permutation_preserves_rows(w in window_strategy(), seed in any::<u64>()) {
        let cfg = AugmentConfig::default();
        let out = permute(&w, &mut derive_stream(seed, 3), &cfg).unwrap();
        let mut a: Vec<[u64; 3]> = w.rows().map(|r| r.map(f64::to_bits)).collect();
        let mut b: Vec<[u64; 3]> = out.rows().map(|r| r.map(f64::to_bits)).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        for c in 0..CHANNELS {
            let ma: f64 = (0..w.len()).map(|t| w.get(t, c)).sum::<f64>() / w.len() as f64;
            let mb: f64 = (0..w.len()).map(|t| out.get(t, c)).sum::<f64>() / w.len() as f64;
            prop_assert!((ma - mb).abs() < 1e-12);
        }
    }

    /// The crop slice is always a contiguous subsequence of the input.
    #[test]
    fn crop_slice_contiguity(w in window_strategy(), seed in any::<u64>()) {
        let cfg = AugmentConfig::default();
        let (out, span) = crop_traced(&w, &mut derive_stream(seed, 4), &cfg).unwrap();
        prop_assert!(span.start + span.len <= w.len());
        // Endpoints of the stretched output hit the slice endpoints exactly.
        for c in 0..CHANNELS {
            prop_assert_eq!(out.get(0, c), w.get(span.start, c));
            prop_assert_eq!(out.get(w.len() - 1, c), w.get(span.start + span.len - 1, c));
        }
    }
}
