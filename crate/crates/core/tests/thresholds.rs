//! Global thresholds and MAA against brute-force reimplementations.

mod common;

use common::check_threshold_oracles;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scefis_core::imaging::{
    apply_threshold, histogram, jaccard, maa_search, BinaryMask, GlobalMethod, GrayImage,
    Histogram, Orientation,
};

#[test]
fn criteria_and_thresholds_match_brute_force() {
    check_threshold_oracles(0..50).unwrap();
}

fn noisy_image(seed: u64) -> (GrayImage, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (40, 30);
    let cx = rng.random_range(10.0..30.0);
    let cy = rng.random_range(8.0..22.0);
    let r = rng.random_range(4.0..9.0);
    let inside = |x: usize, y: usize| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
    let gold = BinaryMask::from_fn(w, h, inside).unwrap();
    let fg: f64 = rng.random_range(40.0..110.0);
    let bg: f64 = rng.random_range(120.0..220.0);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(-35.0..35.0)).collect();
    let img = GrayImage::from_fn(w, h, |x, y| {
        let base = if inside(x, y) { fg } else { bg };
        (base + noise[y * w + x]).clamp(0.0, 255.0) as u8
    })
    .unwrap();
    (img, gold)
}

#[test]
fn maa_equals_exhaustive_search() {
    for seed in 0..20 {
        let (img, gold) = noisy_image(seed);
        for o in [Orientation::DarkObject, Orientation::BrightObject] {
            let mut best = (0u8, f64::NEG_INFINITY);
            for t in 0..=255u8 {
                let j = jaccard(&apply_threshold(&img, t, o), &gold).unwrap().jaccard;
                if j > best.1 {
                    best = (t, j);
                }
            }
            let got = maa_search(&img, &gold, o, false).unwrap();
            assert_eq!((got.t_star, got.j_max), best, "seed {seed} {o:?}");
            assert_eq!(got.orientation, o);
        }
    }
}

#[test]
fn maa_dominates_every_global_method() {
    for seed in 0..20 {
        let (img, gold) = noisy_image(seed);
        let maa = maa_search(&img, &gold, Orientation::DarkObject, false).unwrap();
        let hist = histogram(&img);
        for m in GlobalMethod::ALL {
            let t = m.apply(&hist).threshold;
            let j = jaccard(&apply_threshold(&img, t, Orientation::DarkObject), &gold)
                .unwrap()
                .jaccard;
            assert!(maa.j_max >= j, "seed {seed} {}: {} < {j}", m.name(), maa.j_max);
        }
    }
}

fn arb_counts() -> impl Strategy<Value = [u64; 256]> {
    prop::collection::vec((0usize..256, 1u64..1000), 2..40).prop_map(|bins| {
        let mut counts = [0u64; 256];
        for (g, c) in bins {
            counts[g] += c;
        }
        counts
    })
}

proptest! {
    #[test]
    fn thresholds_ignore_uniform_count_scaling(counts in arb_counts(), k in 2u64..50) {
        let scaled = counts.map(|c| c * k);
        for m in GlobalMethod::ALL {
            let a = m.apply(&Histogram::from_counts(counts));
            let b = m.apply(&Histogram::from_counts(scaled));
            prop_assert_eq!(a, b, "{}", m.name());
        }
    }

    #[test]
    fn unflagged_thresholds_split_the_populated_range(counts in arb_counts()) {
        let hist = Histogram::from_counts(counts);
        let Some((first, last)) = hist.first_last() else { return Ok(()) };
        for m in GlobalMethod::ALL {
            let out = m.apply(&hist);
            if out.flag.is_none() {
                let t = out.threshold as usize;
                prop_assert!(t >= first && t < last, "{} gave {t} outside [{first}, {last})", m.name());
            }
        }
    }
}
