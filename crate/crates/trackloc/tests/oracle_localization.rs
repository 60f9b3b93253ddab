//! Brute-force oracles for the localization kernels: median filter,
//! threshold segmentation, top-k scoring, spatio-temporal NMS and the
//! Viterbi baseline (exhaustive 2^T enumeration).

mod common;

use common::oracles::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackloc::geom::BoundingBox;
use trackloc::localize::{
    localize, median_filter, score_subtrack, st_nms, threshold_segment, viterbi_segment,
    LocalizationConfig, ViterbiConfig,
};
use trackloc::model::ScoreSequence;
use trackloc::track::{st_iou, Detection, PersonTrack};

fn rand_scores<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.0..1.0)).collect()
}

#[test]
fn median_matches_sliding_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3D);
    for _ in 0..500 {
        let len = rng.random_range(1..=40);
        let window = 2 * rng.random_range(0..=7) + 1;
        let s = rand_scores(&mut rng, len);
        assert_eq!(median_filter(&s, window).unwrap(), brute_median(&s, window));
    }
}

#[test]
fn threshold_matches_maximal_interval_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E);
    for _ in 0..500 {
        let len = rng.random_range(0..=30);
        let s = rand_scores(&mut rng, len);
        let theta = rng.random_range(0.05..0.95);
        assert_eq!(threshold_segment(&s, theta), brute_segments(&s, theta));
    }
}

#[test]
fn top_k_matches_full_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5C);
    for _ in 0..500 {
        let len = rng.random_range(1..=80);
        let k = rng.random_range(1..=50);
        let s = rand_scores(&mut rng, len);
        let got = score_subtrack(&s, k).unwrap();
        assert!((got - brute_top_k_mean(&s, k)).abs() < 1e-12);
    }

    // 50 scores, top 40
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = rand_scores(&mut rng, 50);
    assert!((score_subtrack(&s, 40).unwrap() - brute_top_k_mean(&s, 40)).abs() < 1e-12);
}

fn rand_detection<R: Rng>(rng: &mut R, video: &str, class: u32) -> Detection {
    let start = rng.random_range(0..30);
    let len = rng.random_range(1..=15);
    let x = rng.random_range(0.0..20.0);
    let y = rng.random_range(0.0..20.0);
    let boxes: Vec<BoundingBox> = (0..len)
        .map(|i| {
            let dx = x + i as f64 * 0.2;
            BoundingBox::new(dx, y, dx + 6.0, y + 8.0).unwrap()
        })
        .collect();
    Detection::new(video, class, start, boxes, rng.random_range(0.0..1.0)).unwrap()
}

#[test]
fn nms_matches_rescan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E);
    for _ in 0..500 {
        let n = rng.random_range(0..=12);
        let dets: Vec<Detection> = (0..n).map(|_| rand_detection(&mut rng, "v", 1)).collect();
        let overlap = rng.random_range(0.0..0.8);
        let got = st_nms(dets.clone(), overlap);
        let want = brute_nms(dets, overlap);
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert_eq!(det_key(a), det_key(b));
        }
        // antichain property and score ordering
        for i in 0..got.len() {
            for j in i + 1..got.len() {
                assert!(st_iou(&got[i], &got[j]) <= overlap);
                assert!(got[i].score >= got[j].score);
            }
        }
    }
}

#[test]
fn viterbi_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1);
    for i in 0..500 {
        let len = rng.random_range(1..=12);
        let s = rand_scores(&mut rng, len);
        let cfg = ViterbiConfig { alpha: rng.random_range(0.0..4.0), floor: 1e-6 };
        let got = viterbi_segment(&s, &cfg);
        let want = brute_viterbi(&s, &cfg);
        assert_eq!(got, want, "case {i}: scores {s:?} alpha {}", cfg.alpha);
    }
}

fn track_with_scores(profile: &[f64], n_classes: usize, class: u32) -> (PersonTrack, ScoreSequence) {
    let b = BoundingBox::new(0.0, 0.0, 8.0, 8.0).unwrap();
    let track = PersonTrack::new("t0", "v0", 10, vec![b; profile.len()]).unwrap();
    let n_out = n_classes + 1;
    let mut rows = Array2::zeros((profile.len(), n_out));
    for (t, &p) in profile.iter().enumerate() {
        rows[[t, class as usize]] = p;
        let rest = (1.0 - p) / (n_out - 1) as f64;
        for c in 0..n_out {
            if c != class as usize {
                rows[[t, c]] = rest;
            }
        }
    }
    (track, ScoreSequence { track_id: "t0".into(), rows })
}

#[test]
fn localize_two_burst_profile_matches_oracle_composition() {
    // two clean high plateaus separated by background
    let mut profile = vec![0.02; 40];
    for t in 5..14 {
        profile[t] = 0.9;
    }
    for t in 25..36 {
        profile[t] = 0.85;
    }
    let (track, scores) = track_with_scores(&profile, 2, 1);
    let cfg = LocalizationConfig { theta: 0.1, median_window: 5, nms_overlap: 0.2, top_k: 40 };
    let dets = localize(&track, &scores, 1, &cfg).unwrap();

    // oracle composition: sort-median -> maximal runs -> top-k mean
    let filtered = brute_median(&profile, 5);
    let want = brute_segments(&filtered, 0.1);
    assert_eq!(dets.len(), want.len());
    assert_eq!(want.len(), 2);
    for (d, &(i0, i1)) in dets.iter().zip(&want) {
        assert_eq!(d.start_frame, track.start_frame + i0 as i64);
        assert_eq!(d.boxes.len(), i1 - i0 + 1);
        assert!((d.score - brute_top_k_mean(&profile[i0..=i1], 40)).abs() < 1e-12);
        // boxes inherited verbatim from the track sub-interval
        assert_eq!(d.boxes, track.boxes[i0..=i1].to_vec());
        assert!(d.start_frame >= track.start_frame && d.end_frame() <= track.end_frame());
    }
}

#[test]
fn localize_uniform_background_yields_nothing() {
    let (track, scores) = track_with_scores(&vec![0.01; 30], 2, 1);
    let cfg = LocalizationConfig { median_window: 5, ..LocalizationConfig::default() };
    assert!(localize(&track, &scores, 1, &cfg).unwrap().is_empty());
}

#[test]
fn localize_single_plateau_with_edge_effect_bound() {
    let mut profile = vec![0.02; 60];
    for t in 20..45 {
        profile[t] = 0.8;
    }
    let (track, scores) = track_with_scores(&profile, 2, 1);
    let window = 9;
    let cfg = LocalizationConfig { median_window: window, ..LocalizationConfig::default() };
    let dets = localize(&track, &scores, 1, &cfg).unwrap();
    assert_eq!(dets.len(), 1);
    let d = &dets[0];
    let slack = (window / 2) as i64;
    assert!((d.start_frame - (track.start_frame + 20)).abs() <= slack);
    assert!((d.end_frame() - (track.start_frame + 44)).abs() <= slack);
}

proptest! {
    #[test]
    fn threshold_intervals_disjoint_sorted_maximal(
        s in prop::collection::vec(0.0..1.0f64, 0..40),
        theta in 0.05..0.95f64,
    ) {
        let segs = threshold_segment(&s, theta);
        for w in segs.windows(2) {
            prop_assert!(w[0].1 < w[1].0, "sorted and disjoint");
        }
        for &(i0, i1) in &segs {
            prop_assert!((i0..=i1).all(|t| s[t] >= theta));
            prop_assert!(i0 == 0 || s[i0 - 1] < theta);
            prop_assert!(i1 + 1 == s.len() || s[i1 + 1] < theta);
        }
    }

    #[test]
    fn median_is_monotone(
        s in prop::collection::vec(0.0..1.0f64, 1..30),
        bump in prop::collection::vec(0.0..0.5f64, 1..30),
        w in 0usize..6,
    ) {
        let window = 2 * w + 1;
        let larger: Vec<f64> = s.iter().zip(bump.iter().cycle()).map(|(a, b)| a + b).collect();
        let fs = median_filter(&s, window).unwrap();
        let fl = median_filter(&larger, window).unwrap();
        for (a, b) in fs.iter().zip(&fl) {
            prop_assert!(b >= a, "pointwise larger input must not shrink the median output");
        }
    }

    #[test]
    fn median_idempotent_on_binary_steps_away_from_boundaries(
        edge in 5usize..20,
        w in 1usize..4,
    ) {
        // step signal 0...0 1...1 with a long run on each side
        let window = 2 * w + 1;
        let len = edge + 25;
        let s: Vec<f64> = (0..len).map(|t| f64::from(t >= edge)).collect();
        let once = median_filter(&s, window).unwrap();
        let twice = median_filter(&once, window).unwrap();
        for t in window..len - window {
            prop_assert_eq!(once[t], s[t]);
            prop_assert_eq!(twice[t], once[t]);
        }
    }
}
