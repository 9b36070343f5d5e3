use proptest::prelude::*;
use stcl::data::synth_corpus;
use stcl::difficulty::{classify, partition, Label, SampleScores, TeacherLadder, Thresholds};
use stcl::model::{ModelConfig, TrainConfig};

const SSIM_LEVELS: [f64; 5] = [0.5, 0.8, 0.85, 0.9, 0.95];
const PSNR_LEVELS: [f64; 5] = [10.0, 12.0, 16.0, 20.0, 25.0];

/// Written from the rule's wording, independently of the library.
fn oracle(s: [f64; 3], p: [f64; 3], t: &Thresholds) -> Label {
    let mut any_low = false;
    let mut all_high = true;
    for j in 0..3 {
        if s[j] <= t.alpha2 || p[j] <= t.mu2 {
            any_low = true;
        }
        if !(s[j] >= t.alpha1 && p[j] >= t.mu1) {
            all_high = false;
        }
    }
    if any_low {
        Label::Hard
    } else if all_high {
        Label::Easy
    } else {
        Label::Medium
    }
}

fn label(s: [f64; 3], p: [f64; 3], t: &Thresholds) -> Label {
    classify(&SampleScores::new(s.to_vec(), p.to_vec()).unwrap(), t)
}

/// Every combination of per-teacher (SSIM, PSNR) grid points for three
/// teachers: 25³ = 15625 triples, thresholds included as grid points.
fn grid() -> impl Iterator<Item = ([usize; 3], [usize; 3])> {
    (0..25usize.pow(3)).map(|k| {
        let cells = [k % 25, (k / 25) % 25, k / 625];
        (cells.map(|c| c % 5), cells.map(|c| c / 5))
    })
}

fn values(si: [usize; 3], pi: [usize; 3]) -> ([f64; 3], [f64; 3]) {
    (si.map(|i| SSIM_LEVELS[i]), pi.map(|i| PSNR_LEVELS[i]))
}

#[test]
fn grid_matches_oracle() {
    let t = Thresholds::default();
    let mut n = 0;
    for (si, pi) in grid() {
        let (s, p) = values(si, pi);
        assert_eq!(label(s, p, &t), oracle(s, p, &t), "{s:?} {p:?}");
        n += 1;
    }
    assert!(n >= 10_000);
}

#[test]
fn grid_is_monotone_in_every_score() {
    let t = Thresholds::default();
    for (si, pi) in grid() {
        let (s, p) = values(si, pi);
        let base = label(s, p, &t);
        for j in 0..3 {
            if si[j] + 1 < 5 {
                let mut up = si;
                up[j] += 1;
                let (s2, _) = values(up, pi);
                assert!(label(s2, p, &t) <= base, "raising ssim of teacher {j} in {s:?} {p:?}");
            }
            if pi[j] + 1 < 5 {
                let mut up = pi;
                up[j] += 1;
                let (_, p2) = values(si, up);
                assert!(label(s, p2, &t) <= base, "raising psnr of teacher {j} in {s:?} {p:?}");
            }
        }
    }
}

#[test]
fn grid_is_teacher_order_invariant() {
    let t = Thresholds::default();
    for (si, pi) in grid() {
        let (s, p) = values(si, pi);
        let rot = |a: [f64; 3]| [a[1], a[2], a[0]];
        assert_eq!(label(s, p, &t), label(rot(s), rot(p), &t));
    }
}

#[test]
fn threshold_ordering_is_guarded() {
    for a1 in SSIM_LEVELS {
        for a2 in SSIM_LEVELS {
            for m1 in PSNR_LEVELS {
                for m2 in PSNR_LEVELS {
                    let t = Thresholds { alpha1: a1, alpha2: a2, mu1: m1, mu2: m2 };
                    assert_eq!(t.validate().is_ok(), a1 > a2 && m1 > m2, "{t:?}");
                }
            }
        }
    }
    let nan = Thresholds { alpha1: f64::NAN, ..Thresholds::default() };
    assert!(nan.validate().is_err());
}

fn valid_thresholds() -> impl Strategy<Value = Thresholds> {
    (0.0..1.0f64, 0.0..1.0f64, 5.0..40.0f64, 5.0..40.0f64)
        .prop_filter("ordered", |(a, b, m, n)| a > b && m > n)
        .prop_map(|(alpha1, alpha2, mu1, mu2)| Thresholds { alpha1, alpha2, mu1, mu2 })
}

proptest! {
    #[test]
    fn easy_and_hard_conditions_are_exclusive(
        t in valid_thresholds(),
        s in prop::array::uniform3(0.0..1.0f64),
        p in prop::array::uniform3(0.0..50.0f64),
    ) {
        let l = label(s, p, &t);
        prop_assert_eq!(l, oracle(s, p, &t));
        if l == Label::Easy {
            prop_assert!(s.iter().zip(&p).all(|(&a, &b)| a > t.alpha2 && b > t.mu2));
        }
    }

    #[test]
    fn raising_scores_never_makes_a_sample_harder(
        t in valid_thresholds(),
        s in prop::array::uniform3(0.0..1.0f64),
        p in prop::array::uniform3(0.0..50.0f64),
        j in 0usize..3,
        ds in 0.0..0.5f64,
        dp in 0.0..20.0f64,
    ) {
        let base = label(s, p, &t);
        let (mut s2, mut p2) = (s, p);
        s2[j] += ds;
        p2[j] += dp;
        prop_assert!(label(s2, p2, &t) <= base);
    }

    #[test]
    fn tightening_easy_cutoffs_never_adds_easy_samples(
        t in valid_thresholds(),
        bump in 0.0..0.2f64,
        s in prop::array::uniform3(0.0..1.0f64),
        p in prop::array::uniform3(0.0..50.0f64),
    ) {
        let strict = Thresholds { alpha1: t.alpha1 + bump, mu1: t.mu1 + 10.0 * bump, ..t };
        if label(s, p, &strict) == Label::Easy {
            prop_assert_eq!(label(s, p, &t), Label::Easy);
        }
    }
}

fn tiny() -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        image_size: (16, 16),
        encoder_layers: 2,
        decoder_layers: 2,
        hidden_channels: 4,
        seed: 11,
        ..ModelConfig::default()
    };
    let train = TrainConfig { seed: 11, ..TrainConfig::default() };
    (model, train)
}

#[test]
fn manifests_are_deterministic_under_fixed_seeds() {
    let (model, train) = tiny();
    let corpus = synth_corpus(24, (16, 16), 3).unwrap();
    let loose = Thresholds { alpha1: 0.01, alpha2: 0.0, mu1: 1.0, mu2: 0.0 };
    let run = || {
        let ladder = TeacherLadder::train(&corpus, &model, &train, &[1, 2], 3).unwrap();
        let m = partition(&corpus, &ladder.teachers, &ladder.fingerprint(), &loose, 5, 1).unwrap();
        (ladder.fingerprint(), m.to_csv().unwrap())
    };
    let (fp_a, csv_a) = run();
    let (fp_b, csv_b) = run();
    assert_eq!(fp_a, fp_b);
    assert_eq!(csv_a, csv_b);
    assert_eq!(csv_a.lines().count(), 25);

    let other = TrainConfig { seed: 12, ..train };
    let ladder = TeacherLadder::train(&corpus, &ModelConfig { seed: 12, ..model }, &other, &[1, 2], 3).unwrap();
    assert_ne!(ladder.fingerprint(), fp_a);
}
