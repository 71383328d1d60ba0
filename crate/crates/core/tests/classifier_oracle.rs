use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssvep_core::classifier::{
    self, CommandMap, HarmonicSearchPlan, MatchMode, PeakMatrix, PointsVector, ThresholdVector, INTERVALS,
    STIMULI,
};
use ssvep_core::dsp::SpectrumFrame;

const FREQS: [u32; 6] = [7, 11, 9, 8, 20, 12];
const FS: f64 = 256.0;

fn spectrum(mags: Vec<f64>, nfft: usize) -> SpectrumFrame {
    let freqs = (0..mags.len()).map(|k| k as f64 * FS / nfft as f64).collect();
    SpectrumFrame { freqs, mags, nfft, fs: FS }
}

fn random_spectrum(rng: &mut ChaCha8Rng, nfft: usize) -> SpectrumFrame {
    // Coarse levels make exact ties common.
    let coarse = rng.random_bool(0.3);
    let mags = (0..=nfft / 2)
        .map(|_| if coarse { rng.random_range(0..4) as f64 } else { rng.random_range(0.0..5.0) })
        .collect();
    spectrum(mags, nfft)
}

/// Literal transcription of the reference scan: 1-based borders
/// `round(border * window + 1)`, first-maximum `max`, peaks in Hz, and
/// floating-point equality against the ten harmonics.
struct Reference {
    freqs: [u32; 6],
    window: f64,
    nfft: usize,
}

impl Reference {
    fn points_1based(&self, i: usize, j: usize) -> usize {
        let border = self.freqs[i] as f64 * (j as f64 - 0.5);
        (border * self.window + 1.0).round() as usize
    }

    fn f_max(&self, y: &[f64]) -> [[f64; 10]; 6] {
        let mut out = [[0.0; 10]; 6];
        for i in 0..6 {
            for j in 1..=9 {
                let border = self.freqs[i] as f64 * (j as f64 - 0.5);
                if border <= 50.0 {
                    let lo = self.points_1based(i, j);
                    let hi = self.points_1based(i, j + 1).min(y.len());
                    let slice = &y[lo - 1..hi];
                    let mut ind = 1;
                    for (k, &v) in slice.iter().enumerate() {
                        if v > slice[ind - 1] {
                            ind = k + 1;
                        }
                    }
                    out[i][j - 1] = (ind + lo - 2) as f64 / self.nfft as f64 * FS;
                }
            }
        }
        out
    }

    fn points(&self, maxes: [&[[f64; 10]; 6]; 3], strict: bool) -> [f64; 6] {
        let mut point = [0.0; 6];
        for i in 0..6 {
            let f = self.freqs[i] as f64;
            for j in 0..10 {
                for m in maxes {
                    if (1..=10).any(|k| m[i][j] == f * k as f64 && (!strict || f * k as f64 <= 50.0)) {
                        point[i] += 1.0;
                    }
                }
            }
        }
        for i in 0..6 {
            point[i] /= 3.0 * (50.0 / self.freqs[i] as f64).floor();
        }
        point
    }
}

fn reference_for(plan: &HarmonicSearchPlan) -> Reference {
    Reference { freqs: plan.flicker_freqs, window: plan.window_s, nfft: plan.nfft }
}

fn random_freqs(rng: &mut ChaCha8Rng) -> [u32; 6] {
    loop {
        let f: [u32; 6] = std::array::from_fn(|_| rng.random_range(5..=40));
        if (0..6).all(|i| !f[..i].contains(&f[i])) {
            return f;
        }
    }
}

#[test]
fn matches_brute_force_on_1000_random_spectra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let window = [1.0, 2.0, 4.0][trial % 3];
        let freqs = if trial % 2 == 0 { FREQS } else { random_freqs(&mut rng) };
        for mode in [MatchMode::Strict, MatchMode::Paper] {
            let plan = classifier::build_plan(freqs, window, FS).unwrap().with_mode(mode);
            let reference = reference_for(&plan);
            let spectra: Vec<SpectrumFrame> = (0..3).map(|_| random_spectrum(&mut rng, plan.nfft)).collect();
            let peaks: Vec<PeakMatrix> =
                spectra.iter().map(|s| classifier::peak_frequencies(s, &plan).unwrap()).collect();
            let maxes: Vec<[[f64; 10]; 6]> = spectra.iter().map(|s| reference.f_max(&s.mags)).collect();
            for (p, m) in peaks.iter().zip(&maxes) {
                for i in 0..6 {
                    for j in 0..INTERVALS {
                        assert_eq!(p.peak_freqs[i][j], m[i][j], "trial {trial} row {i} interval {j}");
                    }
                }
            }
            let points = classifier::harmonic_points(&peaks[0], &peaks[1], &peaks[2], &plan);
            let expected = reference.points([&maxes[0], &maxes[1], &maxes[2]], mode == MatchMode::Strict);
            assert_eq!(points.0, expected, "trial {trial} {mode:?}");
        }
    }
}

/// A spectrum with one spike at each listed frequency.
fn spikes(plan: &HarmonicSearchPlan, at: &[f64]) -> SpectrumFrame {
    let mut mags = vec![0.0; plan.nfft / 2 + 1];
    for &f in at {
        mags[(f * plan.nfft as f64 / FS).round() as usize] = 1.0;
    }
    spectrum(mags, plan.nfft)
}

#[test]
fn paper_mode_counts_the_super_cap_harmonics() {
    // 20 Hz: the interval starting exactly at 50 Hz reaches 60 Hz.
    // 11 Hz: the interval starting at 49.5 Hz reaches 55 Hz.
    let cases: [(usize, &[f64], f64, f64); 2] = [
        (4, &[20.0, 40.0, 60.0], 1.0, 1.5),
        (1, &[11.0, 22.0, 33.0, 44.0, 55.0], 1.0, 1.25),
    ];
    for (row, at, strict_points, paper_points) in cases {
        let strict = classifier::build_plan(FREQS, 2.0, FS).unwrap();
        let paper = strict.clone().with_mode(MatchMode::Paper);
        let s = spikes(&strict, at);
        let p = classifier::peak_frequencies(&s, &strict).unwrap();
        let reference = reference_for(&strict);
        let m = reference.f_max(&s.mags);

        let got_strict = classifier::harmonic_points(&p, &p, &p, &strict);
        let got_paper = classifier::harmonic_points(&p, &p, &p, &paper);
        assert_eq!(got_strict.0, reference.points([&m, &m, &m], true));
        assert_eq!(got_paper.0, reference.points([&m, &m, &m], false));
        assert_eq!(got_strict.0[row], strict_points);
        assert_eq!(got_paper.0[row], paper_points);
    }
}

#[test]
fn constructed_eight_hz_spectrum_scores_one() {
    let plan = classifier::build_plan(FREQS, 2.0, FS).unwrap();
    let s = spikes(&plan, &[8.0, 16.0, 24.0, 32.0, 40.0, 48.0]);
    let p = classifier::peak_frequencies(&s, &plan).unwrap();
    let counts = classifier::harmonic_counts([&p, &p, &p], &plan);
    assert_eq!(counts[3], 18);
    assert_eq!(classifier::harmonic_points(&p, &p, &p, &plan).0[3], 1.0);
}

fn plan_and_peaks() -> impl Strategy<Value = (HarmonicSearchPlan, [PeakMatrix; 3])> {
    (any::<u64>(), prop_oneof![Just(1.0), Just(2.0), Just(4.0)]).prop_map(|(seed, window)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = classifier::build_plan(FREQS, window, FS).unwrap();
        let peaks = std::array::from_fn(|_| {
            classifier::peak_frequencies(&random_spectrum(&mut rng, plan.nfft), &plan).unwrap()
        });
        (plan, peaks)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn strict_points_stay_in_unit_interval((plan, peaks) in plan_and_peaks()) {
        let pts = classifier::harmonic_points(&peaks[0], &peaks[1], &peaks[2], &plan);
        prop_assert!(pts.0.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn adding_a_match_never_lowers_points(
        (plan, peaks) in plan_and_peaks(),
        e in 0usize..3, i in 0usize..STIMULI, j in 0usize..INTERVALS,
    ) {
        prop_assume!(plan.interval_active(i, j) && plan.harmonics[i][j] <= plan.freq_cap);
        let before = classifier::harmonic_points(&peaks[0], &peaks[1], &peaks[2], &plan);
        let mut more = peaks.clone();
        let bin = plan.harmonic_bins[i][j];
        more[e].peak_bins[i][j] = Some(bin);
        more[e].peak_freqs[i][j] = bin as f64 * FS / plan.nfft as f64;
        let after = classifier::harmonic_points(&more[0], &more[1], &more[2], &plan);
        for k in 0..STIMULI {
            prop_assert!(after.0[k] >= before.0[k]);
        }
    }

    #[test]
    fn decisions_ignore_magnitude_scale(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = classifier::build_plan(FREQS, 2.0, FS).unwrap();
        let spectra: Vec<SpectrumFrame> = (0..3)
            .map(|_| {
                let mags = (0..=plan.nfft / 2).map(|_| rng.random_range(0..5000) as f64 / 1000.0).collect();
                spectrum(mags, plan.nfft)
            })
            .collect();
        let scaled: Vec<SpectrumFrame> = spectra
            .iter()
            .map(|s| spectrum(s.mags.iter().map(|m| m * c).collect(), plan.nfft))
            .collect();
        let run = |ss: &[SpectrumFrame]| {
            let p: Vec<PeakMatrix> = ss.iter().map(|s| classifier::peak_frequencies(s, &plan).unwrap()).collect();
            let pts = classifier::harmonic_points(&p[0], &p[1], &p[2], &plan);
            let d = classifier::decide(&pts, &ThresholdVector::default(), &CommandMap::default());
            (p, pts, d)
        };
        let (a, b) = (run(&spectra), run(&scaled));
        prop_assert_eq!(&a.0, &b.0);
        prop_assert_eq!(a.1, b.1);
        prop_assert_eq!(a.2, b.2);
        prop_assert_eq!(run(&spectra).2, a.2);
    }

    #[test]
    fn decision_invariants(points in prop::array::uniform6(0.0f64..1.2), levels in prop::array::uniform6(0.01f64..=1.0)) {
        let t = ThresholdVector::new(levels).unwrap();
        let d = classifier::decide(&PointsVector(points), &t, &CommandMap::default());
        prop_assert_eq!(d.winner.is_none(), d.command_code == 0);
        if let Some(w) = d.winner {
            prop_assert!(points[w] > levels[w]);
            prop_assert!(points.iter().all(|&p| p <= points[w]));
            prop_assert!(points[..w].iter().all(|&p| p < points[w]));
            prop_assert_eq!(d.command_code as usize, w + 1);
        }
    }
}
