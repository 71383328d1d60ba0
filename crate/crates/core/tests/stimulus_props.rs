use proptest::prelude::*;

use ssvep_core::stimulus::{
    self, dac_word, daisy_sequence, make_scheduler, DacKind, F_INTERRUPT, LEVEL_HIGH, LEVEL_LOW,
};

const PANEL: [f64; 6] = [7.0, 11.0, 9.0, 8.0, 20.0, 12.0];

/// Independent decoder for a 16-bit word: command nibble and data byte.
fn decode_word(word: u16) -> (u8, u8) {
    ((word >> 12) as u8, ((word >> 4) & 0xFF) as u8)
}

fn run_levels(freqs: [f64; 6], fi: u32, ticks: usize) -> Vec<[u8; 6]> {
    let mut s = make_scheduler(freqs, fi).unwrap();
    (0..ticks).map(|_| s.tick()).collect()
}

#[test]
fn rising_edges_over_a_hundred_periods() {
    let ticks = (F_INTERRUPT as f64 / 7.0 * 110.0) as usize;
    let levels = run_levels(PANEL, F_INTERRUPT, ticks);
    for (i, &f) in PANEL.iter().enumerate() {
        let rises = levels.windows(2).filter(|w| w[0][i] == LEVEL_LOW && w[1][i] == LEVEL_HIGH).count();
        let secs = (ticks - 1) as f64 / F_INTERRUPT as f64;
        let measured = rises as f64 / secs;
        assert!(rises >= 100, "channel {i}: {rises}");
        assert!((measured - f).abs() / f < 0.01, "channel {i}: {measured} vs {f}");
    }
}

#[test]
fn realized_frequencies_match_the_counters() {
    let s = make_scheduler(PANEL, F_INTERRUPT).unwrap();
    for (i, &f) in PANEL.iter().enumerate() {
        let expected = F_INTERRUPT as f64 / (F_INTERRUPT as f64 / f).round();
        assert_eq!(s.realized_frequency(i), expected);
        assert!((s.realized_frequency(i) - f).abs() / f < 0.005);
        assert!((s.duty_cycle(i) - 0.5).abs() <= 0.5 / s.max_counter[i] as f64 + 1e-12);
    }
}

#[test]
fn firmware_timer_top() {
    assert_eq!(stimulus::interrupt_top(1.0 / 2500.0, 16e6).unwrap(), 6399);
}

#[test]
fn update_all_and_write_through_words() {
    assert_eq!(dac_word(DacKind::UpdateAllA, 15).word, 0xB0F0);
    assert_eq!(dac_word(DacKind::WtmSelect, 0).word, 0x9000);
}

#[test]
fn frame_words_follow_the_scheduler() {
    let mut s = make_scheduler(PANEL, F_INTERRUPT).unwrap();
    let mut prev = s.levels;
    for _ in 0..2000 {
        let frames = s.tick_with_words();
        let now = s.levels;
        let dac_values = |f: &stimulus::DaisyFrame| {
            let v: Vec<u8> = f.words.iter().map(|w| decode_word(w.word).1).collect();
            [v[2], v[1], v[0]]
        };
        assert_eq!(dac_values(&frames[0]), [prev[0], prev[1], prev[2]]);
        for (f, (cmd, vals)) in frames[1..].iter().zip([
            (1, [now[0], now[1], now[2]]),
            (2, [now[0], now[1], now[2]]),
            (4, [now[3], now[4], now[5]]),
            (5, [now[3], now[4], now[5]]),
            (6, [now[3], now[4], now[5]]),
        ]) {
            assert!(f.words.iter().all(|w| decode_word(w.word).0 == cmd));
            assert_eq!(dac_values(f), vals);
        }
        prev = now;
    }
}

proptest! {
    #[test]
    fn waveform_is_periodic_with_the_counter_period(
        freqs in prop::array::uniform6(1.0f64..200.0),
        start in 0usize..500,
    ) {
        let s = make_scheduler(freqs, F_INTERRUPT).unwrap();
        let longest = *s.max_counter.iter().max().unwrap() as usize;
        let levels = run_levels(freqs, F_INTERRUPT, start + 2 * longest + 1);
        for i in 0..6 {
            let m = s.max_counter[i] as usize;
            let highs = levels[start..start + m].iter().filter(|l| l[i] == LEVEL_HIGH).count();
            prop_assert_eq!(highs, s.half_counter[i] as usize);
            for t in start..start + m {
                prop_assert_eq!(levels[t][i], levels[t + m][i]);
            }
        }
    }

    #[test]
    fn words_decode_back_to_their_inputs(k in 0usize..9, value in any::<u8>()) {
        let kind = DacKind::ALL[k];
        let w = dac_word(kind, value);
        let (cmd, data) = decode_word(w.word);
        prop_assert_eq!(cmd as u16, kind.base() >> 12);
        prop_assert_eq!(data, value);
        prop_assert_eq!(w.word & 0xF, 0);
    }

    #[test]
    fn word_encoding_is_injective(a in (0usize..9, any::<u8>()), b in (0usize..9, any::<u8>())) {
        prop_assume!(a != b);
        prop_assert_ne!(dac_word(DacKind::ALL[a.0], a.1).word, dac_word(DacKind::ALL[b.0], b.1).word);
    }

    #[test]
    fn daisy_frames_put_the_far_device_first(values in prop::array::uniform3(any::<u8>()), k in 0usize..9) {
        let f = daisy_sequence(values, DacKind::ALL[k]);
        let decoded: Vec<u8> = f.words.iter().map(|w| decode_word(w.word).1).collect();
        prop_assert_eq!(decoded, vec![values[2], values[1], values[0]]);
        prop_assert_eq!(f.clock_edges(), 48);
    }
}
