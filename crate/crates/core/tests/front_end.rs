use nolor_core::audio::AudioClip;
use nolor_core::features::{self, FeatureSpec};
use nolor_core::orthography::Orthography;
use proptest::prelude::*;

#[test]
fn tone_lands_in_the_filter_centred_nearest_it() {
    let spec = FeatureSpec::default();
    let bank = features::mel_filterbank(&spec, 16_000);
    for freq in [250.0, 1000.0, 3000.0] {
        let samples = (0..16_000)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
            .collect();
        let f =
            features::extract_features(&AudioClip::new(samples, 16_000).unwrap(), &spec).unwrap();
        let row = f.row(f.frames / 2);
        let argmax = (0..f.bins)
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .unwrap();
        // filter centres on the mel scale, from the bank's own edges
        let top = features::hz_to_mel(8000.0);
        let centre =
            |m: usize| features::mel_to_hz(top * (m + 1) as f64 / (spec.mel_bins + 1) as f64);
        let nearest = (0..spec.mel_bins)
            .min_by(|&a, &b| {
                (centre(a) - freq)
                    .abs()
                    .total_cmp(&(centre(b) - freq).abs())
            })
            .unwrap();
        assert!(
            argmax.abs_diff(nearest) <= 1,
            "{freq} Hz: bin {argmax}, nearest centre {nearest}"
        );
        assert!(bank[argmax].iter().any(|&w| w > 0.0));
    }
}

fn orth() -> Orthography {
    Orthography::parse("orthography t\na\tvowel\nā\tvowel\tā\nb\tconsonant\nsh\tconsonant\nš\tconsonant\tsh\ns\tconsonant\nh\tconsonant\n=\tboundary\nˈ\tsuprasegmental\n")
        .unwrap()
}

const SYMBOLS: [&str; 9] = ["a", "ā", "b", "sh", "š", "s", "h", "=", " "];

proptest! {
    #[test]
    fn tokenize_round_trips(idx in prop::collection::vec(0usize..SYMBOLS.len(), 0..30)) {
        let o = orth();
        let text: String = idx.iter().map(|&i| SYMBOLS[i]).collect();
        let joined: String = o.tokenize(&text).unwrap().iter().map(|g| g.symbol.as_str()).collect();
        prop_assert_eq!(joined, text);
    }

    #[test]
    fn normalize_is_idempotent(idx in prop::collection::vec(0usize..SYMBOLS.len() + 1, 0..30)) {
        let o = orth();
        let text: String = idx.iter().map(|&i| SYMBOLS.get(i).copied().unwrap_or("ˈ")).collect();
        let once = o.normalize(&text).unwrap();
        prop_assert!(!once.contains('ˈ'));
        prop_assert_eq!(o.normalize(&once).unwrap(), once);
    }

    #[test]
    fn simplified_rendering_never_fails(idx in prop::collection::vec(0usize..SYMBOLS.len(), 0..30)) {
        let o = orth();
        let text: String = idx.iter().map(|&i| SYMBOLS[i]).collect();
        let out = o.transliterate(&text, &o.simplified_scheme()).unwrap();
        prop_assert!(!out.contains('š'));
    }
}
