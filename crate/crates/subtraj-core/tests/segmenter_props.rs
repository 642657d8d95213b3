//! Property tests for segmentation: losslessness, split exactness, span
//! monotonicity, determinism.

use proptest::prelude::*;
use subtraj_core::segmenter::{
    segment, MarkerConfig, ThinkingProcess, DEFAULT_MARKERS, PREAMBLE_MARKER,
};

fn thinking(text: String) -> ThinkingProcess {
    ThinkingProcess {
        text,
        final_answer: String::new(),
        had_delimiters: true,
        preface: String::new(),
    }
}

/// Body words that cannot collide with any default marker, even
/// case-insensitively.
fn body_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "foo", "bar", "baz", "qux", "42", "x9", "delta", "no", "yes", "由此可见",
        ]),
        1..8,
    )
    .prop_map(|words| words.join(" ") + ".")
}

fn marker_strategy() -> impl Strategy<Value = &'static str> {
    prop::sample::select(DEFAULT_MARKERS.to_vec())
}

proptest! {
    #[test]
    fn injected_markers_segment_losslessly(
        body0 in body_strategy(),
        tail in prop::collection::vec((marker_strategy(), body_strategy()), 0..6),
    ) {
        let mut text = body0.clone();
        let mut expected_markers = vec![PREAMBLE_MARKER.to_string()];
        for (marker, body) in &tail {
            text.push(' ');
            text.push_str(marker);
            text.push_str(", ");
            text.push_str(body);
            expected_markers.push(marker.to_string());
        }
        let tp = thinking(text.clone());
        let subs = segment(&tp, &MarkerConfig::default());

        // Lossless cover, byte for byte.
        let joined: String = subs.iter().map(|s| s.text.as_str()).collect();
        prop_assert_eq!(&joined, &text);

        // Exactly the injected splits.
        prop_assert_eq!(subs.len(), tail.len() + 1);
        let markers: Vec<String> = subs.iter().map(|s| s.marker.clone()).collect();
        prop_assert_eq!(markers, expected_markers);

        //

        // Monotone contiguous spans covering all chars.
        let mut expected_start = 0usize;
        for s in &subs {
            prop_assert_eq!(s.char_span.0, expected_start);
            prop_assert!(s.char_span.1 > s.char_span.0);
            expected_start = s.char_span.1;
        }
        prop_assert_eq!(expected_start, text.chars().count());

        // Determinism.
        let again = segment(&tp, &MarkerConfig::default());
        prop_assert_eq!(subs, again);
    }

    #[test]
    fn arbitrary_text_is_always_covered(text in "\\PC{0,300}") {
        let tp = thinking(text.clone());
        let subs = segment(&tp, &MarkerConfig::default());
        let joined: String = subs.iter().map(|s| s.text.as_str()).collect();
        prop_assert_eq!(joined, text.clone());
        if !text.is_empty() {
            prop_assert!(!subs.is_empty());
        }
        let mut expected_start = 0usize;
        for s in &subs {
            prop_assert_eq!(s.char_span.0, expected_start);
            expected_start = s.char_span.1;
        }
    }
}
