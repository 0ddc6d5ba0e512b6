#![no_main]

use dualfair::harness::{parse_summary, render_summary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = parse_summary(text) {
        let again = parse_summary(&render_summary(&report)).expect("rendered summary parses");
        assert_eq!(render_summary(&report), render_summary(&again));
    }
});
