#![no_main]

use graphodex_baseline::{parse_events, State};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = parse_events(data) {
        assert!(parsed.valid_len <= data.len());
        let _ = State::replay(&parsed.events);
    }
});
