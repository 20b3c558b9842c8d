#![no_main]

use graphodex_core::experiments::parse_markdown_report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_markdown_report(text);
    }
});
