#![no_main]

use std::path::Path;

use graphodex_core::patching::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(forms) = parse_manifest(data, Path::new("/corpus")) {
        for f in &forms {
            assert!(!f.form_id.is_empty());
        }
    }
});
