#![no_main]

use graphodex_cli::Settings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(settings) = Settings::from_toml(text) {
            let _ = settings.protocol();
        }
    }
});
