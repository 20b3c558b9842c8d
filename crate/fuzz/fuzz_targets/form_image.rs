#![no_main]

use graphodex_core::imaging::decode_form_image;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_form_image(data) {
        assert_eq!(img.pixels().len(), img.width() * img.height());
    }
});
