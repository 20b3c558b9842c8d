#![no_main]

use graphodex_core::patching::decode_patch_file;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_patch_file(data, "fuzz");
});
