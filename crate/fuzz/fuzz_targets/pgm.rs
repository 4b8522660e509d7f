#![no_main]

use damformer::data::decode_pgm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    let _ = decode_pgm(bytes);
});
