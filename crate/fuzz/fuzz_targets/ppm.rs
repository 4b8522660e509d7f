#![no_main]

use damformer::data::{decode_ppm, encode_ppm, palette_to_mask};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    if let Ok(img) = decode_ppm(bytes) {
        assert_eq!(decode_ppm(&encode_ppm(&img)).expect("re-encoded image decodes"), img);
        let _ = palette_to_mask(&img);
    }
});
