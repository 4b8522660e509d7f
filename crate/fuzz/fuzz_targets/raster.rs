#![no_main]

use damformer::data::{decode_raster, encode_raster};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    if let Ok(r) = decode_raster(bytes) {
        let again = encode_raster(&r).expect("decoded raster re-encodes");
        assert!(decode_raster(&again).expect("re-encoded raster decodes").bit_eq(&r));
    }
});
