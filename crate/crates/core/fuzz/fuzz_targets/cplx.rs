#![no_main]

use libfuzzer_sys::fuzz_target;
use mrdc::data::format::{decode_cplx, encode_cplx};

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_cplx(data, data.len() / 8, "fuzz") {
        assert_eq!(encode_cplx(&v), data);
    }
});
