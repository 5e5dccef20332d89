#![no_main]

use libfuzzer_sys::fuzz_target;
use mrdc::data::format::{encode_meta, parse_meta};

fuzz_target!(|data: &[u8]| {
    if let Ok(meta) = parse_meta(data) {
        assert_eq!(parse_meta(&encode_meta(&meta)).unwrap(), meta);
    }
});
