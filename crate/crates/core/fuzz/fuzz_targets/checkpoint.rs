#![no_main]

use libfuzzer_sys::fuzz_target;
use mrdc::training::{decode_checkpoint, encode_checkpoint, Precision};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode_checkpoint(data) {
        let precision: Precision = ck.header.precision.parse().unwrap();
        let again = encode_checkpoint(&ck.model, precision, ck.header.epoch, ck.header.seed);
        let back = decode_checkpoint(&again).expect("re-encoded checkpoint decodes");
        assert_eq!(back.model, ck.model);
    }
});
