#![no_main]

//! Input: `u32` LE meta length, meta bytes, then the k-space payload.

use libfuzzer_sys::fuzz_target;
use mrdc::data::format::decode_record;

fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let n = u32::from_le_bytes(data[..4].try_into().unwrap()) as usize;
    let rest = &data[4..];
    if n > rest.len() {
        return;
    }
    let (meta, kspace) = rest.split_at(n);
    let _ = decode_record(meta, kspace, None);
});
