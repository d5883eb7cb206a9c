//! Input is `sidecar JSON, 0x00, payload bytes`.
#![no_main]

use hedgefee::surface_io::{decode, decode_sidecar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (head, tail) = data.split_at(split);
    let Ok(text) = std::str::from_utf8(head) else {
        return;
    };
    let Ok(sidecar) = decode_sidecar(text) else {
        return;
    };
    let payload = tail.get(1..).unwrap_or(&[]);
    let _ = decode(&sidecar, payload);
});
