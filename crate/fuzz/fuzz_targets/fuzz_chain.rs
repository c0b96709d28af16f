#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = deltacu::io::parse_chain_bytes(data);
    let _ = deltacu::io::parse_cu_paths_bytes(data);
});
