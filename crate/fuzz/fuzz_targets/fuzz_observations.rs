#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Must never panic: every malformed input maps to Err.
    let _ = deltacu::io::parse_observations_bytes(data);
});
