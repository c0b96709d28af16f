#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mut cfg) = deltacu::io::parse_config_bytes(data) {
        // Exercise the post-parse validation path as well.
        let _ = cfg.resolve(&deltacu::io::Overrides::default());
    }
});
