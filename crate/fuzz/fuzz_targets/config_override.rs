#![no_main]

use libfuzzer_sys::fuzz_target;

// `--set KEY=VALUE` strings get parsed into TOML paths and values; feed the
// override machinery directly on top of an empty document.
fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = std::str::from_utf8(data) {
        let _ =
            drfo::harness::ExperimentConfig::from_toml_with_overrides("", &[spec.to_string()]);
    }
});
