#![no_main]

use libfuzzer_sys::fuzz_target;

// Experiment configs are TOML plus our own schema validation on top.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = drfo::harness::ExperimentConfig::from_toml(text) {
            let _ = cfg.validate();
        }
    }
});
