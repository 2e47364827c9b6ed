#![no_main]

use libfuzzer_sys::fuzz_target;

// Binary decoder: length fields, dimension products and the trailing
// checksum all come from attacker-controlled bytes.
fuzz_target!(|data: &[u8]| {
    let _ = drfo::mf::load_checkpoint(data);
});
