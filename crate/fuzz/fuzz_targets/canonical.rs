#![no_main]

use libfuzzer_sys::fuzz_target;

// The canonical dataset format is the main cross-stage artifact, so its
// reader must reject arbitrary bytes with an error, never a panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = drfo::ingest::read_canonical(text);
    }
});
