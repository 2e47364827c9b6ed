#![no_main]

use libfuzzer_sys::fuzz_target;

// The parser takes two files; split the input at the first 0xFF byte (which
// can never appear in valid UTF-8 text) into ratings and users parts.
fuzz_target!(|data: &[u8]| {
    let cut = data.iter().position(|&b| b == 0xFF).unwrap_or(data.len());
    let ratings = &data[..cut];
    let users = data.get(cut + 1..).unwrap_or(&[]);
    if let (Ok(ratings), Ok(users)) =
        (std::str::from_utf8(ratings), std::str::from_utf8(users))
    {
        let _ = drfo::ingest::parse_movielens(ratings, users);
    }
});
