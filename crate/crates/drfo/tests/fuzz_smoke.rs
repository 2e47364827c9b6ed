//! Stable-toolchain companion to the fuzz targets.
//!
//! The `fuzz/` crate needs a nightly toolchain, so this test keeps the same
//! entry points exercised in the regular suite: every checked-in corpus seed
//! runs through the parser its directory names, along with a deterministic
//! battery of truncations, byte flips and splices.  Parsers may reject the
//! input (almost all mutants are garbage); they must not panic.

use std::path::{Path, PathBuf};

use drfo::harness::ExperimentConfig;

/// Directory name -> the same dispatch the matching fuzz target performs.
const TARGETS: [&str; 7] = [
    "canonical",
    "checkpoint",
    "config",
    "config_override",
    "movielens",
    "recon_report",
    "report",
];

fn drive(target: &str, data: &[u8]) {
    match target {
        "canonical" => {
            if let Ok(text) = std::str::from_utf8(data) {
                let _ = drfo::ingest::read_canonical(text);
            }
        }
        "checkpoint" => {
            let _ = drfo::mf::load_checkpoint(data);
        }
        "config" => {
            if let Ok(text) = std::str::from_utf8(data) {
                if let Ok(cfg) = ExperimentConfig::from_toml(text) {
                    let _ = cfg.validate();
                }
            }
        }
        "config_override" => {
            if let Ok(spec) = std::str::from_utf8(data) {
                let _ = ExperimentConfig::from_toml_with_overrides("", &[spec.to_string()]);
            }
        }
        "movielens" => {
            let cut = data.iter().position(|&b| b == 0xFF).unwrap_or(data.len());
            let ratings = &data[..cut];
            let users = data.get(cut + 1..).unwrap_or(&[]);
            if let (Ok(ratings), Ok(users)) =
                (std::str::from_utf8(ratings), std::str::from_utf8(users))
            {
                let _ = drfo::ingest::parse_movielens(ratings, users);
            }
        }
        "recon_report" => {
            if let Ok(text) = std::str::from_utf8(data) {
                let _ = drfo::recon::read_recon_report(text);
            }
        }
        "report" => {
            if let Ok(text) = std::str::from_utf8(data) {
                let _ = drfo::harness::read_report(text);
            }
        }
        other => panic!("corpus directory `{other}` has no driver; add one here and in fuzz/"),
    }
}

fn fuzz_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz")
}

fn corpus_files(target: &str) -> Vec<PathBuf> {
    let dir = fuzz_root().join("corpus").join(target);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("corpus dir {} unreadable: {e}", dir.display()))
        .map(|entry| entry.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no corpus seeds for `{target}`");
    files
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// Small deterministic PRNG so the mutation battery never changes between
/// runs (xorshift64*; quality is irrelevant, stability is the point).
struct XorShift(u64);

impl XorShift {
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }
}

#[test]
fn every_target_has_a_fuzz_entry_point_on_disk() {
    for target in TARGETS {
        let path = fuzz_root().join("fuzz_targets").join(format!("{target}.rs"));
        assert!(path.is_file(), "missing fuzz target source {}", path.display());
    }
}

#[test]
fn corpus_seeds_run_clean() {
    for target in TARGETS {
        for path in corpus_files(target) {
            drive(target, &read(&path));
        }
    }
}

#[test]
fn mutated_corpus_does_not_panic() {
    for target in TARGETS {
        for path in corpus_files(target) {
            let base = read(&path);
            let mut rng = XorShift(0x9e37_79b9_7f4a_7c15 ^ base.len() as u64);

            // Truncations from both ends.
            for frac in 1..4 {
                let cut = base.len() * frac / 4;
                drive(target, &base[..cut]);
                drive(target, &base[cut..]);
            }
            // Single-byte flips at deterministic offsets.
            for i in 0..64u64 {
                if base.is_empty() {
                    break;
                }
                let mut m = base.clone();
                let pos = (rng.next() % m.len() as u64) as usize;
                m[pos] ^= (1 << (i % 8)) as u8;
                drive(target, &m);
            }
            // Byte substitutions with structure-relevant characters.
            for &b in b"\t\n=0k:" {
                if base.is_empty() {
                    break;
                }
                let mut m = base.clone();
                let pos = (rng.next() % m.len() as u64) as usize;
                m[pos] = b;
                drive(target, &m);
            }
            // Splice: the file twice, and the file reversed.
            let mut doubled = base.clone();
            doubled.extend_from_slice(&base);
            drive(target, &doubled);
            let mut reversed = base.clone();
            reversed.reverse();
            drive(target, &reversed);
        }
    }
    // Tiny adversarial inputs independent of the corpus.
    for target in TARGETS {
        drive(target, b"");
        drive(target, b"\xff");
        drive(target, b"\0\0\0\0");
        drive(target, "#drfo".as_bytes());
    }
}

#[test]
fn known_good_seeds_parse() {
    let corpus = fuzz_root().join("corpus");

    let ds =
        drfo::ingest::read_canonical_file(&corpus.join("canonical/seed-mixed-status.tsv"))
            .unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.n_users(), 3);

    // This seed is deliberately malformed (a group value on a masked row).
    let text = String::from_utf8(read(&corpus.join("canonical/seed-bad-group.tsv"))).unwrap();
    assert!(matches!(
        drfo::ingest::read_canonical(&text),
        Err(drfo::Error::Parse { line: 3, .. })
    ));

    let (model, seed) =
        drfo::mf::load_checkpoint(&read(&corpus.join("checkpoint/seed-tiny.ckpt"))).unwrap();
    assert_eq!((model.n_users(), model.n_items(), model.dim()), (2, 2, 1));
    assert_eq!(seed, 7);

    let text = String::from_utf8(read(&corpus.join("recon_report/seed-three-users.tsv"))).unwrap();
    let recon = drfo::recon::read_recon_report(&text).unwrap();
    assert_eq!(recon.rho, [0.1, 0.25]);
    assert_eq!(recon.user_attrs.len(), 3);

    let text = String::from_utf8(read(&corpus.join("report/seed-three-rows.tsv"))).unwrap();
    let (kind, rows) = drfo::harness::read_report(&text).unwrap();
    assert_eq!(kind, "retention");
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().filter(|r| r.metrics.is_some()).count(), 2);

    let text = String::from_utf8(read(&corpus.join("config/seed-typical.toml"))).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.train.method, "robust");

    let raw = read(&corpus.join("movielens/seed-pair.dat"));
    let cut = raw.iter().position(|&b| b == 0xFF).unwrap();
    let ratings = std::str::from_utf8(&raw[..cut]).unwrap();
    let users = std::str::from_utf8(&raw[cut + 1..]).unwrap();
    let parsed = drfo::ingest::parse_movielens(ratings, users).unwrap();
    assert_eq!(parsed.n_users, 2);
    assert_eq!(parsed.n_items, 3);
    assert_eq!(parsed.interactions.len(), 4);
}
