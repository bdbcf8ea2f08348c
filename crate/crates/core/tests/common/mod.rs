use std::path::PathBuf;

use mfv_core::fixture::Fixture;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load(name: &str) -> Fixture {
    Fixture::load(&fixture_path(name)).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

/// The de Rham fixtures of the shipped corpus.
pub const MF_FIXTURES: [&str; 6] = [
    "unit_root_p5.json",
    "tate_p5.json",
    "kummer_p5.json",
    "kummer_p7.json",
    "sym2_p5.json",
    "dim2_p5.json",
];

/// (fixture, theta-stable submodule names) pairs for association tests;
/// submodule algebra needs one-variable charts, so the two-variable
/// fixture is exercised through the residual identities only.
#[allow(dead_code)]
pub const ASSOCIATION_PAIRS: [(&str, &[&str]); 5] = [
    ("unit_root_p5.json", &["E"]),
    ("tate_p5.json", &["E"]),
    ("kummer_p5.json", &["E", "G0"]),
    ("kummer_p7.json", &["E", "G0"]),
    ("sym2_p5.json", &["E", "G00", "GLE1"]),
];
