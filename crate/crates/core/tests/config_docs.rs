use std::path::Path;

use visaug_core::Config;

/// The annotated example in docs/config.md lists every default.
#[test]
fn documented_example_matches_defaults() {
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.md")).unwrap();
    let start = doc.find("```toml\n").expect("toml block") + "```toml\n".len();
    let end = start + doc[start..].find("```").unwrap();
    assert_eq!(Config::from_toml(&doc[start..end]).unwrap(), Config::default());
}
