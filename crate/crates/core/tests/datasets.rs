use std::path::PathBuf;

use mas_core::{convert, parse_jsonl, parse_pdp_xml, parse_wsc_xml, Source};

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn sample_collection() {
    let instances = parse_wsc_xml(&fixture("wsc_sample.xml")).unwrap();
    assert_eq!(instances.len(), 5);
    assert!(instances.iter().all(|i| i.candidate_texts.len() == 2));
    assert!(instances.iter().all(|i| i.source() == Source::Wsc273));

    let golds: Vec<_> = instances.iter().map(|i| i.gold_index.unwrap()).collect();
    assert_eq!(golds, vec![0, 1, 0, 1, 0]);

    let first = &instances[0];
    assert_eq!(first.id, "wsc273-001");
    assert_eq!(
        first.sentence,
        "The city councilmen refused the demonstrators a permit because they feared violence."
    );
    assert_eq!(first.pronoun.surface, "they");

    // line break inside txt1 and the space before the final period collapse
    assert_eq!(
        instances[4].sentence,
        "The man couldn't lift his son because he was so weak."
    );
    assert_eq!(instances[4].pronoun.start, 38);
}

#[test]
fn sample_pdp() {
    let instances = parse_pdp_xml(&fixture("pdp_sample.xml")).unwrap();
    assert_eq!(instances.len(), 1);
    assert_eq!(instances[0].id, "pdp60-001");
    assert_eq!(instances[0].candidate_texts.len(), 3);
}

#[test]
fn xml_to_jsonl_and_back() {
    let instances = parse_wsc_xml(&fixture("wsc_sample.xml")).unwrap();
    let jsonl = convert(&instances);
    assert_eq!(
        jsonl.iter().filter(|&&b| b == b'\n').count(),
        instances.len()
    );
    assert_eq!(parse_jsonl(&jsonl).unwrap(), instances);
}

#[test]
fn canonical_line_is_bit_exact() {
    let bytes = fixture("trophy.jsonl");
    let instances = parse_jsonl(&bytes).unwrap();
    assert_eq!(convert(&instances), bytes);
}
