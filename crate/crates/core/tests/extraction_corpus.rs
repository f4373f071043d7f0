mod common;

use std::collections::BTreeMap;

use mcqscope_core::extract::{extract_text_answer, Lexicon};

#[test]
fn every_rule_family_is_extracted() {
    let lex = Lexicon::default();
    let mut by_rule: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
    for case in common::corpus() {
        let got = extract_text_answer(&case.text, &case.option_entries(), &lex);
        let entry = by_rule.entry(case.rule.clone()).or_default();
        entry.0 += 1;
        if got.label.as_str() != case.expected {
            entry.1.push(format!("{}: expected {}, got {} ({})", case.id, case.expected, got.label, got.evidence));
        }
    }
    assert!(by_rule.len() >= 10, "{:?}", by_rule.keys());
    let failures: Vec<_> = by_rule.values().flat_map(|(_, f)| f.clone()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn corpus_covers_injected_options() {
    let cases = common::corpus();
    let extra = cases.iter().filter(|c| c.extra_options).count();
    assert!(extra > 0);
    for c in cases.iter().filter(|c| c.rule.starts_with("special_")) {
        assert!(["X", "Y", "Z"].contains(&c.expected.as_str()), "{}", c.id);
    }
}
