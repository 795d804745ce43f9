use std::collections::HashSet;
use std::io::Write;

use mixsum::corpus::{
    generate_synthetic, load_corpus, subsample, write_records, CorpusRecord, RecordBody, RecordKind, SyntheticSpec,
};
use mixsum::Error;

fn parallel_line(i: usize) -> String {
    format!(
        r#"{{"format_version":1,"id":"p{i}","kind":"parallel","lang_a":"en","lang_b":"zh","text_a":"sentence {i}","text_b":"句子{i}"}}"#
    )
}

fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f.flush().unwrap();
    f
}

#[test]
fn empty_file_gives_empty_stream() {
    let f = write_lines(&[]);
    let loaded = load_corpus(f.path(), None, true).unwrap();
    assert!(loaded.records.is_empty());
    assert!(loaded.diagnostics.is_empty());
}

#[test]
fn parallel_records_arrive_in_order() {
    let f = write_lines(&(0..3).map(parallel_line).collect::<Vec<_>>());
    let loaded = load_corpus(f.path(), Some(RecordKind::Parallel), true).unwrap();
    let ids: Vec<&str> = loaded.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["p0", "p1", "p2"]);
    assert!(matches!(&loaded.records[2].body, RecordBody::Parallel { text_b, .. } if text_b == "句子2"));
}

#[test]
fn one_malformed_line_among_hundred() {
    let mut lines: Vec<String> = (0..100).map(parallel_line).collect();
    lines[56] = r#"{"format_version":1,"id":"bad","kind":"parallel","lang_a":"en""#.to_string();
    let f = write_lines(&lines);

    let lenient = load_corpus(f.path(), Some(RecordKind::Parallel), false).unwrap();
    assert_eq!(lenient.records.len(), 99);
    assert_eq!(lenient.diagnostics.len(), 1);
    assert_eq!(lenient.diagnostics[0].line, 57);

    match load_corpus(f.path(), Some(RecordKind::Parallel), true) {
        Err(Error::CorpusParse { line, .. }) => assert_eq!(line, 57),
        other => panic!("expected a located parse error, got {other:?}"),
    }
}

#[test]
fn declared_kind_and_field_invariants_are_enforced() {
    let mono = r#"{"format_version":1,"id":"m0","kind":"mono","lang":"en","text":"hello"}"#.to_string();
    let f = write_lines(&[parallel_line(0), mono]);
    assert!(matches!(
        load_corpus(f.path(), Some(RecordKind::Parallel), true),
        Err(Error::CorpusParse { line: 2, .. })
    ));

    let empty = r#"{"format_version":1,"id":"m1","kind":"mono","lang":"en","text":""}"#.to_string();
    let f = write_lines(&[empty]);
    assert!(load_corpus(f.path(), None, true).is_err());

    let future = r#"{"format_version":9,"id":"m2","kind":"mono","lang":"en","text":"x"}"#.to_string();
    let f = write_lines(&[future]);
    assert!(load_corpus(f.path(), None, true).is_err());
}

#[test]
fn written_records_load_back() {
    let records: Vec<CorpusRecord> = (0..5)
        .map(|i| {
            CorpusRecord::new(
                format!("s{i}"),
                RecordBody::Summ {
                    doc_lang: "en".into(),
                    summ_lang: "zh".into(),
                    doc: format!("document number {i}"),
                    summary: format!("摘要{i}"),
                },
            )
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summ.jsonl");
    write_records(&path, &records).unwrap();
    assert_eq!(load_corpus(&path, Some(RecordKind::Summ), true).unwrap().records, records);
}

#[test]
fn subsample_sizes_identity_and_errors() {
    let data: Vec<u32> = (0..100_000).collect();
    assert_eq!(subsample(&data[..50], 50, 3).unwrap(), &data[..50]);
    for n in [1_000, 10_000] {
        let s = subsample(&data, n, 1).unwrap();
        assert_eq!(s.len(), n);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, subsample(&data, n, 1).unwrap());
    }
    assert!(matches!(
        subsample(&data[..10], 11, 0),
        Err(Error::SubsampleTooLarge { n: 11, len: 10 })
    ));
}

#[test]
fn overlap_of_two_seeds_is_hypergeometric() {
    let (big_n, n) = (100_000usize, 10_000usize);
    let data: Vec<u32> = (0..big_n as u32).collect();
    let a: HashSet<u32> = subsample(&data, n, 11).unwrap().into_iter().collect();
    let b = subsample(&data, n, 12).unwrap();
    let overlap = b.iter().filter(|x| a.contains(x)).count() as f64;
    let (nn, nf) = (big_n as f64, n as f64);
    let mean = nf * nf / nn;
    let var = nf * (nf / nn) * ((nn - nf) / nn) * ((nn - nf) / (nn - 1.0));
    assert!(
        (overlap - mean).abs() <= 3.0 * var.sqrt(),
        "overlap {overlap} vs {mean} ± {}",
        3.0 * var.sqrt()
    );
}

#[test]
fn cross_lingual_summary_is_bijection_of_lead() {
    let spec = SyntheticSpec {
        cls_size: 1_000,
        ..SyntheticSpec::default()
    };
    let bundle = generate_synthetic(&spec).unwrap();
    let map = &bundle.oracle.bijection;
    assert_eq!(bundle.cls.len(), 1_000);
    for r in &bundle.cls {
        let RecordBody::Summ {
            doc,
            summary,
            doc_lang,
            summ_lang,
        } = &r.body
        else {
            panic!("cls record {} is not a summ pair", r.id);
        };
        assert_ne!(doc_lang, summ_lang);
        let expected: String = doc
            .split(' ')
            .take(spec.lead_k)
            .map(|u| map[&u.chars().next().unwrap()])
            .collect();
        assert_eq!(&expected, summary);
        assert!(doc.chars().all(|c| c == ' ' || c.is_ascii_lowercase()));
        assert!(summary.chars().all(|c| !c.is_ascii()));
    }
}
