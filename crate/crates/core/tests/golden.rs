mod common;

#[test]
fn transcripts_reproduce_the_journal() {
    let work = tempfile::tempdir().unwrap();
    let (expected, actual) = common::run_golden(work.path());
    assert_eq!(expected.len(), actual.len());
    for (e, a) in expected.iter().zip(&actual) {
        assert_eq!(e, a);
    }
}

#[test]
fn strip_keeps_other_bytes() {
    let line = r#"{"seq":3,"kind":"report","ts":17,"worker_id":"worker-2","trial_id":0,"payload":{"step":1,"value":0.5}}"#;
    assert_eq!(
        common::strip_volatile(line),
        r#"{"seq":3,"kind":"report","trial_id":0,"payload":{"step":1,"value":0.5}}"#
    );
}
