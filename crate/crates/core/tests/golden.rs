mod common;

use common::{data_dir, golden_run, BLESS_ENV, GOLDEN_METRICS};

#[test]
fn golden_metrics_match_fixture() {
    let (tel, metrics) = golden_run();
    assert!(!tel.termination.is_failure(), "{:?}", tel.termination);
    let json = metrics.to_json().unwrap();
    let path = data_dir().join(GOLDEN_METRICS);
    if std::env::var_os(BLESS_ENV).is_some() {
        std::fs::write(&path, &json).unwrap();
        return;
    }
    let stored =
        std::fs::read_to_string(&path).expect("missing fixture; run with TRICYCLE_BLESS=1");
    assert_eq!(json, stored);
}
