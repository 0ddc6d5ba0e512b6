#![no_main]

use dualfair::tabular::{clean, encode_and_normalize, read_csv, ColumnKind, ColumnSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let schema = [
        ColumnSpec::categorical("race", ColumnKind::Sensitive, ["White", "Black", "Joint"]),
        ColumnSpec::categorical("sex", ColumnKind::Sensitive, ["Male", "Female"]),
        ColumnSpec::numeric_feature("income"),
        ColumnSpec::categorical("purpose", ColumnKind::Feature, ["home", "refi"]),
        ColumnSpec::categorical("action", ColumnKind::Label, ["denied", "originated"]),
    ];
    let markers = vec![String::new(), "Exempt".into(), "NA".into()];
    let Ok(raw) = read_csv(data, &schema, &markers) else {
        return;
    };
    let Ok(cleaned) = clean(&raw, 0.25) else {
        return;
    };
    if let Ok(ds) = encode_and_normalize(&cleaned) {
        ds.validate().expect("encoded dataset satisfies its own invariants");
        let mut out = Vec::new();
        ds.write_csv(&mut out).expect("write to memory");
    }
});
