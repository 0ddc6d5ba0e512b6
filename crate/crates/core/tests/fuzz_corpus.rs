//! Replays the checked-in fuzz seeds through the same checks as the fuzz
//! targets, so the seeds and parsers stay in sync on stable toolchains.

use std::path::PathBuf;

use dualfair::config::Config;
use dualfair::harness::{parse_summary, render_summary};
use dualfair::model::ClassifierModel;
use dualfair::tabular::{clean, encode_and_normalize, read_csv, ColumnKind, ColumnSpec};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

fn check(target: &str, accepted: &[&str], run: impl Fn(&[u8]) -> bool) {
    for (name, bytes) in seeds(target) {
        let ok = run(&bytes);
        assert_eq!(ok, accepted.contains(&name.as_str()), "{target}/{name}");
    }
}

#[test]
fn csv_seeds() {
    let schema = [
        ColumnSpec::categorical("race", ColumnKind::Sensitive, ["White", "Black", "Joint"]),
        ColumnSpec::categorical("sex", ColumnKind::Sensitive, ["Male", "Female"]),
        ColumnSpec::numeric_feature("income"),
        ColumnSpec::categorical("purpose", ColumnKind::Feature, ["home", "refi"]),
        ColumnSpec::categorical("action", ColumnKind::Label, ["denied", "originated"]),
    ];
    let markers = vec![String::new(), "Exempt".into(), "NA".into()];
    check(
        "csv_load",
        &["markers_and_extra.csv", "valid.csv"],
        |bytes| {
            let Ok(raw) = read_csv(bytes, &schema, &markers) else {
                return false;
            };
            let Ok(cleaned) = clean(&raw, 0.25) else {
                return false;
            };
            let ds = encode_and_normalize(&cleaned);
            ds.as_ref().map(|d| d.validate().unwrap()).is_ok()
        },
    );
}

#[test]
fn config_seeds() {
    check(
        "config_parse",
        &["full.json", "hmda.json", "minimal.json"],
        |bytes| {
            let Ok(cfg) = Config::from_json_str(std::str::from_utf8(bytes).unwrap()) else {
                return false;
            };
            assert_eq!(cfg.schema().unwrap().len(), cfg.columns.len());
            true
        },
    );
}

#[test]
fn model_seeds() {
    check(
        "model_parse",
        &["no_weights.txt", "two_weights.txt"],
        |bytes| {
            let Ok(model) = ClassifierModel::from_text(std::str::from_utf8(bytes).unwrap()) else {
                return false;
            };
            assert_eq!(
                ClassifierModel::from_text(&model.to_text().unwrap()).unwrap(),
                model
            );
            true
        },
    );
}

#[test]
fn report_seeds() {
    check("report_parse", &["two_repeats.txt"], |bytes| {
        let Ok(report) = parse_summary(std::str::from_utf8(bytes).unwrap()) else {
            return false;
        };
        assert_eq!(render_summary(&report), std::str::from_utf8(bytes).unwrap());
        true
    });
}
