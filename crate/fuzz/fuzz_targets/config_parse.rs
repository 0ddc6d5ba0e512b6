#![no_main]

use dualfair::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = Config::from_json_str(text) {
        let spec = cfg.sensitive_spec().expect("validated config has a spec");
        let schema = cfg.schema().expect("validated config has a schema");
        assert_eq!(schema.len(), cfg.columns.len());
        assert!(spec.count_worlds() >= 1);
        let _ = cfg.synthetic_spec(10 * spec.count_worlds().min(1000));
    }
});
