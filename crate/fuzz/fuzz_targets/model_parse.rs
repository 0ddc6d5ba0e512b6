#![no_main]

use dualfair::model::ClassifierModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = ClassifierModel::from_text(text) {
        let again = ClassifierModel::from_text(&model.to_text().expect("parsed model renders"))
            .expect("rendered model parses");
        assert_eq!(model, again);
    }
});
