#![no_main]
use bevloc::eval::AblationMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(m) = AblationMatrix::from_toml(text) {
        assert!(!m.row.is_empty());
    }
});
