#![no_main]
use bevloc::eval::Report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = Report::from_json(data) {
        let _ = report.to_table();
    }
});
