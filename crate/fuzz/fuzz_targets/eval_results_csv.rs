#![no_main]
use bevloc::eval::{read_records, summarize, write_records};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_records(data) {
        let mut out = Vec::new();
        write_records(&records, &mut out).unwrap();
        assert_eq!(read_records(out.as_slice()).unwrap(), records);
        let _ = summarize(&records);
    }
});
