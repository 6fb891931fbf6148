#![no_main]
use bevloc::map::MapPatch;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = MapPatch::decode(data) {
        assert_eq!(m.pixels().len(), m.side() * m.side() * m.channels());
        assert_eq!(MapPatch::decode(&m.to_png().unwrap()).unwrap(), m);
    }
});
