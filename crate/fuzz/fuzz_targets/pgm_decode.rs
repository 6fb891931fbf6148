#![no_main]
use bevloc::pgm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = pgm::decode(data) {
        assert_eq!(g.pixels.len(), g.width * g.height);
        assert_eq!(pgm::decode(&pgm::encode(&g)).unwrap(), g);
    }
});
