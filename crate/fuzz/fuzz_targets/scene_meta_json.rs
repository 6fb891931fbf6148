#![no_main]
use bevloc::synth::SceneMeta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = SceneMeta::from_json(data);
});
