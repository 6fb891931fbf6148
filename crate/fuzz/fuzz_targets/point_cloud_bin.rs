#![no_main]
use bevloc::PointCloud;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = PointCloud::from_bin_bytes(data) {
        assert_eq!(cloud.to_bin_bytes(), data);
    }
});
