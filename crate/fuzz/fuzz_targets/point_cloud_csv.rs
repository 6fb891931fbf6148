#![no_main]
use bevloc::PointCloud;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = PointCloud::from_csv_reader(data) {
        let mut out = Vec::new();
        cloud.write_csv(&mut out).unwrap();
        assert_eq!(PointCloud::from_csv_reader(out.as_slice()).unwrap(), cloud);
    }
});
