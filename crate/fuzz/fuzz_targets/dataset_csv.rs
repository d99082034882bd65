#![no_main]

use libfuzzer_sys::fuzz_target;
use monohaz::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = Dataset::from_csv_reader(data) else { return };
    assert!(parsed.times().windows(2).all(|w| w[0] <= w[1]));
    let mut buf = Vec::new();
    parsed.write_csv(&mut buf).unwrap();
    assert_eq!(Dataset::from_csv_reader(buf.as_slice()).unwrap(), parsed);
});
