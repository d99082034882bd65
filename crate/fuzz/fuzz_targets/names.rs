#![no_main]

use libfuzzer_sys::fuzz_target;
use monohaz::kernels;
use monohaz::Method;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(method) = text.parse::<Method>() {
        assert_eq!(method.to_string().parse::<Method>().unwrap(), method);
    }
    let _ = kernels::by_name(text);
});
