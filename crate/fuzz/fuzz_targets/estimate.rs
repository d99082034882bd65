#![no_main]

use libfuzzer_sys::fuzz_target;
use monohaz::estimators::{self, BetaSource, Settings};
use monohaz::{Dataset, Triweight};

// Parsed data through both estimators: errors are fine, panics are not,
// and anything returned as monotone has to be.
fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = Dataset::from_csv_reader(data) else { return };
    if parsed.len() > 2000 {
        return;
    }
    let settings = Settings { beta: BetaSource::Fixed(vec![0.0; parsed.p()]), ..Settings::with_grid(64) };
    let b = estimators::default_bandwidth(parsed.len());
    if let Ok(fit) = estimators::msle_with(&Triweight, &parsed, b, &settings) {
        assert!(!fit.curve.monotone || fit.curve.is_nondecreasing());
    }
    if let Ok(fit) = estimators::isbe_with(&Triweight, &parsed, b, &settings) {
        assert!(!fit.curve.monotone || fit.curve.is_nondecreasing());
    }
});
