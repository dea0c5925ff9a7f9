#![no_main]

use libfuzzer_sys::fuzz_target;
use sigcorr::trace::TraceLog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = TraceLog::from_csv(text) {
        let written = log.to_csv();
        let again = TraceLog::from_csv(&written).expect("re-parse of written trace");
        assert_eq!(written, again.to_csv());
    }
});
