#![no_main]

use libfuzzer_sys::fuzz_target;
use sigcorr::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if ScenarioConfig::parse_json_str(text).is_err() {
        return;
    }
    // anything that validates must survive a write/read cycle unchanged
    if let Ok(cfg) = ScenarioConfig::from_json_str(text) {
        let written = cfg.to_json_pretty();
        let again = ScenarioConfig::from_json_str(&written).expect("re-parse of written config");
        assert_eq!(written, again.to_json_pretty());
    }
});
