use sigcorr::config::ScenarioConfig;

fn bundled(name: &str) -> ScenarioConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ScenarioConfig::from_path(path).unwrap()
}

#[test]
fn bundled_configs_match_presets() {
    for (name, preset) in [
        ("paper_sec6.cfg", ScenarioConfig::paper_sec6()),
        ("paper_fig5.cfg", ScenarioConfig::paper_fig5()),
        ("noise_only.cfg", ScenarioConfig::noise_only()),
    ] {
        assert_eq!(bundled(name).to_json_pretty(), preset.to_json_pretty(), "{name}");
    }
}
