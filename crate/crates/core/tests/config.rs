//! The configuration shown in the README parses and means what it says.

use mirrorsim::agents::AgentKind;
use mirrorsim::episode::HistoryMode;
use mirrorsim::prompt::Level;
use mirrorsim::run::RunConfig;

fn readme_toml() -> String {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").expect("toml block") + "```toml\n".len();
    let end = start + readme[start..].find("```").unwrap();
    readme[start..end].to_string()
}

#[test]
fn readme_run_config_parses() {
    let cfg = RunConfig::from_toml_str(&readme_toml()).unwrap();
    assert_eq!(cfg.run_id, "pilot");
    assert_eq!(cfg.levels, Level::ALL.to_vec());
    assert_eq!(cfg.episode.history_mode, HistoryMode::LatestFrame);
    assert_eq!(cfg.agents.len(), 3);
    match &cfg.agents[1].kind {
        AgentKind::Remote(r) => {
            assert_eq!(r.model, "some-model");
            assert_eq!(r.retry_budget, 3);
            assert_eq!(r.rate_limit_per_minute, Some(30.0));
        }
        other => panic!("expected a remote agent, got {other:?}"),
    }
    assert!(matches!(cfg.agents[2].kind, AgentKind::Human));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = readme_toml().replace("parallelism = 4", "paralelism = 4");
    assert!(RunConfig::from_toml_str(&text).is_err());
}
