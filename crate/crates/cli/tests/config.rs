use warpfit::template::TemplateFamily;
use warpfit_cli::config::{Sampler, SimKind};
use warpfit_cli::{CliError, Command, RunConfig};

const FULL: &str = r#"
command = "sample"
seed = 42
output_dir = "erp-out"

[data]
path = "erp.csv"
x = "time"
y = "amplitude"
delimiter = ";"
window = [-100.0, 600.0]

[model]
m = 3
p = 8
sign = "minus"

[model.family]
kind = "bspline"
degree = 3
knots = [0.25, 0.5, 0.75]
penalty = 1000.0
fill = [0.5]

[fit]
n_starts = 12
p_grid = [5, 6, 7]

[sample]
sampler = "mh"
n_chains = 2
n_iter = 3000
burn_in = 1000
thin = 2
write_chains = true

[sample.prior]
sd_warp = 0.4

[report]
level = 0.9
kde_bandwidth = 5.0

[simulate]
design = "sim2"
n = 200
reps = 10
method = "bootstrap"
"#;

#[test]
fn full_config_parses() {
    let c = RunConfig::from_toml(FULL).unwrap();
    assert_eq!(c.command, Some(Command::Sample));
    assert_eq!(c.seed, 42);
    let data = c.data.as_ref().unwrap();
    assert_eq!((data.x.as_str(), data.y.as_str(), data.delimiter), ("time", "amplitude", ';'));
    assert_eq!(data.window, Some([-100.0, 600.0]));
    assert_eq!((c.model.m, c.model.p), (3, 8));
    assert!(matches!(&c.model.family, TemplateFamily::BSpline(o) if o.knots.len() == 3));
    assert_eq!(c.fit.p_grid, vec![5, 6, 7]);
    assert_eq!(c.sample.sampler, Sampler::Mh);
    assert_eq!(c.sample.prior.sd_warp, Some(0.4));
    assert_eq!(c.sample.prior.sd_heights, 10.0);
    assert_eq!(c.simulate.as_ref().unwrap().design, SimKind::Sim2);
    assert_eq!(c.chain_config().burn_in, Some(1000));
    c.validate_for(Command::Sample).unwrap();
}

#[test]
fn serialization_round_trip_is_idempotent() {
    for text in [FULL, "", "command = \"fit\"\n[data]\npath = \"a.csv\"\n"] {
        let parsed = RunConfig::from_toml(text).unwrap();
        let once = parsed.to_toml();
        let reparsed = RunConfig::from_toml(&once).unwrap();
        assert_eq!(reparsed, parsed);
        assert_eq!(reparsed.to_toml(), once);
        assert_eq!(reparsed.hash(), parsed.hash());
    }
}

#[test]
fn hash_ignores_output_dir_only() {
    let a = RunConfig::from_toml(FULL).unwrap();
    let b = RunConfig { output_dir: "elsewhere".into(), ..a.clone() };
    let c = RunConfig { seed: 43, ..a.clone() };
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 64);
}

fn config_message(text: &str, command: Command) -> String {
    match RunConfig::from_toml(text).and_then(|c| c.validate_for(command)) {
        Err(CliError::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn errors_name_the_field() {
    assert!(config_message("", Command::Fit).starts_with("data.path"));
    assert!(config_message("", Command::Simulate).starts_with("simulate"));
    assert!(config_message("[report]\nlevel = 1.5", Command::Validate).starts_with("report.level"));
    assert!(config_message("[data]\npath = \"a\"\nwindow = [2.0, 1.0]", Command::Fit).starts_with("data.window"));
    assert!(config_message("[model]\np = 0", Command::Validate).starts_with("model.p"));
    assert!(config_message("[data]\npath = \"a\"\n[sample]\nn_chains = 0", Command::Sample).starts_with("sample"));
    assert!(config_message("[fit]\np_grid = [0]", Command::Validate).starts_with("fit.p_grid"));
}

#[test]
fn unknown_and_mistyped_keys_are_rejected() {
    assert!(matches!(RunConfig::from_toml("sed = 3"), Err(CliError::Config(_))));
    assert!(matches!(RunConfig::from_toml("[model]\npp = 3"), Err(CliError::Config(_))));
    assert!(matches!(RunConfig::from_toml("command = \"plot\""), Err(CliError::Config(_))));
    assert!(matches!(RunConfig::from_toml("seed = \"x\""), Err(CliError::Config(_))));
}
