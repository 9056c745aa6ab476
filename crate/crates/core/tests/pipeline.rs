use std::path::Path;
use std::process::Command;

use susceptsim::config::RunConfig;
use susceptsim::pipeline::{gateways, run_sweep_stage, Workspace};
use susceptsim::report::{emit_from_disk, ReportManifest};
use susceptsim::synth::{write_fixtures, FixtureSpec};

fn workspace(dir: &Path, spec: &FixtureSpec) -> Workspace {
    let cfg = write_fixtures(dir, spec).unwrap();
    Workspace::load(RunConfig::load(&cfg).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn report_without_artifacts_marks_every_section_empty() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path(), &FixtureSpec::default());
    let m = emit_from_disk(&ws).unwrap();
    assert!(m.entries.iter().all(|e| e.n_cache_keys == 0 && e.seeds.is_empty()));
    assert!(m.datasets.iter().all(|d| d.n_records == 0));
    let summary = std::fs::read_to_string(ws.layout().report_dir().join("summary.md")).unwrap();
    assert_eq!(summary.matches("\nno data\n").count(), 9, "{summary}");
}

#[test]
fn settings_matrix_has_one_row_per_setting_model_axis() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        models: vec!["mock-a".into(), "mock-b".into()],
        settings: vec!["zero_shot".into(), "demo_only".into(), "imputed".into()],
        runs: 1,
        ..FixtureSpec::default()
    };
    let ws = workspace(dir.path(), &spec);
    let gws = gateways(&ws.config, true).unwrap();
    run_sweep_stage(&ws, &gws, false).unwrap();
    emit_from_disk(&ws).unwrap();

    let rows = csv_rows(&ws.layout().report_dir().join("settings_matrix.csv"));
    assert_eq!(rows.len(), 3 * 2 * 2);
    // every cell is filled: both datasets carry gender and age
    for r in &rows {
        assert_eq!(r.len(), 3 + spec.datasets.len());
        for cell in r.iter().skip(3) {
            let v: f64 = cell.parse().unwrap_or_else(|_| panic!("empty cell in {r:?}"));
            assert!((0.0..=1.0).contains(&v));
        }
    }
    // zero-shot ignores the axis, so both axes report the same accuracy
    for m in ["mock-a", "mock-b"] {
        let zs: Vec<_> = rows.iter().filter(|r| &r[0] == "zero_shot" && &r[1] == m).collect();
        assert_eq!(zs.len(), 2);
        assert_eq!(zs[0].iter().skip(3).collect::<Vec<_>>(), zs[1].iter().skip(3).collect::<Vec<_>>());
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_susceptsim"))
}

#[test]
fn cli_rejects_missing_and_malformed_configs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cli()
        .args(["--config", dir.path().join("absent.toml").to_str().unwrap(), "validate"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = \"one\"\n[[endpoints]\n").unwrap();
    let out = cli().args(["--config", bad.to_str().unwrap(), "validate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn cli_validate_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        settings: vec!["zero_shot".into(), "demo_only".into()],
        runs: 1,
        ..FixtureSpec::default()
    };
    let cfg = write_fixtures(dir.path(), &spec).unwrap();
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("elsewhere");
    let out_arg = out_dir.to_str().unwrap();

    let v = cli().args(["--config", cfg, "validate"]).output().unwrap();
    assert!(v.status.success());
    let text = String::from_utf8_lossy(&v.stdout);
    assert!(text.contains("24 participants"), "{text}");
    assert!(text.contains("2 settings"), "{text}");

    for cmd in ["sweep", "report"] {
        let o = cli()
            .args(["--config", cfg, "--mock", "--seed", "99", "--out", out_arg, cmd])
            .output()
            .unwrap();
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let manifest: ReportManifest =
        serde_json::from_slice(&std::fs::read(out_dir.join("report/manifest.json")).unwrap()).unwrap();
    let s = &manifest.seeds;
    assert_eq!([s.sweep, s.dropout, s.training, s.topics], [99; 4]);
    assert!(manifest.entries.iter().all(|e| e.seeds == vec![99]));
    assert!(manifest.datasets.iter().all(|d| d.n_records > 0));
    // the response cache stays where the config puts it; only outputs move
    assert!(!dir.path().join("out/report").exists());
    assert!(dir.path().join("out/cache").is_dir());
}
