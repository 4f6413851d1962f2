use std::fs;
use std::path::Path;

use regime_core::calendar::YearRange;
use regime_core::encoder::EncoderConfig;
use regime_core::exec::Sequential;
use regime_core::grid::GridGeometry;
use regime_core::msn::{initial_state, TrainConfig};
use regime_core::synth::SyntheticSpec;
use regime_core::views::ViewConfig;
use regime_tools::commands::{cmd_analyze, cmd_discretize, cmd_report, cmd_synth, cmd_train, ANALYSIS_FILES};
use regime_tools::config::{DataSource, PipelineConfig};
use regime_tools::formats::packed::read_checkpoint;
use regime_tools::ToolError;

fn config(out: &Path, k: usize, epochs: usize) -> PipelineConfig {
    let g = GridGeometry::new(-20.0, -50.0, 0.5, 8, 8).unwrap();
    let mut spec = SyntheticSpec::new(g, 3, YearRange::new(1990, 1992), 11);
    spec.coupling_strength = 0.3;
    let mut cfg = PipelineConfig::new(DataSource::Synthetic(spec));
    cfg.views = ViewConfig {
        out_size: 8,
        patch_size: 4,
        ..ViewConfig::default()
    };
    cfg.encoder = EncoderConfig {
        embed: 8,
        hidden: 16,
        latent: 16,
    };
    cfg.train = TrainConfig {
        n_prototypes: k,
        epochs,
        batch_size: 128,
        ..TrainConfig::default()
    };
    cfg.test_years = [1992].into();
    cfg.lags.tau_min = -2;
    cfg.lags.tau_max = 2;
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn synth_is_reproducible_and_creates_directories() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_synth(&config(&dir.path().join("a/nested"), 4, 1)).unwrap();
    let b = cmd_synth(&config(&dir.path().join("b"), 4, 1)).unwrap();
    for f in ["series.bin", "true_labels.csv", "oni.csv"] {
        assert_eq!(read(a.dir.join(f)), read(b.dir.join(f)), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(a.dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["outputs"]["spec"]["seed"], 11);
}

#[test]
fn zero_epochs_checkpoint_is_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 4, 0);
    let out = cmd_train(&cfg, &Sequential).unwrap();
    let ck = read_checkpoint(&out.dir.join("checkpoint.bin")).unwrap();
    let (anchor, target, bank) = initial_state(2, &cfg.views, &cfg.encoder, &cfg.train).unwrap();
    assert_eq!((ck.anchor, ck.target, ck.bank), (anchor, target, bank));
    let report = fs::read_to_string(out.dir.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1);
}

#[test]
fn full_pipeline_rows_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 4, 2);
    let t = cmd_train(&cfg, &Sequential).unwrap();
    let report = fs::read_to_string(t.dir.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let d = cmd_discretize(&cfg, None, &Sequential).unwrap();
    let regimes = fs::read_to_string(d.dir.join("regimes.csv")).unwrap();
    assert_eq!(regimes.lines().count(), 1 + 3 * 365 + 1);
    let a = cmd_analyze(&cfg, None, true).unwrap();
    for f in ANALYSIS_FILES {
        assert!(a.dir.join(f).is_file(), "{f} missing");
    }
    let r = cmd_report(&cfg, None).unwrap();
    assert_eq!(r.summary.periods.len(), 1);
    assert_eq!(r.summary.periods[0].top.len(), cfg.top_n);

    let snapshot = |sub: &str| {
        let mut files: Vec<_> = fs::read_dir(dir.path().join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.iter().map(|p| (p.clone(), read(p))).collect::<Vec<_>>()
    };
    let before: Vec<_> = ["train", "discretize", "analyze", "report"].iter().map(|s| snapshot(s)).collect();
    cmd_train(&cfg, &Sequential).unwrap();
    cmd_discretize(&cfg, None, &Sequential).unwrap();
    cmd_analyze(&cfg, None, true).unwrap();
    cmd_report(&cfg, None).unwrap();
    let after: Vec<_> = ["train", "discretize", "analyze", "report"].iter().map(|s| snapshot(s)).collect();
    for (b, a) in before.iter().flatten().zip(after.iter().flatten()) {
        assert_eq!(b.0, a.0);
        assert!(b.1 == a.1, "{} changed on re-run", b.0.display());
    }
}

#[test]
fn single_prototype_labels_everything_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 1, 1);
    cmd_train(&cfg, &Sequential).unwrap();
    let d = cmd_discretize(&cfg, None, &Sequential).unwrap();
    assert!(d.sequence.labels().all(|k| k == 0));
}

#[test]
fn report_needs_analysis_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 4, 1);
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert!(matches!(cmd_report(&cfg, Some(&empty)), Err(ToolError::Data(_))));
}

#[test]
fn synth_rejects_file_sources() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 4, 1);
    cfg.data = DataSource::File {
        path: "x.csv".into(),
        format: regime_tools::formats::SeriesFormat::CsvLong,
    };
    assert!(matches!(cmd_synth(&cfg), Err(ToolError::Config(_))));
}
