use std::path::{Path, PathBuf};
use std::process::Command;

use rgf_cli::commands::*;
use rgf_cli::{cmd_backtrack, cmd_cv, cmd_enrich, cmd_pipeline, cmd_synth, cmd_trace, cmd_train, PipelineConfig, SynthSpecFile};
use rgf_core::corpus::ALZGENE_TOP10;

fn rgf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgf"))
}

fn small_spec(seed: u64) -> SynthSpecFile {
    SynthSpecFile {
        n_cells: 120,
        n_genes: 40,
        n_planted: 4,
        n_known: 2,
        seed,
        ..SynthSpecFile::default()
    }
}

fn small_config(data: &Path, out: &Path) -> PipelineConfig {
    let text = format!(
        r#"
seed = 5
[paths]
dataset = "{}"
known_genes = "{}"
out = "{}"
[qc]
min_features = 10
[model]
n_layers = 2
n_heads = 2
d_model = 8
d_ff = 16
max_len = 12
[train]
epochs = 2
batch_size = 16
learning_rate = 0.01
[cv]
k = 3
[trace]
sample_limit = 6
[backtrack]
top_k = 5
"#,
        data.join(DATASET_FILE).display(),
        data.join(KNOWN_GENES_FILE).display(),
        out.display()
    );
    toml::from_str(&text).unwrap()
}

struct Setup {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    out: PathBuf,
}

fn setup() -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::create_dir_all(&out).unwrap();
    cmd_synth(&small_spec(9).to_spec().unwrap(), &data).unwrap();
    Setup { _tmp: tmp, data, out }
}

#[test]
fn synth_is_deterministic_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let spec = small_spec(3).to_spec().unwrap();
    cmd_synth(&spec, &a).unwrap();
    cmd_synth(&spec, &b).unwrap();
    for f in [DATASET_FILE, GROUND_TRUTH_FILE, KNOWN_GENES_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert!(cmd_synth(&spec, &tmp.path().join("missing")).is_err());
    let weak = SynthSpecFile { effect_size: 0.5, ..small_spec(3) };
    assert!(weak.to_spec().is_err());
}

#[test]
fn train_writes_metrics_and_is_repeatable() {
    let s = setup();
    let cfg = small_config(&s.data, &s.out);
    let r = cmd_train(&cfg, &s.out).unwrap();
    assert_eq!(r.folds.len(), 1);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(s.out.join(METRICS_FILE)).unwrap()).unwrap();
    for key in ["auc", "sensitivity", "specificity", "f1"] {
        for field in ["per_fold", "mean", "std"] {
            assert!(json[key][field] != serde_json::Value::Null, "{key}.{field}");
        }
    }
    let first = std::fs::read(s.out.join(METRICS_FILE)).unwrap();
    cmd_train(&cfg, &s.out).unwrap();
    assert_eq!(first, std::fs::read(s.out.join(METRICS_FILE)).unwrap());

    let mut missing = cfg.clone();
    missing.paths.dataset = Some(s.data.join("nope.tsv"));
    assert!(cmd_train(&missing, &s.out).is_err());
}

#[test]
fn cv_reports_every_fold() {
    let s = setup();
    let cfg = small_config(&s.data, &s.out);
    let r = cmd_cv(&cfg, &s.out).unwrap();
    assert_eq!(r.auc.per_fold.len(), 3);
    assert!(r.auc.std >= 0.0);
}

#[test]
fn stages_compose_like_the_pipeline() {
    let s = setup();
    let cfg = small_config(&s.data, &s.out);
    let full = cmd_pipeline(&cfg, &s.out).unwrap();
    assert!(full.enrichment.is_none());
    for a in &full.artifacts {
        assert!(a.is_file(), "{}", a.display());
    }
    let grid_csv = std::fs::read(s.out.join(IE_GRID_FILE)).unwrap();
    let svg = std::fs::read_to_string(s.out.join(HEATMAP_FILE)).unwrap();
    assert_eq!(svg.matches("<rect").count(), 2 * 12);
    assert!(svg.contains("class=\"mcn\""));

    // the separate stage commands reproduce the pipeline's files
    let staged = s.out.with_file_name("staged");
    std::fs::create_dir_all(&staged).unwrap();
    let ckpt = s.out.join(CHECKPOINT_FILE);
    cmd_trace(&cfg, &ckpt, &staged).unwrap();
    assert_eq!(std::fs::read(staged.join(IE_GRID_FILE)).unwrap(), grid_csv);
    cmd_backtrack(&cfg, &ckpt, &staged.join(MCNS_FILE), &staged).unwrap();
    for f in [MCNS_FILE, HEATMAP_FILE, GENE_SCORES_FILE, MCGS_FILE] {
        assert_eq!(std::fs::read(staged.join(f)).unwrap(), std::fs::read(s.out.join(f)).unwrap(), "{f}");
    }

    let mut one = cfg.clone();
    one.backtrack.top_k = 1;
    let top = cmd_backtrack(&one, &ckpt, &staged.join(MCNS_FILE), &staged).unwrap();
    assert_eq!(top.len(), 1);
    assert_eq!(std::fs::read_to_string(staged.join(MCGS_FILE)).unwrap().lines().count(), 1);

    let mut hide = cfg.clone();
    hide.backtrack.exclude_known = true;
    hide.backtrack.top_k = 40;
    let known = std::fs::read_to_string(s.data.join(KNOWN_GENES_FILE)).unwrap();
    let top = cmd_backtrack(&hide, &ckpt, &staged.join(MCNS_FILE), &staged).unwrap();
    assert!(top.iter().all(|g| !known.lines().any(|k| k == g.gene)));
}

#[test]
fn default_known_genes_are_excluded() {
    // without a known-genes file the AlzGene list is corrupted and excluded
    let tmp = tempfile::tempdir().unwrap();
    let spec = rgf_core::corpus::SyntheticSpec {
        n_cells: 80,
        n_genes: 30,
        planted_genes: vec![],
        designated_known: vec![],
        effect_size: 1.0,
        base_mean: 20.0,
        dispersion: 5.0,
        seed: 1,
    };
    let (mut cells, _) = rgf_core::corpus::generate_synthetic(&spec).unwrap();
    for (i, c) in cells.iter_mut().enumerate() {
        for (j, g) in ALZGENE_TOP10.iter().enumerate() {
            c.expression.insert(g.to_string(), (5 + (i + j) % 40) as f64);
        }
    }
    let data = tmp.path().to_path_buf();
    rgf_core::corpus::write_dataset(&cells, &data.join(DATASET_FILE)).unwrap();
    let mut cfg = small_config(&data, &data);
    cfg.paths.known_genes = None;
    cfg.backtrack.exclude_known = true;
    cfg.backtrack.top_k = 100;
    let r = cmd_pipeline(&cfg, &data).unwrap();
    assert!(!r.mcgs.is_empty());
    assert!(r.mcgs.iter().all(|g| !ALZGENE_TOP10.contains(&g.gene.as_str())));
}

#[test]
fn enrichment_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("mcgs.txt"), "APOE (0.512)\nBIN1 (0.300)\nCLU (0.100)\n").unwrap();
    std::fs::write(dir.join("sets.gmt"), "AD\tAlzheimer's disease\tAPOE\tBIN1\tCLU\nX\tother\tG1\tG2\n").unwrap();
    let mut bg: Vec<String> = (1..40).map(|i| format!("G{i}")).collect();
    bg.extend(["APOE", "BIN1", "CLU"].map(String::from));
    let vocab = rgf_core::corpus::build_vocabulary(bg).unwrap();
    vocab.write(&dir.join("vocab.tsv")).unwrap();
    let r = cmd_enrich(&dir.join("mcgs.txt"), &dir.join("sets.gmt"), Some(&dir.join("vocab.tsv")), 0.05, dir).unwrap();
    assert_eq!(r.significant.len(), 1);
    assert_eq!(rgf_core::enrich::format_pathway(&r.significant[0]), "AD (< 0.01)");

    std::fs::write(dir.join("mcgs.txt"), "G30 (0.5)\n").unwrap();
    let r = cmd_enrich(&dir.join("mcgs.txt"), &dir.join("sets.gmt"), Some(&dir.join("vocab.tsv")), 0.05, dir).unwrap();
    assert!(r.significant.is_empty());
    assert_eq!(std::fs::read_to_string(dir.join(ENRICHMENT_FILE)).unwrap(), "pathway,overlap,set_size,p,q\n");
    assert!(cmd_enrich(&dir.join("mcgs.txt"), &dir.join("missing.gmt"), None, 0.05, dir).is_err());
}

#[test]
fn binary_interface() {
    for sub in ["synth", "train", "cv", "trace", "backtrack", "enrich", "pipeline"] {
        let o = rgf().args([sub, "--help"]).output().unwrap();
        assert!(o.status.success(), "{sub} --help");
    }
    let o = rgf().args(["pipeline", "--config", "x.toml", "--no-such-flag"]).output().unwrap();
    assert!(!o.status.success());

    let tmp = tempfile::tempdir().unwrap();
    let missing = rgf().args(["cv", "--config"]).arg(tmp.path().join("absent.toml")).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));

    let data = tmp.path().join("d");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(tmp.path().join("spec.toml"), "n_cells = 60\nn_genes = 30\nn_planted = 2\nn_known = 1\n").unwrap();
    let o = rgf().args(["synth", "--seed", "4", "--spec"]).arg(tmp.path().join("spec.toml")).arg("--out").arg(&data).output().unwrap();
    assert!(o.status.success());
    let cfg = format!(
        "seed = 2\n[paths]\ndataset = \"d/dataset.tsv\"\nknown_genes = \"d/known_genes.txt\"\nout = \"o\"\n[qc]\nmin_features = 5\n[model]\nn_layers = 2\nn_heads = 1\nd_model = 4\nd_ff = 4\nmax_len = 8\n[train]\nepochs = 1\n[cv]\nk = 2\nfolds_to_run = 1\n"
    );
    std::fs::write(tmp.path().join("cfg.toml"), cfg).unwrap();
    std::fs::create_dir_all(tmp.path().join("o")).unwrap();
    let o = rgf().args(["pipeline", "--workers", "2", "--top-k", "3", "--mode", "relaxed", "--ie-sign", "corrupted-minus-restored", "--config"])
        .arg(tmp.path().join("cfg.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(tmp.path().join("o").join(MCGS_FILE)).unwrap().lines().count(), 3);
}
