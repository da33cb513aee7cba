use std::path::Path;
use std::process::{Command, Output};

use hbnpuf::io::{parse_stats_table, parse_sweep_table, read_dataset};

const TINY: &str = "[sim]\nn_nodes = 16\nn_classes = 2\nn_instances = 2\nn_challenges = 2\nn_repeats = 2\n";

fn hbnpuf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbnpuf"))
        .args(args)
        .env_remove("HBNPUF_THREADS")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn sim_writes_header_and_packed_payload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    let out = dir.path().join("tiny.bin");
    std::fs::write(&cfg, TINY).unwrap();
    let run = hbnpuf(&["sim", "--config", p(&cfg), "--out", p(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stderr).contains("dims"));

    let x = read_dataset(&out).unwrap();
    let d = x.dims();
    assert_eq!(
        (d.n_classes, d.n_instances, d.n_challenges, d.n_repeats, d.n_nodes, d.n_times),
        (2, 2, 2, 2, 16, 20)
    );
    let bits = 2 * 2 * 2 * 2 * 16 * 20;
    assert_eq!(x.payload().len(), (bits + 7) / 8);
    let meta = x.metadata().unwrap();
    assert_eq!(meta.classes.len(), 2);
    assert_eq!(meta.classes[0].edges.len(), 16 * 3 / 2);
}

#[test]
fn output_path_can_come_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    let out = dir.path().join("from-config.bin");
    std::fs::write(&cfg, format!("{TINY}\n[output]\ndataset = {:?}\n", p(&out))).unwrap();
    assert!(hbnpuf(&["sim", "--config", p(&cfg)]).status.success());
    assert!(out.exists());
}

#[test]
fn bad_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sim]\nsample_interval_ns = 0.37\n").unwrap();
    let run = hbnpuf(&["sim", "--config", p(&cfg), "--out", p(&dir.path().join("x.bin"))]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("sample_interval_ns"));

    std::fs::write(&cfg, "[sim]\nsigmaa = 0.1\n").unwrap();
    let run = hbnpuf(&["sim", "--config", p(&cfg), "--out", p(&dir.path().join("x.bin"))]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("sigmaa"));
}

#[test]
fn missing_or_corrupt_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let run = hbnpuf(&["sim", "--config", p(&dir.path().join("nope.toml")), "--out", "x.bin"]);
    assert_eq!(run.status.code(), Some(3));

    let cfg = dir.path().join("tiny.toml");
    let data = dir.path().join("tiny.bin");
    std::fs::write(&cfg, TINY).unwrap();
    assert!(hbnpuf(&["sim", "--config", p(&cfg), "--out", p(&data)]).status.success());
    let bytes = std::fs::read(&data).unwrap();
    std::fs::write(&data, &bytes[..bytes.len() - 3]).unwrap();
    let run = hbnpuf(&["stats", "--input", p(&data)]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains("payload length mismatch"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(hbnpuf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hbnpuf(&["stats", "--input", "x", "--mode", "median"]).status.code(), Some(2));
    let run = Command::new(env!("CARGO_BIN_EXE_hbnpuf"))
        .args(["stats", "--input", "x"])
        .env("HBNPUF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn stats_then_compare_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    let data = dir.path().join("tiny.bin");
    let stats = dir.path().join("stats.csv");
    let z = dir.path().join("z.csv");
    std::fs::write(&cfg, TINY).unwrap();
    assert!(hbnpuf(&["sim", "--config", p(&cfg), "--out", p(&data)]).status.success());
    let run = hbnpuf(&["stats", "--input", p(&data), "--mode", "paper-literal", "--out", p(&stats)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&stats).unwrap();
    assert!(text.starts_with("# mode=paper-literal"));
    let table = parse_stats_table(&text).unwrap();
    assert_eq!(table.sample_times_ns.len(), 20);

    let run = hbnpuf(&["compare", "--a", p(&stats), "--b", p(&stats), "--out", p(&z)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = std::fs::read_to_string(&z).unwrap();
    assert!(report.contains("# z_rms"));
    let line = report.lines().find(|l| l.starts_with("# z_rms")).unwrap();
    for field in line.split(' ').skip(2) {
        let (_, value) = field.split_once('=').unwrap();
        let value: f64 = value.parse().unwrap();
        assert!(value == 0.0 || value.is_nan(), "{line}");
    }
}

#[test]
fn compare_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "class,time_ns,mu_inter,mu_intra,delta_mu\n0,0.5,0.1,0.0,0.1\n1,0.5,0.2,0.0,0.2\n").unwrap();
    std::fs::write(&b, "class,time_ns,mu_inter,mu_intra,delta_mu\n0,1,0.1,0.0,0.1\n1,1,0.2,0.0,0.2\n").unwrap();
    let run = hbnpuf(&["compare", "--a", p(&a), "--b", p(&b)]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    let sweep = dir.path().join("sweep.csv");
    let fit = dir.path().join("fit.csv");
    std::fs::write(
        &cfg,
        format!("{TINY}\n[sweep]\nknob = \"sigma\"\nvalues = [0.0, 0.02, 0.05, 0.1, 0.2]\neval_time_ns = 6.0\n"),
    )
    .unwrap();
    let run = hbnpuf(&["sweep", "--config", p(&cfg), "--out", p(&sweep)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let table = parse_sweep_table(&std::fs::read_to_string(&sweep).unwrap()).unwrap();
    assert_eq!(table.xs, vec![0.0, 0.02, 0.05, 0.1, 0.2]);
    assert!(table.ys.iter().all(|y| (0.0..=1.0).contains(y)));

    let run = hbnpuf(&["sweep", "--config", p(&cfg), "--knob", "epsilon", "--values", "0.1,0.05"]);
    assert_eq!(run.status.code(), Some(2));

    // A fit may or may not converge on tiny-ensemble data; it must still exit cleanly.
    let run = hbnpuf(&["fit", "--input", p(&sweep), "--out", p(&fit), "--curve-points", "11"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&fit).unwrap();
    assert!(text.lines().count() >= 11);
}
