use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_flowdiv");

// short frames and memory so each trial takes well under a second
const SMALL: &str = "\
channel.t_mem = 4.0
frame.n_pilot = 12
frame.n_data = 40
run.n_trials = 2
";

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p
}

fn flowdiv(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn every_subcommand_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cfg = cfg.to_str().unwrap();
    let runs: [&[&str]; 5] = [
        &["single-run", "--dump-observations"],
        &["sweep-snr", "--snr-grid", "-5,10", "--modulations", "2x4,3x3"],
        &["sweep-nrx", "--nrx", "1,3", "--delta-y", "0.002"],
        &["structured-scan", "--trials", "6", "--y-grid", "0,0.001,0.05"],
        &["constellation", "--combiner", "pgc"],
    ];
    for args in runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{}-{rep}", args[0]));
            let o = flowdiv(&[args, &["--config", cfg, "--out", out.to_str().unwrap()]].concat());
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            outputs.push(read_dir_sorted(&out));
        }
        assert!(!outputs[0].is_empty());
        for (name, body) in &outputs[0] {
            assert!(body.starts_with("# flowdiv "), "{name} lacks provenance");
        }
        assert_eq!(outputs[0], outputs[1], "{args:?} not reproducible");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let o = flowdiv(&[
            "single-run",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "3",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        outputs.push(read_dir_sorted(&out));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn csv_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("o");
    let o = flowdiv(&[
        "structured-scan",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "3",
        "--y-grid",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let scan = std::fs::read_to_string(out.join("structured_scan.csv")).unwrap();
    let lines: Vec<&str> = scan.lines().collect();
    assert!(lines[1].starts_with("y_m,p_hat,ci_lo,ci_hi,n_mc,eta"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("0,1,"));

    let o = flowdiv(&["constellation", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let c = std::fs::read_to_string(out.join("constellation_egc.csv")).unwrap();
    let lines: Vec<&str> = c.lines().collect();
    assert_eq!(lines[1], "dim0,dim1,decided,truth");
    assert_eq!(lines.len(), 2 + 40);
}

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "link.snr_db = inf\n");
    let o = flowdiv(&["print-config", "--config", cfg.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let parsed = flowdiv_sim::parse_config(&text).unwrap();
    assert_eq!(parsed.master_seed, 99);
    assert_eq!(parsed.snr_db, f64::INFINITY);
    assert_eq!(flowdiv_sim::serialize_config(&parsed), text);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let bad = write_config(tmp.path(), "channel.nonsense = 3\n");
    let o = flowdiv(&["single-run", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let o = flowdiv(&["single-run", "--combiners", "sc,mrc", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let o = flowdiv(&["sweep-nrx", "--nrx", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    // a receiver upstream of the source sees no signal, so SNR calibration is undefined
    let upstream = write_config(
        tmp.path(),
        "geometry.rx_pos = [[-1.0, 0.0, 1.0]]\nfrontend.sync_offset = 2.0\n",
    );
    let o = flowdiv(&["single-run", "--config", upstream.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = flowdiv(&["single-run", "--config", "/nonexistent/config.toml", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}
