//! End-to-end tests of the binary: synth -> train -> eval -> viz, error
//! classes and exit codes, and byte-level idempotency.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kan-mcp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

fn spec_file(dir: &Path, seed: u64) -> std::path::PathBuf {
    let path = dir.join("spec.txt");
    write(
        &path,
        &format!(
            "n = 200\nd_t = 6\nd_a = 4\nd_v = 4\nsnr_t = 2.5\nsnr_a = 0.8\nsnr_v = 0.8\nlabel_fn = additive\nseed = {seed}\n"
        ),
    );
    path
}

fn config_file(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.txt");
    write(
        &path,
        "# tiny run\nepochs = 3\nbatch_size = 25\nmid_dim = 8\ncode_dim = 2\nseed = 9\n",
    );
    path
}

#[test]
fn full_workflow_and_idempotency() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = spec_file(dir, 5);
    let config = config_file(dir);
    let data = dir.join("data");

    // synth twice into separate dirs: byte-identical files
    let out = run(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let data2 = dir.join("data2");
    run(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data2.to_str().unwrap(),
    ]);
    for file in [
        "text.csv",
        "audio.csv",
        "visual.csv",
        "labels.csv",
        "manifest",
    ] {
        assert_eq!(
            fs::read(data.join(file)).unwrap(),
            fs::read(data2.join(file)).unwrap(),
            "{file} differs between identical synth runs"
        );
    }

    // train twice: identical artifacts, logs and stdout
    let run_dir = dir.join("run");
    let t1 = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(
        t1.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&t1.stderr)
    );
    let run_dir2 = dir.join("run2");
    let t2 = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        run_dir2.to_str().unwrap(),
    ]);
    for file in [
        "checkpoint.kmcp",
        "report.txt",
        "report.json",
        "metrics_per_epoch.csv",
        "loss_history.csv",
        "pareto_log.csv",
        "loss_curves.svg",
    ] {
        assert!(run_dir.join(file).is_file(), "missing artifact {file}");
        assert_eq!(
            fs::read(run_dir.join(file)).unwrap(),
            fs::read(run_dir2.join(file)).unwrap(),
            "{file} differs between identical train runs"
        );
    }
    // stdout differs only in the --out path it echoes
    let s1 = String::from_utf8(t1.stdout).unwrap().replace("run", "X");
    let s2 = String::from_utf8(t2.stdout).unwrap().replace("run2", "X");
    assert_eq!(s1, s2);

    // pareto log has the documented header
    let log = fs::read_to_string(run_dir.join("pareto_log.csv")).unwrap();
    assert!(log.starts_with("step,group,cos_beta,alpha_m,lambda,conflict\n"));

    // eval reproduces the training-time test metrics bitwise
    let eval_dir = dir.join("eval");
    let ev = run(&[
        "eval",
        "--checkpoint",
        run_dir.join("checkpoint.kmcp").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(
        ev.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&ev.stderr)
    );
    assert_eq!(
        fs::read(run_dir.join("report.txt")).unwrap(),
        fs::read(eval_dir.join("report.txt")).unwrap()
    );

    // eval with a worker pool matches single-threaded output
    let eval_dir2 = dir.join("eval2");
    run(&[
        "eval",
        "--checkpoint",
        run_dir.join("checkpoint.kmcp").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_dir2.to_str().unwrap(),
        "--workers",
        "3",
    ]);
    assert_eq!(
        fs::read(eval_dir.join("report.txt")).unwrap(),
        fs::read(eval_dir2.join("report.txt")).unwrap()
    );

    // viz renders svg and dot
    let svg = dir.join("net.svg");
    let vz = run(&[
        "viz",
        "--checkpoint",
        run_dir.join("checkpoint.kmcp").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(
        vz.status.success(),
        "viz failed: {}",
        String::from_utf8_lossy(&vz.stderr)
    );
    let svg_text = fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("stroke-opacity"));

    let dot = dir.join("net.dot");
    run(&[
        "viz",
        "--checkpoint",
        run_dir.join("checkpoint.kmcp").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dot.to_str().unwrap(),
    ]);
    let dot_text = fs::read_to_string(&dot).unwrap();
    // head [6, 4, 1]: 24 + 4 edges
    assert_eq!(dot_text.lines().filter(|l| l.contains("->")).count(), 28);

    // edge panels
    let panels = dir.join("edges.svg");
    let ep = run(&[
        "viz",
        "--checkpoint",
        run_dir.join("checkpoint.kmcp").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
        "--edges",
        "0",
        "--edges-out",
        panels.to_str().unwrap(),
    ]);
    assert!(ep.status.success());
    assert!(fs::read_to_string(&panels).unwrap().contains("<polyline"));
}

#[test]
fn mcpareto_off_switch_changes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = spec_file(dir, 7);
    let config = config_file(dir);
    let data = dir.join("data");
    run(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);

    let on_dir = dir.join("on");
    let off_dir = dir.join("off");
    for (mode, out_dir) in [("on", &on_dir), ("off", &off_dir)] {
        let out = run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--mcpareto",
            mode,
        ]);
        assert!(out.status.success());
    }
    // conflicts occur on this task, so the checkpoints must differ
    let log = fs::read_to_string(on_dir.join("pareto_log.csv")).unwrap();
    let conflicts = log.lines().filter(|l| l.ends_with("true")).count();
    assert!(conflicts > 0, "expected conflicts in the coordinated run");
    assert_ne!(
        fs::read(on_dir.join("checkpoint.kmcp")).unwrap(),
        fs::read(off_dir.join("checkpoint.kmcp")).unwrap()
    );
}

#[test]
fn error_classes_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = spec_file(dir, 11);
    let data = dir.join("data");
    run(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);

    // invalid beta -> ConfigError naming the field, exit 2
    let bad_config = dir.join("bad.txt");
    write(&bad_config, "beta = -1\n");
    let out = run(&[
        "train",
        "--config",
        bad_config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("ConfigError: "), "stderr: {err}");
    assert!(err.contains("beta"), "stderr: {err}");

    // unknown config key rejected
    let unknown = dir.join("unknown.txt");
    write(&unknown, "betas = 1\n");
    let out = run(&[
        "train",
        "--config",
        unknown.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("unknown key `betas`"));

    // missing data file -> DataError, exit 3
    fs::remove_file(data.join("audio.csv")).unwrap();
    let config = config_file(dir);
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("DataError: "));

    // corrupt checkpoint -> CorruptCheckpoint, exit 4
    let fake = dir.join("fake.kmcp");
    write(&fake, "not a checkpoint");
    let out = run(&[
        "eval",
        "--checkpoint",
        fake.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("CorruptCheckpoint: "));

    // synth into a path occupied by a file -> IoError, exit 5
    let blocked = dir.join("blocked");
    write(&blocked, "file in the way");
    let out = run(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        blocked.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("IoError: "));
}

#[test]
fn viz_rejects_unsupported_extension() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = spec_file(dir, 13);
    let config = config_file(dir);
    let data = dir.join("data");
    run(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    let run_dir = dir.join("run");
    run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);

    let out = run(&[
        "viz",
        "--checkpoint",
        run_dir.join("checkpoint.kmcp").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.join("net.png").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("UsageError: "), "stderr: {err}");
    assert!(
        err.contains(".svg") && err.contains(".dot"),
        "stderr: {err}"
    );
}

#[test]
fn timestamps_flag_prefixes_log_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = spec_file(dir, 17);
    let data = dir.join("data");
    let out = run(&[
        "synth",
        "--timestamps",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with('['), "stdout: {stdout}");
}
