use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
net tiny input [1,1,28,28]
layer c1    conv   kernel=25 out=2 weight=xavier bias=constant act=sigmoid
layer code  fc     out=2  weight=xavier bias=constant
layer f1    fc     out=32 weight=xavier bias=constant act=sigmoid
layer shape reshape dims=[0,2,4,4]
layer out   deconv kernel=25 out=1 weight=xavier bias=constant
loss cross_entropy sigmoid_cross_entropy pred=out target=input
loss l2 euclidean pred=out target=input sigmoid=true
";

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/models")
}

fn cae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cae")).args(args).output().expect("run cae")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a pair of IDX files with `n` images into `dir` under the
/// names the CLI looks for, using `pixel(i, j)` for image contents.
fn write_idx(dir: &Path, prefix: &str, n: u32, pixel: impl Fn(u32, usize) -> u8) {
    let mut images = Vec::new();
    for v in [0x0803u32, n, 28, 28] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    let mut labels = Vec::new();
    for v in [0x0801u32, n] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..n {
        images.extend((0..784).map(|j| pixel(i, j)));
        labels.push((i % 10) as u8);
    }
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
}

fn synthetic_data(dir: &Path) {
    let pattern = |i: u32, j: usize| ((j * 7 + i as usize * 31) % 256) as u8;
    write_idx(dir, "train", 40, pattern);
    write_idx(dir, "t10k", 20, pattern);
}

fn tiny_net(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.net");
    fs::write(&p, TINY).unwrap();
    p
}

fn train_tiny(data: &Path, net: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", s(net), "--data-dir", s(data), "--max-iter", "6", "--batch-size", "10", "--seed", "7",
        "--out", s(out),
    ];
    args.extend_from_slice(extra);
    cae(&args)
}

#[test]
fn audit_reports_model1_totals() {
    let o = cae(&["audit", s(&models().join("model1.net")), "--data-elements", "47040000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("grand total: 74893"), "{out}");
    assert!(out.contains("CAE size: 3996"), "{out}");
    assert!(out.contains("data ratio: 628/1"), "{out}");
    assert!(out.contains("symmetric: yes"), "{out}");
}

#[test]
fn audit_reports_model2_totals() {
    let o = cae(&["audit", s(&models().join("model2.net"))]);
    let out = stdout(&o);
    assert!(out.contains("encoder total: 148004"), "{out}");
    assert!(out.contains("decoder total: 149387"), "{out}");
    assert!(out.contains("grand total: 297391"), "{out}");
    assert!(out.contains("CAE size: 7990"), "{out}");
}

#[test]
fn malformed_netspec_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.net");
    fs::write(&p, "net x input [1,1,28,28]\nlayer a conv kernel=3\n").unwrap();
    let o = cae(&["audit", s(&p)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_solver_file_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    synthetic_data(&data);
    let solver = dir.path().join("solver.txt");
    fs::write(&solver, "base_lr: -1\n").unwrap();
    let o = train_tiny(&data, &tiny_net(dir.path()), &dir.path().join("run"), &["--solver", s(&solver)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("base_lr"), "{}", stderr(&o));
}

#[test]
fn missing_data_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_tiny(&dir.path().join("nowhere"), &tiny_net(dir.path()), &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn train_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    synthetic_data(&data);
    let net = tiny_net(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train_tiny(&data, &net, out, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["loss.csv", "solver.txt", "tiny_iter_6.caef"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let csv = fs::read_to_string(a.join("loss.csv")).unwrap();
    assert!(csv.starts_with("iter,split,sce,euclidean\n"));
    assert_eq!(csv.lines().filter(|l| l.contains(",train,")).count(), 6);
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("command: train\n"));
    assert!(manifest.contains("seed: 7"));

    // A second run into the same directory is refused without --overwrite.
    let o = train_tiny(&data, &net, &a, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--overwrite"), "{}", stderr(&o));
    let o = train_tiny(&data, &net, &a, &["--overwrite"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("tiny_iter_6.caef")).unwrap(), fs::read(b.join("tiny_iter_6.caef")).unwrap());
}

#[test]
fn eval_encode_and_inspect_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    synthetic_data(&data);
    let net = tiny_net(dir.path());
    let run = dir.path().join("run");
    assert!(train_tiny(&data, &net, &run, &[]).status.success());
    let ckpt = run.join("tiny_iter_6.caef");

    let o = cae(&["eval", s(&net), s(&ckpt), "--data-dir", s(&data), "--out", s(&dir.path().join("eval"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("samples: 20"), "{}", stdout(&o));

    let enc = dir.path().join("enc");
    let o = cae(&["encode", s(&net), s(&ckpt), "--data-dir", s(&data), "--split", "train", "--out", s(&enc)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let latent = fs::read_to_string(enc.join("latent.csv")).unwrap();
    let mut lines = latent.lines();
    assert_eq!(lines.next(), Some("label,c0,c1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 40);
    assert!(rows[3].starts_with("3,"));

    let insp = dir.path().join("insp");
    let o = cae(&["inspect", s(&net), s(&ckpt), "--data-dir", s(&data), "--index", "2", "--out", s(&insp)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traces = fs::read_to_string(insp.join("traces.txt")).unwrap();
    assert!(traces.starts_with("c1 1x2x4x4 ["), "{traces}");
    let out_map = fs::read(insp.join("07_out_0.pgm")).unwrap();
    assert!(out_map.starts_with(b"P5\n28 28\n255\n"));
    assert_eq!(out_map.len(), b"P5\n28 28\n255\n".len() + 784);
    assert!(insp.join("saturation.txt").exists());
}

#[test]
fn checkpoint_from_another_net_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    synthetic_data(&data);
    let run = dir.path().join("run");
    assert!(train_tiny(&data, &tiny_net(dir.path()), &run, &[]).status.success());
    let o = cae(&["eval", s(&models().join("model1.net")), s(&run.join("tiny_iter_6.caef")), "--data-dir", s(&data)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn zero_checkpoint_on_blank_images_costs_784_ln2() {
    use cae::checkpoint::Checkpoint;
    use cae::netspec::parse_netspec;
    use cae::network::Network;

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    write_idx(&data, "t10k", 5, |_, _| 0);
    let net_path = tiny_net(dir.path());
    let mut net = Network::new(parse_netspec(TINY).unwrap().infer_shapes().unwrap()).unwrap();
    for p in net.params_mut() {
        p.block.weights.fill(0.0);
        p.block.biases.fill(0.0);
    }
    let ckpt = dir.path().join("zero.caef");
    fs::write(&ckpt, Checkpoint::from_network(&net, 0).to_bytes()).unwrap();

    let o = cae(&["eval", s(&net_path), s(&ckpt), "--data-dir", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let sce: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("sce: "))
        .unwrap()
        .parse()
        .unwrap();
    let expected = 784.0 * std::f64::consts::LN_2;
    assert!((sce - expected).abs() < 1e-6, "{sce} vs {expected}");
    // sigmoid(0) = 1/2 against a 0 target: 784 * 0.25 / 2
    let euc: f64 = out.lines().find_map(|l| l.strip_prefix("euclidean: ")).unwrap().parse().unwrap();
    assert!((euc - 98.0).abs() < 1e-6, "{euc}");
}

#[test]
fn exploding_run_aborts_with_4_and_keeps_last_good() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    synthetic_data(&data);
    let solver = dir.path().join("solver.txt");
    fs::write(&solver, "base_lr: 1e6\nmax_iter: 6\nbatch_size: 10\n").unwrap();
    let run = dir.path().join("run");
    let o = train_tiny(&data, &tiny_net(dir.path()), &run, &["--solver", s(&solver), "--watchdog", "1"]);
    assert_eq!(o.status.code(), Some(4), "{}\n{}", stdout(&o), stderr(&o));
    let report = fs::read_to_string(run.join("abort_report.txt")).unwrap();
    assert!(report.contains("numeric abort at iteration"), "{report}");
    assert!(report.contains("offending layer:"), "{report}");
    assert!(run.join("last_good.caef").exists());
}
