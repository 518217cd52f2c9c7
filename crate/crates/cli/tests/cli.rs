use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use smm_core::harness::wire::{Frame, Message};
use smm_core::{FieldMatrix, PrimeField};
use tempfile::TempDir;

fn smm() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_smm"));
    c.env_remove("SMM_MODULUS");
    c
}

fn run(args: &[&str]) -> Output {
    smm().args(args).output().expect("spawn smm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Inputs {
    dir: TempDir,
    a: FieldMatrix,
    b: FieldMatrix,
}

impl Inputs {
    fn new(q: u64) -> Self {
        let f = PrimeField::new(q).unwrap();
        let a = FieldMatrix::from_rows(f, &[[1u64, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12]]);
        let b = FieldMatrix::from_rows(f, &[[1u64, 0, 5, 2], [2, 1, 0, 3], [9, 9, 1, 1]]);
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("a.txt"), a.to_text()).unwrap();
        std::fs::write(dir.path().join("b.txt"), b.to_text()).unwrap();
        std::fs::write(dir.path().join("a.bin"), a.to_binary()).unwrap();
        std::fs::write(dir.path().join("b.bin"), b.to_binary()).unwrap();
        Self { dir, a, b }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn expected(&self) -> FieldMatrix {
        self.a.matmul(&self.b).unwrap()
    }
}

fn read_product(path: &str) -> FieldMatrix {
    FieldMatrix::from_text(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_one_sided_matches_matmul() {
    let io = Inputs::new(101);
    let out = io.path("c.txt");
    let o = run(&[
        "run", "--scheme", "one-sided", "-N", "4", "-l", "2", "--modulus", "101",
        "--a", &io.path("a.txt"), "--b", &io.path("b.txt"), "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_product(&out), io.expected());
    assert!(stdout(&o).contains("empirical rate 1/2"));
}

#[test]
fn run_every_scheme_in_process() {
    let io = Inputs::new(101);
    for (scheme, n, ell) in [("fully", "9", "1"), ("aligned", "8", "1"), ("fully-secure", "16", "2")] {
        let out = io.path(&format!("{scheme}-{n}.txt"));
        let o = run(&[
            "run", "--scheme", scheme, "-N", n, "-l", ell, "--a", &io.path("a.txt"),
            "--b", &io.path("b.txt"), "--out", &out, "--seed", "3",
        ]);
        assert!(o.status.success(), "{scheme}: {}", stderr(&o));
        assert_eq!(read_product(&out), io.expected(), "{scheme}");
    }
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let io = Inputs::new(101);
    let missing = io.path("nope.txt");
    let o = run(&[
        "run", "--scheme", "one-sided", "-N", "4", "-l", "2", "--a", &missing, "--b", &io.path("b.txt"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("smm-error: "), "{err}");
    assert!(err.contains(&missing));
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn unparseable_input_exits_2() {
    let io = Inputs::new(101);
    let bad = io.path("bad.txt");
    std::fs::write(&bad, "2 2 101\n1 2\n3\n").unwrap();
    let o = run(&["run", "--scheme", "one-sided", "-N", "4", "-l", "2", "--a", &bad, "--b", &io.path("b.txt")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("smm-error: "));
}

#[test]
fn usage_errors_carry_the_prefix() {
    let o = run(&["run", "--scheme", "one-sided"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("smm-error: "), "{err}");
    assert_eq!(err.lines().count(), 1);
    let o = run(&["frobnicate"]);
    assert!(stderr(&o).starts_with("smm-error: "));
}

#[test]
fn fully_secure_at_eight_servers_warns_or_fails() {
    let io = Inputs::new(101);
    let common = [
        "run", "--scheme", "fully", "-N", "8", "-l", "1", "--a", &io.path("a.txt"), "--b", &io.path("b.txt"),
        "--seed", "1",
    ];
    let o = run(&common);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("r=2 needs 9 servers"), "{err}");
    assert!(err.contains("feasible r=1"));

    let mut strict = common.to_vec();
    strict.push("--strict-paper-r");
    let o = run(&strict);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("smm-error: "));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let io = Inputs::new(101);
    let outputs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|i| {
            let out = io.path(&format!("seeded{i}.txt"));
            let o = run(&[
                "run", "--scheme", "fully", "-N", "9", "-l", "1", "--a", &io.path("a.txt"),
                "--b", &io.path("b.txt"), "--out", &out, "--seed", "99",
            ]);
            assert!(o.status.success());
            (std::fs::read(&out).unwrap(), o.stdout)
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn binary_mode_round_trips() {
    let io = Inputs::new(101);
    let out = io.path("c.bin");
    let o = run(&[
        "run", "--scheme", "one-sided", "-N", "3", "-l", "1", "--binary", "--a", &io.path("a.bin"),
        "--b", &io.path("b.bin"), "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(FieldMatrix::from_binary(&std::fs::read(out).unwrap()).unwrap(), io.expected());
}

#[test]
fn modulus_env_override_is_checked_against_inputs() {
    let io = Inputs::new(101);
    let o = smm()
        .env("SMM_MODULUS", "97")
        .args(["run", "--scheme", "one-sided", "-N", "4", "-l", "2", "--a", &io.path("a.txt"), "--b", &io.path("b.txt")])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("F_97"));
}

#[test]
fn custom_exponents_are_validated() {
    let io = Inputs::new(101);
    let base = [
        "run", "--scheme", "aligned", "-N", "8", "-l", "1", "--a", &io.path("a.txt"), "--b", &io.path("b.txt"),
    ];
    let mut good = base.to_vec();
    good.extend(["--a-exp", "0,1,2", "--b-exp", "0,3,5"]);
    assert!(run(&good).status.success());
    let mut bad = base.to_vec();
    bad.extend(["--a-exp", "0,1,2", "--b-exp", "0,1,5"]);
    let o = run(&bad);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("custom exponents rejected"));
}

#[test]
fn audit_one_sided_desk_scale_exits_zero() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.txt");
    let o = run(&[
        "audit", "--scheme", "one-sided", "-N", "3", "-l", "1", "--modulus", "3", "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.contains("1 perfect 0/1"));
    assert!(text.contains("audit passed"));
}

#[test]
fn audit_aligned_desk_scale_exits_zero() {
    let o = run(&["audit", "--scheme", "aligned", "-N", "8", "-l", "1", "--modulus", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn audit_aligned_over_f11_exits_zero() {
    let o = run(&["audit", "--scheme", "aligned", "-N", "8", "-l", "1", "--modulus", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn audit_budget_exceeded_exits_3() {
    let o = run(&["audit", "--scheme", "aligned", "-N", "8", "-l", "1", "--modulus", "11", "--budget", "1000"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.starts_with("smm-error: "));
    assert!(err.contains("smaller modulus"));
}

fn csv_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn ratio(cell: &str) -> (u64, u64) {
    let (p, q) = cell.split_once('/').unwrap();
    (p.parse().unwrap(), q.parse().unwrap())
}

fn less_eq(a: (u64, u64), b: (u64, u64)) -> bool {
    (a.0 as u128) * (b.1 as u128) <= (b.0 as u128) * (a.1 as u128)
}

#[test]
fn rates_fix_l_sweep() {
    let o = run(&["rates", "--fix-l", "1", "--n-from", "4", "--n-to", "100"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("N,ell,one_sided,fully_paper,fully_feasible,diverges"));
    let rows = csv_rows(&o);
    assert_eq!(rows.len(), 97);
    for w in rows.windows(2) {
        assert!(less_eq(ratio(&w[0][2]), ratio(&w[1][2])));
    }
    assert_eq!(rows.last().unwrap()[2], "99/100");
}

#[test]
fn rates_fix_n_sweep() {
    let o = run(&["rates", "--fix-n", "100", "--l-from", "0", "--l-to", "9"]);
    assert!(o.status.success());
    let rows = csv_rows(&o);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[1][2], "99/100");
    for w in rows.windows(2) {
        assert!(!less_eq(ratio(&w[0][2]), ratio(&w[1][2])), "one-sided must strictly decrease");
    }
}

#[test]
fn rates_bad_range_fails() {
    let o = run(&["rates", "--fix-l", "1", "--n-from", "10", "--n-to", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("smm-error: "));
}

struct WorkerProc {
    child: Child,
    addr: String,
}

impl WorkerProc {
    fn start() -> Self {
        let mut child = smm()
            .args(["worker", "--listen", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
        Self { child, addr }
    }
}

impl Drop for WorkerProc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn registry(dir: &Path, workers: &[WorkerProc]) -> PathBuf {
    let path = dir.join("workers.txt");
    let text: String = workers.iter().map(|w| format!("{}\n", w.addr)).collect();
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn worker_and_coordinator_complete_example_job() {
    let io = Inputs::new(101);
    let workers: Vec<WorkerProc> = (0..4).map(|_| WorkerProc::start()).collect();
    let reg = registry(io.dir.path(), &workers);
    let (remote, local) = (io.path("remote.txt"), io.path("local.txt"));
    let args = |out: &str| {
        vec![
            "run".to_string(), "--scheme".into(), "one-sided".into(), "-N".into(), "4".into(), "-l".into(),
            "2".into(), "--a".into(), io.path("a.txt"), "--b".into(), io.path("b.txt"), "--seed".into(),
            "5".into(), "--out".into(), out.to_string(),
        ]
    };
    let mut remote_args = args(&remote);
    remote_args.extend(["--workers".to_string(), reg.display().to_string()]);
    let o = smm().args(&remote_args).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let l = smm().args(args(&local)).output().unwrap();
    assert!(l.status.success());
    assert_eq!(std::fs::read(&remote).unwrap(), std::fs::read(&local).unwrap());
    assert_eq!(o.stdout, l.stdout);
    assert_eq!(read_product(&remote), io.expected());
}

#[test]
fn concurrent_coordinators_share_workers() {
    let io = Inputs::new(101);
    let workers: Vec<WorkerProc> = (0..9).map(|_| WorkerProc::start()).collect();
    let reg = registry(io.dir.path(), &workers);
    let children: Vec<(Child, String)> = (0..2)
        .map(|i| {
            let out = io.path(&format!("concurrent{i}.txt"));
            let child = smm()
                .args([
                    "run", "--scheme", "fully", "-N", "9", "-l", "1", "--a", &io.path("a.txt"), "--b",
                    &io.path("b.txt"), "--out", &out, "--workers", reg.to_str().unwrap(),
                ])
                .stdout(Stdio::null())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap();
            (child, out)
        })
        .collect();
    for (child, out) in children {
        let o = child.wait_with_output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(read_product(&out), io.expected());
    }
}

#[test]
fn worker_survives_bad_magic() {
    let worker = WorkerProc::start();
    let mut s = TcpStream::connect(&worker.addr).unwrap();
    s.write_all(b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
    let mut reply = Vec::new();
    s.read_to_end(&mut reply).unwrap();
    let frame = Frame::from_bytes(&reply).unwrap();
    assert!(matches!(Message::from_frame(&frame).unwrap(), Message::Error(_)));

    let f = PrimeField::new(101).unwrap();
    let req = Message::ShareFully {
        a: FieldMatrix::from_rows(f, &[[3u64]]),
        b: FieldMatrix::from_rows(f, &[[4u64]]),
    };
    let mut s = TcpStream::connect(&worker.addr).unwrap();
    req.to_frame().write_to(&mut s).unwrap();
    let frame = Frame::read_from(&mut s, 1 << 20).unwrap().unwrap();
    assert_eq!(
        Message::from_frame(&frame).unwrap(),
        Message::Answer(FieldMatrix::from_rows(f, &[[12u64]]))
    );
}

#[test]
fn worker_bind_failure_exits_4() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = run(&["worker", "--listen", &addr]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("smm-error: "));
}

#[test]
fn unreachable_worker_fails_run() {
    let io = Inputs::new(101);
    let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let reg = io.dir.path().join("dead.txt");
    std::fs::write(&reg, format!("{dead}\n")).unwrap();
    let o = run(&[
        "run", "--scheme", "one-sided", "-N", "1", "-l", "0", "--a", &io.path("a.txt"), "--b", &io.path("b.txt"),
        "--workers", reg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("worker 1"));
}
