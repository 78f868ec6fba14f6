use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn out_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("shrinker-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

fn run(out: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrinker"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn find_torus_writes_requested_formats() {
    let d = out_dir("find");
    let o = run(&d, &["find-torus", "--emit", "json,csv,svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    for f in ["certificate.json", "profile.csv", "profile.svg", "metadata.json"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(d.join("profile.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x1,x2,dx1,dx2"));
    assert!(csv.lines().count() > 100);
    assert!(fs::read_to_string(d.join("profile.svg")).unwrap().contains("<svg"));

    let only_csv = out_dir("find-csv");
    let o = run(&only_csv, &["find-torus", "--emit", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(only_csv.join("profile.csv").is_file() && !only_csv.join("certificate.json").exists());
}

#[test]
fn bracket_without_sign_change_is_an_error() {
    let d = out_dir("bracket");
    let o = run(&d, &["--bracket", "2.995:3.005", "find-torus"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("error:"));
    let o = run(&d, &["--bracket", "3.3", "find-torus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_certificate_is_an_error() {
    let d = out_dir("nocert");
    let o = run(&d, &["--certificate", "/nonexistent/cert.json", "jacobi"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn verify_all_is_deterministic_and_reportable() {
    let (a, b) = (out_dir("verify-a"), out_dir("verify-b"));
    let oa = run(&a, &["verify-all"]);
    assert_eq!(oa.status.code(), Some(0), "{}", text(&oa));
    assert!(text(&oa).contains("6/6 kernels trivial"));
    let ob = run(&b, &["verify-all"]);
    assert_eq!(ob.status.code(), Some(0));
    assert_eq!(fs::read(a.join("verify.json")).unwrap(), fs::read(b.join("verify.json")).unwrap());
    let r = run(&a, &["report"]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r));
    assert!(text(&r).contains("ledger replay"));
}

#[test]
fn subcommands_reuse_a_certificate() {
    let d = out_dir("reuse");
    assert_eq!(run(&d, &["find-torus"]).status.code(), Some(0));
    let cert = d.join("certificate.json");
    let cert = cert.to_str().unwrap();
    let o = run(&d, &["--certificate", cert, "jacobi"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(d.join("jacobi.json").is_file());
    let o = run(&d, &["--certificate", cert, "sphere-kernel"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(d.join("sphere.json").is_file());
}

#[test]
fn ledger_stage_filter() {
    let d = out_dir("ledger");
    let o = run(&d, &["gronwall-ledger", "--stage", "TopX1"]);
    let out = text(&o);
    // Exit 1 is a replay failure, never an error.
    assert!(matches!(o.status.code(), Some(0 | 1)), "{out}");
    assert!(out.contains("top_x1/geodesic") && !out.contains("bot_x1/"), "{out}");
    let o = run(&d, &["gronwall-ledger", "--stage", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_precedence() {
    let d = out_dir("config");
    fs::create_dir_all(&d).unwrap();
    let cfg = d.join("run.conf");
    fs::write(&cfg, "# loose shot\nbracket = 2.995:3.005\n").unwrap();
    let o = run(&d, &["--config", cfg.to_str().unwrap(), "find-torus"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = run(&d, &["--config", cfg.to_str().unwrap(), "--bracket", "3.3097:3.3197", "find-torus"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(run(&d, &["--config", cfg.to_str().unwrap(), "find-torus"]).status.code(), Some(2));
}
