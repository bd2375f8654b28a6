use std::path::Path;
use std::process::{Command, Output};

const Z: &str = "[[[0.3, 0.6], [0.05, 0.2], [0.05, 0.2]], [[0.05, 0.2], [0.3, 0.6], [0.05, 0.2]], [[0.05, 0.2], [0.05, 0.2], [0.3, 0.6]]]";
const ZS: &str =
    "[[[0.01, 0.1], [0, 0], [0, 0]], [[0, 0], [0.01, 0.1], [0, 0]], [[0, 0], [0, 0], [0.01, 0.1]]]";

fn chain(monitored: [bool; 3]) -> String {
    let mut s = String::from("FREQUENCY = 50.0\n");
    for (k, m) in monitored.iter().enumerate() {
        s += &format!(
            "\n[[NODES]]\nid = {}\nname = \"n{}\"\nmonitored = {m}\n",
            k + 1,
            k + 1
        );
    }
    for (id, (a, b)) in [(1, 2), (2, 3)].into_iter().enumerate() {
        s += &format!("\n[[BRANCHES]]\nid = {}\nfrom = {a}\nto = {b}\nkind = \"line\"\neligible = true\nimpedance = {Z}\n", id + 1);
    }
    s += &format!(
        "\n[[SOURCES]]\nnode = 1\nemf = [[11547, 0], [-5773.5, -10000], [-5773.5, 10000]]\nimpedance = {ZS}\nneutral = \"grounded\"\n"
    );
    s += "\n[[LOADS]]\nnode = 3\ndelta = [[3000, 1000], [3000, 1000], [3000, 1000]]\n";
    s
}

fn pmu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmu-fdl"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn chain_needs_two_pmus() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "chain.toml", &chain([false; 3]));
    let o = pmu(&["--grid", &g, "place", "--cost", "uniform"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("(d = 2)"), "{}", stdout(&o));
}

#[test]
fn benchmark_placements() {
    let u = stdout(&pmu(&["place", "--cost", "uniform"]));
    assert!(u.contains("(d = 11)") && u.contains("(r = 3)"), "{u}");
    let r = stdout(&pmu(&["place", "--cost", "resolution"]));
    assert!(
        r.contains("monitored nodes (d = 12): 2 4 6 7 8 10 11 13 14 15 16 17"),
        "{r}"
    );
    assert!(r.contains("(r = 7)"), "{r}");
}

#[test]
fn clusters_agree_with_oracle() {
    let o = pmu(&["clusters", "--verify"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("oracle agrees: true"));
}

#[test]
fn malformed_grid_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "bad.toml",
        "FREQUENCY = 50.0\n[[NODES]]\nid = one\n",
    );
    let o = pmu(&["--grid", &g, "clusters"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert_eq!(
        pmu(&["simulate", "--type", "5ph", "--line", "4-5"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn too_few_pmus_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "one.toml", &chain([true, false, false]));
    let o = pmu(&["--grid", &g, "clusters"]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        pmu(&["--grid", &g, "check-observability"]).status.code(),
        Some(2)
    );
}

#[test]
fn simulate_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let o = pmu(&[
        "--noise-free",
        "--out",
        out,
        "simulate",
        "--line",
        "4-5",
        "--type",
        "3ph",
    ]);
    assert!(o.status.success());
    assert!(
        stdout(&o).contains("fault detected at t = 0.5 s (sample 50)"),
        "{}",
        stdout(&o)
    );
    for f in ["stream.csv", "fdla_report.json", "wmr.csv", "injection.csv"] {
        assert!(Path::new(out).join(f).exists(), "{f}");
    }
    let stream = format!("{out}/stream.csv");
    let replay = pmu(&["--noise-free", "run-fdla", "--stream", &stream]);
    assert!(stdout(&replay).contains("(sample 50)"));
    let other = pmu(&[
        "--noise-free",
        "--placement",
        "uniform",
        "run-fdla",
        "--stream",
        &stream,
    ]);
    assert_eq!(other.status.code(), Some(2));
}

#[test]
fn same_seed_same_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = pmu(&[
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
            "simulate",
            "--line",
            "9-10",
            "--type",
            "1ph-g",
        ]);
        assert!(o.status.success());
        (
            std::fs::read(out.join("stream.csv")).unwrap(),
            std::fs::read(out.join("fdla_report.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn short_campaign_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pmu(&["--out", out, "campaign", "--runs", "1"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("campaign.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
}
