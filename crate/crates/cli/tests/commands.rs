use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xmap_core::synthetic::{blobs, BlobSpec, Labeled};

fn xmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmap")).args(args).output().expect("run xmap")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = xmap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn data() -> Labeled {
    blobs(&BlobSpec { n_per_blob: 30, ..Default::default() }).unwrap()
}

fn write_csv(dir: &Path, d: &Labeled) -> PathBuf {
    let path = dir.join("blobs.csv");
    let mut out = Vec::new();
    d.dataset.write_csv(&mut out).unwrap();
    std::fs::write(&path, out).unwrap();
    path
}

fn fit(dir: &Path, input: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--id-column",
        "id",
        "--neighbors",
        "10",
        "--epochs",
        "80",
        "--max-pcs",
        "5",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    out
}

fn list(ix: &[usize]) -> String {
    ix.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

#[test]
fn fit_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = data();
    let csv = write_csv(dir.path(), &d);
    let a = fit(dir.path(), &csv, "a.xmap");
    let b = fit(dir.path(), &csv, "b.xmap");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn compare_ranks_the_planted_variable_first() {
    let dir = tempfile::tempdir().unwrap();
    let d = data();
    let s = fit(dir.path(), &write_csv(dir.path(), &d), "s.xmap");
    let s = s.to_str().unwrap();

    let a = list(&d.members(0));
    let b_file = dir.path().join("b.txt");
    std::fs::write(&b_file, d.members(1).iter().map(|i| format!("{i}\n")).collect::<String>()).unwrap();
    let text = String::from_utf8(ok(&["compare", "--session", s, "--a", &a, "--b", b_file.to_str().unwrap()])).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,variable,index,contribution"));
    assert!(lines.next().unwrap().starts_with("1,Y8,7,"), "{text}");
    assert_eq!(text.lines().count(), 11);

    let out = dir.path().join("same.csv");
    ok(&["compare", "--session", s, "--a", "0-29", "--b", "0-29", "--out", out.to_str().unwrap()]);
    let same = std::fs::read_to_string(out).unwrap();
    for line in same.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{line}");
    }
}

#[test]
fn svg_is_deterministic_and_colored() {
    let dir = tempfile::tempdir().unwrap();
    let s = fit(dir.path(), &write_csv(dir.path(), &data()), "s.xmap");
    let s = s.to_str().unwrap();
    for color in ["q:total", "q:1", "pc:0", "var:Y8", "var:2"] {
        let a = ok(&["plot-voronoi", "--session", s, "--color", color]);
        let b = ok(&["plot-voronoi", "--session", s, "--color", color]);
        assert_eq!(a, b);
        let svg = String::from_utf8(a).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<path").count(), 90);
        assert!(svg.contains("#440154") && svg.contains("#fde725"), "{color}");
    }
}

#[test]
fn transform_places_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = data();
    let s = fit(dir.path(), &write_csv(dir.path(), &d), "s.xmap");
    let rows = dir.path().join("new.csv");
    let mut text = String::from("id,") + &d.dataset.variables().join(",") + "\n";
    for i in [0, 45] {
        let vals: Vec<String> = d.dataset.raw().row(i).iter().map(|v| v.to_string()).collect();
        text += &format!("new{i},{}\n", vals.join(","));
    }
    std::fs::write(&rows, text).unwrap();
    let out = String::from_utf8(ok(&["transform", "--session", s.to_str().unwrap(), "--input", rows.to_str().unwrap()]))
        .unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "id,x,y");
    assert!(lines[1].starts_with("new0,") && lines[2].starts_with("new45,"));
    for l in &lines[1..] {
        for v in l.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn failures_report_api_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,oops\n5,6\n").unwrap();
    let out = xmap(&["fit", "--input", bad.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("non_numeric_cell:"));

    let junk = dir.path().join("junk.xmap");
    std::fs::write(&junk, b"not a session").unwrap();
    let out = xmap(&["compare", "--session", junk.to_str().unwrap(), "--a", "0", "--b", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("corrupt_session:"));

    let s = fit(dir.path(), &write_csv(dir.path(), &data()), "s.xmap");
    let out = xmap(&["plot-voronoi", "--session", s.to_str().unwrap(), "--color", "pc:99"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("index_out_of_range:"));
    let out = xmap(&["compare", "--session", s.to_str().unwrap(), "--a", "0", "--b", "500"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("index_out_of_range:"));
}
