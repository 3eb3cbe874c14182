use std::fs;
use std::path::Path;
use std::process::Command;

use conflab::cli::{run_config, Opts, RunConfig};
use conflab::output::{Manifest, SpectrumRow};

const BIN: &str = env!("CARGO_BIN_EXE_conflab");

fn config(command: &str, out: &Path, edit: impl FnOnce(&mut Opts)) -> RunConfig {
    let mut opts = Opts {
        out: Some(out.to_path_buf()),
        ..Opts::default()
    };
    edit(&mut opts);
    RunConfig::resolve(command, &opts).unwrap()
}

fn rows(path: &Path) -> Vec<SpectrumRow> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn round_spectrum_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    run_config(&config("spectrum", dir.path(), |o| o.degree = Some(8))).unwrap();
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(text.starts_with("k,eigenvalue,multiplicity,block_j,truncation_L\n"));
    let got = rows(&dir.path().join("results.csv"));
    let golden = rows(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/golden/spectrum_round_L8.csv"
    )));
    assert_eq!(got.len(), golden.len());
    // indices run without gaps
    let mut next = 0;
    for r in &got {
        assert_eq!(r.k, next);
        next += r.multiplicity;
    }
    // blocks sharing an exact round eigenvalue may swap places by rounding,
    // so rows are matched by (level, block)
    let keyed = |rs: &[SpectrumRow]| {
        let mut v: Vec<_> = rs
            .iter()
            .map(|r| ((r.eigenvalue.round() as i64, r.block_j), r.clone()))
            .collect();
        v.sort_by_key(|p| p.0);
        v
    };
    for ((ka, a), (kb, b)) in keyed(&got).iter().zip(&keyed(&golden)) {
        assert_eq!(ka, kb);
        assert_eq!(
            (a.multiplicity, a.truncation_l),
            (b.multiplicity, b.truncation_l)
        );
        assert!((a.eigenvalue - b.eigenvalue).abs() <= 1e-12);
    }
    // independent of the golden file: every row sits on some l(l+2) + 3/4
    for r in &got {
        let l = (r.eigenvalue + 0.25).sqrt() - 1.0;
        assert!((l - l.round()).abs() < 1e-10, "{r:?}");
    }
    // block multiplicities add up to (l+1)^2 per level
    let mut per_level = std::collections::BTreeMap::new();
    for r in &got {
        *per_level
            .entry(((r.eigenvalue + 0.25).sqrt() - 1.0).round() as usize)
            .or_insert(0) += r.multiplicity;
    }
    for (l, m) in per_level.iter().take(5) {
        assert_eq!(*m, (l + 1) * (l + 1));
    }

    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(
        (
            manifest.command.as_str(),
            manifest.degree,
            manifest.quad_order,
            manifest.seed
        ),
        ("spectrum", 8, 40, 0)
    );
    assert!(dir.path().join("plots/spectrum.svg").exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = Command::new(BIN)
        .args(["testfn", "--out", out])
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));

    for args in [
        vec!["spectrum", "--family", "constant:-1"],
        vec!["spectrum", "--family", "constant:1,2"],
        vec!["sweep", "--family", ""],
        vec!["certify", "--k", "0"],
        vec!["spectrum", "--n", "2"],
    ] {
        let res = Command::new(BIN)
            .args(&args)
            .args(["--out", out])
            .output()
            .unwrap();
        assert!(!res.status.success(), "{args:?}");
        assert!(
            String::from_utf8_lossy(&res.stderr).starts_with("error:"),
            "{args:?}"
        );
    }
}

#[test]
fn cover_rejects_concentrated_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("cloud.csv");
    let mut text = String::from("x0,x1,x2,x3,m,nu\n1,0,0,0,50,1\n");
    for i in 1..40 {
        let a = i as f64 * 0.15;
        text.push_str(&format!("{},{},0.3,0.1,1,1\n", a.cos(), a.sin()));
    }
    fs::write(&cloud, text).unwrap();
    let res = Command::new(BIN)
        .args([
            "cover",
            "--k",
            "1",
            "--cloud",
            cloud.to_str().unwrap(),
            "--out",
        ])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("too concentrated"));
}

#[test]
fn identical_seeds_give_identical_files() {
    let runs: [(&str, fn(&mut Opts)); 3] = [
        ("sweep", |o| {
            o.family = Some("bubble:2;twobubble:1.5;randpoly:2:3".into());
            o.k = Some("1-4".into());
            o.degree = Some(16);
            o.seed = Some(11);
        }),
        ("certify", |o| {
            o.family = Some("randpoly:1:3".into());
            o.k = Some("2".into());
            o.degree = Some(16);
            o.rings = Some(20);
            o.directions = Some(30);
            o.seed = Some(4);
        }),
        ("hersch", |o| {
            o.samples = Some(5);
            o.degree = Some(16);
            o.seed = Some(3);
        }),
    ];
    for (command, edit) in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_config(&config(command, a.path(), edit)).unwrap();
        run_config(&config(command, b.path(), edit)).unwrap();
        for file in ["results.csv", "manifest.json"] {
            let x = fs::read(a.path().join(file)).unwrap();
            let y = fs::read(b.path().join(file)).unwrap();
            assert_eq!(x, y, "{command}/{file}");
        }
    }
    // a different seed draws different random factors
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_config(&config("hersch", a.path(), |o| {
        o.samples = Some(3);
        o.degree = Some(12);
        o.seed = Some(1);
    }))
    .unwrap();
    run_config(&config("hersch", b.path(), |o| {
        o.samples = Some(3);
        o.degree = Some(12);
        o.seed = Some(2);
    }))
    .unwrap();
    assert_ne!(
        fs::read(a.path().join("results.csv")).unwrap(),
        fs::read(b.path().join("results.csv")).unwrap()
    );
}
