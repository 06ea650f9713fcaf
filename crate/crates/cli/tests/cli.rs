use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mdfs::backbone::{BackboneManifest, SyntheticNet};
use mdfs::datasets::{save_png, synthetic_scene};
use tempfile::TempDir;

const BACKBONE: &str = "synthetic:7:4,4,4,4,4";

fn mdfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdfs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenes(dir: &Path, count: u64, first_seed: u64, side: usize) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        let img = synthetic_scene(first_seed + i, side, side);
        save_png(img.view(), &dir.join(format!("img{i:02}.png"))).unwrap();
    }
}

struct Fixture {
    tmp: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        write_scenes(&tmp.path().join("corpus"), 20, 100, 128);
        write_scenes(&tmp.path().join("test"), 10, 900, 128);
        Self { tmp }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn fit(&self, out: &str, backbone: &str) -> Output {
        mdfs(&[
            "fit",
            "--images",
            &self.s("corpus"),
            "--backbone",
            backbone,
            "--out",
            &self.s(out),
        ])
    }
}

#[test]
fn fit_reports_dim_and_samples_and_is_reproducible() {
    let fx = Fixture::new();
    let first = fx.fit("a.json", BACKBONE);
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("dim,20\n"), "{text}");
    assert!(text.contains("sample_count,320\n"), "{text}");
    assert!(fx.fit("b.json", BACKBONE).status.success());
    assert_eq!(
        fs::read(fx.path("a.json")).unwrap(),
        fs::read(fx.path("b.json")).unwrap()
    );
}

#[test]
fn fit_is_independent_of_job_count() {
    let fx = Fixture::new();
    assert!(fx.fit("serial.json", BACKBONE).status.success());
    let par = mdfs(&[
        "fit",
        "--images",
        &fx.s("corpus"),
        "--backbone",
        BACKBONE,
        "--out",
        &fx.s("par.json"),
        "--jobs",
        "4",
    ]);
    assert!(par.status.success());
    assert_eq!(
        fs::read(fx.path("serial.json")).unwrap(),
        fs::read(fx.path("par.json")).unwrap()
    );
}

#[test]
fn empty_corpus_exits_2() {
    let fx = Fixture::new();
    fs::create_dir(fx.path("empty")).unwrap();
    let o = mdfs(&[
        "fit",
        "--images",
        &fx.s("empty"),
        "--backbone",
        BACKBONE,
        "--out",
        &fx.s("m.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).starts_with("ERROR:EmptyCorpus:"),
        "{}",
        stderr(&o)
    );
    assert!(stdout(&o).is_empty());
}

#[test]
fn score_single_and_batch() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", BACKBONE).status.success());
    let one = mdfs(&[
        "score",
        "--model",
        &fx.s("m.json"),
        "--backbone",
        BACKBONE,
        "--image",
        &fx.s("test/img03.png"),
    ]);
    assert!(one.status.success(), "{}", stderr(&one));
    let lines: Vec<String> = stdout(&one).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "image_id,score,elapsed_ms");
    assert!(lines[1].starts_with("img03,"));
    let score: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(score.is_finite() && score > 0.0);

    let batch = mdfs(&[
        "score",
        "--model",
        &fx.s("m.json"),
        "--backbone",
        BACKBONE,
        "--batch",
        &fx.s("test"),
        "--out",
        &fx.s("scores.csv"),
    ]);
    assert!(batch.status.success(), "{}", stderr(&batch));
    let csv = fs::read_to_string(fx.path("scores.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[11].starts_with("# mean_elapsed_ms,"));
    // The batch row for the same file carries the same score.
    assert_eq!(
        lines[4].split(',').nth(1),
        one_score_field(&stdout(&one)).as_deref()
    );
}

fn one_score_field(text: &str) -> Option<String> {
    text.lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(1))
        .map(String::from)
}

#[test]
fn score_csv_is_reproducible_without_timing_and_across_jobs() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", BACKBONE).status.success());
    let run = |out: &str, jobs: &str| {
        let o = mdfs(&[
            "score",
            "--model",
            &fx.s("m.json"),
            "--backbone",
            BACKBONE,
            "--batch",
            &fx.s("test"),
            "--out",
            &fx.s(out),
            "--no-timing",
            "--jobs",
            jobs,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(fx.path(out)).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_eq!(a, run("c.csv", "3"));
}

#[test]
fn mismatched_backbone_exits_3() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", BACKBONE).status.success());
    let o = mdfs(&[
        "score",
        "--model",
        &fx.s("m.json"),
        "--backbone",
        "synthetic:8:4,4,4,4,4",
        "--image",
        &fx.s("test/img00.png"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("ERROR:ConfigMismatch:"));
    let o = mdfs(&[
        "score",
        "--model",
        &fx.s("m.json"),
        "--backbone",
        BACKBONE,
        "--k",
        "4",
        "--image",
        &fx.s("test/img00.png"),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn image_container_does_not_change_score() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", BACKBONE).status.success());
    let img = image::open(fx.path("test/img05.png")).unwrap();
    img.save_with_format(fx.path("img05.bmp"), image::ImageFormat::Bmp)
        .unwrap();
    let score = |path: &str| {
        let o = mdfs(&[
            "score",
            "--model",
            &fx.s("m.json"),
            "--backbone",
            BACKBONE,
            "--image",
            path,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        one_score_field(&stdout(&o)).unwrap()
    };
    assert_eq!(score(&fx.s("test/img05.png")), score(&fx.s("img05.bmp")));
}

#[test]
fn onnx_backbone_round_trip() {
    let fx = Fixture::new();
    let net = SyntheticNet::new(7, [4; 5]);
    fs::write(fx.path("net.onnx"), net.to_onnx_bytes()).unwrap();
    let stages = (1..=5).map(|i| format!("stage{i}")).collect();
    BackboneManifest::new(stages, &SyntheticNet::default_preprocess())
        .write(&fx.path("net.manifest.json"))
        .unwrap();

    let onnx = fx.s("net.onnx");
    let fit = fx.fit("onnx.json", &onnx);
    assert!(fit.status.success(), "{}", stderr(&fit));
    assert!(stdout(&fit).contains("dim,20\n"));
    let scored = mdfs(&[
        "score",
        "--model",
        &fx.s("onnx.json"),
        "--backbone",
        &onnx,
        "--image",
        &fx.s("test/img01.png"),
    ]);
    assert!(scored.status.success(), "{}", stderr(&scored));

    // Same weights, different identity: the synthetic handle cannot score this model.
    let o = mdfs(&[
        "score",
        "--model",
        &fx.s("onnx.json"),
        "--backbone",
        BACKBONE,
        "--image",
        &fx.s("test/img01.png"),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = mdfs(&[
        "fit",
        "--images",
        &fx.s("corpus"),
        "--backbone",
        &fx.s("missing.onnx"),
        "--out",
        &fx.s("x.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_text(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn eval_reports_criteria() {
    let fx = Fixture::new();
    let mut scores = String::from("image_id,score,elapsed_ms\n");
    let mut mos = String::from("image_id,mos\n");
    for i in 0..50 {
        let s = i as f64 * 0.1 + ((i * 37) % 11) as f64 * 0.05;
        scores.push_str(&format!("im{i},{s},1.0\n"));
        mos.push_str(&format!(
            "im{i},{}\n",
            80.0 - 9.0 * s + ((i * 13) % 7) as f64
        ));
    }
    scores.push_str("# mean_elapsed_ms,1.0\n");
    write_text(&fx.path("scores.csv"), &scores);
    write_text(&fx.path("mos.csv"), &mos);
    let o = mdfs(&[
        "eval",
        "--scores",
        &fx.s("scores.csv"),
        "--mos",
        &fx.s("mos.csv"),
        "--out",
        &fx.s("report.json"),
        "--scatter",
        &fx.s("scatter.csv"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: mdfs::Report =
        serde_json::from_str(&fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    assert_eq!(report.n, 50);
    for v in [report.srocc, report.krocc, report.plcc, report.rmse] {
        assert!(v.is_finite());
    }
    assert!(report.srocc < -0.8);
    let scatter = fs::read_to_string(fx.path("scatter.csv")).unwrap();
    assert!(scatter.starts_with("raw,mapped,mos\n"));
    assert_eq!(scatter.lines().count(), 51);
}

#[test]
fn eval_monotone_fixture_has_unit_srocc() {
    let fx = Fixture::new();
    let mut scores = String::from("image_id,score\n");
    let mut mos = String::from("image_id,mos\n");
    for i in 0..20 {
        scores.push_str(&format!("im{i},{}\n", i as f64 * 0.5));
        mos.push_str(&format!("im{i},{}\n", (i as f64 * 0.2).exp()));
    }
    write_text(&fx.path("scores.csv"), &scores);
    write_text(&fx.path("mos.csv"), &mos);
    let o = mdfs(&[
        "eval",
        "--scores",
        &fx.s("scores.csv"),
        "--mos",
        &fx.s("mos.csv"),
        "--out",
        &fx.s("r.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: mdfs::Report =
        serde_json::from_str(&fs::read_to_string(fx.path("r.json")).unwrap()).unwrap();
    assert_eq!(report.srocc, 1.0);
}

#[test]
fn eval_join_failures_exit_4() {
    let fx = Fixture::new();
    write_text(&fx.path("scores.csv"), "image_id,score\na,1\nb,2\nc,3\n");
    write_text(&fx.path("mos.csv"), "image_id,mos\nx,1\ny,2\nz,3\n");
    let o = mdfs(&[
        "eval",
        "--scores",
        &fx.s("scores.csv"),
        "--mos",
        &fx.s("mos.csv"),
        "--out",
        &fx.s("r.json"),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("ERROR:JoinFailed:"));

    write_text(&fx.path("dup.csv"), "image_id,mos\na,1\na,2\n");
    let o = mdfs(&[
        "eval",
        "--scores",
        &fx.s("scores.csv"),
        "--mos",
        &fx.s("dup.csv"),
        "--out",
        &fx.s("r.json"),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("ERROR:DuplicateId:"));

    let mut mos = String::from("image_id,mos\n");
    let mut scores = String::from("image_id,score\n");
    for i in 0..8 {
        mos.push_str(&format!("i{i},{i}\n"));
        scores.push_str(&format!("i{i},{}\n", i * i));
    }
    scores.push_str("extra,3\n");
    write_text(&fx.path("s2.csv"), &scores);
    write_text(&fx.path("m2.csv"), &mos);
    let lenient = mdfs(&[
        "eval",
        "--scores",
        &fx.s("s2.csv"),
        "--mos",
        &fx.s("m2.csv"),
        "--out",
        &fx.s("r.json"),
    ]);
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    assert!(stderr(&lenient).contains("WARN:Unmatched:score without mos `extra`"));
    let strict = mdfs(&[
        "eval",
        "--scores",
        &fx.s("s2.csv"),
        "--mos",
        &fx.s("m2.csv"),
        "--out",
        &fx.s("r.json"),
        "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn inspect_summarizes_and_rejects_bad_files() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", BACKBONE).status.success());
    let o = mdfs(&["inspect", "--model", &fx.s("m.json")]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in [
        "dim,20",
        "sample_count,320",
        "config_hash,",
        "condition_number,",
    ] {
        assert!(text.contains(key), "{text}");
    }

    let bytes = fs::read(fx.path("m.json")).unwrap();
    fs::write(fx.path("trunc.json"), &bytes[..bytes.len() / 2]).unwrap();
    let o = mdfs(&["inspect", "--model", &fx.s("trunc.json")]);
    assert_eq!(o.status.code(), Some(5));

    let text = String::from_utf8(bytes)
        .unwrap()
        .replace("\"format_version\":1", "\"format_version\":2");
    fs::write(fx.path("future.json"), text).unwrap();
    let o = mdfs(&["inspect", "--model", &fx.s("future.json")]);
    assert_eq!(o.status.code(), Some(5));
    assert!(
        stderr(&o).starts_with("ERROR:FormatVersionUnsupported:"),
        "{}",
        stderr(&o)
    );
    assert!(stderr(&o).contains('2'));

    let o = mdfs(&["inspect", "--model", &fx.s("absent.json")]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn degrade_writes_image() {
    let fx = Fixture::new();
    let o = mdfs(&[
        "degrade",
        "--input",
        &fx.s("test/img00.png"),
        "--kind",
        "gaussian_blur",
        "--level",
        "2",
        "--out",
        &fx.s("blur.png"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = image::open(fx.path("test/img00.png")).unwrap().to_rgb8();
    let b = image::open(fx.path("blur.png")).unwrap().to_rgb8();
    assert_eq!(a.dimensions(), b.dimensions());
    assert_ne!(a, b);

    let o = mdfs(&[
        "degrade",
        "--input",
        &fx.s("test/img00.png"),
        "--kind",
        "sharpen",
        "--level",
        "2",
        "--out",
        &fx.s("x.png"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR:UnknownKind:"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mdfs(&["score", "--model", "m.json"]).status.code(), Some(2));
    assert_eq!(mdfs(&["frobnicate"]).status.code(), Some(2));
}
