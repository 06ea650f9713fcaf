#![cfg(feature = "onnx")]

use std::fs;

use mdfs::backbone::{BackboneManifest, SyntheticNet};
use mdfs::datasets::synthetic_scene;
use mdfs::{load_backbone, load_backbone_with_manifest, Error};
use tempfile::TempDir;

fn stage_names() -> Vec<String> {
    (1..=5).map(|i| format!("stage{i}")).collect()
}

fn exported(net: &SyntheticNet) -> (TempDir, std::path::PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("net.onnx");
    fs::write(&path, net.to_onnx_bytes()).unwrap();
    (dir, path)
}

#[test]
fn exported_graph_matches_native_forward() {
    let net = SyntheticNet::new(11, [3, 5, 4, 6, 2]);
    let native = net
        .clone()
        .into_handle(SyntheticNet::default_preprocess())
        .unwrap();
    let (_dir, path) = exported(&net);
    let onnx = load_backbone(&path, &stage_names(), SyntheticNet::default_preprocess()).unwrap();
    assert_eq!(onnx.stage_channels, [3, 5, 4, 6, 2]);
    assert_eq!(onnx.stage_strides, [2, 4, 8, 16, 32]);

    for (h, w) in [(96, 128), (67, 81)] {
        let image = synthetic_scene(5, h, w);
        let a = native.extract_pyramid(image.view()).unwrap();
        let b = onnx.extract_pyramid(image.view()).unwrap();
        for (sa, sb) in a.stages.iter().zip(&b.stages) {
            assert_eq!(sa.dim(), sb.dim());
            let scale = sa.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let worst = sa
                .iter()
                .zip(sb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-4 * scale, "stage mismatch {worst} at {h}x{w}");
        }
    }
}

#[test]
fn sidecar_manifest_loads() {
    let net = SyntheticNet::new(3, [2; 5]);
    let (dir, path) = exported(&net);
    let manifest_path = BackboneManifest::sidecar_path(&path);
    assert_eq!(manifest_path, dir.path().join("net.manifest.json"));
    BackboneManifest::new(stage_names(), &SyntheticNet::default_preprocess())
        .write(&manifest_path)
        .unwrap();
    let handle = load_backbone_with_manifest(&path, &manifest_path).unwrap();
    assert_eq!(handle.fused_dim(), 10);
    assert_eq!(handle.model_sha256.len(), 64);
}

#[test]
fn load_errors() {
    let net = SyntheticNet::new(3, [2; 5]);
    let (dir, path) = exported(&net);
    let pre = SyntheticNet::default_preprocess();

    let mut names = stage_names();
    names[2] = "nonexistent".into();
    assert!(
        matches!(load_backbone(&path, &names, pre.clone()), Err(Error::MissingOutput(n)) if n == "nonexistent")
    );
    assert!(matches!(
        load_backbone(&path, &stage_names()[..4], pre.clone()),
        Err(Error::StageCount {
            expected: 5,
            got: 4
        })
    ));
    assert!(matches!(
        load_backbone(&dir.path().join("absent.onnx"), &stage_names(), pre.clone()),
        Err(Error::FileNotFound(_))
    ));
    let junk = dir.path().join("junk.onnx");
    fs::write(&junk, b"definitely not protobuf \xff\xff\xff").unwrap();
    assert!(matches!(
        load_backbone(&junk, &stage_names(), pre),
        Err(Error::InvalidModel(_))
    ));
}
