use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depth-orient"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, preset: &str, rotation: &str) -> PathBuf {
    let out = dir.join(name);
    let o = cli(&["synth", "--preset", preset, "--size", "96x96", "--rotation", rotation, "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn estimate_json_has_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let depth = synth(dir.path(), "a.pfm", "ground", "80");
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["label_deg"], 80.0);
    assert_eq!(sidecar["format"], "pfm");

    let o = cli(&["estimate", "--input", arg(&depth)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let keys = ["\"coarse_deg\"", "\"fine_deg\"", "\"confident\"", "\"mode\"", "\"candidates\"", "\"runtime_ms\""];
    let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "key order in {text}");
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["coarse_deg"], 90);
    assert_eq!(v["fine_deg"], 80.0);
    assert_eq!(v["mode"], "depth");
    assert_eq!(v["candidates"].as_array().unwrap().len(), 9);
    for c in v["candidates"].as_array().unwrap() {
        for k in ["angle", "dgc", "hsa", "cost"] {
            assert!(c[k].is_number(), "{c}");
        }
    }
}

#[test]
fn out_flag_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let depth = synth(dir.path(), "b.pfm", "tilted-low", "300");
    let out = dir.path().join("r.json");
    let o = cli(&[
        "estimate", "--input", arg(&depth), "--alpha", "1", "--beta", "0", "--step", "5", "--box", "8", "--out", arg(&out),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["candidates"].as_array().unwrap().len(), 19);
    assert_eq!(v["coarse_deg"], 270);
}

#[test]
fn grayscale_image_uses_the_defocus_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 96u32;
    let sharp: Vec<u8> = (0..n * n).map(|_| rng.gen_range(30..220)).collect();
    // blur the left wedge with a 7x7 box
    let mut img = image::GrayImage::new(n, n);
    for r in 0..n {
        for c in 0..n {
            let (dx, dy) = (c as f64 - 47.5, r as f64 - 47.5);
            let v = if dx < 0.0 && dx.abs() > dy.abs() {
                let mut s = 0u32;
                let mut k = 0u32;
                for rr in r.saturating_sub(3)..(r + 4).min(n) {
                    for cc in c.saturating_sub(3)..(c + 4).min(n) {
                        s += sharp[(rr * n + cc) as usize] as u32;
                        k += 1;
                    }
                }
                (s / k) as u8
            } else {
                sharp[(r * n + c) as usize]
            };
            img.put_pixel(c, r, image::Luma([v]));
        }
    }
    let path = dir.path().join("photo.png");
    img.save(&path).unwrap();
    let o = cli(&["estimate", "--input", arg(&path), "--no-timing"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "defocus");
    assert_eq!(v["coarse_deg"], 90);
    assert_eq!(v["fine_deg"], Value::Null);
    assert_eq!(v["candidates"].as_array().unwrap().len(), 0);
    assert_eq!(v["runtime_ms"], 0.0);
}

#[test]
fn video_aggregates_frames() {
    let dir = tempfile::tempdir().unwrap();
    for f in 0..4 {
        synth(dir.path(), &format!("f{f:02}.pfm"), "ground", "190");
    }
    let pattern = dir.path().join("f*.pfm");
    let o = cli(&["video", "--frames", arg(&pattern), "--no-timing"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["frames"].as_array().unwrap().len(), 4);
    assert_eq!(v["aggregate_deg"], 190.0);
    assert_eq!(v["agreement"], 1.0);

    let o = cli(&["video", "--frames", arg(&dir.path().join("nothing*.pfm"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_writes_rows_then_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let o = cli(&["eval", "--suite", "ground-sweep", "--scenes", "1", "--size", "48x48", "--csv", arg(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "case_id,true_deg,predicted_coarse_deg,predicted_fine_deg,correct@0,correct@5,correct@10,runtime_ms"
    );
    assert_eq!(lines[37], "");
    assert!(lines[39].starts_with("all,36,"));

    let o = cli(&["eval", "--suite", "imagenet", "--csv", arg(&csv)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let o = cli(&["synth", "--preset", "ocean", "--out", arg(&dir.path().join("x.pfm"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["estimate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cli(&["estimate", "--input", arg(&dir.path().join("missing.pfm"))]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.pfm");
    std::fs::write(&bad, b"PF\n2 2\n-1.0\n").unwrap();
    let o = cli(&["estimate", "--input", arg(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 0"));

    let truncated = dir.path().join("short.pgm");
    std::fs::write(&truncated, b"P5\n4 4\n65535\n\x00\x01").unwrap();
    assert_eq!(cli(&["estimate", "--input", arg(&truncated)]).status.code(), Some(3));

    let empty = dir.path().join("empty.pfm");
    let mut bytes = b"Pf\n8 8\n-1.0\n".to_vec();
    for _ in 0..64 {
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
    }
    std::fs::write(&empty, bytes).unwrap();
    let o = cli(&["estimate", "--input", arg(&empty), "--no-timing"]);
    assert_eq!(o.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["confident"], false);
}

#[test]
fn depth_png_and_disparity_flags() {
    let dir = tempfile::tempdir().unwrap();
    // upright ramp: far rows at the top
    let n = 64u32;
    let depth = image::ImageBuffer::from_fn(n, n, |_, r| image::Luma([(60000 - r * 900) as u16]));
    let path = dir.path().join("d.png");
    depth.save(&path).unwrap();
    let o = cli(&["estimate", "--input", arg(&path), "--mode", "depth", "--depth-scale", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["coarse_deg"], 0);

    // the same data read as disparity puts the far side at the bottom
    let o = cli(&["estimate", "--input", arg(&path), "--mode", "depth", "--invert-depth"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["coarse_deg"], 180);
}
