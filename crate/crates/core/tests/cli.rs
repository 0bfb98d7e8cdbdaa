use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use shapetex::mesh::io::save_obj;
use shapetex::mesh::primitives;
use shapetex::texture::Image;
use shapetex::views::{default_candidates, default_image_name, Framing};

fn shapetex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapetex"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = shapetex(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    if out.stdout.is_empty() {
        return Value::Null;
    }
    serde_json::from_slice(&out.stdout).expect("report on stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn sphere_grid_extract_and_iou() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r = ok(d, &["sdf-grid", "--sphere-radius", "0.5", "--res", "32", "--out", "s.sdf"]);
    assert_eq!(r["command"], "sdf-grid");
    assert_eq!(r["parameters"]["res"], 32);
    assert_eq!(r["parameters"]["bound"], 1.0);
    let r = ok(d, &["extract", "--grid", "s.sdf", "--out", "s.obj"]);
    assert!(r["metrics"]["vertex_count"].as_u64().unwrap() > 0);
    assert_eq!(r["metrics"]["watertight"], true);
    let r = ok(d, &["iou", "--a", "s.obj", "--b", "s.obj", "--samples", "10000"]);
    assert_eq!(r["metrics"]["iou"], 1.0);
    assert_eq!(r["metrics"]["surface_iou"], 1.0);
    assert!(r["parameters"]["band"].as_f64().unwrap() > 0.0);
    assert!(r["timings_ms"]["total"].as_f64().is_some());
}

#[test]
fn validation_errors_exit_2_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_obj(&primitives::icosphere(1, 1.0), d.join("m.obj")).unwrap();
    let out = shapetex(d, &["select-views", "--mesh", "m.obj", "--nmax", "3", "--nfixed", "4", "--out", "v.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--nfixed") && stderr(&out).contains("--nmax"));
    assert!(!d.join("v.json").exists());

    let out = shapetex(d, &["sample", "--out", "p.ply"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--mesh"));

    let out = shapetex(d, &["sample", "--mesh", "m.obj", "--out", "p.ply", "--sharp-angle", "200"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--sharp-angle"));

    let out = shapetex(d, &["lowpoly", "--mesh", "m.obj", "--texture", "t.png", "--target-faces", "1", "--out", "l.obj", "--out-texture", "l.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--target-faces"));

    assert_eq!(shapetex(d, &["sample", "--bogus"]).status.code(), Some(2));
    assert_eq!(shapetex(d, &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = shapetex(d, &["extract", "--grid", "missing.sdf", "--out", "m.obj"]);
    assert_eq!(out.status.code(), Some(1));
    save_obj(&primitives::plane_grid(2, 2, 1.0, 1.0), d.join("open.obj")).unwrap();
    let out = shapetex(d, &["iou", "--a", "open.obj", "--b", "open.obj", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_obj(&primitives::unit_cube(), d.join("cube.obj")).unwrap();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"mesh": "cube.obj", "uniform": 300, "importance": 200, "fps": 100, "seed": 5, "out": "a.ply"}"#,
    )
    .unwrap();
    let r = ok(d, &["sample", "--config", "cfg.json", "--seed", "6", "--report", "rep.json"]);
    assert_eq!(r, Value::Null, "report goes to the file, not stdout");
    let r: Value = serde_json::from_str(&std::fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    let p = &r["parameters"];
    assert_eq!((p["uniform"].as_u64(), p["seed"].as_u64(), p["fps"].as_u64()), (Some(300), Some(6), Some(100)));
    assert_eq!(p["sharp-angle"], 30.0);
    assert_eq!(r["metrics"]["points_written"], 100);
    assert_eq!(r["metrics"]["sharp_edges"], 12);

    // The report itself works as a config and reproduces the output.
    std::fs::rename(d.join("a.ply"), d.join("first.ply")).unwrap();
    ok(d, &["sample", "--config", "rep.json"]);
    assert_eq!(std::fs::read(d.join("a.ply")).unwrap(), std::fs::read(d.join("first.ply")).unwrap());

    std::fs::write(d.join("bad.json"), r#"{"mesh": "cube.obj", "out": "b.ply", "unifrom": 3}"#).unwrap();
    let out = shapetex(d, &["sample", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unifrom"));
}

/// Writes a constant image for every default candidate view of a unit-radius mesh.
fn write_constant_views(dir: &Path, color: [f64; 3]) {
    let framing = Framing {
        distance: 3.0,
        half_width: 1.1,
    };
    std::fs::create_dir_all(dir).unwrap();
    for v in default_candidates(framing) {
        Image::constant(48, 48, color).save_png(dir.join(default_image_name(&v))).unwrap();
    }
}

#[test]
fn pipeline_then_lowpoly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_obj(&primitives::icosphere(3, 1.0), d.join("ball.obj")).unwrap();
    let color = [0.2, 0.6, 0.4];
    write_constant_views(&d.join("views"), color);
    let r = ok(
        d,
        &["pipeline", "--mesh", "ball.obj", "--images", "views", "--out-dir", "out", "--atlas", "128", "--size", "256", "--nmax", "6"],
    );
    let m = &r["metrics"];
    assert_eq!(m["selected_views"].as_array().unwrap().len(), 6);
    assert_eq!(m["covered_after"], m["valid_texels"]);
    assert_eq!(m["uv_source"], "face-charts");
    let views: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/views.json")).unwrap()).unwrap();
    assert_eq!(views.as_array().unwrap().len(), 6);

    let tex = Image::load_png(d.join("out/texture.png")).unwrap();
    let expected = color.map(|c| (c * 255.0).round() / 255.0);
    let mut colored = 0;
    for y in 0..tex.height() {
        for x in 0..tex.width() {
            let c = tex.get(x, y);
            if c != [0.0; 3] {
                assert!((0..3).all(|k| (c[k] - expected[k]).abs() <= 1.0 / 255.0), "{c:?}");
                colored += 1;
            }
        }
    }
    assert_eq!(colored as u64, m["valid_texels"].as_u64().unwrap());

    // Standalone inpaint of the baked texture gives the same result.
    ok(d, &["inpaint", "--mesh", "ball.obj", "--texture", "out/texture_baked.png", "--out", "again.png"]);
    assert_eq!(std::fs::read(d.join("again.png")).unwrap(), std::fs::read(d.join("out/texture.png")).unwrap());

    let r = ok(
        d,
        &["lowpoly", "--mesh", "ball.obj", "--texture", "out/texture.png", "--target-faces", "200", "--out", "low.obj", "--out-texture", "low.png", "--size", "128"],
    );
    assert!(r["metrics"]["output_faces"].as_u64().unwrap() <= 200);
    assert_eq!(r["metrics"]["edge_manifold"], true);
    let obj = std::fs::read_to_string(d.join("low.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("vt ")));
    let low = Image::load_png(d.join("low.png")).unwrap();
    for y in 0..low.height() {
        for x in 0..low.width() {
            let c = low.get(x, y);
            assert!(c == [0.0; 3] || (0..3).all(|k| (c[k] - expected[k]).abs() <= 1.0 / 255.0));
        }
    }
}

#[test]
fn bake_reads_named_images_and_writes_mask() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_obj(&primitives::icosphere(2, 1.0), d.join("ball.obj")).unwrap();
    std::fs::create_dir(d.join("img")).unwrap();
    Image::constant(32, 32, [1.0, 0.0, 0.0]).save_png(d.join("img/front.png")).unwrap();
    std::fs::write(
        d.join("views.json"),
        r#"[{"azimuth": 0, "elevation": 0, "distance": 3, "half_width": 1.1, "image": "front.png"}]"#,
    )
    .unwrap();
    let r = ok(d, &["bake", "--mesh", "ball.obj", "--views", "views.json", "--images", "img", "--size", "128", "--out", "t.png"]);
    assert!(d.join("t_mask.png").is_file());
    let frac = r["metrics"]["bake_coverage"].as_f64().unwrap();
    assert!(frac > 0.2 && frac < 0.6, "{frac}");
    assert_eq!(r["parameters"]["mask"], "t_mask.png");

    let out = shapetex(d, &["bake", "--mesh", "ball.obj", "--views", "views.json", "--images", "nowhere", "--size", "64", "--out", "u.png"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("front.png"));
}

#[test]
fn kernel_demos() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r = ok(d, &["flow-demo", "--steps", "50", "--samples", "500", "--out", "flow.json"]);
    assert_eq!(r["metrics"]["loss_curve"].as_array().unwrap().len(), 50);
    let f: Value = serde_json::from_str(&std::fs::read_to_string(d.join("flow.json")).unwrap()).unwrap();
    assert!(f["final_loss"].as_f64().unwrap() < f["initial_loss"].as_f64().unwrap());
    let r = ok(d, &["attn-check", "--trials", "10"]);
    assert_eq!(r["metrics"]["passed"], true);
    assert_eq!(r["metrics"]["identity_exact"], true);
}
