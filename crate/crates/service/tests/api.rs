mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use polyptych_core::bank::{build_bank, decompose_multires};
use polyptych_core::imageio::{decode, encode_ppm};
use polyptych_core::synth::checker_texture;
use polyptych_core::{FeatureExtractor32, Ratio};
use polyptych_service::{router, serve, write_entry, Registry, RegistryError, ServeConfig, ServeError};
use serde_json::{json, Value};

fn generate_body(model: &str, seed: u64) -> Value {
    json!({"model_id": model, "sketch": sketch_b64(32), "mask": mask_b64(32), "seed": seed})
}

#[tokio::test]
async fn empty_registry_lists_nothing() {
    let app = router(Arc::new(Registry::new()));
    let (s, v) = call_json(&app, "GET", "/api/v1/models", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([]));
}

#[tokio::test]
async fn models_and_templates() {
    let (app, _dir) = app();
    let (s, v) = call_json(&app, "GET", "/api/v1/models", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        v,
        json!([
            {"model_id": "ink", "genre": "ink wash", "stage1_res": 16},
            {"model_id": "oils", "genre": "oil painting", "stage1_res": 16}
        ])
    );
    let (s, v) = call_json(&app, "GET", "/api/v1/models/oils/templates", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["template_id"], "checker");
    let img = decode(&decode_b64(v[0]["sketch_image"].as_str().unwrap()))
        .unwrap()
        .to_luma8();
    assert_eq!(img, template_sketch(32));
    let (s, v) = call_json(&app, "GET", "/api/v1/models/ink/templates", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));
    let (s, v) = call_json(&app, "GET", "/api/v1/models/nope/templates", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_model");
}

#[tokio::test]
async fn generate_is_deterministic() {
    let (app, _dir) = app();
    let (s1, a) = call_json(&app, "POST", "/api/v1/generate", Some(generate_body("oils", 5))).await;
    let (s2, b) = call_json(&app, "POST", "/api/v1/generate", Some(generate_body("oils", 5))).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK), "{a}");
    assert_eq!(a["image"], b["image"]);
    assert_eq!((a["width"].as_u64(), a["height"].as_u64()), (Some(64), Some(64)));
    let img = decode(&decode_b64(a["image"].as_str().unwrap())).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (64, 64));
    assert!(a["elapsed_ms"].is_u64());

    let (_, other) = call_json(&app, "POST", "/api/v1/generate", Some(generate_body("ink", 5))).await;
    assert_ne!(other["image"], a["image"]);

    let mut png = generate_body("oils", 5);
    png["format"] = json!("png");
    let (s, p) = call_json(&app, "POST", "/api/v1/generate", Some(png)).await;
    assert_eq!(s, StatusCode::OK);
    let from_png = decode(&decode_b64(p["image"].as_str().unwrap())).unwrap().to_rgb8();
    assert_eq!(from_png, img);
}

#[tokio::test]
async fn tiled_generation_and_concurrency() {
    let (app, _dir) = app();
    let body = json!({
        "model_id": "oils", "sketch": sketch_b64(48), "seed": 2,
        "tile": {"tile_w": 32, "tile_h": 32, "overlap_w": 16, "overlap_h": 16}
    });
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (app, body) = (app.clone(), body.clone());
            tokio::spawn(async move { call_json(&app, "POST", "/api/v1/generate", Some(body)).await })
        })
        .collect();
    let mut results = Vec::new();
    for h in handles {
        results.push(h.await.unwrap());
    }
    for (s, v) in &results {
        assert_eq!(*s, StatusCode::OK, "{v}");
        assert_eq!(v["image"], results[0].1["image"]);
        assert_eq!(v["width"], 96);
    }
}

#[tokio::test]
async fn generate_errors() {
    let (app, _dir) = app();
    let (s, v) = call_json(&app, "POST", "/api/v1/generate", Some(generate_body("missing", 0))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_model");

    let (s, _) = call(&app, "POST", "/api/v1/generate", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "POST", "/api/v1/generate", Some(json!({"model_id": "oils"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call_json(
        &app,
        "POST",
        "/api/v1/generate",
        Some(json!({"model_id": "oils", "sketch": "@@@"})),
    )
    .await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));

    let mut mismatch = generate_body("oils", 0);
    mismatch["mask"] = json!(mask_b64(40));
    let (s, _) = call_json(&app, "POST", "/api/v1/generate", Some(mismatch)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v) = call_json(
        &app,
        "POST",
        "/api/v1/generate",
        Some(json!({"model_id": "oils", "sketch": sketch_b64(36)})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "divisibility");

    let mut bad_tile = generate_body("oils", 0);
    bad_tile["tile"] = json!({"tile_w": 20, "tile_h": 20, "overlap_w": 4, "overlap_h": 4});
    let (s, v) = call_json(&app, "POST", "/api/v1/generate", Some(bad_tile)).await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("divisibility"))
    );

    let mut oversized = generate_body("oils", 0);
    oversized["tile"] = json!({"tile_w": 64, "tile_h": 64, "overlap_w": 0, "overlap_h": 0});
    let (s, _) = call_json(&app, "POST", "/api/v1/generate", Some(oversized)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn generate_times_out() {
    let (app, _dir) = app();
    let body = json!({
        "model_id": "oils", "sketch": sketch_b64(256), "timeout_ms": 1,
        "tile": {"tile_w": 16, "tile_h": 16, "overlap_w": 8, "overlap_h": 8}
    });
    let (s, v) = call_json(&app, "POST", "/api/v1/generate", Some(body)).await;
    assert_eq!(s, StatusCode::REQUEST_TIMEOUT);
    assert_eq!(v["error"], "timeout");
}

#[tokio::test]
async fn shuffle_endpoint() {
    let (app, _dir) = app();
    let body = json!({"sketch": sketch_b64(32), "mask": mask_b64(32), "grid_n": 4, "seed": 7});
    let (s, a) = call_json(&app, "POST", "/api/v1/shuffle", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let (_, b) = call_json(&app, "POST", "/api/v1/shuffle", Some(body)).await;
    assert_eq!(a, b);
    let out = decode(&decode_b64(a["sketch"].as_str().unwrap())).unwrap().to_luma8();
    let mut got: Vec<u8> = out.into_raw();
    let mut want = template_sketch(32).into_raw();
    assert_ne!(got, want);
    got.sort_unstable();
    want.sort_unstable();
    assert_eq!(got, want);
    assert!(a["mask"].is_string());

    let (s, v) = call_json(
        &app,
        "POST",
        "/api/v1/shuffle",
        Some(json!({"sketch": sketch_b64(32), "grid_n": 5, "seed": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v.get("mask").is_none());
}

#[tokio::test]
async fn bank_build_endpoint() {
    let (app, _dir) = app();
    let painting = checker_texture(32, 32, 4, 2, 8, 1);
    let b64 = base64_ppm(&painting);
    let (s, v) = call_json(
        &app,
        "POST",
        "/api/v1/bank/build",
        Some(json!({"painting": b64, "k": 2, "sizes": [8, 16], "min_category_size": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let d = decompose_multires(&painting, &[8, 16], Ratio::new(1, 2)).unwrap();
    let direct = build_bank(d.patches, &FeatureExtractor32::new(), 2, 1).unwrap();
    assert_eq!(v["k_effective"], direct.k);
    assert_eq!(v["outlier_count"], direct.outlier_count());
    assert_eq!(
        v["bank_id"],
        polyptych_core::training::bank_fingerprint(&direct).unwrap()
    );

    for bad in [
        json!({"painting": b64, "k": 0, "sizes": [8]}),
        json!({"painting": b64, "k": 2, "sizes": [64]}),
        json!({"painting": b64, "k": 2}),
    ] {
        let (s, _) = call_json(&app, "POST", "/api/v1/bank/build", Some(bad)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    }
    let (s, v) = call_json(
        &app,
        "POST",
        "/api/v1/bank/build",
        Some(json!({"painting": b64, "k": 40, "sizes": [8], "min_category_size": 3})),
    )
    .await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("bank_constraint"))
    );
}

fn base64_ppm(img: &image::RgbImage) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(encode_ppm(img).unwrap())
}

#[test]
fn registry_rejects_bad_entries() {
    let dir = tempfile::tempdir().unwrap();
    registry_dir(dir.path());
    std::fs::create_dir(dir.path().join("not-an-entry")).unwrap();
    assert_eq!(Registry::load(dir.path()).unwrap().len(), 2);

    std::fs::write(dir.path().join("ink/entry.json"), "{").unwrap();
    assert!(matches!(Registry::load(dir.path()), Err(RegistryError::Entry { .. })));

    let dir = tempfile::tempdir().unwrap();
    let b = bank();
    let mut m = model(&b, 0);
    m.config.bank_k = b.k + 1;
    let m = polyptych_core::ModelBundle32::new(m.config).unwrap();
    write_entry(dir.path(), "wrong-k", "x", &m, &b, &[]).unwrap();
    assert!(matches!(Registry::load(dir.path()), Err(RegistryError::Invalid { .. })));

    assert!(write_entry(dir.path(), "../escape", "x", &model(&b, 0), &b, &[]).is_err());
    assert!(Registry::load(dir.path().join("absent")).is_err());
}

#[tokio::test]
async fn serve_reports_bind_failure() {
    let dir = tempfile::tempdir().unwrap();
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = holder.local_addr().unwrap();
    let err = serve(ServeConfig {
        addr,
        registry_dir: dir.path().to_path_buf(),
    })
    .await
    .unwrap_err();
    assert!(matches!(err, ServeError::Bind { .. }), "{err}");
}
