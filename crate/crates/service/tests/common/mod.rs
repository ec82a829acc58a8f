#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use http_body_util::BodyExt;
use image::GrayImage;
use polyptych_core::bank::{build_bank, decompose_multires, ReferenceBank};
use polyptych_core::canvas::extract_sketch;
use polyptych_core::imageio::{encode_pgm, encode_ppm, tensor_to_gray};
use polyptych_core::networks::ModelConfig;
use polyptych_core::synth::checker_texture;
use polyptych_core::{FeatureExtractor32, ModelBundle32, Ratio, Tensor32};
use polyptych_service::{router, write_entry, Registry, Template};
use serde_json::Value;
use tower::ServiceExt;

pub fn bank() -> ReferenceBank {
    let d = decompose_multires(&checker_texture(32, 32, 4, 2, 8, 1), &[8, 16], Ratio::new(1, 2)).unwrap();
    build_bank(d.patches, &FeatureExtractor32::new(), 2, 1).unwrap()
}

pub fn model(bank: &ReferenceBank, seed: u64) -> ModelBundle32 {
    ModelBundle32::new(ModelConfig {
        encoder_widths: [4, 4, 8],
        residual_blocks: 1,
        feature_channels: 4,
        enhancer_width: 4,
        disc_widths: [4, 4, 4],
        c_prime: 4,
        reduction: 2,
        bank_k: bank.k,
        stage1_res: 16,
        init_seed: seed,
        ..ModelConfig::default()
    })
    .unwrap()
}

pub fn template_sketch(side: u32) -> GrayImage {
    let t: Tensor32 = extract_sketch(&checker_texture(side, side, 8, 0, 0, 0)).unwrap();
    tensor_to_gray(&t).unwrap()
}

/// Registry directory with models `oils` and `ink`.
pub fn registry_dir(dir: &Path) {
    let b = bank();
    let t = Template {
        id: "checker".into(),
        sketch: template_sketch(32),
    };
    write_entry(dir, "oils", "oil painting", &model(&b, 1), &b, &[t]).unwrap();
    write_entry(dir, "ink", "ink wash", &model(&b, 2), &b, &[]).unwrap();
}

pub fn app() -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    registry_dir(dir.path());
    (router(Arc::new(Registry::load(dir.path()).unwrap())), dir)
}

pub fn sketch_b64(side: u32) -> String {
    STANDARD.encode(encode_pgm(&template_sketch(side)).unwrap())
}

pub fn mask_b64(side: u32) -> String {
    STANDARD.encode(encode_ppm(&checker_texture(side, side, 4, 0, 0, 0)).unwrap())
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

pub async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body.map(|v| v.to_string())).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

pub fn decode_b64(s: &str) -> Vec<u8> {
    STANDARD.decode(s).unwrap()
}
