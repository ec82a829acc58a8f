//! Request and response bodies and the endpoint handlers.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{DynamicImage, GrayImage, RgbImage};
use polyptych_core::bank::{build_bank, decompose_multires, DEFAULT_MIN_CATEGORY_SIZE};
use polyptych_core::canvas::{
    decompose_canvas, generate_large_with_refs, shuffle_patches, tile_refs, SketchCanvas, TileLayout,
};
use polyptych_core::imageio::{self, gray_to_tensor, rgb_to_tensor, tensor_to_gray, tensor_to_rgb};
use polyptych_core::networks::DIVISOR;
use polyptych_core::training::bank_fingerprint;
use polyptych_core::{Error, FeatureExtractor32, Ratio, Tensor32};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::AppState;

/// Error response: `{"error": <code>, "reason": <message>}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub reason: String,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct ErrorBody {
    pub error: String,
    pub reason: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, reason: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            reason: reason.into(),
        }
    }

    fn bad_request(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", reason)
    }

    fn unknown_model(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_model", format!("no model {id:?}"))
    }

    fn internal(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", reason)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Cancelled => ApiError::new(StatusCode::REQUEST_TIMEOUT, "timeout", "generation exceeded timeout_ms"),
            Error::Dimension(_) | Error::InvalidArgument(_) | Error::Image(_) | Error::Parse { .. } => {
                ApiError::bad_request(e.to_string())
            }
            Error::Bank(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bank_constraint", e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.into(),
            reason: self.reason,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Bodies are parsed by hand so that every malformed body, including
/// well-formed JSON of the wrong shape, is a 400.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

/// Base64 image payload, optionally wrapped as a `data:` URL.
fn decode_image(field: &str, b64: &str) -> Result<DynamicImage, ApiError> {
    let raw = match b64.split_once(";base64,") {
        Some((prefix, rest)) if prefix.starts_with("data:") => rest,
        _ => b64,
    };
    let bytes = STANDARD
        .decode(raw.trim())
        .map_err(|e| ApiError::bad_request(format!("{field}: invalid base64: {e}")))?;
    imageio::decode(&bytes).map_err(|e| ApiError::bad_request(format!("{field}: {e}")))
}

fn encode_rgb(img: &RgbImage, format: ImageFormat) -> Result<String, ApiError> {
    let bytes = match format {
        ImageFormat::Ppm => imageio::encode_ppm(img),
        ImageFormat::Png => imageio::encode_png(&DynamicImage::ImageRgb8(img.clone())),
    }
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(STANDARD.encode(bytes))
}

fn encode_gray(img: &GrayImage, format: ImageFormat) -> Result<String, ApiError> {
    let bytes = match format {
        ImageFormat::Ppm => imageio::encode_pgm(img),
        ImageFormat::Png => imageio::encode_png(&DynamicImage::ImageLuma8(img.clone())),
    }
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(STANDARD.encode(bytes))
}

/// Run CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn canvas_from(sketch: &str, mask: Option<&str>) -> Result<SketchCanvas<f32>, ApiError> {
    let sketch = decode_image("sketch", sketch)?.to_luma8();
    let mask = mask.map(|m| decode_image("mask", m)).transpose()?.map(|m| m.to_rgb8());
    if let Some(m) = &mask {
        if m.dimensions() != sketch.dimensions() {
            return Err(ApiError::bad_request(format!(
                "mask is {}x{}, sketch is {}x{}",
                m.width(),
                m.height(),
                sketch.width(),
                sketch.height()
            )));
        }
    }
    Ok(SketchCanvas::new(
        gray_to_tensor(&sketch),
        mask.as_ref().map(rgb_to_tensor),
    )?)
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ModelInfo {
    pub model_id: String,
    pub genre: String,
    pub stage1_res: usize,
}

pub async fn list_models(State(state): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(
        state
            .registry
            .iter()
            .map(|e| ModelInfo {
                model_id: e.id.clone(),
                genre: e.genre.clone(),
                stage1_res: e.model.config.stage1_res,
            })
            .collect(),
    )
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct TemplateInfo {
    pub template_id: String,
    /// Base64 PNG.
    pub sketch_image: String,
}

pub async fn list_templates(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<TemplateInfo>> {
    let entry = state.registry.get(&id).ok_or_else(|| ApiError::unknown_model(&id))?;
    entry
        .templates
        .iter()
        .map(|t| {
            Ok(TemplateInfo {
                template_id: t.id.clone(),
                sketch_image: encode_gray(&t.sketch, ImageFormat::Png)?,
            })
        })
        .collect::<Result<_, _>>()
        .map(Json)
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    pub tile_w: usize,
    pub tile_h: usize,
    pub overlap_w: usize,
    pub overlap_h: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct GenerateRequest {
    pub model_id: String,
    pub sketch: String,
    #[serde(default)]
    pub mask: Option<String>,
    /// Whole canvas as one tile when absent.
    #[serde(default)]
    pub tile: Option<TileSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    /// Encoding of the returned image.
    #[serde(default)]
    pub format: ImageFormat,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct GenerateResponse {
    pub image: String,
    pub width: usize,
    pub height: usize,
    /// Wall-clock time, the one field that varies between identical requests.
    pub elapsed_ms: u64,
}

pub async fn generate(State(state): State<AppState>, body: Bytes) -> ApiResult<GenerateResponse> {
    let req: GenerateRequest = parse(&body)?;
    let entry = state
        .registry
        .get(&req.model_id)
        .cloned()
        .ok_or_else(|| ApiError::unknown_model(&req.model_id))?;
    let start = Instant::now();
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    let work = tokio::task::spawn_blocking(move || -> Result<RgbImage, ApiError> {
        let canvas = canvas_from(&req.sketch, req.mask.as_deref())?;
        let size = canvas.size();
        let layout = match req.tile {
            Some(t) => decompose_canvas(size.w, size.h, t.tile_w, t.tile_h, t.overlap_w, t.overlap_h)?,
            None => TileLayout::single(size.w, size.h)?,
        };
        layout
            .check_divisible(DIVISOR)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "divisibility", e.to_string()))?;
        let refs = tile_refs(
            &entry.model,
            &entry.bank,
            layout.tile_h,
            layout.tile_w,
            req.seed.unwrap_or(0),
        )?;
        let out: Tensor32 = generate_large_with_refs(&canvas, &entry.model, &refs, &layout, Some(&flag))?;
        Ok(tensor_to_rgb(&out)?)
    });
    let joined = match req.timeout_ms {
        Some(ms) => match tokio::time::timeout(Duration::from_millis(ms), work).await {
            Ok(j) => j,
            Err(_) => {
                // Remaining tiles are skipped; the worker exits on its own.
                cancel.store(true, Ordering::Relaxed);
                return Err(Error::Cancelled.into());
            }
        },
        None => work.await,
    };
    let img = joined.map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    Ok(Json(GenerateResponse {
        image: encode_rgb(&img, req.format)?,
        width: img.width() as usize,
        height: img.height() as usize,
        elapsed_ms: start.elapsed().as_millis() as u64,
    }))
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ShuffleRequest {
    pub sketch: String,
    #[serde(default)]
    pub mask: Option<String>,
    pub grid_n: usize,
    pub seed: u64,
    #[serde(default)]
    pub format: ImageFormat,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ShuffleResponse {
    pub sketch: String,
    /// Present when the request carried a mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

pub async fn shuffle(body: Bytes) -> ApiResult<ShuffleResponse> {
    let req: ShuffleRequest = parse(&body)?;
    blocking(move || {
        let canvas = canvas_from(&req.sketch, req.mask.as_deref())?;
        let out = shuffle_patches(&canvas, req.grid_n, req.seed)?;
        let mask = match req.mask {
            Some(_) => Some(encode_rgb(&tensor_to_rgb(&out.mask)?, req.format)?),
            None => None,
        };
        Ok(ShuffleResponse {
            sketch: encode_gray(&tensor_to_gray(&out.sketch)?, req.format)?,
            mask,
        })
    })
    .await
    .map(Json)
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct BankBuildRequest {
    pub painting: String,
    pub k: usize,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub min_category_size: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct BankBuildResponse {
    /// Content hash of the serialized bank.
    pub bank_id: String,
    pub k_effective: usize,
    pub outlier_count: usize,
}

pub async fn build_bank_endpoint(body: Bytes) -> ApiResult<BankBuildResponse> {
    let req: BankBuildRequest = parse(&body)?;
    blocking(move || {
        let painting = decode_image("painting", &req.painting)?.to_rgb8();
        let d = decompose_multires(&painting, &req.sizes, Ratio::new(1, 2))?;
        if d.patches.is_empty() {
            return Err(ApiError::bad_request("no requested patch size fits the painting"));
        }
        let min = req.min_category_size.unwrap_or(DEFAULT_MIN_CATEGORY_SIZE);
        let bank = build_bank(d.patches, &FeatureExtractor32::new(), req.k, min)?;
        Ok(BankBuildResponse {
            bank_id: bank_fingerprint(&bank)?,
            k_effective: bank.k,
            outlier_count: bank.outlier_count(),
        })
    })
    .await
    .map(Json)
}
