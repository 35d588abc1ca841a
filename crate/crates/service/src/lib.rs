//! HTTP facade for the manual-box workflow: list slices, fetch one, run SDR
//! on user-drawn boxes.
//!
//! Routes: `GET /slices`, `GET /slice/{id}`, `POST /sdr`.

pub mod api;
pub mod dataset;

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use sdr_core::detect::{matched_filter_detect, merge_detections, BoundingBox, DetectorTemplate};
use sdr_core::encoder::EncoderModel;
use sdr_core::harness::lesion_templates;
use sdr_core::io::{encode_png_magnitude, DEFAULT_PNG_FULL_SCALE};
use sdr_core::mri::ComplexImage;
use sdr_core::sdr::{diversity_matrix, sdr_generate_with, SdrParams};
use sdr_core::SdrError;

pub use api::*;
pub use dataset::{slice_id, Dataset, Slice};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Include ground-truth boxes in slice responses.
    pub demo_mode: bool,
    /// Concurrent SDR jobs; further requests get 429.
    pub max_jobs: usize,
    pub budget: Duration,
    pub max_n_rec: usize,
    pub max_n_opt: usize,
    pub detector_threshold: f64,
    pub png_full_scale: f64,
    /// Longest thumbnail side in pixels.
    pub thumbnail_size: usize,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            demo_mode: false,
            max_jobs: 2,
            budget: Duration::from_secs(30),
            max_n_rec: 8,
            max_n_opt: 200,
            detector_threshold: 0.6,
            png_full_scale: DEFAULT_PNG_FULL_SCALE,
            thumbnail_size: 64,
            cors_origin: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub dataset: Arc<Dataset>,
    pub model: Arc<EncoderModel>,
    pub cfg: Arc<ServiceConfig>,
    /// Job slots; holding one blocks a job.
    pub permits: Arc<Semaphore>,
    templates: Arc<Vec<DetectorTemplate>>,
    listing: Arc<Vec<SliceSummary>>,
}

impl AppState {
    /// Renders the thumbnails once; the dataset never changes afterwards.
    pub fn new(dataset: Dataset, model: EncoderModel, cfg: ServiceConfig) -> sdr_core::Result<Self> {
        model.validate()?;
        let listing = dataset
            .slices()
            .iter()
            .map(|s| {
                Ok(SliceSummary {
                    slice_id: s.id.clone(),
                    acceleration: s.acceleration,
                    thumbnail: png_b64(&downsample(&s.initial, cfg.thumbnail_size), cfg.png_full_scale)?,
                })
            })
            .collect::<sdr_core::Result<Vec<_>>>()?;
        Ok(Self {
            dataset: Arc::new(dataset),
            model: Arc::new(model),
            permits: Arc::new(Semaphore::new(cfg.max_jobs)),
            cfg: Arc::new(cfg),
            templates: Arc::new(lesion_templates()),
            listing: Arc::new(listing),
        })
    }
}

pub fn router(state: AppState) -> Router {
    let origin = match &state.cfg.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Router::new()
        .route("/slices", get(list_slices))
        .route("/slice/{id}", get(get_slice))
        .route("/sdr", post(run_sdr))
        .layer(cors)
        .with_state(state)
}

fn png_b64(x: &ComplexImage, full_scale: f64) -> sdr_core::Result<String> {
    Ok(STANDARD.encode(encode_png_magnitude(x, full_scale)?))
}

/// Box-averaged magnitude with the longest side at most `max_side`.
fn downsample(x: &ComplexImage, max_side: usize) -> ComplexImage {
    let f = x.width().max(x.height()).div_ceil(max_side.max(1)).max(1);
    let (w, h) = (x.width().div_ceil(f), x.height().div_ceil(f));
    let mut out = ComplexImage::zeros(w, h);
    for oy in 0..h {
        for ox in 0..w {
            let (mut sum, mut n) = (0.0, 0usize);
            for y in oy * f..((oy + 1) * f).min(x.height()) {
                for xx in ox * f..((ox + 1) * f).min(x.width()) {
                    sum += x.get(xx, y).norm();
                    n += 1;
                }
            }
            out.set(ox, oy, (sum / n as f64).into());
        }
    }
    out
}

fn error(status: StatusCode, body: ErrorBody) -> Response {
    (status, Json(body)).into_response()
}

fn message(status: StatusCode, msg: impl Into<String>) -> Response {
    error(
        status,
        ErrorBody {
            error: msg.into(),
            ..ErrorBody::default()
        },
    )
}

async fn list_slices(State(st): State<AppState>) -> Json<Vec<SliceSummary>> {
    Json(st.listing.as_ref().clone())
}

async fn get_slice(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(s) = st.dataset.get(&id) else {
        return message(StatusCode::NOT_FOUND, format!("unknown slice id {id:?}"));
    };
    let image = match png_b64(&s.initial, st.cfg.png_full_scale) {
        Ok(v) => v,
        Err(e) => return message(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    Json(SliceDetail {
        slice_id: s.id.clone(),
        phantom: s.phantom,
        acceleration: s.acceleration,
        width: s.initial.width(),
        height: s.initial.height(),
        n_coils: s.acq.n_coils(),
        sampled_columns: s.acq.mask.n_sampled(),
        png_full_scale: st.cfg.png_full_scale,
        image,
        ground_truth: st.cfg.demo_mode.then(|| s.ground_truth.clone()),
    })
    .into_response()
}

/// Every box that is non-finite, empty or outside the image.
pub fn invalid_boxes(boxes: &[[f64; 4]], width: usize, height: usize) -> Vec<InvalidBox> {
    boxes
        .iter()
        .enumerate()
        .filter_map(|(index, &b)| {
            let reason = match BoundingBox::try_from(b) {
                Err(e) => e.to_string(),
                Ok(bb) if !bb.within(width, height) => format!("outside the {width}x{height} image"),
                Ok(_) => return None,
            };
            Some(InvalidBox { index, bbox: b, reason })
        })
        .collect()
}

fn check_request(req: &SdrJobRequest, s: &Slice, cfg: &ServiceConfig) -> Result<Vec<BoundingBox>, Response> {
    let unprocessable = |msg: String| message(StatusCode::UNPROCESSABLE_ENTITY, msg);
    if req.n_rec < 2 || req.n_rec > cfg.max_n_rec {
        return Err(unprocessable(format!("n_rec must be in 2..={}, got {}", cfg.max_n_rec, req.n_rec)));
    }
    if req.n_opt > cfg.max_n_opt {
        return Err(unprocessable(format!("n_opt must be at most {}, got {}", cfg.max_n_opt, req.n_opt)));
    }
    if !(req.radius > 0.0) || !req.radius.is_finite() {
        return Err(unprocessable(format!("radius must be positive and finite, got {}", req.radius)));
    }
    if req.boxes.is_empty() {
        return Err(unprocessable("box list is empty".into()));
    }
    let bad = invalid_boxes(&req.boxes, s.initial.width(), s.initial.height());
    if !bad.is_empty() {
        return Err(error(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorBody {
                error: format!("{} invalid box(es)", bad.len()),
                invalid_boxes: bad,
                ..ErrorBody::default()
            },
        ));
    }
    Ok(req.boxes.iter().map(|&b| BoundingBox::try_from(b).expect("checked above")).collect())
}

async fn run_sdr(State(st): State<AppState>, body: Result<Json<SdrJobRequest>, JsonRejection>) -> Response {
    let req = match body {
        Ok(Json(r)) => r,
        Err(e) => return message(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    let Some(slice) = st.dataset.get(&req.slice_id) else {
        return message(StatusCode::NOT_FOUND, format!("unknown slice id {:?}", req.slice_id));
    };
    let boxes = match check_request(&req, slice, &st.cfg) {
        Ok(b) => b,
        Err(r) => return r,
    };
    let Ok(permit) = st.permits.clone().try_acquire_owned() else {
        return message(
            StatusCode::TOO_MANY_REQUESTS,
            format!("all {} job slots are busy", st.cfg.max_jobs),
        );
    };
    let job = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        execute(&st, &req, &boxes)
    });
    match job.await {
        Ok(Ok(result)) => Json(result).into_response(),
        Ok(Err(r)) => r,
        Err(e) => message(StatusCode::INTERNAL_SERVER_ERROR, format!("job failed: {e}")),
    }
}

fn execute(st: &AppState, req: &SdrJobRequest, boxes: &[BoundingBox]) -> Result<SdrJobResult, Response> {
    let start = Instant::now();
    let deadline = start + st.cfg.budget;
    let slice = st.dataset.get(&req.slice_id).expect("checked by the handler");
    let params = SdrParams {
        n_rec: req.n_rec,
        n_opt: req.n_opt,
        radius: req.radius,
        seed: req.seed,
        ..SdrParams::default()
    };
    let set = sdr_generate_with(&slice.acq, &slice.initial, &st.model, boxes, &params, |_| Instant::now() < deadline)
        .map_err(|e| job_error(e, st.cfg.budget))?;
    let sdr_done = Instant::now();
    let per_recon = set
        .images
        .iter()
        .map(|x| matched_filter_detect(x, &st.templates, st.cfg.detector_threshold))
        .collect::<sdr_core::Result<Vec<_>>>()
        .map_err(internal)?;
    let merged = merge_detections(&per_recon, set.images.len()).map_err(internal)?;
    let matrix = diversity_matrix(&set, &st.model, boxes).map_err(internal)?;
    let detect_done = Instant::now();
    let reconstructions = set
        .images
        .iter()
        .zip(&set.provenance)
        .zip(per_recon)
        .map(|((x, p), detections)| {
            Ok(ReconOutput {
                image: png_b64(x, st.cfg.png_full_scale)?,
                consistency_residual: p.consistency_residual,
                distance_to_initial: p.distance_to_initial,
                seed: p.seed,
                detections,
            })
        })
        .collect::<sdr_core::Result<Vec<_>>>()
        .map_err(internal)?;
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    Ok(SdrJobResult {
        slice_id: req.slice_id.clone(),
        radius: set.radius,
        final_mean_distance: set.final_mean_distance(),
        seeded_mean_distance: set.seeded_mean_distance,
        reconstructions,
        diversity_matrix: matrix,
        merged_detections: merged,
        timing: Timing {
            sdr_ms: ms(sdr_done - start),
            detect_ms: ms(detect_done - sdr_done),
            total_ms: ms(start.elapsed()),
        },
    })
}

fn internal(e: SdrError) -> Response {
    message(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn job_error(e: SdrError, budget: Duration) -> Response {
    match e {
        SdrError::Cancelled {
            completed_iterations,
            total_iterations,
        } => error(
            StatusCode::REQUEST_TIMEOUT,
            ErrorBody {
                error: format!(
                    "time budget of {:.1} s exceeded after {completed_iterations} of {total_iterations} ascent iterations",
                    budget.as_secs_f64()
                ),
                completed_iterations: Some(completed_iterations),
                total_iterations: Some(total_iterations),
                ..ErrorBody::default()
            },
        ),
        SdrError::InvalidArgument(m) => message(StatusCode::UNPROCESSABLE_ENTITY, m),
        other => internal(other),
    }
}
