//! HTTP inference service over one immutable checkpoint snapshot.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/health` | |
//! | GET | `/model-info` | |
//! | POST | `/encode` | [`api::InputSpec`] |
//! | POST | `/decode` | [`api::DecodeRequest`] |
//! | POST | `/sample` | [`api::SampleRequest`] |
//! | POST | `/variation-grid` | [`api::GridRequest`] |
//! | POST | `/interpolate` | [`api::InterpolateRequest`] |
//! | GET | `/dataset-sample/{index}` | |
//!
//! Every stochastic endpoint takes an explicit `seed`; identical requests
//! return identical bytes regardless of concurrency.

pub mod api;
pub mod error;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use varnet::attributes::AttributeBlock;
use varnet::checkpoint::{fingerprint, load_checkpoint, Checkpoint};
use varnet::data::{load_dataset, Dataset, Metadata, Split};
use varnet::image::{decode_png, tile, Raster};
use varnet::model::VarNet;
use varnet::sampling::{self, VariationRequest};
use varnet::Tensor;

use crate::api::*;
use crate::error::ApiError;

/// Largest number of images one request may produce.
pub const MAX_IMAGES: usize = 1024;

/// Everything a request may read. Never mutated after construction.
pub struct Snapshot {
    pub model: VarNet,
    pub dataset: Option<Dataset>,
    pub dataset_id: Option<String>,
    pub step: u64,
    pub fingerprint: String,
}

impl Snapshot {
    pub fn new(ck: Checkpoint, dataset: Option<Dataset>) -> Self {
        Self {
            fingerprint: fingerprint(&ck.state.model.store),
            step: ck.state.step,
            dataset_id: ck.dataset.clone(),
            dataset,
            model: ck.state.model,
        }
    }

    /// Loads a checkpoint and, when its dataset is available, the first
    /// `eval` examples of that dataset's test split for `/dataset-sample`.
    pub fn load(path: &Path, eval: usize) -> varnet::Result<Self> {
        let ck = load_checkpoint(path)?;
        let dataset = match ck.dataset.as_deref() {
            Some(id) if !id.contains('@') => match load_dataset(id, Split::Test, Some(eval), ck.state.seed) {
                Ok(d) => Some(d),
                Err(e) => {
                    log::warn!("dataset samples unavailable: {e}");
                    None
                }
            },
            _ => None,
        };
        Ok(Self::new(ck, dataset))
    }

    pub fn info(&self) -> ModelInfo {
        let spec = self.model.spec();
        let blocks = spec
            .blocks()
            .iter()
            .zip(spec.offsets())
            .enumerate()
            .map(|(index, (b, offset))| {
                let mut info = BlockInfo {
                    index,
                    kind: b.kind().to_string(),
                    offset,
                    d_psi: b.d_psi(),
                    d: b.alpha_dim(),
                    m: None,
                    field: None,
                    vocabulary: None,
                };
                if let Some((field, m)) = b.label_field() {
                    info.m = Some(m);
                    info.field = Some(field);
                }
                match b {
                    AttributeBlock::FixedDiscrete { vocabulary, .. } => info.vocabulary = vocabulary.clone(),
                    AttributeBlock::FixedContinuous { m, .. } => info.d = Some(*m),
                    _ => {}
                }
                info
            })
            .collect();
        ModelInfo {
            dataset: self.dataset_id.clone(),
            dataset_size: self.dataset.as_ref().map(Dataset::len),
            step: self.step,
            fingerprint: self.fingerprint.clone(),
            d_z: self.model.d_z(),
            input_shape: self.model.config.input_shape,
            total_dim: self.model.d_psi(),
            two_stage: self.model.config.two_stage,
            blocks,
        }
    }

    fn png(&self, values: &[f64]) -> Result<String, ApiError> {
        let r = Raster::from_planar(values, self.image_shape())?;
        Ok(STANDARD.encode(r.encode_png()?))
    }

    /// Shape used to render outputs; representation vectors become a strip.
    fn image_shape(&self) -> [usize; 3] {
        match self.model.config.input_shape {
            [c, h, w] if c == 1 || c == 3 => [c, h, w],
            [c, h, w] => [1, c * h, w],
        }
    }

    fn pngs(&self, t: &Tensor) -> Result<Vec<String>, ApiError> {
        (0..t.rows()).map(|r| self.png(t.row(r))).collect()
    }

    /// Resolves an input to one row of pixels and its metadata.
    pub fn resolve(&self, input: &InputSpec) -> Result<(Tensor, Metadata), ApiError> {
        let given = [input.index.is_some(), input.image.is_some(), input.pixels.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(ApiError::bad_request("give exactly one of `index`, `image` or `pixels`"));
        }
        let dim = self.model.input_dim();
        let (x, mut meta) = if let Some(i) = input.index {
            let d = self
                .dataset
                .as_ref()
                .ok_or_else(|| ApiError::not_found("this service has no dataset loaded"))?;
            if i >= d.len() {
                return Err(ApiError::not_found(format!("index {i} out of range 0..{}", d.len())));
            }
            let one = d.select(&[i]);
            (one.x, one.meta)
        } else if let Some(b64) = &input.image {
            let bytes = STANDARD
                .decode(b64)
                .map_err(|e| ApiError::bad_request(format!("`image` is not base64: {e}")))?;
            let (values, shape) = decode_png(&bytes)?;
            if shape != self.model.config.input_shape {
                return Err(ApiError::from(varnet::VarNetError::Shape(format!(
                    "`image` is {shape:?}, the model reads {:?}",
                    self.model.config.input_shape
                ))));
            }
            (Tensor::row_vector(values), Metadata::none())
        } else {
            let p = input.pixels.as_ref().expect("checked above");
            if p.len() != dim {
                return Err(ApiError::from(varnet::VarNetError::Shape(format!(
                    "`pixels` has {} values, the model reads {dim}",
                    p.len()
                ))));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(ApiError::bad_request("`pixels` must be finite"));
            }
            (Tensor::row_vector(p.clone()), Metadata::none())
        };
        if let Some(labels) = &input.labels {
            meta.labels = labels.iter().map(|&l| vec![l]).collect();
        }
        if let Some(c) = &input.continuous {
            meta.continuous = Some(Tensor::row_vector(c.clone()));
        }
        Ok((x, meta))
    }

    pub fn encode(&self, input: &InputSpec) -> Result<EncodeResponse, ApiError> {
        let (x, meta) = self.resolve(input)?;
        let post = self.model.encode(&x)?;
        let psi = self.model.attributes_of(&x, &meta)?;
        let alphas = self.model.attributes.eval_alphas(&self.model.store, &x, &meta)?;
        let recon = self.model.decode(&post.mu, &psi)?.mu;
        Ok(EncodeResponse {
            mu_z: post.mu.data().to_vec(),
            sigma_z: post.sigma.data().to_vec(),
            psi: psi.data().to_vec(),
            alphas: alphas.into_iter().map(|a| a.map(Tensor::into_vec)).collect(),
            reconstruction: self.png(recon.data())?,
        })
    }

    pub fn decode(&self, req: &DecodeRequest) -> Result<DecodeResponse, ApiError> {
        if req.z.len() != self.model.d_z() {
            return Err(varnet::VarNetError::Shape(format!(
                "`z` has {} values, the model has d_z = {}",
                req.z.len(),
                self.model.d_z()
            ))
            .into());
        }
        let psi = match (&req.psi, &req.blocks) {
            (Some(p), None) => {
                if p.len() != self.model.d_psi() {
                    return Err(varnet::VarNetError::Spec(format!(
                        "`psi` has {} values, the attribute space has {}",
                        p.len(),
                        self.model.d_psi()
                    ))
                    .into());
                }
                Tensor::row_vector(p.clone())
            }
            (None, Some(blocks)) => {
                let settings: Vec<_> = blocks.iter().cloned().map(Some).collect();
                if settings.len() != self.model.spec().blocks().len() {
                    return Err(varnet::VarNetError::Spec(format!(
                        "`blocks` has {} settings for {} attribute blocks",
                        settings.len(),
                        self.model.spec().blocks().len()
                    ))
                    .into());
                }
                sampling::compose_psi(&self.model, &settings, None)?
            }
            _ => return Err(ApiError::bad_request("give exactly one of `psi` or `blocks`")),
        };
        let out = self.model.decode(&Tensor::row_vector(req.z.clone()), &psi)?.mu;
        Ok(DecodeResponse {
            image: self.png(out.data())?,
            psi: psi.into_vec(),
        })
    }

    pub fn sample(&self, req: &SampleRequest) -> Result<SampleResponse, ApiError> {
        if req.n > MAX_IMAGES {
            return Err(ApiError::bad_request(format!("`n` may be at most {MAX_IMAGES}")));
        }
        let out = match &req.psi {
            Some(psi) => sampling::sample_with_attributes(&self.model, psi, req.n, req.seed)?,
            None => sampling::sample_unconditional(&self.model, req.n, req.seed)?,
        };
        Ok(SampleResponse { images: self.pngs(&out)? })
    }

    pub fn grid(&self, req: &GridRequest) -> Result<GridResponse, ApiError> {
        let cells: usize = req.axes.iter().map(|a| a.steps).product();
        if cells > MAX_IMAGES || req.axes.iter().any(|a| a.steps > MAX_IMAGES) {
            return Err(ApiError::bad_request(format!("a grid may hold at most {MAX_IMAGES} cells")));
        }
        if req.pad > 64 {
            return Err(ApiError::bad_request("`pad` may be at most 64"));
        }
        let (source, meta) = self.resolve(&req.source)?;
        let g = sampling::variation_grid(
            &self.model,
            &VariationRequest {
                source,
                meta,
                overrides: req.overrides.clone(),
                axes: req.axes.clone(),
                z_mode: req.z_mode,
                seed: req.seed,
            },
        )?;
        let cols = g.steps.last().copied().unwrap_or(1);
        let rows = cells / cols;
        let mut tiles: Vec<Option<&[f64]>> = (0..g.images.rows()).map(|r| Some(g.images.row(r))).collect();
        tiles.push(Some(g.source_echo.data()));
        let raster = tile(&tiles, rows + 1, cols, self.image_shape(), req.pad)?;
        Ok(GridResponse {
            image: STANDARD.encode(raster.encode_png()?),
            rows,
            cols,
            steps: g.steps,
            cell_images: self.pngs(&g.images)?,
            cells: g.cells,
            source_echo: self.png(g.source_echo.data())?,
        })
    }

    pub fn interpolate(&self, req: &InterpolateRequest) -> Result<InterpolateResponse, ApiError> {
        if req.steps > MAX_IMAGES {
            return Err(ApiError::bad_request(format!("`steps` may be at most {MAX_IMAGES}")));
        }
        let a = self.resolve(&req.a)?;
        let b = self.resolve(&req.b)?;
        let path = sampling::interpolate(&self.model, (&a.0, &a.1), (&b.0, &b.1), req.axis, req.steps)?;
        let tiles: Vec<Option<&[f64]>> = (0..path.images.rows()).map(|r| Some(path.images.row(r))).collect();
        let strip = tile(&tiles, 1, req.steps, self.image_shape(), 2)?;
        let rows = |t: &Tensor| (0..t.rows()).map(|r| t.row(r).to_vec()).collect();
        Ok(InterpolateResponse {
            strip: STANDARD.encode(strip.encode_png()?),
            images: self.pngs(&path.images)?,
            z: rows(&path.z),
            psi: rows(&path.psi),
        })
    }

    pub fn dataset_sample(&self, index: usize) -> Result<DatasetSample, ApiError> {
        let d = self
            .dataset
            .as_ref()
            .ok_or_else(|| ApiError::not_found("this service has no dataset loaded"))?;
        if index >= d.len() {
            return Err(ApiError::not_found(format!("index {index} out of range 0..{}", d.len())));
        }
        let one = d.select(&[index]);
        Ok(DatasetSample {
            index,
            image: self.png(one.x.data())?,
            labels: one.meta.labels.iter().map(|f| f[0]).collect(),
            continuous: one.meta.continuous.map(Tensor::into_vec),
        })
    }
}

type Shared = Arc<Snapshot>;
type Reply<T> = Result<Json<T>, ApiError>;

/// Runs model work off the async executor.
async fn blocking<T, F>(snap: Shared, f: F) -> Reply<T>
where
    T: Send + 'static,
    F: FnOnce(&Snapshot) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&snap))
        .await
        .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn model_info(State(s): State<Shared>) -> Json<ModelInfo> {
    Json(s.info())
}

async fn encode(State(s): State<Shared>, body: Result<Json<InputSpec>, JsonRejection>) -> Reply<EncodeResponse> {
    let Json(req) = body?;
    blocking(s, move |s| s.encode(&req)).await
}

async fn decode(State(s): State<Shared>, body: Result<Json<DecodeRequest>, JsonRejection>) -> Reply<DecodeResponse> {
    let Json(req) = body?;
    blocking(s, move |s| s.decode(&req)).await
}

async fn sample(State(s): State<Shared>, body: Result<Json<SampleRequest>, JsonRejection>) -> Reply<SampleResponse> {
    let Json(req) = body?;
    blocking(s, move |s| s.sample(&req)).await
}

async fn grid(State(s): State<Shared>, body: Result<Json<GridRequest>, JsonRejection>) -> Reply<GridResponse> {
    let Json(req) = body?;
    blocking(s, move |s| s.grid(&req)).await
}

async fn interpolate(
    State(s): State<Shared>,
    body: Result<Json<InterpolateRequest>, JsonRejection>,
) -> Reply<InterpolateResponse> {
    let Json(req) = body?;
    blocking(s, move |s| s.interpolate(&req)).await
}

async fn dataset_sample(State(s): State<Shared>, UrlPath(index): UrlPath<usize>) -> Reply<DatasetSample> {
    blocking(s, move |s| s.dataset_sample(index)).await
}

pub fn router(snapshot: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model-info", get(model_info))
        .route("/encode", post(encode))
        .route("/decode", post(decode))
        .route("/sample", post(sample))
        .route("/variation-grid", post(grid))
        .route("/interpolate", post(interpolate))
        .route("/dataset-sample/{index}", get(dataset_sample))
        .with_state(snapshot)
}

/// Serves until the listener fails or ctrl-c arrives.
pub async fn serve(snapshot: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(snapshot))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
