//! Route handlers. Requests for one session are serialised on its slot lock
//! (FIFO); compute runs on the blocking pool.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, RawQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use hyperseg_core::interaction::Click;
use hyperseg_core::trainer::Model;

use crate::error::ApiError;
use crate::session::Session;
use crate::store::{new_id, SessionStore};
use crate::wire::*;

pub struct AppContext {
    pub store: SessionStore,
    pub models: BTreeMap<String, Arc<Model>>,
    /// Present heads by click agreement instead of head order.
    pub rank_by_clicks: bool,
}

pub type AppState = Arc<AppContext>;

pub const MAX_BODY_BYTES: usize = 64 << 20;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/checkpoints", get(list_checkpoints))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/clicks", post(add_click))
        .route("/v1/sessions/{id}/clicks/{point}", delete(remove_click))
        .route("/v1/sessions/{id}/frame", post(advance_frame))
        .route("/v1/sessions/{id}/mask", get(get_mask))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

fn model(ctx: &AppContext, id: &str) -> Result<Arc<Model>, ApiError> {
    ctx.models
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("checkpoint_not_found", format!("unknown checkpoint {id:?}")))
}

fn session_not_found(id: &str) -> ApiError {
    ApiError::not_found("session_not_found", format!("unknown session {id:?}"))
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> Result<R, ApiError> + Send + 'static) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Runs `f` with exclusive access to a loaded session.
async fn with_session<R: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session, &AppContext) -> Result<R, ApiError> + Send + 'static,
) -> Result<R, ApiError> {
    let slot = state.store.slot(id).ok_or_else(|| session_not_found(id))?;
    let mut guard = slot.lock_owned().await;
    let ctx = state.clone();
    let id = id.to_string();
    blocking(move || {
        if guard.is_none() {
            let dir = ctx.store.dir(&id);
            if !dir.is_dir() {
                return Err(session_not_found(&id));
            }
            *guard = Some(Session::load(&dir)?);
        }
        let session = guard.as_mut().expect("loaded");
        let out = f(session, &ctx);
        ctx.store.account(&id, session.bytes());
        drop(guard);
        ctx.store.enforce_budget(&id);
        out
    })
    .await
}

async fn list_checkpoints(State(state): State<AppState>) -> Json<CheckpointList> {
    let checkpoints = state
        .models
        .iter()
        .map(|(id, m)| CheckpointInfo {
            id: id.clone(),
            num_heads: m.params.config.num_heads,
            feature_depth: m.params.config.feature_depth,
            backbone_id: m.backbone.id.clone(),
            plan_id: m.plan.id(),
        })
        .collect();
    Json(CheckpointList { checkpoints })
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse_json(&body)?;
    let model = model(&state, &req.checkpoint)?;
    let ctx = state.clone();
    let resp = blocking(move || {
        let current = decode_png_base64(&req.frame_png_base64, "frame_png_base64")?;
        let previous = req
            .prev_frame_png_base64
            .as_deref()
            .map(|p| decode_png_base64(p, "prev_frame_png_base64"))
            .transpose()?;
        let session = Session::create(new_id(), req.checkpoint, &model, current, previous)?;
        session.save_all(&ctx.store.dir(&session.id))?;
        let (width, height) = session.extents();
        let resp = CreateSessionResponse {
            session_id: session.id.clone(),
            width,
            height,
            num_heads: model.params.config.num_heads,
        };
        let id = session.id.clone();
        ctx.store.insert(session);
        ctx.store.enforce_budget(&id);
        Ok(resp)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(resp)).into_response())
}

fn proposals_response(s: &mut Session, ctx: &AppContext, changed: bool) -> Result<ProposalsResponse, ApiError> {
    let model = model(ctx, &s.checkpoint)?;
    let p = s.proposals(&model)?;
    let order = s.ranking(&p, ctx.rank_by_clicks)?;
    let mut proposals: Vec<HeadRank> = order
        .iter()
        .enumerate()
        .map(|(rank, &head)| HeadRank { head, iou_rank: rank + 1 })
        .collect();
    proposals.sort_by_key(|r| r.head);
    Ok(ProposalsResponse {
        proposals,
        default_head: order[0],
        changed,
        clicks: s.clicks.clicks(),
    })
}

async fn add_click(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<ProposalsResponse>, ApiError> {
    let click: Click = parse_json(&body)?;
    let resp = with_session(&state, &id, move |s, ctx| {
        let p = s
            .clicks
            .point(click.x, click.y)
            .map_err(|e| ApiError::bad_request("click_out_of_bounds", e.to_string()))?;
        let changed = s
            .clicks
            .insert(p, click.polarity)
            .map_err(|e| ApiError {
                status: StatusCode::CONFLICT,
                code: "click_conflict",
                message: e.to_string(),
            })?;
        if changed {
            s.touch();
            s.save_state(&ctx.store.dir(&s.id))?;
        }
        proposals_response(s, ctx, changed)
    })
    .await?;
    Ok(Json(resp))
}

async fn remove_click(
    State(state): State<AppState>,
    Path((id, point)): Path<(String, String)>,
) -> Result<Json<ProposalsResponse>, ApiError> {
    let (x, y) = parse_click_path(&point)?;
    let resp = with_session(&state, &id, move |s, ctx| {
        let p = s
            .clicks
            .point(x, y)
            .map_err(|e| ApiError::bad_request("click_out_of_bounds", e.to_string()))?;
        if s.clicks.remove(p).is_none() {
            return Err(ApiError::not_found("click_not_found", format!("no click at ({x}, {y})")));
        }
        s.touch();
        s.save_state(&ctx.store.dir(&s.id))?;
        proposals_response(s, ctx, true)
    })
    .await?;
    Ok(Json(resp))
}

async fn advance_frame(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<FrameResponse>, ApiError> {
    let req: FrameRequest = parse_json(&body)?;
    let resp = with_session(&state, &id, move |s, ctx| {
        let frame = decode_png_base64(&req.frame_png_base64, "frame_png_base64")?;
        let model = model(ctx, &s.checkpoint)?;
        s.advance(&model, frame)?;
        s.save_all(&ctx.store.dir(&s.id))?;
        let (width, height) = s.extents();
        Ok(FrameResponse {
            session_id: s.id.clone(),
            width,
            height,
            frame_index: s.frame_index,
            clicks: s.clicks.clicks(),
            feature_provenance: s.features.provenance.clone(),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionResponse>, ApiError> {
    let resp = with_session(&state, &id, |s, ctx| {
        let model = model(ctx, &s.checkpoint)?;
        let (width, height) = s.extents();
        Ok(SessionResponse {
            session_id: s.id.clone(),
            checkpoint: s.checkpoint.clone(),
            width,
            height,
            num_heads: model.params.config.num_heads,
            frame_index: s.frame_index,
            clicks: s.clicks.clicks(),
            feature_provenance: s.features.provenance.clone(),
            created: s.created,
            updated: s.updated,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let slot = state.store.slot(&id).ok_or_else(|| session_not_found(&id))?;
    let mut guard = slot.lock_owned().await;
    let dir = state.store.dir(&id);
    if !dir.is_dir() {
        return Err(session_not_found(&id));
    }
    *guard = None;
    state.store.forget(&id);
    blocking(move || std::fs::remove_dir_all(&dir).map_err(|e| ApiError::internal(e.to_string()))).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_mask(State(state): State<AppState>, Path(id): Path<String>, RawQuery(query): RawQuery) -> Result<Response, ApiError> {
    let q = parse_mask_query(query.as_deref().unwrap_or(""))?;
    let (bytes, order) = with_session(&state, &id, move |s, ctx| {
        let model = model(ctx, &s.checkpoint)?;
        let p = if q.fresh { s.proposals_uncached(&model)? } else { s.proposals(&model)? };
        let order = s.ranking(&p, ctx.rank_by_clicks)?;
        let head = q.head.unwrap_or(order[0]);
        let map = p
            .head(head)
            .map_err(|e| ApiError::bad_request("head_out_of_range", e.to_string()))?;
        let bytes = match q.format {
            MaskFormat::Png => hyperseg_core::image_io::encode_mask_png(&map)?,
            MaskFormat::Tensor => map.to_bytes(),
        };
        Ok((bytes, order))
    })
    .await?;
    let content_type = match q.format {
        MaskFormat::Png => "image/png",
        MaskFormat::Tensor => "application/octet-stream",
    };
    let ranking = order.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
    Ok(([(header::CONTENT_TYPE, content_type.to_string()), (header::HeaderName::from_static("x-head-ranking"), ranking)], bytes).into_response())
}
