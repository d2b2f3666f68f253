//! Request and response bodies, plus the parsers for untrusted input.

use base64::Engine;
use hyperseg_core::features::Provenance;
use hyperseg_core::image_io::decode_frame_png;
use hyperseg_core::interaction::Click;
use hyperseg_core::Tensor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub frame_png_base64: String,
    #[serde(default)]
    pub prev_frame_png_base64: Option<String>,
    pub checkpoint: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRequest {
    pub frame_png_base64: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub width: usize,
    pub height: usize,
    pub num_heads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadRank {
    pub head: usize,
    /// 1 is the head shown by default.
    pub iou_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalsResponse {
    pub proposals: Vec<HeadRank>,
    pub default_head: usize,
    /// False when the request left the click set unchanged.
    pub changed: bool,
    pub clicks: Vec<Click>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameResponse {
    pub session_id: String,
    pub width: usize,
    pub height: usize,
    pub frame_index: u64,
    pub clicks: Vec<Click>,
    pub feature_provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub checkpoint: String,
    pub width: usize,
    pub height: usize,
    pub num_heads: usize,
    pub frame_index: u64,
    pub clicks: Vec<Click>,
    pub feature_provenance: Provenance,
    pub created: u64,
    pub updated: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub id: String,
    pub num_heads: usize,
    pub feature_depth: usize,
    pub backbone_id: String,
    pub plan_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointList {
    pub checkpoints: Vec<CheckpointInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskFormat {
    /// 8-bit 0/255 PNG of the thresholded map.
    #[default]
    Png,
    /// Soft map as a tensor container.
    Tensor,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MaskQuery {
    pub head: Option<usize>,
    pub format: MaskFormat,
    /// Recompute features from the frame instead of using the cache.
    pub fresh: bool,
}

pub fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_json", e.to_string()))
}

pub fn decode_png_base64(text: &str, field: &str) -> Result<Tensor, ApiError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text.trim())
        .map_err(|e| ApiError::bad_request("bad_image", format!("{field}: {e}")))?;
    decode_frame_png(&bytes).map_err(|e| ApiError::bad_request("bad_image", format!("{field}: {e}")))
}

/// `"x,y"` path segment of a click.
pub fn parse_click_path(segment: &str) -> Result<(i64, i64), ApiError> {
    let bad = || ApiError::bad_request("bad_click", format!("expected `x,y`, got {segment:?}"));
    let (x, y) = segment.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

/// `head=m&format=png|tensor&fresh=true`, all optional.
pub fn parse_mask_query(query: &str) -> Result<MaskQuery, ApiError> {
    let mut q = MaskQuery::default();
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (key, value) = pair.split_once('=').unwrap_or((pair, ""));
        match key {
            "head" => {
                q.head = Some(
                    value
                        .parse()
                        .map_err(|_| ApiError::bad_request("bad_query", format!("head {value:?} is not a number")))?,
                )
            }
            "format" => {
                q.format = match value {
                    "png" => MaskFormat::Png,
                    "tensor" => MaskFormat::Tensor,
                    _ => return Err(ApiError::bad_request("bad_query", format!("unknown format {value:?}"))),
                }
            }
            "fresh" => {
                q.fresh = match value {
                    "" | "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(ApiError::bad_request("bad_query", format!("fresh {value:?} is not a flag"))),
                }
            }
            _ => return Err(ApiError::bad_request("bad_query", format!("unknown parameter {key:?}"))),
        }
    }
    Ok(q)
}
