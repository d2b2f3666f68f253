//! One annotation session: frames, cached features, clicks and proposals.

use std::collections::VecDeque;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use hyperseg_core::features::{FeatureStack, Provenance};
use hyperseg_core::interaction::{Click, ClickState};
use hyperseg_core::losses::ClickMasks;
use hyperseg_core::segnet::SegmentationProposals;
use hyperseg_core::trainer::Model;
use hyperseg_core::{Error, Result, Tensor};
use serde::{Deserialize, Serialize};

const PROPOSAL_CACHE: usize = 8;

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Persisted metadata; tensors live next to it as containers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    pub id: String,
    pub checkpoint: String,
    pub width: usize,
    pub height: usize,
    pub frame_index: u64,
    pub created: u64,
    pub updated: u64,
    pub clicks: Vec<Click>,
    pub provenance: Provenance,
    pub tile_count: usize,
}

pub const STATE_FILE: &str = "state.json";
const CURRENT_FILE: &str = "current.hseg";
const PREVIOUS_FILE: &str = "previous.hseg";
const FEATURES_FILE: &str = "features.hseg";

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub checkpoint: String,
    pub current: Tensor,
    pub previous: Tensor,
    pub features: FeatureStack,
    pub clicks: ClickState,
    pub frame_index: u64,
    pub created: u64,
    pub updated: u64,
    proposals: VecDeque<(String, SegmentationProposals)>,
}

impl Session {
    /// Extracts features for `current`; a missing previous frame is the
    /// current one repeated.
    pub fn create(id: String, checkpoint: String, model: &Model, current: Tensor, previous: Option<Tensor>) -> Result<Self> {
        let previous = previous.unwrap_or_else(|| current.clone());
        if previous.shape() != current.shape() {
            return Err(Error::Argument(format!(
                "previous frame {:?} differs from current {:?}",
                previous.shape(),
                current.shape()
            )));
        }
        let features = model.extract(&current)?;
        let (w, h) = (current.shape()[1], current.shape()[2]);
        let t = now();
        Ok(Self {
            id,
            checkpoint,
            current,
            previous,
            features,
            clicks: ClickState::new(w, h),
            frame_index: 0,
            created: t,
            updated: t,
            proposals: VecDeque::new(),
        })
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.current.shape()[1], self.current.shape()[2])
    }

    /// Moves to a new frame of the same size and clears the clicks.
    pub fn advance(&mut self, model: &Model, frame: Tensor) -> Result<()> {
        if frame.shape() != self.current.shape() {
            return Err(Error::Argument(format!(
                "new frame {:?} differs from session frames {:?}",
                frame.shape(),
                self.current.shape()
            )));
        }
        let features = model.extract(&frame)?;
        self.previous = std::mem::replace(&mut self.current, frame);
        self.features = features;
        let (w, h) = self.extents();
        self.clicks = ClickState::new(w, h);
        self.frame_index += 1;
        self.proposals.clear();
        self.touch();
        Ok(())
    }

    pub fn touch(&mut self) {
        self.updated = now();
    }

    /// Proposals for the current click set, from the cache when possible.
    pub fn proposals(&mut self, model: &Model) -> Result<SegmentationProposals> {
        let key = self.clicks.to_json();
        if let Some((_, p)) = self.proposals.iter().find(|(k, _)| *k == key) {
            return Ok(p.clone());
        }
        let p = model.propose(&self.features.features, &self.current, Some(&self.previous), &self.clicks)?;
        if self.proposals.len() == PROPOSAL_CACHE {
            self.proposals.pop_front();
        }
        self.proposals.push_back((key, p.clone()));
        Ok(p)
    }

    /// Proposals from freshly extracted features, bypassing every cache.
    pub fn proposals_uncached(&self, model: &Model) -> Result<SegmentationProposals> {
        let features = model.extract(&self.current)?;
        model.propose(&features.features, &self.current, Some(&self.previous), &self.clicks)
    }

    /// Head order for presentation.
    pub fn ranking(&self, proposals: &SegmentationProposals, by_clicks: bool) -> Result<Vec<usize>> {
        if by_clicks {
            let (positive, negative) = self.clicks.masks();
            proposals.rank_by_click_agreement(&ClickMasks { positive, negative })
        } else {
            Ok(proposals.rank_heads())
        }
    }

    /// Approximate resident size.
    pub fn bytes(&self) -> usize {
        let t = self.current.len() + self.previous.len() + self.features.features.len();
        let p: usize = self.proposals.iter().map(|(k, p)| k.len() + 8 * p.soft_maps.len()).sum();
        8 * t + p
    }

    pub fn state(&self) -> SessionState {
        let (width, height) = self.extents();
        SessionState {
            id: self.id.clone(),
            checkpoint: self.checkpoint.clone(),
            width,
            height,
            frame_index: self.frame_index,
            created: self.created,
            updated: self.updated,
            clicks: self.clicks.clicks(),
            provenance: self.features.provenance.clone(),
            tile_count: self.features.tile_count,
        }
    }

    pub fn save_state(&self, dir: &Path) -> Result<()> {
        let path = dir.join(STATE_FILE);
        let tmp = dir.join("state.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&self.state())?).map_err(|e| Error::Io {
            path: tmp.clone(),
            source: e,
        })?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::Io { path, source: e })
    }

    pub fn save_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        self.current.save(dir.join(CURRENT_FILE))?;
        self.previous.save(dir.join(PREVIOUS_FILE))?;
        self.features.features.save(dir.join(FEATURES_FILE))?;
        self.save_state(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(STATE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
        let state: SessionState = serde_json::from_str(&text)?;
        let current = Tensor::load(dir.join(CURRENT_FILE))?;
        let previous = Tensor::load(dir.join(PREVIOUS_FILE))?;
        let features = Tensor::load(dir.join(FEATURES_FILE))?;
        let expect = [3, state.width, state.height];
        if current.shape() != expect || previous.shape() != expect || features.shape()[1..] != expect[1..] {
            return Err(Error::Format {
                what: "session store",
                detail: format!("stored tensors disagree with {}x{}", state.width, state.height),
            });
        }
        let mut clicks = ClickState::new(state.width, state.height);
        for c in &state.clicks {
            let p = clicks.point(c.x, c.y)?;
            clicks.insert(p, c.polarity)?;
        }
        Ok(Self {
            id: state.id,
            checkpoint: state.checkpoint,
            current,
            previous,
            features: FeatureStack {
                features,
                provenance: state.provenance,
                tile_count: state.tile_count,
            },
            clicks,
            frame_index: state.frame_index,
            created: state.created,
            updated: state.updated,
            proposals: VecDeque::new(),
        })
    }
}
