//! Directory datasets: `<root>/<clip>/frames/NNNNN.png` with matching
//! `<root>/<clip>/masks/NNNNN.png` (8-bit, 0/255).

use std::path::{Path, PathBuf};

use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::image_io::{save_frame, save_mask};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetItem {
    /// `<clip>/<stem>`.
    pub name: String,
    pub frame: PathBuf,
    /// Preceding frame of the same clip, if any.
    pub previous: Option<PathBuf>,
    /// Present when the mask file exists.
    pub mask: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub items: Vec<DatasetItem>,
}

fn is_frame_name(name: &str) -> bool {
    name.strip_suffix(".png")
        .is_some_and(|stem| !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_digit()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let e = e.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = e.file_name().to_str() {
            out.push((name.to_string(), e.path()));
        }
    }
    out.sort();
    Ok(out)
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::arg(format!("dataset root {} is not a directory", root.display())));
        }
        let mut items = Vec::new();
        for (clip, clip_dir) in sorted_entries(root)? {
            let frames = clip_dir.join("frames");
            if !frames.is_dir() {
                continue;
            }
            let mut previous = None;
            for (name, path) in sorted_entries(&frames)? {
                if !is_frame_name(&name) {
                    continue;
                }
                let mask = clip_dir.join("masks").join(&name);
                items.push(DatasetItem {
                    name: format!("{clip}/{}", name.trim_end_matches(".png")),
                    frame: path.clone(),
                    previous: previous.replace(path),
                    mask: mask.is_file().then_some(mask),
                });
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Writes `n_scenes` two-frame clips (`scene_NNN`), the object moving by the
/// scene's motion between `00000.png` and `00001.png`.
pub fn write_synthetic_dataset(root: &Path, n_scenes: usize, seed: u64, size: Option<(usize, usize)>) -> Result<()> {
    for i in 0..n_scenes {
        let scene_seed = super::mix(seed, i as u64, 0);
        let spec = match size {
            Some((w, h)) => SceneSpec::random_with_size(scene_seed, w, h),
            None => SceneSpec::random(scene_seed),
        };
        let clip = root.join(format!("scene_{i:03}"));
        let (frames, masks) = (clip.join("frames"), clip.join("masks"));
        for d in [&frames, &masks] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let prev = (spec.centre.0 - spec.motion.0, spec.centre.1 - spec.motion.1);
        for (k, c) in [prev, spec.centre].into_iter().enumerate() {
            let name = format!("{k:05}.png");
            save_frame(&spec.frame_at(c), &frames.join(&name))?;
            save_mask(&spec.mask_at(c), &masks.join(&name))?;
        }
    }
    Ok(())
}
