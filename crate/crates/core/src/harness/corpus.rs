//! On-disk corpus layout:
//!
//! ```text
//! <root>/labels.csv                 video,label
//! <root>/videos/<id>/frame_%06d.pgm
//! <root>/annotations/<id>.csv       frame,x,y,w,h
//! <root>/splits/split<k>_{train,test}.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoEntry {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    /// Sorted by id.
    pub videos: Vec<VideoEntry>,
    /// Distinct labels, sorted; a video's class index is its position here.
    pub classes: Vec<String>,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join("labels.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut videos = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("video")) {
                continue;
            }
            let (id, label) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected video,label".into() })?;
            videos.push(VideoEntry { id: id.trim().to_string(), label: label.trim().to_string() });
        }
        videos.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = videos.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Format(format!("video {} listed twice", w[0].id)));
        }
        let mut classes: Vec<String> = videos.iter().map(|v| v.label.clone()).collect();
        classes.sort();
        classes.dedup();
        Ok(Self { root: root.to_path_buf(), videos, classes })
    }

    pub fn video_dir(&self, id: &str) -> PathBuf {
        self.root.join("videos").join(id)
    }

    pub fn annotation_path(&self, id: &str) -> PathBuf {
        self.root.join("annotations").join(format!("{id}.csv"))
    }

    pub fn class_index(&self, label: &str) -> Option<u32> {
        self.classes.iter().position(|c| c == label).map(|i| i as u32)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.videos.binary_search_by(|v| v.id.as_str().cmp(id)).ok()
    }
}

/// Video ids, one per line; blank lines and `#` comments are skipped.
pub fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn write_split(path: &Path, ids: &[String]) -> Result<()> {
    let mut out = ids.join("\n");
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
