//! The memory-bank structure conditioning each frame's proposal: permanent
//! prompt entries, a capacity-bounded occlusion store (FIFO within itself),
//! a score-gated context store, and a recent-frame slot — plus the plain
//! FIFO bank that models the baseline tracker.
//!
//! The occlusion store is always populated first: when it grows, the context
//! store is truncated so that, excluding prompts and the recent slot, the
//! bank never exceeds its total capacity.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::ClassId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntrySource {
    Prompt,
    Orm,
    Cam,
    Recent,
}

/// One stored frame: masks plus the scores that admitted it.
#[derive(Clone, Debug)]
pub struct MemoryEntry {
    pub frame_index: usize,
    pub source: EntrySource,
    pub class_masks: BTreeMap<ClassId, BinaryMask>,
    pub avg_confidence: f64,
    pub avg_predicted_iou: f64,
    pub interference_flag: bool,
}

impl MemoryEntry {
    fn quality(&self) -> f64 {
        (self.avg_confidence + self.avg_predicted_iou) / 2.0
    }
}

/// Capacities and thresholds for the bank and the per-frame pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankConfig {
    pub total_capacity: usize,
    pub orm_capacity: usize,
    pub cam_conf_threshold: f64,
    pub cam_iou_threshold: f64,
    pub theta_iou: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub epsilon: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            total_capacity: 12,
            orm_capacity: 5,
            cam_conf_threshold: 0.75,
            cam_iou_threshold: 0.80,
            theta_iou: 0.8,
            band_lo: 0.6,
            band_hi: 0.9,
            epsilon: 1e-6,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_capacity < 3 {
            return Err(Error::InvalidBankConfig(
                "total_capacity must be at least 3".into(),
            ));
        }
        if self.orm_capacity == 0 || self.orm_capacity > self.total_capacity - 2 {
            return Err(Error::InvalidBankConfig(format!(
                "orm_capacity {} must be in 1..={} (total_capacity - 2)",
                self.orm_capacity,
                self.total_capacity - 2
            )));
        }
        if !(self.band_lo > 0.0 && self.band_hi < 1.0 && self.band_lo < self.band_hi) {
            return Err(Error::InvalidBankConfig(format!(
                "band [{}, {}] must satisfy 0 < lo < hi < 1",
                self.band_lo, self.band_hi
            )));
        }
        for (name, v) in [
            ("cam_conf_threshold", self.cam_conf_threshold),
            ("cam_iou_threshold", self.cam_iou_threshold),
            ("theta_iou", self.theta_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidBankConfig(format!(
                    "{name} {v} outside [0, 1]"
                )));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidBankConfig("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Slots the context store may use given the occlusion store's size.
    fn cam_ceiling(&self, orm_len: usize) -> usize {
        self.total_capacity - 2 - orm_len
    }
}

/// Frame indices currently held per store, for dumps and tests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BankState {
    pub prompt: Vec<usize>,
    pub orm: Vec<usize>,
    pub cam: Vec<usize>,
    pub recent: Option<usize>,
}

/// The augmented memory bank: prompts + occlusion store + context store +
/// recent slot.
#[derive(Clone, Debug)]
pub struct MemoryBank {
    cfg: BankConfig,
    prompt_entries: BTreeMap<ClassId, MemoryEntry>,
    orm_entries: VecDeque<MemoryEntry>,
    cam_entries: Vec<MemoryEntry>,
    recent_entry: Option<MemoryEntry>,
}

impl MemoryBank {
    pub fn new(cfg: BankConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(MemoryBank {
            cfg,
            prompt_entries: BTreeMap::new(),
            orm_entries: VecDeque::new(),
            cam_entries: Vec::new(),
            recent_entry: None,
        })
    }

    pub fn config(&self) -> &BankConfig {
        &self.cfg
    }

    /// Permanent per-class prompt entry; never evicted, never counted
    /// against capacity.
    pub fn install_prompt(
        &mut self,
        class: ClassId,
        frame_index: usize,
        mask: BinaryMask,
    ) -> Result<()> {
        if self.prompt_entries.contains_key(&class) {
            return Err(Error::DuplicatePrompt(class.0));
        }
        let mut class_masks = BTreeMap::new();
        class_masks.insert(class, mask);
        self.prompt_entries.insert(
            class,
            MemoryEntry {
                frame_index,
                source: EntrySource::Prompt,
                class_masks,
                avg_confidence: 1.0,
                avg_predicted_iou: 1.0,
                interference_flag: false,
            },
        );
        Ok(())
    }

    pub fn prompted_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.prompt_entries.keys().copied()
    }

    /// Append an interference-flagged entry to the occlusion store, rotating
    /// out its oldest entry when full and truncating the context store if
    /// the partition would overflow.
    pub fn orm_insert(&mut self, entry: MemoryEntry) -> Result<()> {
        debug_assert!(entry.interference_flag && entry.source == EntrySource::Orm);
        if self.orm_entries.iter().any(|e| e.frame_index == entry.frame_index) {
            return Err(Error::DuplicateOrmFrame(entry.frame_index));
        }
        // the same frame cannot live in both curated stores
        self.cam_entries.retain(|e| e.frame_index != entry.frame_index);
        if self.orm_entries.len() == self.cfg.orm_capacity {
            self.orm_entries.pop_front();
        }
        self.orm_entries.push_back(entry);
        let ceiling = self.cfg.cam_ceiling(self.orm_entries.len());
        while self.cam_entries.len() > ceiling {
            self.evict_weakest_cam();
        }
        Ok(())
    }

    /// Both scores at or above their thresholds, and the frame not already
    /// held as a prompt or occlusion entry.
    pub fn cam_admit(&self, entry: &MemoryEntry) -> bool {
        entry.avg_confidence >= self.cfg.cam_conf_threshold
            && entry.avg_predicted_iou >= self.cfg.cam_iou_threshold
            && !self
                .orm_entries
                .iter()
                .any(|e| e.frame_index == entry.frame_index)
            && !self
                .prompt_entries
                .values()
                .any(|e| e.frame_index == entry.frame_index)
    }

    /// Append to the context store, evicting the lowest-quality entry (mean
    /// of confidence and predicted IoU; ties go to the oldest frame) when
    /// over the partition ceiling.
    pub fn cam_insert(&mut self, entry: MemoryEntry) {
        debug_assert!(self.cam_admit(&entry));
        self.cam_entries.retain(|e| e.frame_index != entry.frame_index);
        self.cam_entries.push(entry);
        let ceiling = self.cfg.cam_ceiling(self.orm_entries.len());
        while self.cam_entries.len() > ceiling {
            self.evict_weakest_cam();
        }
    }

    fn evict_weakest_cam(&mut self) {
        let mut weakest = 0;
        for i in 1..self.cam_entries.len() {
            let (a, b) = (&self.cam_entries[i], &self.cam_entries[weakest]);
            if a.quality() < b.quality()
                || (a.quality() == b.quality() && a.frame_index < b.frame_index)
            {
                weakest = i;
            }
        }
        self.cam_entries.remove(weakest);
    }

    pub fn set_recent(&mut self, entry: MemoryEntry) {
        self.recent_entry = Some(entry);
    }

    /// Context in conditioning order: prompts (ascending class), occlusion
    /// entries oldest first, context entries oldest first, then the recent
    /// slot. Non-prompt entries are deduplicated by frame index.
    pub fn assemble_context(&self) -> Vec<&MemoryEntry> {
        let mut out: Vec<&MemoryEntry> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for entry in self.prompt_entries.values() {
            seen.push(entry.frame_index);
            out.push(entry);
        }
        let non_prompt = self
            .orm_entries
            .iter()
            .chain(self.cam_entries.iter())
            .chain(self.recent_entry.iter());
        for entry in non_prompt {
            if !seen.contains(&entry.frame_index) {
                seen.push(entry.frame_index);
                out.push(entry);
            }
        }
        out
    }

    pub fn orm_len(&self) -> usize {
        self.orm_entries.len()
    }

    pub fn cam_len(&self) -> usize {
        self.cam_entries.len()
    }

    pub fn state(&self) -> BankState {
        BankState {
            prompt: self.prompt_entries.values().map(|e| e.frame_index).collect(),
            orm: self.orm_entries.iter().map(|e| e.frame_index).collect(),
            cam: self.cam_entries.iter().map(|e| e.frame_index).collect(),
            recent: self.recent_entry.as_ref().map(|e| e.frame_index),
        }
    }
}

/// Baseline bank: prompts plus a plain FIFO queue of recent frames.
#[derive(Clone, Debug)]
pub struct FifoBank {
    cfg: BankConfig,
    prompt_entries: BTreeMap<ClassId, MemoryEntry>,
    queue: VecDeque<MemoryEntry>,
}

impl FifoBank {
    pub fn new(cfg: BankConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(FifoBank {
            cfg,
            prompt_entries: BTreeMap::new(),
            queue: VecDeque::new(),
        })
    }

    pub fn install_prompt(
        &mut self,
        class: ClassId,
        frame_index: usize,
        mask: BinaryMask,
    ) -> Result<()> {
        if self.prompt_entries.contains_key(&class) {
            return Err(Error::DuplicatePrompt(class.0));
        }
        let mut class_masks = BTreeMap::new();
        class_masks.insert(class, mask);
        self.prompt_entries.insert(
            class,
            MemoryEntry {
                frame_index,
                source: EntrySource::Prompt,
                class_masks,
                avg_confidence: 1.0,
                avg_predicted_iou: 1.0,
                interference_flag: false,
            },
        );
        Ok(())
    }

    pub fn prompted_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.prompt_entries.keys().copied()
    }

    /// Push back; evict the front when the queue is at capacity
    /// (`total_capacity - 1`).
    pub fn update(&mut self, entry: MemoryEntry) {
        if self.queue.len() == self.cfg.total_capacity - 1 {
            self.queue.pop_front();
        }
        self.queue.push_back(entry);
    }

    /// Prompts (ascending class) followed by the queue in insertion order.
    pub fn context(&self) -> Vec<&MemoryEntry> {
        self.prompt_entries
            .values()
            .chain(self.queue.iter())
            .collect()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn queue_frames(&self) -> Vec<usize> {
        self.queue.iter().map(|e| e.frame_index).collect()
    }
}
