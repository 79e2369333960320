//! Joins ground-truth and pseudo-label manifests clip by clip.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::labels::{read_labels, write_labels, DatasetManifest, EventList, ManifestEntry, Origin, SoundClass, Task};
use crate::signal::audio_duration;

/// Pseudo-label events dropped because the ground truth covers their class.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeConflict {
    pub audio: PathBuf,
    pub class: SoundClass,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    pub manifest: DatasetManifest,
    pub conflicts: Vec<MergeConflict>,
}

fn key(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_path_buf())
}

fn union(a: Task, b: Task) -> Task {
    if a == b {
        a
    } else {
        Task::Both
    }
}

/// For each ground-truth clip, keeps its labels for the classes its task
/// covers and adds pseudo-labels for the other classes. Ground truth wins any
/// class both provide. Clips without pseudo-labels pass through unchanged;
/// pseudo-only clips are appended. Merged label files carry an origin column.
pub fn merge_datasets(
    gt: &DatasetManifest,
    pl: &DatasetManifest,
    out_dir: impl AsRef<Path>,
) -> Result<MergeReport> {
    let out_dir = out_dir.as_ref();
    let mut by_audio: BTreeMap<PathBuf, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &pl.entries {
        by_audio.entry(key(&e.audio)).or_default().push(e);
    }
    let mut report = MergeReport::default();
    let mut used = std::collections::BTreeSet::new();
    if !pl.is_empty() {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }

    for (i, g) in gt.entries.iter().enumerate() {
        let k = key(&g.audio);
        let Some(pls) = by_audio.get(&k) else {
            report.manifest.entries.push(g.clone());
            continue;
        };
        used.insert(k);
        let duration = audio_duration(&g.audio).map_err(|e| match e {
            Error::NotFound(p) => Error::MissingAudio(p),
            other => other,
        })?;
        let gt_events = read_labels(&g.labels, duration)?.events;
        let gt_classes = g.task.classes();
        let mut events: Vec<_> = gt_events
            .events
            .iter()
            .map(|e| crate::labels::SoundEvent { origin: Origin::Gt, ..*e })
            .collect();
        let mut task = g.task;
        for p in pls {
            let pl_events = read_labels(&p.labels, duration)?.events;
            let mut dropped: BTreeMap<SoundClass, usize> = BTreeMap::new();
            for e in &pl_events.events {
                if gt_classes.contains(&e.class) {
                    *dropped.entry(e.class).or_default() += 1;
                } else {
                    events.push(crate::labels::SoundEvent { origin: Origin::Pseudo, ..*e });
                }
            }
            for (class, n) in dropped {
                log::warn!("{}: {n} pseudo {class} events conflict with ground truth; keeping ground truth", g.audio.display());
                report.conflicts.push(MergeConflict {
                    audio: g.audio.clone(),
                    class,
                    dropped: n,
                });
            }
            task = union(task, p.task);
        }
        let merged = EventList::new(events, duration)?;
        let stem = g.audio.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
        let labels = out_dir.join(format!("{i:05}_{stem}.merged.txt"));
        write_labels(&labels, &merged, true)?;
        report.manifest.entries.push(ManifestEntry {
            audio: g.audio.clone(),
            labels,
            split: g.split,
            origin: Origin::Gt,
            task,
        });
    }
    for p in &pl.entries {
        if !used.contains(&key(&p.audio)) {
            report.manifest.entries.push(p.clone());
        }
    }
    Ok(report)
}
