//! Sound classes, strong labels, and frame-level activity matrices.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of trainable classes (model output columns).
pub const N_CLASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SoundClass {
    S1,
    S2,
    Inspiration,
    Expiration,
    Wheeze,
    Crackle,
    Rhonchi,
    Stridor,
    /// Evaluation aggregate: wheeze, rhonchi and stridor.
    Cas,
    /// Evaluation aggregate: crackles.
    Das,
}

impl SoundClass {
    /// The eight trainable classes in column order.
    pub const TRAINABLE: [SoundClass; N_CLASSES] = [
        SoundClass::S1,
        SoundClass::S2,
        SoundClass::Inspiration,
        SoundClass::Expiration,
        SoundClass::Wheeze,
        SoundClass::Crackle,
        SoundClass::Rhonchi,
        SoundClass::Stridor,
    ];
    pub const HEART: [SoundClass; 2] = [SoundClass::S1, SoundClass::S2];
    pub const LUNG: [SoundClass; 6] = [
        SoundClass::Inspiration,
        SoundClass::Expiration,
        SoundClass::Wheeze,
        SoundClass::Crackle,
        SoundClass::Rhonchi,
        SoundClass::Stridor,
    ];

    /// Output column, or `None` for the evaluation aggregates.
    pub fn index(self) -> Option<usize> {
        Self::TRAINABLE.iter().position(|&c| c == self)
    }

    pub fn from_index(i: usize) -> Option<SoundClass> {
        Self::TRAINABLE.get(i).copied()
    }

    pub fn is_aggregate(self) -> bool {
        matches!(self, SoundClass::Cas | SoundClass::Das)
    }

    pub fn is_heart(self) -> bool {
        matches!(self, SoundClass::S1 | SoundClass::S2)
    }

    pub fn name(self) -> &'static str {
        match self {
            SoundClass::S1 => "S1",
            SoundClass::S2 => "S2",
            SoundClass::Inspiration => "Inspiration",
            SoundClass::Expiration => "Expiration",
            SoundClass::Wheeze => "Wheeze",
            SoundClass::Crackle => "Crackle",
            SoundClass::Rhonchi => "Rhonchi",
            SoundClass::Stridor => "Stridor",
            SoundClass::Cas => "CAS",
            SoundClass::Das => "DAS",
        }
    }

    /// Case-insensitive lookup including the common corpus abbreviations.
    pub fn parse(token: &str) -> Option<SoundClass> {
        let t = token.to_ascii_lowercase();
        Some(match t.as_str() {
            "s1" => SoundClass::S1,
            "s2" => SoundClass::S2,
            "i" | "insp" | "inspiration" | "inhalation" => SoundClass::Inspiration,
            "e" | "exp" | "expiration" | "exhalation" => SoundClass::Expiration,
            "w" | "wheeze" | "wheezes" => SoundClass::Wheeze,
            "c" | "d" | "das" | "crackle" | "crackles" => SoundClass::Crackle,
            "r" | "rhonchi" | "rhonchus" => SoundClass::Rhonchi,
            "st" | "stridor" => SoundClass::Stridor,
            "cas" => SoundClass::Cas,
            _ => return None,
        })
    }
}

impl fmt::Display for SoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Gt,
    Pseudo,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Gt => "gt",
            Origin::Pseudo => "pseudo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundEvent {
    pub class: SoundClass,
    pub onset: f64,
    pub offset: f64,
    #[serde(default)]
    pub origin: Origin,
}

impl SoundEvent {
    pub fn new(class: SoundClass, onset: f64, offset: f64) -> Self {
        Self {
            class,
            onset,
            offset,
            origin: Origin::Gt,
        }
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Strong labels for one clip, sorted by onset (then class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventList {
    pub events: Vec<SoundEvent>,
    pub clip_duration: f64,
}

impl EventList {
    pub fn empty(clip_duration: f64) -> Self {
        Self {
            events: Vec::new(),
            clip_duration,
        }
    }

    /// Sorts `events` and checks the per-class ordering invariant.
    pub fn new(mut events: Vec<SoundEvent>, clip_duration: f64) -> Result<Self> {
        sort_events(&mut events);
        for (i, e) in events.iter().enumerate() {
            if !(e.onset >= 0.0 && e.onset < e.offset) {
                return Err(Error::NonPositiveDuration { line: i + 1 });
            }
        }
        let list = Self {
            events,
            clip_duration,
        };
        for class in list.classes() {
            let evs: Vec<_> = list.of_class(class).collect();
            for (k, w) in evs.windows(2).enumerate() {
                if w[1].onset < w[0].offset {
                    return Err(Error::OverlapWithinClass { line: k + 2 });
                }
            }
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_class(&self, class: SoundClass) -> impl Iterator<Item = &SoundEvent> + '_ {
        self.events.iter().filter(move |e| e.class == class)
    }

    pub fn count(&self, class: SoundClass) -> usize {
        self.of_class(class).count()
    }

    /// Distinct classes present, in class order.
    pub fn classes(&self) -> Vec<SoundClass> {
        let mut c: Vec<SoundClass> = self.events.iter().map(|e| e.class).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Keeps only events whose class is in `keep`.
    pub fn retain_classes(&self, keep: &[SoundClass]) -> EventList {
        EventList {
            events: self
                .events
                .iter()
                .filter(|e| keep.contains(&e.class))
                .copied()
                .collect(),
            clip_duration: self.clip_duration,
        }
    }

    /// Events shifted by `-start` and clipped to `[0, len]`.
    pub fn slice(&self, start: f64, len: f64) -> EventList {
        let events = self
            .events
            .iter()
            .filter_map(|e| {
                let on = (e.onset - start).max(0.0);
                let off = (e.offset - start).min(len);
                (off > on).then_some(SoundEvent {
                    onset: on,
                    offset: off,
                    ..*e
                })
            })
            .collect();
        EventList {
            events,
            clip_duration: len,
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        for e in &mut self.events {
            e.origin = origin;
        }
        self
    }
}

pub(crate) fn sort_events(events: &mut [SoundEvent]) {
    events.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.class.cmp(&b.class))
            .then(a.offset.total_cmp(&b.offset))
    });
}

/// Non-fatal findings from [`parse_strong_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLabels {
    pub events: EventList,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses the strong-label text format.
///
/// One event per line: `<class> <onset_s> <offset_s> [gt|pseudo]`. Blank lines
/// and lines starting with `#` are skipped. Events are clamped to the clip.
pub fn parse_strong_labels(text: &str, clip_duration: f64) -> Result<ParsedLabels> {
    let mut diagnostics = Vec::new();
    let mut lined: Vec<(usize, SoundEvent)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 3 && toks.len() != 4 {
            return Err(Error::SyntaxError {
                line,
                msg: format!("expected 3 or 4 fields, found {}", toks.len()),
            });
        }
        let class = SoundClass::parse(toks[0]).ok_or_else(|| Error::UnknownClass {
            line,
            token: toks[0].to_string(),
        })?;
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::SyntaxError {
                    line,
                    msg: format!("`{s}` is not a number"),
                })
        };
        let (onset, offset) = (num(toks[1])?, num(toks[2])?);
        if offset <= onset {
            return Err(Error::NonPositiveDuration { line });
        }
        let origin = match toks.get(3).map(|s| s.to_ascii_lowercase()) {
            None => Origin::Gt,
            Some(s) if s == "gt" => Origin::Gt,
            Some(s) if s == "pseudo" || s == "pl" => Origin::Pseudo,
            Some(s) => {
                return Err(Error::SyntaxError {
                    line,
                    msg: format!("unknown origin `{s}`"),
                })
            }
        };
        let (on, off) = (onset.max(0.0), offset.min(clip_duration));
        if off <= on {
            diagnostics.push(Diagnostic {
                line,
                message: "event lies outside the clip; dropped".into(),
            });
            continue;
        }
        if on != onset || off != offset {
            diagnostics.push(Diagnostic {
                line,
                message: format!("clamped to [{on}, {off}]"),
            });
        }
        lined.push((
            line,
            SoundEvent {
                class,
                onset: on,
                offset: off,
                origin,
            },
        ));
    }

    lined.sort_by(|a, b| {
        a.1.onset
            .total_cmp(&b.1.onset)
            .then(a.1.class.cmp(&b.1.class))
    });
    // Within-class overlap is fatal; S1/S2 overlap is reported only, since
    // decoded predictions are polyphonic and get written in this format too.
    let mut last_off: std::collections::HashMap<SoundClass, f64> = Default::default();
    let mut last_heart: Option<(f64, SoundClass)> = None;
    for (line, e) in &lined {
        if let Some(&prev) = last_off.get(&e.class) {
            if e.onset < prev {
                return Err(Error::OverlapWithinClass { line: *line });
            }
        }
        last_off.insert(e.class, e.offset);
        if e.class.is_heart() {
            if let Some((prev_off, prev_class)) = last_heart {
                if prev_class != e.class && e.onset < prev_off {
                    diagnostics.push(Diagnostic {
                        line: *line,
                        message: "S1 and S2 overlap".into(),
                    });
                }
            }
            if last_heart.is_none_or(|(o, _)| e.offset > o) {
                last_heart = Some((e.offset, e.class));
            }
        }
    }
    let mut events: Vec<SoundEvent> = lined.into_iter().map(|(_, e)| e).collect();
    sort_events(&mut events);
    Ok(ParsedLabels {
        events: EventList {
            events,
            clip_duration,
        },
        diagnostics,
    })
}

/// Writes events in the strong-label text format.
pub fn format_events(events: &EventList, with_origin: bool) -> String {
    let mut out = String::new();
    for e in &events.events {
        out.push_str(&format!("{} {:.6} {:.6}", e.class.name(), e.onset, e.offset));
        if with_origin {
            out.push(' ');
            out.push_str(e.origin.as_str());
        }
        out.push('\n');
    }
    out
}

pub fn read_labels(path: impl AsRef<Path>, clip_duration: f64) -> Result<ParsedLabels> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_strong_labels(&text, clip_duration)
}

pub fn write_labels(path: impl AsRef<Path>, events: &EventList, with_origin: bool) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_events(events, with_origin)).map_err(|e| Error::io(path, e))
}

/// Multi-hot frame labels or binarized predictions, `n_frames x 8`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrix {
    pub values: Array2<u8>,
    pub frame_duration: f64,
}

impl ActivityMatrix {
    pub fn zeros(n_frames: usize, frame_duration: f64) -> Self {
        Self {
            values: Array2::zeros((n_frames, N_CLASSES)),
            frame_duration,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    /// Active frames per class.
    pub fn column_sums(&self) -> [usize; N_CLASSES] {
        let mut out = [0; N_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.values.column(c).iter().map(|&v| v as usize).sum();
        }
        out
    }
}

/// Sigmoid outputs, every entry strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePosteriors {
    pub values: Array2<f64>,
    pub frame_duration: f64,
}

impl FramePosteriors {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }
}

/// Frame `t` covers `[t*dt, (t+1)*dt)` and is active for a class when its
/// midpoint falls inside an event of that class. Aggregate classes are skipped.
pub fn encode_frames(events: &EventList, n_frames: usize, frame_duration: f64) -> ActivityMatrix {
    let mut m = ActivityMatrix::zeros(n_frames, frame_duration);
    for e in &events.events {
        let Some(c) = e.class.index() else { continue };
        // midpoint (t + 0.5) * dt in [onset, offset)
        let first = (e.onset / frame_duration - 0.5).ceil().max(0.0) as usize;
        let end = ((e.offset / frame_duration - 0.5).ceil().max(0.0) as usize).min(n_frames);
        for t in first..end {
            m.values[[t, c]] = 1;
        }
    }
    m
}

/// Class grouping used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScheme {
    #[default]
    Raw8,
    /// Wheeze, rhonchi and stridor become CAS; crackles become DAS.
    HfLung4,
}

/// Maps events into the evaluation class space, merging same-class overlaps
/// created by the mapping.
pub fn to_eval_classes(events: &EventList, scheme: EvalScheme) -> EventList {
    match scheme {
        EvalScheme::Raw8 => events.clone(),
        EvalScheme::HfLung4 => {
            let mut mapped: Vec<SoundEvent> = events
                .events
                .iter()
                .map(|e| {
                    let class = match e.class {
                        SoundClass::Wheeze | SoundClass::Rhonchi | SoundClass::Stridor => {
                            SoundClass::Cas
                        }
                        SoundClass::Crackle => SoundClass::Das,
                        c => c,
                    };
                    SoundEvent { class, ..*e }
                })
                .collect();
            mapped.sort_by(|a, b| a.class.cmp(&b.class).then(a.onset.total_cmp(&b.onset)));
            let mut merged: Vec<SoundEvent> = Vec::with_capacity(mapped.len());
            for e in mapped {
                match merged.last_mut() {
                    Some(last) if last.class == e.class && e.onset <= last.offset => {
                        last.offset = last.offset.max(e.offset);
                    }
                    _ => merged.push(e),
                }
            }
            sort_events(&mut merged);
            EventList {
                events: merged,
                clip_duration: events.clip_duration,
            }
        }
    }
}

/// Which organ system a recording's labels cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Heart,
    Lung,
    #[default]
    Both,
}

impl Task {
    /// Classes the labels of this task are authoritative for.
    pub fn classes(self) -> Vec<SoundClass> {
        match self {
            Task::Heart => SoundClass::HEART.to_vec(),
            Task::Lung => SoundClass::LUNG.to_vec(),
            Task::Both => SoundClass::TRAINABLE.to_vec(),
        }
    }

    pub fn class_mask(self) -> [bool; N_CLASSES] {
        let mut m = [false; N_CLASSES];
        for c in self.classes() {
            if let Some(i) = c.index() {
                m[i] = true;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default)]
    pub task: Task,
}

/// JSON array of recordings with their label files. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            e.audio = resolve(base, &e.audio);
            e.labels = resolve(base, &e.labels);
        }
        Ok(m)
    }

    /// Writes the manifest, storing paths relative to its directory when possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = DatasetManifest {
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    audio: relative_to(base, &e.audio),
                    labels: relative_to(base, &e.labels),
                    ..e.clone()
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&rel)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn relative_to(base: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_two_lines_sorted() {
        let p = parse_strong_labels("S1 1.000 1.100\nI 0.5 2.0", 10.0).unwrap();
        assert_eq!(p.events.len(), 2);
        assert_eq!(p.events.events[0].class, SoundClass::Inspiration);
        assert_eq!(p.events.events[1].class, SoundClass::S1);
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_strong_labels("S1 2.0 1.0", 10.0),
            Err(Error::NonPositiveDuration { line: 1 })
        ));
        assert!(matches!(
            parse_strong_labels("Q 0 1", 10.0),
            Err(Error::UnknownClass { line: 1, .. })
        ));
        assert!(matches!(
            parse_strong_labels("# hdr\nS1 0 x", 10.0),
            Err(Error::SyntaxError { line: 2, .. })
        ));
        assert!(matches!(
            parse_strong_labels("S1 0 1\nS1 0.5 1.5", 10.0),
            Err(Error::OverlapWithinClass { line: 2 })
        ));
    }

    #[test]
    fn parse_aliases_clamp_and_origin() {
        let p = parse_strong_labels("e 9.5 11\nDAS -0.5 0.2 pseudo\nwheezes 1 2\n", 10.0).unwrap();
        let classes: Vec<_> = p.events.events.iter().map(|e| e.class).collect();
        assert_eq!(
            classes,
            vec![SoundClass::Crackle, SoundClass::Wheeze, SoundClass::Expiration]
        );
        assert_eq!(p.events.events[0].onset, 0.0);
        assert_eq!(p.events.events[0].origin, Origin::Pseudo);
        assert_eq!(p.events.events[2].offset, 10.0);
        assert_eq!(p.diagnostics.len(), 2);
    }

    #[test]
    fn heart_overlap_is_diagnostic_only() {
        let p = parse_strong_labels("S1 0 0.1\nS2 0.05 0.15", 1.0).unwrap();
        assert_eq!(p.events.len(), 2);
        assert_eq!(p.diagnostics[0].line, 2);
    }

    #[test]
    fn format_parse_round_trip() {
        let text = "S1 1.000 1.100\nInspiration 0.5 2.0 pseudo\n";
        let a = parse_strong_labels(text, 10.0).unwrap().events;
        let b = parse_strong_labels(&format_events(&a, true), 10.0).unwrap().events;
        assert_eq!(a, b);
    }

    #[test]
    fn encode_midpoint_rule() {
        let ev = EventList::new(vec![SoundEvent::new(SoundClass::Inspiration, 0.0, 0.032)], 1.0)
            .unwrap();
        let m = encode_frames(&ev, 10, 0.016);
        for t in 0..10 {
            for c in 0..N_CLASSES {
                let want = u8::from(c == 2 && t < 2);
                assert_eq!(m.values[[t, c]], want, "t={t} c={c}");
            }
        }
        assert!(encode_frames(&EventList::empty(1.0), 5, 0.016)
            .values
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn encode_polyphony() {
        let ev = EventList::new(
            vec![
                SoundEvent::new(SoundClass::S1, 0.1, 0.2),
                SoundEvent::new(SoundClass::Inspiration, 0.0, 1.0),
            ],
            1.0,
        )
        .unwrap();
        let m = encode_frames(&ev, 62, 0.016);
        let shared = (0..62).filter(|&t| m.values[[t, 0]] == 1 && m.values[[t, 2]] == 1).count();
        assert_eq!(shared, m.column_sums()[0]);
        assert!(shared > 0);
    }

    #[test]
    fn eval_class_mapping() {
        let ev = EventList::new(
            vec![
                SoundEvent::new(SoundClass::Wheeze, 1.0, 2.0),
                SoundEvent::new(SoundClass::Rhonchi, 1.5, 3.0),
            ],
            5.0,
        )
        .unwrap();
        let out = to_eval_classes(&ev, EvalScheme::HfLung4);
        assert_eq!(out.events, vec![SoundEvent::new(SoundClass::Cas, 1.0, 3.0)]);
        assert_eq!(to_eval_classes(&ev, EvalScheme::Raw8), ev);
        let ev = EventList::new(vec![SoundEvent::new(SoundClass::Crackle, 0.0, 0.02)], 1.0).unwrap();
        assert_eq!(
            to_eval_classes(&ev, EvalScheme::HfLung4).events,
            vec![SoundEvent::new(SoundClass::Das, 0.0, 0.02)]
        );
    }

    #[test]
    fn manifest_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            entries: vec![ManifestEntry {
                audio: dir.path().join("a.wav"),
                labels: dir.path().join("a.txt"),
                split: Split::Val,
                origin: Origin::Pseudo,
                task: Task::Lung,
            }],
        };
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let raw = std::fs::read_to_string(&p).unwrap();
        assert!(raw.contains("\"audio\": \"a.wav\""));
        assert!(raw.contains("\"origin\": \"pseudo\""));
        assert_eq!(DatasetManifest::load(&p).unwrap(), m);
    }

    #[test]
    fn task_masks() {
        assert_eq!(
            Task::Heart.class_mask(),
            [true, true, false, false, false, false, false, false]
        );
        assert_eq!(Task::Lung.class_mask().iter().filter(|&&b| b).count(), 6);
        assert!(Task::Both.class_mask().iter().all(|&b| b));
    }
}
