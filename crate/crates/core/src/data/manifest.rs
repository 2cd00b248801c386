use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three depression-severity classification schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Ternary,
    Quinary,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Binary, Task::Ternary, Task::Quinary];

    pub fn n_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Ternary => 3,
            Task::Quinary => 5,
        }
    }

    pub fn from_n_classes(n: usize) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.n_classes() == n)
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Ternary => "ternary",
            Task::Quinary => "quinary",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task {s:?} (binary, ternary, quinary)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub binary: usize,
    pub ternary: usize,
    pub quinary: usize,
}

impl Labels {
    /// Labels of all three tasks from a quinary severity level.
    pub fn from_severity(severity: usize) -> Labels {
        Labels {
            binary: usize::from(severity >= 1),
            ternary: match severity {
                0 => 0,
                1 | 2 => 1,
                _ => 2,
            },
            quinary: severity,
        }
    }

    pub fn get(&self, task: Task) -> usize {
        match task {
            Task::Binary => self.binary,
            Task::Ternary => self.ternary,
            Task::Quinary => self.quinary,
        }
    }
}

/// A Big5 trait given either as a level ("high") or a numeric score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraitScore {
    Score(f64),
    Level(String),
}

impl fmt::Display for TraitScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraitScore::Score(v) => write!(f, "{v}"),
            TraitScore::Level(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonalityProfile {
    pub extraversion: TraitScore,
    pub agreeableness: TraitScore,
    pub openness: TraitScore,
    pub neuroticism: TraitScore,
    pub conscientiousness: TraitScore,
    pub age: u32,
    pub gender: String,
    pub origin: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioPaths {
    pub lld: PathBuf,
    pub mfcc: PathBuf,
    pub wav2vec: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualPaths {
    pub openface: PathBuf,
    pub resnet: PathBuf,
    pub densenet: PathBuf,
}

/// One subject. Relative paths are resolved against the manifest's directory
/// on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub audio_paths: AudioPaths,
    pub visual_paths: VisualPaths,
    pub personality: PersonalityProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personality_embedding_path: Option<PathBuf>,
    pub labels: Labels,
}

impl SampleRecord {
    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [
            &self.audio_paths.lld,
            &self.audio_paths.mfcc,
            &self.audio_paths.wav2vec,
            &self.visual_paths.openface,
            &self.visual_paths.resnet,
            &self.visual_paths.densenet,
        ]
        .into_iter()
        .chain(self.personality_embedding_path.as_ref())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.audio_paths.lld);
        fix(&mut self.audio_paths.mfcc);
        fix(&mut self.audio_paths.wav2vec);
        fix(&mut self.visual_paths.openface);
        fix(&mut self.visual_paths.resnet);
        fix(&mut self.visual_paths.densenet);
        if let Some(p) = self.personality_embedding_path.as_mut() {
            fix(p);
        }
    }
}

/// Same shape as [`SampleRecord`] but with raw label integers, so range and
/// presence problems can be reported alongside the line number.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    audio_paths: AudioPaths,
    visual_paths: VisualPaths,
    personality: PersonalityProfile,
    #[serde(default)]
    personality_embedding_path: Option<PathBuf>,
    labels: RawLabels,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabels {
    binary: Option<i64>,
    ternary: Option<i64>,
    quinary: Option<i64>,
}

fn check_label(task: Task, value: Option<i64>) -> std::result::Result<usize, String> {
    let v = value.ok_or_else(|| format!("missing {task} label"))?;
    usize::try_from(v)
        .ok()
        .filter(|&v| v < task.n_classes())
        .ok_or_else(|| format!("{task} label {v} out of range 0..{}", task.n_classes()))
}

fn validate_line(line: &str, base: &Path) -> std::result::Result<SampleRecord, Vec<String>> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| vec![e.to_string()])?;
    let mut problems = Vec::new();
    let mut label = |task, v| {
        check_label(task, v).unwrap_or_else(|msg| {
            problems.push(msg);
            0
        })
    };
    let labels = Labels {
        binary: label(Task::Binary, raw.labels.binary),
        ternary: label(Task::Ternary, raw.labels.ternary),
        quinary: label(Task::Quinary, raw.labels.quinary),
    };
    if raw.personality.age == 0 {
        problems.push("age must be positive".into());
    }
    let mut rec = SampleRecord {
        id: raw.id,
        audio_paths: raw.audio_paths,
        visual_paths: raw.visual_paths,
        personality: raw.personality,
        personality_embedding_path: raw.personality_embedding_path,
        labels,
    };
    rec.resolve(base);
    for p in rec.paths() {
        if !p.is_file() {
            problems.push(format!("missing file {}", p.display()));
        }
    }
    if problems.is_empty() {
        Ok(rec)
    } else {
        Err(problems)
    }
}

/// Reads a JSON-lines manifest. Blank lines are skipped. Every invalid line is
/// collected into a single [`Error::Manifest`].
pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match validate_line(line, base) {
            Ok(rec) => {
                if let Some(first) = seen.get(&rec.id) {
                    errors.push(format!("line {lineno}: duplicate id {:?} (first on line {first})", rec.id));
                } else {
                    seen.insert(rec.id.clone(), lineno);
                    records.push(rec);
                }
            }
            Err(problems) => {
                errors.extend(problems.into_iter().map(|p| format!("line {lineno}: {p}")));
            }
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(Error::Manifest {
            path: path.to_path_buf(),
            errors,
        })
    }
}

pub fn write_manifest(records: &[SampleRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
