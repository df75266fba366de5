use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::M, Gender::F];

    pub fn index(self) -> usize {
        match self {
            Gender::M => 0,
            Gender::F => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "M" | "m" => Some(Gender::M),
            "F" | "f" => Some(Gender::F),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub audio_path: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ann_a: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ann_b: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    /// Directory relative audio paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl CorpusManifest {
    pub fn new(records: Vec<UtteranceRecord>) -> Self {
        Self {
            records,
            base_dir: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted, deduplicated speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.speaker_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn audio_path(&self, record: &UtteranceRecord) -> PathBuf {
        let p = Path::new(&record.audio_path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

const REQUIRED: [&str; 6] = [
    "id",
    "audio_path",
    "speaker_id",
    "gender",
    "emotion",
    "duration_s",
];

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_manifest(text: &str) -> Result<CorpusManifest, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::Malformed {
            line,
            reason: "expected a JSON object".into(),
        })?;
        if let Some(field) = REQUIRED.iter().find(|f| !obj.contains_key(**f)) {
            return Err(CorpusError::MissingField { line, field });
        }
        if let Some(g) = obj["gender"].as_str() {
            if Gender::parse(g).is_none() {
                return Err(CorpusError::UnknownGender {
                    line,
                    value: g.to_string(),
                });
            }
        }
        let record: UtteranceRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
                line,
                reason: e.to_string(),
            })?;
        if !(record.duration_s > 0.0 && record.duration_s.is_finite()) {
            return Err(CorpusError::Malformed {
                line,
                reason: format!("duration_s must be positive, got {}", record.duration_s),
            });
        }
        if record.emotion.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line,
                reason: "empty emotion label".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(CorpusManifest::new(records))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut m = parse_manifest(&text)?;
    m.base_dir = path.parent().map(Path::to_path_buf);
    Ok(m)
}
