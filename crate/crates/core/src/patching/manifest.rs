use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PatchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "HE")]
    He,
    #[serde(rename = "EN")]
    En,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::He, Language::En];

    pub fn code(self) -> &'static str {
        match self {
            Language::He => "HE",
            Language::En => "EN",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = PatchError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HE" => Ok(Language::He),
            "EN" => Ok(Language::En),
            other => Err(PatchError::Manifest(format!("unknown language {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    /// Class index used by the network; female is the positive class.
    pub fn label(self) -> u8 {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn from_label(label: u8) -> Self {
        if label == 1 {
            Gender::Female
        } else {
            Gender::Male
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = PatchError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            other => Err(PatchError::Manifest(format!("unknown gender {other:?}"))),
        }
    }
}

/// One handwriting sample listed in a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormRecord {
    pub form_id: String,
    pub image_path: PathBuf,
    pub language: Language,
    pub gender: Gender,
    /// Forms sharing a writer are split and balanced together. Absent means
    /// the form is its own writer.
    pub writer_id: Option<String>,
    pub demographics: BTreeMap<String, String>,
}

impl FormRecord {
    pub fn writer_key(&self) -> &str {
        self.writer_id.as_deref().unwrap_or(&self.form_id)
    }
}

const REQUIRED: [&str; 4] = ["form_id", "image_path", "language", "gender"];
const WRITER: &str = "writer_id";

/// Parses a manifest CSV. Relative image paths are resolved against
/// `base_dir`.
pub fn parse_manifest<R: Read>(reader: R, base_dir: &Path) -> Result<Vec<FormRecord>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| PatchError::Manifest(e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = column(name)
            .ok_or_else(|| PatchError::Manifest(format!("missing column {name:?}")))?;
    }
    let writer_col = column(WRITER);

    let mut seen = HashSet::new();
    let mut forms = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row.map_err(|e| PatchError::Manifest(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let form_id = field(idx[0]).to_string();
        if form_id.is_empty() {
            return Err(PatchError::Manifest(format!("row {}: empty form_id", line + 1)));
        }
        if !seen.insert(form_id.clone()) {
            return Err(PatchError::Manifest(format!("duplicate form_id {form_id:?}")));
        }
        let raw_path = field(idx[1]);
        if raw_path.is_empty() {
            return Err(PatchError::Manifest(format!("{form_id}: empty image_path")));
        }
        let image_path = base_dir.join(raw_path);
        let language = field(idx[2])
            .parse()
            .map_err(|e| PatchError::Manifest(format!("{form_id}: {e}")))?;
        let gender = field(idx[3])
            .parse()
            .map_err(|e| PatchError::Manifest(format!("{form_id}: {e}")))?;
        let writer_id = writer_col
            .map(field)
            .filter(|w| !w.is_empty())
            .map(str::to_string);
        let demographics = headers
            .iter()
            .enumerate()
            .filter(|(i, h)| !idx.contains(i) && Some(*i) != writer_col && !h.is_empty())
            .filter_map(|(i, h)| {
                let v = field(i);
                (!v.is_empty()).then(|| (h.to_string(), v.to_string()))
            })
            .collect();
        forms.push(FormRecord {
            form_id,
            image_path,
            language,
            gender,
            writer_id,
            demographics,
        });
    }
    Ok(forms)
}

pub fn load_manifest(path: &Path) -> Result<Vec<FormRecord>> {
    let file = std::fs::File::open(path).map_err(|e| PatchError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(file, base)
}

/// Writes records as manifest CSV. Image paths are written as given; pass
/// paths relative to the manifest's directory for a relocatable manifest.
pub fn write_manifest(path: &Path, forms: &[FormRecord]) -> Result<()> {
    let mut extra: Vec<&str> = forms
        .iter()
        .flat_map(|f| f.demographics.keys().map(String::as_str))
        .collect();
    extra.sort_unstable();
    extra.dedup();

    let io = |e: csv::Error| PatchError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.push(WRITER);
    header.extend(&extra);
    w.write_record(&header).map_err(io)?;
    for f in forms {
        let mut row = vec![
            f.form_id.clone(),
            f.image_path.display().to_string(),
            f.language.code().to_string(),
            f.gender.as_str().to_string(),
            f.writer_id.clone().unwrap_or_default(),
        ];
        row.extend(extra.iter().map(|k| f.demographics.get(*k).cloned().unwrap_or_default()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| PatchError::Io(e.to_string()))
}
