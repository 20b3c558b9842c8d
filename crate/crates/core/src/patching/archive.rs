//! On-disk patch archive: a directory holding `index.csv`, `spec.json` and
//! one binary file per form under `patches/`.
//!
//! Patch file layout, little-endian:
//!
//! ```text
//! magic "GDXP" | version u16 | height u16 | width u16 | count u32
//! count × ( x u32 | y u32 | height·width gray bytes )
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::{FormPatches, FormRecord, Patch, PatchDataset, PatchError, PatchSpec, Result};

pub const PATCH_MAGIC: &[u8; 4] = b"GDXP";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 2 + 4;

pub fn encode_patch_file(patches: &[Patch]) -> Result<Vec<u8>> {
    let (h, w) = patches.first().map_or((0, 0), |p| (p.height, p.width));
    if patches.iter().any(|p| p.height != h || p.width != w || p.gray.len() != h * w) {
        return Err(PatchError::Archive("patches of one form must share dims".into()));
    }
    let (h16, w16) = (
        u16::try_from(h).map_err(|_| PatchError::Archive("patch too tall".into()))?,
        u16::try_from(w).map_err(|_| PatchError::Archive("patch too wide".into()))?,
    );
    let mut out = Vec::with_capacity(HEADER_LEN + patches.len() * (8 + h * w));
    out.extend_from_slice(PATCH_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    out.extend_from_slice(&(patches.len() as u32).to_le_bytes());
    for p in patches {
        out.extend_from_slice(&(p.origin.0 as u32).to_le_bytes());
        out.extend_from_slice(&(p.origin.1 as u32).to_le_bytes());
        out.extend_from_slice(&p.gray);
    }
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> PatchError {
    PatchError::Archive(msg.into())
}

pub fn decode_patch_file(bytes: &[u8], form_id: &str) -> Result<Vec<Patch>> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != PATCH_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let (h, w) = (u16_at(6) as usize, u16_at(8) as usize);
    let count = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    let record = 8 + h * w;
    if count > 0 && h * w == 0 {
        return Err(corrupt("zero-sized patches"));
    }
    let expected = count
        .checked_mul(record)
        .ok_or_else(|| corrupt("patch count overflows"))?;
    if body.len() != expected {
        return Err(corrupt(format!(
            "expected {expected} body bytes for {count} patches, found {}",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(record.max(1))
        .take(count)
        .map(|chunk| {
            let x = u32::from_le_bytes(chunk[0..4].try_into().expect("4 bytes")) as usize;
            let y = u32::from_le_bytes(chunk[4..8].try_into().expect("4 bytes")) as usize;
            Patch {
                form_id: form_id.to_string(),
                origin: (x, y),
                height: h,
                width: w,
                gray: chunk[8..].to_vec(),
            }
        })
        .collect())
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct IndexRow {
    form_id: String,
    file: String,
    language: super::Language,
    gender: super::Gender,
    writer_id: Option<String>,
    image_path: PathBuf,
    patches: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveSummary {
    pub forms: usize,
    pub patches: usize,
}

fn io(path: &Path, e: impl std::fmt::Display) -> PatchError {
    PatchError::Io(format!("{}: {e}", path.display()))
}

pub fn write_archive(dir: &Path, dataset: &PatchDataset) -> Result<ArchiveSummary> {
    let patch_dir = dir.join("patches");
    fs::create_dir_all(&patch_dir).map_err(|e| io(&patch_dir, e))?;
    let index_path = dir.join("index.csv");
    let mut index = csv::Writer::from_path(&index_path).map_err(|e| io(&index_path, e))?;
    for (i, form) in dataset.forms.iter().enumerate() {
        let file = format!("patches/{i:06}.gdxp");
        let bytes = encode_patch_file(&form.patches)?;
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        index
            .serialize(IndexRow {
                form_id: form.record.form_id.clone(),
                file,
                language: form.record.language,
                gender: form.record.gender,
                writer_id: form.record.writer_id.clone(),
                image_path: form.record.image_path.clone(),
                patches: form.patches.len(),
            })
            .map_err(|e| io(&index_path, e))?;
    }
    index.flush().map_err(|e| io(&index_path, e))?;
    let spec_path = dir.join("spec.json");
    let spec = serde_json::to_string_pretty(&dataset.spec).map_err(|e| io(&spec_path, e))?;
    fs::write(&spec_path, spec + "\n").map_err(|e| io(&spec_path, e))?;
    Ok(ArchiveSummary {
        forms: dataset.forms.len(),
        patches: dataset.patch_count(),
    })
}

pub fn read_archive(dir: &Path) -> Result<PatchDataset> {
    let spec_path = dir.join("spec.json");
    let spec_text = fs::read_to_string(&spec_path).map_err(|e| io(&spec_path, e))?;
    let spec: PatchSpec =
        serde_json::from_str(&spec_text).map_err(|e| corrupt(format!("spec.json: {e}")))?;
    let index_path = dir.join("index.csv");
    let mut index = csv::Reader::from_path(&index_path).map_err(|e| io(&index_path, e))?;
    let mut forms = Vec::new();
    for row in index.deserialize::<IndexRow>() {
        let row = row.map_err(|e| corrupt(format!("index.csv: {e}")))?;
        let path = dir.join(&row.file);
        let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
        let patches = decode_patch_file(&bytes, &row.form_id)?;
        if patches.len() != row.patches {
            return Err(corrupt(format!(
                "{}: index lists {} patches, file holds {}",
                row.form_id,
                row.patches,
                patches.len()
            )));
        }
        forms.push(FormPatches {
            record: FormRecord {
                form_id: row.form_id,
                image_path: row.image_path,
                language: row.language,
                gender: row.gender,
                writer_id: row.writer_id,
                demographics: Default::default(),
            },
            patches,
        });
    }
    Ok(PatchDataset { spec, forms })
}
