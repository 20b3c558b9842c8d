//! Random patch sampling, ink-ratio filtering, gender balancing and dataset
//! assembly.

mod archive;
mod manifest;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, BinaryImage, GrayImage, ImagingError};
use crate::rng::child_rng;

pub use archive::{
    decode_patch_file, encode_patch_file, read_archive, write_archive, ArchiveSummary, PATCH_MAGIC,
};
pub use manifest::{load_manifest, parse_manifest, write_manifest, FormRecord, Gender, Language};

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("form {form_id}: only {found} of {needed} patches passed the ink filter after {attempts} draws")]
    SparseForm {
        form_id: String,
        found: usize,
        needed: usize,
        attempts: usize,
    },
    #[error("cannot balance genders: {0}")]
    Balance(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("form {form_id}: {source}")]
    Imaging {
        form_id: String,
        #[source]
        source: ImagingError,
    },
    #[error("archive error: {0}")]
    Archive(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, PatchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchShape {
    Square,
    Rectangle,
}

/// How patches are cut from a form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    /// Valid patches kept per form.
    pub count: usize,
    /// Source-resolution patch height in pixels.
    pub height: usize,
    /// Source-resolution patch width in pixels.
    pub width: usize,
    pub downscale_factor: usize,
    pub shape: PatchShape,
    /// Minimum fraction of ink pixels in the binarized source patch.
    pub min_ink_ratio: f64,
}

impl Default for PatchSpec {
    /// 200 square 400×400 patches per form, downscaled 4× to 100×100.
    fn default() -> Self {
        Self {
            count: 200,
            height: 400,
            width: 400,
            downscale_factor: 4,
            shape: PatchShape::Square,
            min_ink_ratio: 0.02,
        }
    }
}

/// Draws allowed per requested patch before a form counts as too sparse.
pub const ATTEMPTS_PER_PATCH: usize = 50;

impl PatchSpec {
    /// 150×500 line-shaped patches downscaled 5× to 30×100.
    pub fn rectangle() -> Self {
        Self {
            height: 150,
            width: 500,
            downscale_factor: 5,
            shape: PatchShape::Rectangle,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PatchError::Shape(msg));
        if self.count == 0 {
            return bad("patch count must be at least 1".into());
        }
        if self.downscale_factor == 0
            || self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(self.downscale_factor)
            || !self.width.is_multiple_of(self.downscale_factor)
        {
            return bad(format!(
                "{}×{} patches are not divisible by factor {}",
                self.height, self.width, self.downscale_factor
            ));
        }
        if self.shape == PatchShape::Square && self.height != self.width {
            return bad(format!("square patch with {}×{} size", self.height, self.width));
        }
        if !(0.0..=1.0).contains(&self.min_ink_ratio) {
            return bad(format!("min_ink_ratio {} outside [0, 1]", self.min_ink_ratio));
        }
        Ok(())
    }

    /// Downscaled `(height, width)` fed to the network.
    pub fn output_dims(&self) -> (usize, usize) {
        (
            self.height / self.downscale_factor,
            self.width / self.downscale_factor,
        )
    }
}

/// A downscaled tile of a form. Pixels are stored as 8-bit gray levels and
/// exposed normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub form_id: String,
    /// Top-left corner `(x, y)` in source (cropped region) coordinates.
    pub origin: (usize, usize),
    pub height: usize,
    pub width: usize,
    pub gray: Vec<u8>,
}

impl Patch {
    pub fn normalized(&self) -> impl Iterator<Item = f32> + '_ {
        self.gray.iter().map(|&p| p as f32 / 255.0)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.normalized().collect()
    }
}

/// Fraction of ink pixels in a binarized region.
pub fn ink_ratio(region: &BinaryImage) -> f64 {
    let total = region.width() * region.height();
    if total == 0 {
        return 0.0;
    }
    region.ink_count() as f64 / total as f64
}

/// Summed-area table over an ink mask for O(1) window counts.
struct InkIntegral {
    stride: usize,
    sums: Vec<u32>,
}

impl InkIntegral {
    fn new(mask: &BinaryImage) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += mask.is_ink(x, y) as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    fn count(&self, x: usize, y: usize, w: usize, h: usize) -> u32 {
        let s = |xx: usize, yy: usize| self.sums[yy * self.stride + xx];
        s(x + w, y + h) + s(x, y) - s(x + w, y) - s(x, y + h)
    }
}

/// Samples `spec.count` patches with uniformly random origins, keeping only
/// candidates whose source-resolution ink ratio reaches `spec.min_ink_ratio`.
/// Overlaps are allowed.
pub fn sample_patches<R: Rng + ?Sized>(
    gray: &GrayImage,
    mask: &BinaryImage,
    form_id: &str,
    spec: &PatchSpec,
    rng: &mut R,
) -> Result<Vec<Patch>> {
    spec.validate()?;
    let (w, h) = (gray.width(), gray.height());
    if mask.width() != w || mask.height() != h {
        return Err(PatchError::Shape("mask and image dimensions differ".into()));
    }
    if w < spec.width || h < spec.height {
        return Err(PatchError::Shape(format!(
            "form {form_id} is {w}×{h}, smaller than {}×{} patch",
            spec.width, spec.height
        )));
    }
    let integral = InkIntegral::new(mask);
    let area = (spec.width * spec.height) as f64;
    let cap = ATTEMPTS_PER_PATCH * spec.count;
    let (oh, ow) = spec.output_dims();

    let mut patches = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while patches.len() < spec.count {
        if attempts == cap {
            return Err(PatchError::SparseForm {
                form_id: form_id.to_string(),
                found: patches.len(),
                needed: spec.count,
                attempts,
            });
        }
        attempts += 1;
        let x = rng.gen_range(0..=w - spec.width);
        let y = rng.gen_range(0..=h - spec.height);
        let ink = integral.count(x, y, spec.width, spec.height) as f64 / area;
        if ink < spec.min_ink_ratio {
            continue;
        }
        let tile = gray
            .crop(x, y, spec.width, spec.height)
            .and_then(|t| imaging::downscale(&t, spec.downscale_factor))
            .map_err(|source| PatchError::Imaging {
                form_id: form_id.to_string(),
                source,
            })?;
        patches.push(Patch {
            form_id: form_id.to_string(),
            origin: (x, y),
            height: oh,
            width: ow,
            gray: tile.pixels().to_vec(),
        });
    }
    Ok(patches)
}

/// Removes randomly chosen writers of the majority gender until both
/// genders have the same number of writers. Input order is preserved.
pub fn balance_forms<R: Rng + ?Sized>(forms: &[FormRecord], rng: &mut R) -> Result<Vec<FormRecord>> {
    let mut writer_gender: HashMap<&str, Gender> = HashMap::new();
    let mut writers: BTreeMap<Gender, Vec<&str>> = BTreeMap::new();
    for f in forms {
        match writer_gender.insert(f.writer_key(), f.gender) {
            None => writers.entry(f.gender).or_default().push(f.writer_key()),
            Some(g) if g != f.gender => {
                return Err(PatchError::Balance(format!(
                    "writer {} has forms labeled both {g} and {}",
                    f.writer_key(),
                    f.gender
                )))
            }
            Some(_) => {}
        }
    }
    let males = writers.get(&Gender::Male).map_or(0, Vec::len);
    let females = writers.get(&Gender::Female).map_or(0, Vec::len);
    if males == 0 || females == 0 {
        return Err(PatchError::Balance(format!(
            "{males} male and {females} female writers"
        )));
    }
    let (major, surplus) = if males > females {
        (Gender::Male, males - females)
    } else {
        (Gender::Female, females - males)
    };
    let pool = &writers[&major];
    let dropped: HashSet<&str> = sample(rng, pool.len(), surplus)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    Ok(forms
        .iter()
        .filter(|f| !dropped.contains(f.writer_key()))
        .cloned()
        .collect())
}

/// The patches of one form together with its record.
#[derive(Debug, Clone, PartialEq)]
pub struct FormPatches {
    pub record: FormRecord,
    pub patches: Vec<Patch>,
}

impl FormPatches {
    pub fn label(&self) -> u8 {
        self.record.gender.label()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub spec: PatchSpec,
    pub forms: Vec<FormPatches>,
}

impl PatchDataset {
    pub fn patch_count(&self) -> usize {
        self.forms.iter().map(|f| f.patches.len()).sum()
    }

    pub fn form(&self, form_id: &str) -> Option<&FormPatches> {
        self.forms.iter().find(|f| f.record.form_id == form_id)
    }
}

/// Default margin, in source pixels, around the ink bounding box.
pub const DEFAULT_CROP_MARGIN: usize = 16;

/// Load, crop and binarize one form, then sample its patches from a stream
/// keyed by `(seed, form_id)`.
pub fn process_form(
    record: &FormRecord,
    spec: &PatchSpec,
    seed: u64,
    margin: usize,
) -> Result<FormPatches> {
    let wrap = |source| PatchError::Imaging {
        form_id: record.form_id.clone(),
        source,
    };
    let page = imaging::load_form_image(&record.image_path).map_err(wrap)?;
    let region = imaging::extract_text_region(&page, margin).map_err(wrap)?;
    let mask = imaging::binarize(&region);
    let mut rng = child_rng(seed, &format!("patches/{}", record.form_id));
    let patches = sample_patches(&region, &mask, &record.form_id, spec, &mut rng)?;
    Ok(FormPatches {
        record: record.clone(),
        patches,
    })
}

/// Runs [`process_form`] over a manifest. Forms are independent; the result
/// is a pure function of `(manifest, spec, seed, margin)`.
pub fn build_patch_dataset(
    manifest: &[FormRecord],
    spec: &PatchSpec,
    seed: u64,
    margin: usize,
) -> Result<PatchDataset> {
    if manifest.is_empty() {
        return Err(PatchError::Manifest("manifest lists no forms".into()));
    }
    spec.validate()?;
    let forms = manifest
        .par_iter()
        .map(|r| process_form(r, spec, seed, margin))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchDataset {
        spec: spec.clone(),
        forms,
    })
}

/// Same as [`build_patch_dataset`] but keeps going past failing forms,
/// returning the failures alongside the successfully processed forms.
pub fn build_patch_dataset_lenient(
    manifest: &[FormRecord],
    spec: &PatchSpec,
    seed: u64,
    margin: usize,
) -> Result<(PatchDataset, Vec<(String, PatchError)>)> {
    spec.validate()?;
    let results: Vec<_> = manifest
        .par_iter()
        .map(|r| (r.form_id.clone(), process_form(r, spec, seed, margin)))
        .collect();
    let mut forms = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok(f) => forms.push(f),
            Err(e) => failures.push((id, e)),
        }
    }
    Ok((
        PatchDataset {
            spec: spec.clone(),
            forms,
        },
        failures,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, gender: Gender, writer: Option<&str>) -> FormRecord {
        FormRecord {
            form_id: id.into(),
            image_path: std::path::PathBuf::from(format!("{id}.png")),
            language: Language::He,
            gender,
            writer_id: writer.map(str::to_string),
            demographics: BTreeMap::new(),
        }
    }

    fn small_spec(count: usize) -> PatchSpec {
        PatchSpec {
            count,
            height: 8,
            width: 8,
            downscale_factor: 2,
            shape: PatchShape::Square,
            min_ink_ratio: 0.02,
        }
    }

    #[test]
    fn ink_ratio_examples() {
        assert_eq!(ink_ratio(&BinaryImage::new(10, 10, vec![false; 100]).unwrap()), 0.0);
        assert_eq!(ink_ratio(&BinaryImage::new(10, 10, vec![true; 100]).unwrap()), 1.0);
        let bits = (0..100).map(|i| i % 10 == 0).collect();
        assert_eq!(ink_ratio(&BinaryImage::new(10, 10, bits).unwrap()), 0.10);
    }

    #[test]
    fn integral_counts_match_direct_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bits: Vec<bool> = (0..13 * 11).map(|_| rng.gen_bool(0.3)).collect();
        let mask = BinaryImage::new(13, 11, bits).unwrap();
        let integral = InkIntegral::new(&mask);
        for (x, y, w, h) in [(0, 0, 13, 11), (2, 3, 5, 4), (12, 10, 1, 1), (4, 0, 9, 11)] {
            let direct = (y..y + h)
                .flat_map(|yy| (x..x + w).map(move |xx| (xx, yy)))
                .filter(|&(xx, yy)| mask.is_ink(xx, yy))
                .count() as u32;
            assert_eq!(integral.count(x, y, w, h), direct);
        }
    }

    #[test]
    fn fully_inked_form_always_valid_and_deterministic() {
        let gray = GrayImage::filled(40, 30, 0);
        let mask = BinaryImage::new(40, 30, vec![true; 1200]).unwrap();
        let spec = small_spec(10);
        let a = sample_patches(&gray, &mask, "f", &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_patches(&gray, &mask, "f", &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(
            a.iter().map(|p| p.origin).collect::<Vec<_>>(),
            b.iter().map(|p| p.origin).collect::<Vec<_>>()
        );
        assert!(a.iter().all(|p| p.height == 4 && p.width == 4 && p.gray.len() == 16));
    }

    #[test]
    fn blank_form_is_sparse() {
        let gray = GrayImage::filled(40, 30, 255);
        let mask = BinaryImage::new(40, 30, vec![false; 1200]).unwrap();
        let err = sample_patches(&gray, &mask, "blank", &small_spec(3), &mut ChaCha8Rng::seed_from_u64(1));
        match err {
            Err(PatchError::SparseForm { form_id, attempts, .. }) => {
                assert_eq!(form_id, "blank");
                assert_eq!(attempts, 150);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn form_smaller_than_patch() {
        let gray = GrayImage::filled(6, 30, 0);
        let mask = BinaryImage::new(6, 30, vec![true; 180]).unwrap();
        assert!(matches!(
            sample_patches(&gray, &mask, "f", &small_spec(1), &mut ChaCha8Rng::seed_from_u64(1)),
            Err(PatchError::Shape(_))
        ));
    }

    #[test]
    fn spec_presets() {
        let d = PatchSpec::default();
        d.validate().unwrap();
        assert_eq!((d.count, d.output_dims()), (200, (100, 100)));
        let r = PatchSpec::rectangle();
        r.validate().unwrap();
        assert_eq!(r.output_dims(), (30, 100));
        let bad = PatchSpec {
            width: 401,
            ..PatchSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn balance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut forms: Vec<_> = (0..214).map(|i| record(&format!("m{i}"), Gender::Male, None)).collect();
        forms.extend((0..191).map(|i| record(&format!("f{i}"), Gender::Female, None)));
        let out = balance_forms(&forms, &mut rng).unwrap();
        let males = out.iter().filter(|f| f.gender == Gender::Male).count();
        assert_eq!((males, out.len() - males), (191, 191));

        let even: Vec<_> = (0..4)
            .map(|i| record(&format!("x{i}"), if i % 2 == 0 { Gender::Male } else { Gender::Female }, None))
            .collect();
        assert_eq!(balance_forms(&even, &mut rng).unwrap(), even);

        let mut skew: Vec<_> = (0..5).map(|i| record(&format!("f{i}"), Gender::Female, None)).collect();
        skew.extend((0..3).map(|i| record(&format!("m{i}"), Gender::Male, None)));
        let out = balance_forms(&skew, &mut rng).unwrap();
        assert_eq!(out.iter().filter(|f| f.gender == Gender::Female).count(), 3);
        assert_eq!(out.len(), 6);

        let only_m: Vec<_> = (0..3).map(|i| record(&format!("m{i}"), Gender::Male, None)).collect();
        assert!(matches!(balance_forms(&only_m, &mut rng), Err(PatchError::Balance(_))));
    }

    #[test]
    fn balance_removes_whole_writers() {
        let forms = vec![
            record("a-he", Gender::Male, Some("a")),
            record("a-en", Gender::Male, Some("a")),
            record("b-he", Gender::Male, Some("b")),
            record("b-en", Gender::Male, Some("b")),
            record("c-he", Gender::Female, Some("c")),
            record("c-en", Gender::Female, Some("c")),
        ];
        let out = balance_forms(&forms, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.len(), 4);
        let kept_male: HashSet<_> = out
            .iter()
            .filter(|f| f.gender == Gender::Male)
            .map(|f| f.writer_key())
            .collect();
        assert_eq!(kept_male.len(), 1);

        let conflict = vec![
            record("a-he", Gender::Male, Some("a")),
            record("a-en", Gender::Female, Some("a")),
        ];
        assert!(balance_forms(&conflict, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    proptest! {
        #[test]
        fn sampled_patches_respect_filter_and_bounds(
            seed in any::<u64>(),
            density in 0.05f64..0.9,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (37, 29);
            let bits: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
            let gray = GrayImage::new(w, h, bits.iter().map(|&b| if b { 10 } else { 240 }).collect()).unwrap();
            let mask = BinaryImage::new(w, h, bits).unwrap();
            let spec = PatchSpec { min_ink_ratio: 0.05, ..small_spec(12) };
            if let Ok(patches) = sample_patches(&gray, &mask, "p", &spec, &mut rng) {
                prop_assert_eq!(patches.len(), 12);
                for p in &patches {
                    let (x, y) = p.origin;
                    prop_assert!(x + spec.width <= w && y + spec.height <= h);
                    let region: Vec<bool> = (y..y + spec.height)
                        .flat_map(|yy| (x..x + spec.width).map(move |xx| (xx, yy)))
                        .map(|(xx, yy)| mask.is_ink(xx, yy))
                        .collect();
                    let ratio = ink_ratio(&BinaryImage::new(spec.width, spec.height, region).unwrap());
                    prop_assert!(ratio >= spec.min_ink_ratio);
                    prop_assert!(p.normalized().all(|v| (0.0..=1.0).contains(&v)));
                }
            }
        }

        #[test]
        fn balanced_output_is_equal_subset(
            males in 1usize..30,
            females in 1usize..30,
            seed in any::<u64>(),
        ) {
            let mut forms: Vec<_> = (0..males).map(|i| record(&format!("m{i}"), Gender::Male, None)).collect();
            forms.extend((0..females).map(|i| record(&format!("f{i}"), Gender::Female, None)));
            let out = balance_forms(&forms, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let m = out.iter().filter(|f| f.gender == Gender::Male).count();
            prop_assert_eq!(m, out.len() - m);
            prop_assert_eq!(m, males.min(females));
            prop_assert!(out.iter().all(|f| forms.contains(f)));
        }
    }
}
