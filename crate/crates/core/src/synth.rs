//! Procedural handwriting-like pages for end-to-end verification.
//!
//! Each writer writes one page per script. Class cues are stroke width and
//! slant (heavy, right-leaning for male writers; thin, left-leaning for
//! female writers) with per-writer jitter. Scripts differ in glyph shapes:
//! the "HE" script uses block glyphs hanging from a top bar, the "EN" script
//! uses loops, arches and ascenders.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imaging::{GrayImage, ImagingError};
use crate::patching::{write_manifest, FormRecord, Gender, Language, PatchError};
use crate::rng::child_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<ImagingError> for SynthError {
    fn from(e: ImagingError) -> Self {
        SynthError::Io(e.to_string())
    }
}

impl From<PatchError> for SynthError {
    fn from(e: PatchError) -> Self {
        SynthError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Forms per gender; every writer contributes one form per script, so
    /// this must be even.
    pub forms_per_class: usize,
    pub page_width: usize,
    pub page_height: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            forms_per_class: 20,
            page_width: 256,
            page_height: 256,
            seed: 42,
        }
    }
}

/// Per-writer rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriterStyle {
    pub stroke_width: f64,
    /// Horizontal shift per pixel of height above the baseline.
    pub slant: f64,
    pub ink: u8,
    pub line_gap: f64,
    pub glyph_width: f64,
}

impl WriterStyle {
    pub fn sample<R: Rng + ?Sized>(gender: Gender, rng: &mut R) -> Self {
        let (width, slant) = match gender {
            Gender::Male => (rng.gen_range(2.8..3.8), rng.gen_range(0.25..0.5)),
            Gender::Female => (rng.gen_range(1.3..1.9), rng.gen_range(-0.5..-0.25)),
        };
        Self {
            stroke_width: width,
            slant,
            ink: rng.gen_range(15..70),
            line_gap: rng.gen_range(26.0..32.0),
            glyph_width: rng.gen_range(9.0..13.0),
        }
    }
}

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64) -> Stroke {
    (0..=8)
        .map(|i| {
            let t = from + (to - from) * i as f64 / 8.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Glyph outlines in a unit cell, y growing downwards, baseline at y = 1.
fn glyph<R: Rng + ?Sized>(language: Language, rng: &mut R) -> Vec<Stroke> {
    match language {
        Language::He => match rng.gen_range(0..4) {
            0 => vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]],
            1 => vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]],
            2 => vec![vec![(0.5, 0.0), (0.5, 1.0)]],
            _ => vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)], vec![(0.1, 0.4), (0.1, 1.0)]],
        },
        Language::En => match rng.gen_range(0..4) {
            0 => vec![arc(0.45, 0.7, 0.4, 0.3, 0.0, TAU), vec![(0.85, 0.4), (0.9, 1.0)]],
            1 => vec![vec![(0.5, -0.4), (0.5, 1.0)]],
            2 => vec![vec![(0.1, 0.4), (0.1, 1.0)], arc(0.5, 0.75, 0.4, 0.35, -std::f64::consts::PI, 0.0), vec![(0.9, 0.75), (0.9, 1.0)]],
            _ => vec![vec![(0.0, 0.4), (0.5, 1.0), (1.0, 0.4)]],
        },
    }
}

fn draw_segment(img: &mut GrayImage, a: (f64, f64), b: (f64, f64), width: f64, ink: u8) {
    let r = width / 2.0;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = (a.0.min(b.0) - r - 1.0).floor().max(0.0) as usize;
    let x1 = (a.0.max(b.0) + r + 1.0).ceil().min(w - 1.0).max(0.0) as usize;
    let y0 = (a.1.min(b.1) - r - 1.0).floor().max(0.0) as usize;
    let y1 = (a.1.max(b.1) + r + 1.0).ceil().min(h - 1.0).max(0.0) as usize;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let stride = img.width();
    let pixels = img.pixels_mut();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
            if (qx * qx + qy * qy).sqrt() <= r {
                let p = &mut pixels[y * stride + x];
                *p = (*p).min(ink);
            }
        }
    }
}

/// Renders one page of pseudo-text.
pub fn render_page<R: Rng + ?Sized>(
    language: Language,
    style: &WriterStyle,
    width: usize,
    height: usize,
    rng: &mut R,
) -> GrayImage {
    let mut img = GrayImage::filled(width, height, 255);
    for p in img.pixels_mut() {
        *p = rng.gen_range(218..=245);
    }
    let margin = 20.0;
    let glyph_h = 14.0;
    let mut baseline = margin + glyph_h;
    while baseline < height as f64 - margin {
        let mut x = margin + rng.gen_range(0.0..8.0);
        loop {
            let letters = rng.gen_range(2..6);
            let word_w = letters as f64 * (style.glyph_width + 2.0);
            if x + word_w > width as f64 - margin {
                break;
            }
            for _ in 0..letters {
                let gw = style.glyph_width * rng.gen_range(0.8..1.1);
                for stroke in glyph(language, rng) {
                    let pts: Vec<(f64, f64)> = stroke
                        .iter()
                        .map(|&(u, v)| {
                            let y = baseline - glyph_h + v * glyph_h;
                            (x + u * gw + style.slant * (baseline - y), y)
                        })
                        .collect();
                    for seg in pts.windows(2) {
                        draw_segment(&mut img, seg[0], seg[1], style.stroke_width, style.ink);
                    }
                }
                x += gw + 2.0;
            }
            x += rng.gen_range(7.0..12.0);
        }
        baseline += style.line_gap;
    }
    img
}

/// Writes `images/*.png` and `manifest.csv` under `out_dir` and returns the
/// records (image paths relative to `out_dir`).
pub fn generate_corpus(out_dir: &Path, config: &SynthConfig) -> Result<Vec<FormRecord>, SynthError> {
    if config.forms_per_class == 0 || !config.forms_per_class.is_multiple_of(2) {
        return Err(SynthError::Usage(format!(
            "forms per class must be a positive even number (one form per script), got {}",
            config.forms_per_class
        )));
    }
    if config.page_width < 64 || config.page_height < 64 {
        return Err(SynthError::Usage("pages must be at least 64×64".into()));
    }
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| SynthError::Io(format!("{}: {e}", images.display())))?;

    let writers = config.forms_per_class / 2;
    let mut records = Vec::new();
    for (g, gender) in [Gender::Male, Gender::Female].into_iter().enumerate() {
        for i in 0..writers {
            let writer = format!("w{:03}", g * writers + i);
            let style = WriterStyle::sample(gender, &mut child_rng(config.seed, &format!("style/{writer}")));
            for language in Language::ALL {
                let form_id = format!("{writer}_{}", language.code());
                let mut rng: ChaCha8Rng = child_rng(config.seed, &format!("page/{form_id}"));
                let page = render_page(language, &style, config.page_width, config.page_height, &mut rng);
                let rel = PathBuf::from("images").join(format!("{form_id}.png"));
                page.save_png(&out_dir.join(&rel))?;
                records.push(FormRecord {
                    form_id,
                    image_path: rel,
                    language,
                    gender,
                    writer_id: Some(writer.clone()),
                    demographics: Default::default(),
                });
            }
        }
    }
    write_manifest(&out_dir.join("manifest.csv"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{binarize, extract_text_region};
    use crate::patching::{load_manifest, process_form, PatchSpec};

    #[test]
    fn corpus_counts_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { forms_per_class: 4, ..SynthConfig::default() };
        let recs = generate_corpus(a.path(), &cfg).unwrap();
        generate_corpus(b.path(), &cfg).unwrap();
        assert_eq!(recs.len(), 8);
        assert_eq!(recs.iter().filter(|r| r.gender == Gender::Female).count(), 4);
        for r in &recs {
            let x = std::fs::read(a.path().join(&r.image_path)).unwrap();
            let y = std::fs::read(b.path().join(&r.image_path)).unwrap();
            assert_eq!(x, y, "{}", r.form_id);
        }
        let back = load_manifest(&a.path().join("manifest.csv")).unwrap();
        assert_eq!(back.len(), 8);
    }

    #[test]
    fn rejects_odd_counts() {
        let d = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { forms_per_class: 3, ..SynthConfig::default() };
        assert!(matches!(generate_corpus(d.path(), &cfg), Err(SynthError::Usage(_))));
    }

    #[test]
    fn heavier_strokes_ink_more() {
        let mut rng = child_rng(1, "t");
        let mut style = WriterStyle::sample(Gender::Female, &mut rng);
        let thin = render_page(Language::En, &style, 128, 128, &mut child_rng(2, "p"));
        style.stroke_width = 3.5;
        let thick = render_page(Language::En, &style, 128, 128, &mut child_rng(2, "p"));
        let ink = |img: &GrayImage| binarize(&extract_text_region(img, 4).unwrap()).ink_count();
        assert!(ink(&thick) > ink(&thin));
    }

    #[test]
    fn pages_survive_the_patch_filter() {
        let d = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { forms_per_class: 2, ..SynthConfig::default() };
        generate_corpus(d.path(), &cfg).unwrap();
        let spec = PatchSpec {
            count: 32,
            height: 64,
            width: 64,
            ..PatchSpec::default()
        };
        for r in load_manifest(&d.path().join("manifest.csv")).unwrap() {
            process_form(&r, &spec, 42, 16).unwrap();
        }
    }
}
