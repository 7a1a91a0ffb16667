//! Annotated thermal scenes: manifests, filtering, synthetic generation and
//! adversarial-training output.
//!
//! A manifest is a JSON-lines file, one scene per line:
//! `{"id": "...", "image": "images/a.png", "persons": [{"x":..,"y":..,"w":..,"h":..}]}`.
//! Relative image paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositor::place_on_scene;
use crate::error::{Error, Result};
use crate::grid::Genome;
use crate::image::{BoundingBox, GrayImage};

/// Persons must be strictly taller than this many pixels to be attacked.
pub const MIN_PERSON_HEIGHT: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedScene {
    pub id: String,
    pub image: GrayImage,
    pub persons: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub image: String,
    pub persons: Vec<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub kept_scenes: usize,
    pub dropped_scenes: usize,
    pub kept_persons: usize,
    pub dropped_persons: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub scenes: Vec<AnnotatedScene>,
    pub stats: LoadStats,
}

pub fn read_manifest(path: &Path) -> Result<Vec<SceneRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line).map_err(|e| Error::Load {
            entry: format!("{}:{}", path.display(), lineno + 1),
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[SceneRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("scene record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn resolve(manifest: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Loads a manifest, keeping scenes with at least one person taller than
/// `min_person_height` and dropping the shorter boxes from kept scenes.
pub fn load_split(manifest: &Path, min_person_height: f64) -> Result<LoadedSplit> {
    let records = read_manifest(manifest)?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Load {
                entry: r.id.clone(),
                reason: "duplicate scene id".into(),
            });
        }
    }
    let loaded: Vec<Option<(AnnotatedScene, usize)>> = records
        .par_iter()
        .map(|r| {
            let path = resolve(manifest, &r.image);
            let image = GrayImage::load(&path).map_err(|e| Error::Load {
                entry: r.id.clone(),
                reason: e.to_string(),
            })?;
            if let Some(bad) = r
                .persons
                .iter()
                .find(|b| !b.is_valid() || !b.intersects_image(image.width(), image.height()))
            {
                return Err(Error::Load {
                    entry: r.id.clone(),
                    reason: format!("person box {bad} is empty or outside the image"),
                });
            }
            let (tall, short): (Vec<BoundingBox>, Vec<BoundingBox>) =
                r.persons.iter().partition(|b| b.h > min_person_height);
            Ok((!tall.is_empty()).then(|| {
                (
                    AnnotatedScene {
                        id: r.id.clone(),
                        image,
                        persons: tall,
                    },
                    short.len(),
                )
            }))
        })
        .collect::<Result<_>>()?;

    let mut stats = LoadStats::default();
    let mut scenes = Vec::new();
    for entry in loaded {
        match entry {
            Some((scene, dropped)) => {
                stats.kept_scenes += 1;
                stats.kept_persons += scene.persons.len();
                stats.dropped_persons += dropped;
                scenes.push(scene);
            }
            None => stats.dropped_scenes += 1,
        }
    }
    Ok(LoadedSplit { scenes, stats })
}

/// Writes `images/<id>.<ext>` for every scene plus `manifest.jsonl`.
pub fn write_split(scenes: &[AnnotatedScene], dir: &Path, ext: &str) -> Result<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let records = scenes
        .par_iter()
        .map(|s| {
            let rel = format!("images/{}.{ext}", s.id);
            s.image.save(&dir.join(&rel))?;
            Ok(SceneRecord {
                id: s.id.clone(),
                image: rel,
                persons: s.persons.clone(),
                source: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub background: [f64; 2],
    pub noise_sigma: f64,
    pub persons: [usize; 2],
    pub person_height: [usize; 2],
    pub aspect: [f64; 2],
    pub body_intensity: [f64; 2],
    /// Probability that a body is drawn with rounded corners.
    pub rounded_probability: f64,
    /// Minimum empty pixels between two bodies.
    pub gap: usize,
    pub max_attempts: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 384,
            height: 256,
            background: [0.05, 0.2],
            noise_sigma: 0.02,
            persons: [1, 3],
            person_height: [130, 200],
            aspect: [1.5, 3.5],
            body_intensity: [0.7, 0.85],
            rounded_probability: 0.5,
            gap: 4,
            max_attempts: 500,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        let ordered = self.background[0] <= self.background[1]
            && self.persons[0] <= self.persons[1]
            && self.person_height[0] <= self.person_height[1]
            && self.aspect[0] <= self.aspect[1]
            && self.body_intensity[0] <= self.body_intensity[1];
        if !ordered || self.persons[0] == 0 || self.aspect[0] <= 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Argument(format!("inconsistent synthetic parameters {self:?}")));
        }
        Ok(())
    }
}

pub fn synthetic_id(index: usize) -> String {
    format!("synth-{index:05}")
}

/// Deterministic synthetic thermal scenes: dim noisy background with
/// non-overlapping upright warm bodies. Each scene draws from its own
/// random stream, so output does not depend on thread count.
pub fn generate_synthetic(count: usize, seed: u64, params: &SynthParams) -> Result<Vec<AnnotatedScene>> {
    if count == 0 {
        return Err(Error::Argument("scene count must be at least 1".into()));
    }
    params.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            synth_scene(synthetic_id(i), params, &mut rng)
        })
        .collect()
}

fn synth_scene(id: String, p: &SynthParams, rng: &mut ChaCha8Rng) -> Result<AnnotatedScene> {
    let bg = rng.random_range(p.background[0]..=p.background[1]);
    let noise = Normal::new(0.0, p.noise_sigma).expect("non-negative sigma");
    let data = (0..p.width * p.height)
        .map(|_| (bg + noise.sample(rng)).clamp(0.0, 1.0) as f32)
        .collect();
    let mut image = GrayImage::from_vec(p.width, p.height, data)?;

    let count = rng.random_range(p.persons[0]..=p.persons[1]);
    let mut persons: Vec<BoundingBox> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = None;
        for _ in 0..p.max_attempts {
            let h = rng.random_range(p.person_height[0]..=p.person_height[1]);
            let aspect = rng.random_range(p.aspect[0]..=p.aspect[1]);
            let w_min = (h as f64 / p.aspect[1]).ceil() as usize;
            let w_max = (h as f64 / p.aspect[0]).floor() as usize;
            let w = ((h as f64 / aspect).round() as usize).clamp(w_min, w_max);
            if w == 0 || w > p.width || h > p.height {
                continue;
            }
            let x = rng.random_range(0..=p.width - w);
            let y = rng.random_range(0..=p.height - h);
            let candidate = BoundingBox::new(x as f64, y as f64, w as f64, h as f64);
            let g = p.gap as f64;
            let padded = BoundingBox::new(
                candidate.x - g,
                candidate.y - g,
                candidate.w + 2.0 * g,
                candidate.h + 2.0 * g,
            );
            if persons.iter().all(|b| b.intersection_area(&padded) == 0.0) {
                placed = Some(candidate);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| {
            Error::Generation(format!(
                "scene {id}: could not place person {} of {count} after {} attempts",
                persons.len() + 1,
                p.max_attempts
            ))
        })?;
        let value = rng.random_range(p.body_intensity[0]..=p.body_intensity[1]) as f32;
        let radius = if rng.random_bool(p.rounded_probability) {
            let max_r = (bbox.w.min(bbox.h) / 6.0).floor() as i64;
            if max_r >= 2 {
                rng.random_range(2..=max_r)
            } else {
                0
            }
        } else {
            0
        };
        draw_body(&mut image, &bbox, radius, value);
        persons.push(bbox);
    }
    Ok(AnnotatedScene {
        id,
        image: image.quantized(),
        persons,
    })
}

fn draw_body(image: &mut GrayImage, b: &BoundingBox, radius: i64, value: f32) {
    let (x0, y0) = (b.x as i64, b.y as i64);
    let (x1, y1) = (x0 + b.w as i64, y0 + b.h as i64);
    if radius == 0 {
        image.fill_rect(x0, y0, x1, y1, value);
        return;
    }
    let r = radius as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            // distance from the nearest corner-circle centre, when in a corner square
            let cx = if x < x0 + radius {
                Some((x0 + radius) as f64 - (x as f64 + 0.5))
            } else if x >= x1 - radius {
                Some((x as f64 + 0.5) - (x1 - radius) as f64)
            } else {
                None
            };
            let cy = if y < y0 + radius {
                Some((y0 + radius) as f64 - (y as f64 + 0.5))
            } else if y >= y1 - radius {
                Some((y as f64 + 0.5) - (y1 - radius) as f64)
            } else {
                None
            };
            let inside = match (cx, cy) {
                (Some(dx), Some(dy)) => dx * dx + dy * dy <= r * r,
                _ => true,
            };
            if inside {
                image.set(x as usize, y as usize, value);
            }
        }
    }
}

/// Writes clean and attacked copies of every scene with identical labels,
/// plus `augmented.jsonl` listing the clean records followed by the attacked
/// ones, each attacked record naming its clean `source`.
pub fn emit_augmented(scenes: &[AnnotatedScene], genome: &Genome, dir: &Path, ext: &str) -> Result<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let pairs = scenes
        .par_iter()
        .map(|s| {
            let attacked = place_on_scene(s, genome)?;
            let clean_rel = format!("images/{}.{ext}", s.id);
            let adv_id = format!("{}-adv", s.id);
            let adv_rel = format!("images/{adv_id}.{ext}");
            s.image.save(&dir.join(&clean_rel))?;
            attacked.save(&dir.join(&adv_rel))?;
            Ok((
                SceneRecord {
                    id: s.id.clone(),
                    image: clean_rel,
                    persons: s.persons.clone(),
                    source: None,
                },
                SceneRecord {
                    id: adv_id,
                    image: adv_rel,
                    persons: s.persons.clone(),
                    source: Some(s.id.clone()),
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (clean, attacked): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let records: Vec<SceneRecord> = clean.into_iter().chain(attacked).collect();
    let manifest = dir.join("augmented.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// Builds a manifest record from a YOLO label file
/// (`class cx cy w h` per line, normalized to the image size).
pub fn import_yolo(image: &Path, labels: &Path, person_class: u32, id: &str) -> Result<SceneRecord> {
    let entry = || labels.display().to_string();
    let img = GrayImage::load(image).map_err(|e| Error::Load {
        entry: image.display().to_string(),
        reason: e.to_string(),
    })?;
    let (iw, ih) = (img.width() as f64, img.height() as f64);
    let text = match std::fs::read_to_string(labels) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(labels, e)),
    };
    let mut persons = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parsed: Option<(u32, Vec<f64>)> = (|| {
            let class = fields.first()?.parse().ok()?;
            let nums = fields
                .get(1..5)?
                .iter()
                .map(|f| f.parse().ok())
                .collect::<Option<Vec<f64>>>()?;
            Some((class, nums))
        })();
        let (class, nums) = parsed.ok_or_else(|| Error::Load {
            entry: format!("{}:{}", entry(), lineno + 1),
            reason: format!("expected `class cx cy w h`, got `{line}`"),
        })?;
        if class != person_class {
            continue;
        }
        let (cx, cy, w, h) = (nums[0] * iw, nums[1] * ih, nums[2] * iw, nums[3] * ih);
        persons.push(BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h));
    }
    Ok(SceneRecord {
        id: id.to_owned(),
        image: image.display().to_string(),
        persons,
        source: None,
    })
}
