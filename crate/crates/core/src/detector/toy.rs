//! Threshold + connected-component person detector for thermal images.
//!
//! Pixels inside the body temperature band `[warm_threshold, hot_threshold]`
//! form a binary mask, which is opened with a square structuring element to
//! drop bridges and specks thinner than `2 * opening_radius + 1` pixels.
//! Each 4-connected component whose area, box aspect
//! (h / w) and fill ratio pass the gates becomes a "person" detection scored
//! by its fill ratio over `full_fill`, clamped to 1: solid and nearly solid
//! bodies score 1.0, and only substantial occlusion lowers the score.

use serde::{Deserialize, Serialize};

use super::{sort_detections, Detection, Detector};
use crate::error::{Error, Result};
use crate::image::{BoundingBox, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyParams {
    pub warm_threshold: f32,
    /// Pixels hotter than this are saturated and do not count as body.
    pub hot_threshold: f32,
    pub min_area: usize,
    pub aspect_min: f64,
    pub aspect_max: f64,
    pub min_fill: f64,
    /// Fill ratio at and above which the score saturates at 1.0.
    pub full_fill: f64,
    pub opening_radius: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            warm_threshold: 0.5,
            hot_threshold: 0.88,
            min_area: 400,
            aspect_min: 1.2,
            aspect_max: 4.0,
            min_fill: 0.55,
            full_fill: 0.8,
            opening_radius: 2,
        }
    }
}

impl ToyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.warm_threshold.is_finite()
            && self.warm_threshold <= self.hot_threshold
            && self.aspect_min > 0.0
            && self.aspect_min <= self.aspect_max
            && (0.0..=1.0).contains(&self.min_fill)
            && self.full_fill > 0.0
            && self.full_fill <= 1.0;
        if !ok {
            return Err(Error::Argument(format!(
                "inconsistent toy detector parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToyDetector {
    params: ToyParams,
}

impl ToyDetector {
    pub fn new(params: ToyParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }

    #[inline]
    fn is_body(&self, v: f32) -> bool {
        (v >= self.params.warm_threshold) & (v <= self.params.hot_threshold)
    }

    pub fn detect_image(&self, image: &GrayImage) -> Vec<Detection> {
        let p = &self.params;
        let mut dets: Vec<Detection> = self
            .components(image)
            .into_iter()
            .filter_map(|c| {
                let bw = (c.x1 - c.x0) as f64;
                let bh = (c.y1 - c.y0) as f64;
                let aspect = bh / bw;
                let fill = c.area as f64 / (bw * bh);
                let keep =
                    c.area >= p.min_area && aspect >= p.aspect_min && aspect <= p.aspect_max && fill >= p.min_fill;
                keep.then(|| {
                    Detection::person(
                        BoundingBox::new(c.x0 as f64, c.y0 as f64, bw, bh),
                        (fill / p.full_fill).clamp(0.0, 1.0),
                    )
                })
            })
            .collect();
        sort_detections(&mut dets);
        dets
    }

    fn body_mask(&self, image: &GrayImage) -> BitMask {
        let mut mask = BitMask::threshold(image, |v| self.is_body(v));
        mask.open(self.params.opening_radius);
        mask
    }

    /// Run-length connected components (4-connectivity) of the opened mask.
    fn components(&self, image: &GrayImage) -> Vec<Component> {
        let mask = self.body_mask(image);
        let mut runs: Vec<Run> = Vec::new();
        let mut parent: Vec<usize> = Vec::new();
        let mut prev_row = 0..0;

        for y in 0..mask.h {
            let row_start = runs.len();
            let mut x = 0;
            while let Some((x0, x1)) = mask.next_run(y, x) {
                x = x1;
                let id = runs.len();
                runs.push(Run { y, x0, x1 });
                parent.push(id);
                for prev in prev_row.clone() {
                    let r: &Run = &runs[prev];
                    if r.x1 <= x0 {
                        continue;
                    }
                    if r.x0 >= x1 {
                        break;
                    }
                    union(&mut parent, prev, id);
                }
            }
            prev_row = row_start..runs.len();
        }

        let mut slot = vec![usize::MAX; runs.len()];
        let mut comps: Vec<Component> = Vec::new();
        for (i, r) in runs.iter().enumerate() {
            let root = find(&mut parent, i);
            if slot[root] == usize::MAX {
                slot[root] = comps.len();
                comps.push(Component {
                    area: 0,
                    x0: r.x0,
                    y0: r.y,
                    x1: r.x1,
                    y1: r.y + 1,
                });
            }
            let c = &mut comps[slot[root]];
            c.area += r.x1 - r.x0;
            c.x0 = c.x0.min(r.x0);
            c.x1 = c.x1.max(r.x1);
            c.y0 = c.y0.min(r.y);
            c.y1 = c.y1.max(r.y + 1);
        }
        comps
    }
}

impl Detector for ToyDetector {
    fn id(&self) -> &str {
        "toy"
    }

    fn detect(&self, image: &GrayImage) -> Result<Vec<Detection>> {
        Ok(self.detect_image(image))
    }
}

/// Row-major bit mask, 64 pixels per word, least significant bit leftmost.
/// Padding bits past the image width are always clear.
#[derive(Debug, Clone, PartialEq)]
struct BitMask {
    w: usize,
    h: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMask {
    fn threshold(image: &GrayImage, pred: impl Fn(f32) -> bool) -> Self {
        let (w, h) = (image.width(), image.height());
        let words = w.div_ceil(64);
        let mut bits = vec![0u64; words * h];
        let mut flags = vec![0u8; words * 64];
        for (row, dst) in image.pixels().chunks_exact(w).zip(bits.chunks_exact_mut(words)) {
            for (f, &v) in flags.iter_mut().zip(row) {
                *f = u8::from(pred(v));
            }
            for (chunk, word) in flags.chunks_exact(64).zip(dst.iter_mut()) {
                // gather eight 0/1 bytes into one byte per step, first pixel lowest
                *word = chunk.chunks_exact(8).enumerate().fold(0, |acc, (k, b)| {
                    let eight = u64::from_le_bytes(b.try_into().expect("8 bytes"));
                    acc | (eight.wrapping_mul(0x0102_0408_1020_4080) >> 56) << (8 * k)
                });
            }
        }
        Self { w, h, words, bits }
    }

    fn row(&self, y: usize) -> &[u64] {
        &self.bits[y * self.words..(y + 1) * self.words]
    }

    #[cfg(test)]
    fn get(&self, x: usize, y: usize) -> bool {
        self.row(y)[x / 64] >> (x % 64) & 1 == 1
    }

    fn clear_padding(&mut self) {
        let tail = self.w % 64;
        if tail != 0 {
            let keep = (1u64 << tail) - 1;
            for row in self.bits.chunks_exact_mut(self.words) {
                row[self.words - 1] &= keep;
            }
        }
    }

    /// Opening (erosion then dilation) with a `2r + 1` square. Pixels outside
    /// the image count as background.
    fn open(&mut self, r: usize) {
        if r == 0 {
            return;
        }
        self.horizontal(r, true);
        self.vertical(r, true);
        self.horizontal(r, false);
        self.vertical(r, false);
    }

    fn horizontal(&mut self, r: usize, erode: bool) {
        let mut out = vec![0u64; self.words];
        for row in self.bits.chunks_exact_mut(self.words) {
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = shifted_word(row, i, 0);
                for d in 1..=r as i64 {
                    let pair = shifted_word(row, i, d);
                    let pair2 = shifted_word(row, i, -d);
                    acc = if erode { acc & pair & pair2 } else { acc | pair | pair2 };
                }
                *o = acc;
            }
            row.copy_from_slice(&out);
        }
        self.clear_padding();
    }

    fn vertical(&mut self, r: usize, erode: bool) {
        let (h, n) = (self.h, self.words);
        let src = self.bits.clone();
        for y in 0..h {
            let lo = y as i64 - r as i64;
            let hi = y + r;
            let dst = &mut self.bits[y * n..(y + 1) * n];
            if erode && (lo < 0 || hi >= h) {
                dst.fill(0);
                continue;
            }
            let (lo, hi) = (lo.max(0) as usize, hi.min(h - 1));
            for (i, d) in dst.iter_mut().enumerate() {
                let column = (lo..=hi).map(|yy| src[yy * n + i]);
                *d = if erode {
                    column.fold(u64::MAX, |a, b| a & b)
                } else {
                    column.fold(0, |a, b| a | b)
                };
            }
        }
    }

    /// The first run of set pixels in row `y` starting at or after `from`.
    fn next_run(&self, y: usize, from: usize) -> Option<(usize, usize)> {
        let row = self.row(y);
        let start = scan(row, from, false)?;
        let end = scan(row, start, true).unwrap_or(self.w).min(self.w);
        Some((start, end))
    }
}

/// Word `i` of `row` moved so that bit `x` holds the old bit `x + d`; bits
/// shifted in from outside the row are clear.
#[inline]
fn shifted_word(row: &[u64], i: usize, d: i64) -> u64 {
    let word = |j: i64| {
        if j >= 0 && (j as usize) < row.len() {
            row[j as usize]
        } else {
            0
        }
    };
    let (q, s) = (d.div_euclid(64), d.rem_euclid(64) as u32);
    let i = i as i64;
    let lo = word(i + q);
    if s == 0 {
        lo
    } else {
        (lo >> s) | (word(i + q + 1) << (64 - s))
    }
}

/// Position of the first bit at or after `from` that is set (`clear = false`)
/// or clear (`clear = true`).
fn scan(row: &[u64], from: usize, clear: bool) -> Option<usize> {
    let mut i = from / 64;
    if i >= row.len() {
        return None;
    }
    let flip = |w: u64| if clear { !w } else { w };
    let mut word = flip(row[i]) & (u64::MAX << (from % 64));
    loop {
        if word != 0 {
            return Some(i * 64 + word.trailing_zeros() as usize);
        }
        i += 1;
        if i >= row.len() {
            return None;
        }
        word = flip(row[i]);
    }
}

struct Run {
    y: usize,
    x0: usize,
    x1: usize,
}

struct Component {
    area: usize,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}
