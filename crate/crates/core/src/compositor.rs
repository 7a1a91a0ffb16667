//! Renders a genome onto person boxes.

use crate::dataset::AnnotatedScene;
use crate::error::{Error, Result};
use crate::grid::Genome;
use crate::image::{byte_to_intensity, intensity_to_byte, BoundingBox, GrayImage};

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn area(&self) -> i64 {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0)
        }
    }

    pub fn intersect(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        }
    }

    pub fn overlaps(&self, other: &PixelRect) -> bool {
        !self.intersect(other).is_empty()
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Pixel-scale layout of one patch grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLayout {
    /// Real grid side `l * h`.
    pub side: f64,
    /// Integer cell side `floor(side / 3)`.
    pub cell: i64,
    pub anchor_x: i64,
    pub anchor_y: i64,
}

impl GridLayout {
    /// The square covered by all nine cells.
    pub fn extent(&self) -> PixelRect {
        PixelRect {
            x0: self.anchor_x,
            y0: self.anchor_y,
            x1: self.anchor_x + 3 * self.cell,
            y1: self.anchor_y + 3 * self.cell,
        }
    }

    pub fn cell_rect(&self, row: usize, col: usize) -> PixelRect {
        let x0 = self.anchor_x + col as i64 * self.cell;
        let y0 = self.anchor_y + row as i64 * self.cell;
        PixelRect {
            x0,
            y0,
            x1: x0 + self.cell,
            y1: y0 + self.cell,
        }
    }
}

/// Grid placement for every patch of `g` inside `person`.
///
/// The grid side is `l * h` on both axes and a relative position `(x, y)`
/// maps to the anchor `(bx + x (w - s), by + y (h - s))`, so any position in
/// the unit square keeps the grid inside the box.
pub fn grid_layouts(person: &BoundingBox, g: &Genome) -> Result<Vec<GridLayout>> {
    let side = g.side * person.h;
    if side < 3.0 {
        return Err(Error::DegenerateScale {
            person: *person,
            l: g.side,
            side,
        });
    }
    let cell = (side / 3.0).floor() as i64;
    Ok(g.positions
        .iter()
        .map(|&[px, py]| GridLayout {
            side,
            cell,
            anchor_x: (person.x + px * (person.w - side)).floor() as i64,
            anchor_y: (person.y + py * (person.h - side)).floor() as i64,
        })
        .collect())
}

/// Active cell rectangles for every patch in list order, clipped to the
/// pixels the person box touches.
pub fn active_cells(person: &BoundingBox, g: &Genome) -> Result<Vec<PixelRect>> {
    let (bx0, by0, bx1, by1) = person.pixel_span();
    let bounds = PixelRect {
        x0: bx0,
        y0: by0,
        x1: bx1,
        y1: by1,
    };
    let mut cells = Vec::with_capacity(g.patch_count() * g.active_cells() as usize);
    for layout in grid_layouts(person, g)? {
        for row in 0..3 {
            for col in 0..3 {
                if g.shape.is_set(row, col) {
                    let r = layout.cell_rect(row, col).intersect(&bounds);
                    if !r.is_empty() {
                        cells.push(r);
                    }
                }
            }
        }
    }
    Ok(cells)
}

pub(crate) fn paint(image: &mut GrayImage, person: &BoundingBox, g: &Genome) -> Result<()> {
    paint_value(image, person, g, g.pixel_value as f32)
}

fn paint_value(image: &mut GrayImage, person: &BoundingBox, g: &Genome, value: f32) -> Result<()> {
    if g.is_degenerate() {
        return Ok(());
    }
    for r in active_cells(person, g)? {
        image.fill_rect(r.x0, r.y0, r.x1, r.y1, value);
    }
    Ok(())
}

/// Returns a copy of `image` with the genome's patches drawn inside `person`.
pub fn place_patches(image: &GrayImage, person: &BoundingBox, g: &Genome) -> Result<GrayImage> {
    let mut out = image.clone();
    paint(&mut out, person, g)?;
    Ok(out)
}

/// Applies the same genome to every ground-truth person of the scene.
pub fn place_on_scene(scene: &AnnotatedScene, g: &Genome) -> Result<GrayImage> {
    if scene.persons.is_empty() {
        return Err(Error::NoTarget(scene.id.clone()));
    }
    let mut out = scene.image.clone();
    for person in &scene.persons {
        paint(&mut out, person, g)?;
    }
    Ok(out)
}

/// The 8-bit attacked frame a detector sees: identical to
/// `place_on_scene(scene, g)?.quantized()`, but quantizes the clean frame
/// once and paints the quantized block value on top. `genomes` yields one
/// genome per person.
pub fn render_quantized<'g>(
    scene: &AnnotatedScene,
    mut genomes: impl FnMut(usize, &BoundingBox) -> Result<std::borrow::Cow<'g, Genome>>,
) -> Result<GrayImage> {
    if scene.persons.is_empty() {
        return Err(Error::NoTarget(scene.id.clone()));
    }
    let mut out = scene.image.quantized();
    for (i, person) in scene.persons.iter().enumerate() {
        let g = genomes(i, person)?;
        let value = byte_to_intensity(intensity_to_byte(g.pixel_value as f32));
        paint_value(&mut out, person, &g, value)?;
    }
    Ok(out)
}
