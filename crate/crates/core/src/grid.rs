//! Nine-square-grid patch model: a shared 3x3 occupancy matrix, per-patch
//! anchors, grid side length and block intensity.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 3x3 binary occupancy shared by every patch of a genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[[u8; 3]; 3]", into = "[[u8; 3]; 3]")]
pub struct ShapeMatrix {
    mask: u16,
}

impl ShapeMatrix {
    pub const CELLS: usize = 9;
    /// Number of distinct non-empty shapes.
    pub const NON_EMPTY: u16 = 511;

    pub fn empty() -> Self {
        Self { mask: 0 }
    }

    pub fn full() -> Self {
        Self { mask: 0x1ff }
    }

    /// Bit `3 * row + col` is the cell at `(row, col)`.
    pub fn from_mask(mask: u16) -> Result<Self> {
        if mask > 0x1ff {
            return Err(Error::InvalidGenome(format!(
                "shape mask {mask:#x} has more than 9 bits"
            )));
        }
        Ok(Self { mask })
    }

    pub fn from_rows(rows: [[u8; 3]; 3]) -> Result<Self> {
        let mut mask = 0u16;
        for (r, row) in rows.iter().enumerate() {
            for (c, &cell) in row.iter().enumerate() {
                match cell {
                    0 => {}
                    1 => mask |= 1 << (3 * r + c),
                    other => {
                        return Err(Error::InvalidGenome(format!(
                            "shape cell ({r}, {c}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(Self { mask })
    }

    pub fn rows(&self) -> [[u8; 3]; 3] {
        let mut rows = [[0u8; 3]; 3];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = self.is_set(r, c) as u8;
            }
        }
        rows
    }

    pub fn mask(&self) -> u16 {
        self.mask
    }

    #[inline]
    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.mask & (1 << (3 * row + col)) != 0
    }

    pub fn active_count(&self) -> u32 {
        self.mask.count_ones()
    }

    /// Every non-empty shape, in increasing mask order.
    pub fn all_non_empty() -> impl Iterator<Item = ShapeMatrix> {
        (1..=Self::NON_EMPTY).map(|mask| ShapeMatrix { mask })
    }
}

impl TryFrom<[[u8; 3]; 3]> for ShapeMatrix {
    type Error = Error;

    fn try_from(rows: [[u8; 3]; 3]) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ShapeMatrix> for [[u8; 3]; 3] {
    fn from(shape: ShapeMatrix) -> Self {
        shape.rows()
    }
}

impl fmt::Display for ShapeMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        write!(f, "[{:?},{:?},{:?}]", rows[0], rows[1], rows[2])
    }
}

/// One candidate attack.
///
/// Positions are the top-left anchors of each patch in person-box-relative
/// coordinates; `side` is the grid side as a fraction of the person height.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub shape: ShapeMatrix,
    pub positions: Vec<[f64; 2]>,
    pub side: f64,
    pub pixel_value: f64,
}

impl Genome {
    pub fn new(shape: ShapeMatrix, positions: Vec<[f64; 2]>, side: f64, pixel_value: f64) -> Result<Self> {
        let g = Self {
            shape,
            positions,
            side,
            pixel_value,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidGenome("patch count m must be at least 1".into()));
        }
        if let Some(p) = self
            .positions
            .iter()
            .find(|p| !p.iter().all(|c| (0.0..=1.0).contains(c)))
        {
            return Err(Error::InvalidGenome(format!("position {p:?} outside [0, 1]^2")));
        }
        if !(self.side > 0.0 && self.side <= 1.0) {
            return Err(Error::InvalidGenome(format!(
                "side length l={} outside (0, 1]",
                self.side
            )));
        }
        if !(0.0..=1.0).contains(&self.pixel_value) {
            return Err(Error::InvalidGenome(format!(
                "pixel value {} outside [0, 1]",
                self.pixel_value
            )));
        }
        Ok(())
    }

    pub fn patch_count(&self) -> usize {
        self.positions.len()
    }

    pub fn active_cells(&self) -> u32 {
        self.shape.active_count()
    }

    /// A genome with no active cell renders nothing.
    pub fn is_degenerate(&self) -> bool {
        self.active_cells() == 0
    }
}

/// Covered area `n * m * l^2 / 9`, in squared fractions of the person height.
pub fn area_measure(g: &Genome) -> f64 {
    g.active_cells() as f64 * g.patch_count() as f64 * g.side * g.side / 9.0
}

/// Maps genomes with fixed `m`, `l` and pixel value to flat vectors in
/// `[0, 1]^(9 + 2m)`: nine latent cell activations followed by `x, y` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeCodec {
    pub patches: usize,
    pub side: f64,
    pub pixel_value: f64,
    /// When set, decoded positions snap to a `k x k` lattice over `[0, 1]^2`.
    pub position_grid: Option<usize>,
}

impl GenomeCodec {
    pub const CELL_THRESHOLD: f64 = 0.5;

    pub fn new(patches: usize, side: f64, pixel_value: f64) -> Result<Self> {
        // validates the fixed parameters once
        Genome::new(ShapeMatrix::empty(), vec![[0.0, 0.0]; patches], side, pixel_value)?;
        Ok(Self {
            patches,
            side,
            pixel_value,
            position_grid: None,
        })
    }

    pub fn with_position_grid(mut self, k: Option<usize>) -> Result<Self> {
        if let Some(k) = k {
            if k < 2 {
                return Err(Error::Argument(format!(
                    "position grid needs at least 2 points per axis, got {k}"
                )));
            }
        }
        self.position_grid = k;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        ShapeMatrix::CELLS + 2 * self.patches
    }

    pub fn encode(&self, g: &Genome) -> Result<Vec<f64>> {
        if g.patch_count() != self.patches {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: ShapeMatrix::CELLS + 2 * g.patch_count(),
            });
        }
        let mut v = Vec::with_capacity(self.dimension());
        v.extend((0..ShapeMatrix::CELLS).map(|i| if g.shape.mask() & (1 << i) != 0 { 1.0 } else { 0.0 }));
        for p in &g.positions {
            v.extend_from_slice(p);
        }
        Ok(v)
    }

    pub fn decode(&self, v: &[f64]) -> Result<Genome> {
        if v.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: v.len(),
            });
        }
        let mut mask = 0u16;
        for (i, &latent) in v[..ShapeMatrix::CELLS].iter().enumerate() {
            if latent >= Self::CELL_THRESHOLD {
                mask |= 1 << i;
            }
        }
        let positions = v[ShapeMatrix::CELLS..]
            .chunks_exact(2)
            .map(|xy| [self.snap(xy[0]), self.snap(xy[1])])
            .collect();
        Ok(Genome {
            shape: ShapeMatrix { mask },
            positions,
            side: self.side,
            pixel_value: self.pixel_value,
        })
    }

    fn snap(&self, c: f64) -> f64 {
        let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
        match self.position_grid {
            Some(k) => {
                let steps = (k - 1) as f64;
                (c * steps).round() / steps
            }
            None => c,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenomeMeta {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub fitness: Option<f64>,
    pub detector_id: Option<String>,
}

/// On-disk genome document shared by `attack`, `apply` and `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeFile {
    pub m: usize,
    pub l: f64,
    pub pixel_value: f64,
    pub shape: ShapeMatrix,
    pub positions: Vec<[f64; 2]>,
    #[serde(default)]
    pub meta: GenomeMeta,
}

impl GenomeFile {
    pub fn new(g: &Genome, meta: GenomeMeta) -> Self {
        Self {
            m: g.patch_count(),
            l: g.side,
            pixel_value: g.pixel_value,
            shape: g.shape,
            positions: g.positions.clone(),
            meta,
        }
    }

    pub fn genome(&self) -> Result<Genome> {
        if self.m != self.positions.len() {
            return Err(Error::InvalidGenome(format!(
                "m={} but {} positions listed",
                self.m,
                self.positions.len()
            )));
        }
        Genome::new(self.shape, self.positions.clone(), self.l, self.pixel_value)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("genome document serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: GenomeFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        doc.genome()?;
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
