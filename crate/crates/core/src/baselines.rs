//! Random (R) and manual-random (MR) block attacks.
//!
//! Both draw a fresh genome for every attacked person: each cell is on with
//! probability 1/2 (redrawn when empty) and anchors are uniform. MR
//! additionally rejects draws whose grids overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compositor::grid_layouts;
use crate::error::{Error, Result};
use crate::grid::{Genome, ShapeMatrix};
use crate::image::BoundingBox;

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    ManualRandom,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Random => "R",
            BaselineKind::ManualRandom => "MR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub m: usize,
    pub l: f64,
    pub pixel_value: f64,
    pub seed: u64,
}

/// Independent random stream for one scene.
pub fn scene_rng(seed: u64, scene_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_index as u64);
    rng
}

fn random_shape<R: Rng>(rng: &mut R) -> ShapeMatrix {
    loop {
        let mask = (0..ShapeMatrix::CELLS).fold(
            0u16,
            |mask, i| {
                if rng.random_bool(0.5) {
                    mask | (1 << i)
                } else {
                    mask
                }
            },
        );
        if mask != 0 {
            return ShapeMatrix::from_mask(mask).expect("nine bits");
        }
    }
}

fn random_positions<R: Rng>(rng: &mut R, m: usize) -> Vec<[f64; 2]> {
    (0..m).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

pub fn sample_baseline<R: Rng>(spec: &BaselineSpec, person: &BoundingBox, rng: &mut R) -> Result<Genome> {
    let shape = random_shape(rng);
    match spec.kind {
        BaselineKind::Random => Genome::new(shape, random_positions(rng, spec.m), spec.l, spec.pixel_value),
        BaselineKind::ManualRandom => {
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let g = Genome::new(shape, random_positions(rng, spec.m), spec.l, spec.pixel_value)?;
                let grids: Vec<_> = grid_layouts(person, &g)?.iter().map(|l| l.extent()).collect();
                let disjoint = grids
                    .iter()
                    .enumerate()
                    .all(|(i, a)| grids[i + 1..].iter().all(|b| !a.overlaps(b)));
                if disjoint {
                    return Ok(g);
                }
            }
            Err(Error::Infeasible(format!(
                "no non-overlapping placement of m={} grids with l={} in person box {person} after {MAX_PLACEMENT_ATTEMPTS} attempts",
                spec.m, spec.l
            )))
        }
    }
}
