//! Particle-swarm search over encoded genomes with greedy acceptance.
//!
//! Each particle carries a continuously moving position and a lagging
//! "accepted" genome. A move is accepted only when the candidate's loss,
//! penalized for area growth relative to the accepted genome, beats the
//! accepted genome's object probability. Personal and global bests track
//! accepted genomes.
//!
//! All candidate losses of a step are evaluated (possibly in parallel)
//! before any acceptance is applied, and acceptance runs in particle order,
//! so traces do not depend on the thread count.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::AnnotatedScene;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::grid::{Genome, GenomeCodec, ShapeMatrix};
use crate::objective::{evaluate_loss, mean, mean_object_probability, LossConfig, LossValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoParams {
    pub swarm_size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_velocity: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            swarm_size: 100,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            max_velocity: 0.5,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Argument(format!(
                "swarm needs at least 2 particles, got {}",
                self.swarm_size
            )));
        }
        if self.max_velocity.is_nan() || self.max_velocity <= 0.0 {
            return Err(Error::Argument("velocity clamp must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestRecord {
    pub position: Vec<f64>,
    pub genome: Genome,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub accepted_genome: Genome,
    /// Object probability of the accepted genome (its penalty against itself is zero).
    pub accepted_loss: f64,
    pub personal_best: BestRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub best_loss: f64,
    pub best_n: u32,
    pub mean_loss: f64,
    pub evals: u64,
}

#[derive(Debug, Clone)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub global_best: BestRecord,
    pub iteration: usize,
    pub evaluations: u64,
    pub params: PsoParams,
    pub codec: GenomeCodec,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl SwarmState {
    /// Random positions and velocities, each evaluated without a size reference.
    pub fn initialize(
        codec: GenomeCodec,
        params: PsoParams,
        seed: u64,
        batch: &[AnnotatedScene],
        cfg: &LossConfig,
        detector: &dyn Detector,
    ) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = codec.dimension();
        let vmax = params.max_velocity;
        let starts: Vec<(Vec<f64>, Vec<f64>)> = (0..params.swarm_size)
            .map(|_| {
                let x = (0..dim).map(|_| rng.random::<f64>()).collect();
                let v = (0..dim).map(|_| rng.random_range(-vmax..=vmax)).collect();
                (x, v)
            })
            .collect();
        let genomes = starts
            .iter()
            .map(|(x, _)| codec.decode(x))
            .collect::<Result<Vec<_>>>()?;
        let losses = genomes
            .par_iter()
            .map(|g| mean_object_probability(batch, g, detector, cfg.iou_threshold))
            .collect::<Result<Vec<f64>>>()?;

        let particles: Vec<Particle> = starts
            .into_iter()
            .zip(genomes)
            .zip(losses)
            .map(|(((x, v), g), loss)| Particle {
                personal_best: BestRecord {
                    position: x.clone(),
                    genome: g.clone(),
                    loss,
                },
                position: x,
                velocity: v,
                accepted_genome: g,
                accepted_loss: loss,
            })
            .collect();
        let mut best = &particles[0].personal_best;
        for p in &particles[1..] {
            if p.personal_best.loss < best.loss {
                best = &p.personal_best;
            }
        }
        let global_best = best.clone();
        Ok(Self {
            evaluations: particles.len() as u64,
            particles,
            global_best,
            iteration: 0,
            params,
            codec,
            seed,
            rng,
        })
    }

    /// One synchronous swarm update. On error the state is left untouched.
    pub fn step(&mut self, batch: &[AnnotatedScene], cfg: &LossConfig, detector: &dyn Detector) -> Result<TraceRow> {
        let mut rng = self.rng.clone();
        let p = &self.params;
        let gb = &self.global_best.position;
        let moves: Vec<(Vec<f64>, Vec<f64>)> = self
            .particles
            .iter()
            .map(|particle| {
                let pb = &particle.personal_best.position;
                let mut x = particle.position.clone();
                let mut v = particle.velocity.clone();
                for k in 0..x.len() {
                    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                    v[k] = (p.inertia * v[k] + p.cognitive * r1 * (pb[k] - x[k]) + p.social * r2 * (gb[k] - x[k]))
                        .clamp(-p.max_velocity, p.max_velocity);
                    x[k] = (x[k] + v[k]).clamp(0.0, 1.0);
                }
                (x, v)
            })
            .collect();

        let candidates = moves
            .iter()
            .map(|(x, _)| self.codec.decode(x))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<LossValue> = candidates
            .par_iter()
            .zip(self.particles.par_iter())
            .map(|(g, particle)| evaluate_loss(batch, g, Some(&particle.accepted_genome), cfg, detector))
            .collect::<Result<_>>()?;

        for (((particle, (x, v)), g), value) in self.particles.iter_mut().zip(moves).zip(candidates).zip(values) {
            if value.total() < particle.accepted_loss {
                particle.accepted_genome = g;
                particle.accepted_loss = value.mean_object_probability;
                if particle.accepted_loss < particle.personal_best.loss {
                    particle.personal_best = BestRecord {
                        position: x.clone(),
                        genome: particle.accepted_genome.clone(),
                        loss: particle.accepted_loss,
                    };
                    if particle.accepted_loss < self.global_best.loss {
                        self.global_best = particle.personal_best.clone();
                    }
                }
            }
            particle.position = x;
            particle.velocity = v;
        }
        self.rng = rng;
        self.iteration += 1;
        self.evaluations += self.particles.len() as u64;
        Ok(self.trace_row())
    }

    pub fn trace_row(&self) -> TraceRow {
        let accepted: Vec<f64> = self.particles.iter().map(|p| p.accepted_loss).collect();
        TraceRow {
            step: self.iteration,
            best_loss: self.global_best.loss,
            best_n: self.global_best.genome.active_cells(),
            mean_loss: mean(&accepted),
            evals: self.evaluations,
        }
    }
}

/// Fixed attack parameters; shape and positions are searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenomeTemplate {
    pub m: usize,
    pub l: f64,
    pub pixel_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub pso: PsoParams,
    /// Snap positions to a `k x k` lattice.
    pub position_grid: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub genome: Genome,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
    /// The scenes fitness was computed on.
    pub batch_ids: Vec<String>,
}

/// Picks the fitness batch: the whole split, or a seeded subset kept in split order.
pub fn fitness_batch(train: &[AnnotatedScene], batch_size: Option<usize>, seed: u64) -> Vec<AnnotatedScene> {
    match batch_size {
        Some(k) if k < train.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let mut picked = index::sample(&mut rng, train.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| train[i].clone()).collect()
        }
        _ => train.to_vec(),
    }
}

/// Runs `epochs` swarm steps from a random start and returns the global best.
pub fn optimize(
    train: &[AnnotatedScene],
    template: GenomeTemplate,
    epochs: usize,
    cfg: &LossConfig,
    detector: &dyn Detector,
    seed: u64,
    options: &OptimizeOptions,
) -> Result<OptimizeResult> {
    optimize_with(train, template, epochs, cfg, detector, seed, options, |_| {})
}

/// [`optimize`] with a callback invoked after initialization and every step.
#[allow(clippy::too_many_arguments)]
pub fn optimize_with(
    train: &[AnnotatedScene],
    template: GenomeTemplate,
    epochs: usize,
    cfg: &LossConfig,
    detector: &dyn Detector,
    seed: u64,
    options: &OptimizeOptions,
    mut on_step: impl FnMut(&TraceRow),
) -> Result<OptimizeResult> {
    if train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    if epochs == 0 {
        return Err(Error::Argument("epochs must be at least 1".into()));
    }
    cfg.validate()?;
    let codec =
        GenomeCodec::new(template.m, template.l, template.pixel_value)?.with_position_grid(options.position_grid)?;
    let batch = fitness_batch(train, cfg.batch_size, seed);
    let mut state = SwarmState::initialize(codec, options.pso.clone(), seed, &batch, cfg, detector)?;
    let mut trace = Vec::with_capacity(epochs + 1);
    trace.push(state.trace_row());
    on_step(&trace[0]);
    for _ in 0..epochs {
        let row = state.step(&batch, cfg, detector)?;
        on_step(&row);
        trace.push(row);
    }
    Ok(OptimizeResult {
        genome: state.global_best.genome,
        loss: state.global_best.loss,
        trace,
        batch_ids: batch.into_iter().map(|s| s.id).collect(),
    })
}

pub const ORACLE_MAX_EVALUATIONS: u64 = 1_000_000;
pub const ORACLE_MAX_GRID: usize = 10;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub genome: Genome,
    pub loss: f64,
    /// Detector calls made.
    pub evaluations: u64,
}

/// Exhaustive search over every non-empty shape and every lattice position
/// of a single patch, scored by mean object probability (no size penalty).
/// Ties go to fewer active cells, then the lexicographically smaller position.
pub fn brute_force_oracle(
    train: &[AnnotatedScene],
    side: f64,
    position_grid: usize,
    pixel_value: f64,
    detector: &dyn Detector,
    iou_threshold: f64,
) -> Result<OracleResult> {
    if train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    if position_grid < 2 {
        return Err(Error::Argument(format!(
            "position grid {position_grid} needs at least 2 points per axis"
        )));
    }
    let evaluations = ShapeMatrix::NON_EMPTY as u64 * (position_grid * position_grid) as u64 * train.len() as u64;
    if position_grid > ORACLE_MAX_GRID || evaluations > ORACLE_MAX_EVALUATIONS {
        return Err(Error::SearchTooLarge {
            evaluations,
            limit: ORACLE_MAX_EVALUATIONS,
        });
    }
    let steps = (position_grid - 1) as f64;
    let lattice: Vec<[f64; 2]> = (0..position_grid)
        .flat_map(|i| (0..position_grid).map(move |j| [i as f64 / steps, j as f64 / steps]))
        .collect();
    let candidates: Vec<Genome> = ShapeMatrix::all_non_empty()
        .flat_map(|shape| lattice.iter().map(move |&p| (shape, p)))
        .map(|(shape, p)| Genome::new(shape, vec![p], side, pixel_value))
        .collect::<Result<_>>()?;
    let losses = candidates
        .par_iter()
        .map(|g| mean_object_probability(train, g, detector, iou_threshold))
        .collect::<Result<Vec<f64>>>()?;

    let key = |g: &Genome, loss: f64| (loss, g.active_cells(), g.positions[0][0], g.positions[0][1]);
    let mut best = 0;
    for i in 1..candidates.len() {
        let (a, b) = (key(&candidates[i], losses[i]), key(&candidates[best], losses[best]));
        if a.partial_cmp(&b) == Some(std::cmp::Ordering::Less) {
            best = i;
        }
    }
    Ok(OracleResult {
        genome: candidates[best].clone(),
        loss: losses[best],
        evaluations,
    })
}
