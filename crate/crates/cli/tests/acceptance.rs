//! Acceptance suite: one PASS/FAIL line per property, then a non-zero exit
//! if any failed. Runs without the libtest harness so the lines always show.
//!
//! Shared protocol: the suite is 100 synthetic scenes from seed 1; attacks
//! are optimized on its first 20 scenes and scored on the held-out last 50.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hotcold::compositor::place_on_scene;
use hotcold::dataset::{generate_synthetic, AnnotatedScene, SynthParams};
use hotcold::detector::{Detection, ToyDetector};
use hotcold::evaluation::EvalConfig;
use hotcold::experiment::{run_cell, CellSetup, Method};
use hotcold::grid::{area_measure, Genome, ShapeMatrix};
use hotcold::image::{BoundingBox, GrayImage};
use hotcold::metrics::{attack_success_rate, average_precision};
use hotcold::objective::{growth_penalty, mean, LossConfig};
use hotcold::optimizer::{brute_force_oracle, optimize, GenomeTemplate, OptimizeOptions, PsoParams};
use hotcold::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const LAMBDA_SEEDS: [u64; 8] = [1, 2, 3, 4, 5, 6, 7, 8];
const EPOCHS: usize = 30;
const SWARM: usize = 100;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome, started: Instant) {
    println!(
        "{} {}: {} [{:.0}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.detail,
        started.elapsed().as_secs_f64()
    );
}

/// One optimized or baseline attack, keyed by everything that changes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Cell {
    method: Method,
    m: usize,
    l_bits: u64,
    lambda_bits: u64,
    pixel_bits: u64,
    seed: u64,
}

struct Runs {
    train: Vec<AnnotatedScene>,
    test: Vec<AnnotatedScene>,
    detector: ToyDetector,
    cache: HashMap<Cell, (f64, Option<f64>)>,
}

impl Runs {
    fn new() -> Self {
        let suite = generate_synthetic(100, 1, &SynthParams::default()).unwrap();
        Self {
            train: suite[..20].to_vec(),
            test: suite[50..].to_vec(),
            detector: ToyDetector::default(),
            cache: HashMap::new(),
        }
    }

    /// (ASR on the test scenes, active cells of the optimized genome).
    fn run(
        &mut self,
        method: Method,
        m: usize,
        l: f64,
        lambda: f64,
        pixel_value: f64,
        seed: u64,
    ) -> (f64, Option<f64>) {
        let key = Cell {
            method,
            m,
            l_bits: l.to_bits(),
            lambda_bits: lambda.to_bits(),
            pixel_bits: pixel_value.to_bits(),
            seed,
        };
        if let Some(&hit) = self.cache.get(&key) {
            return hit;
        }
        let setup = CellSetup {
            train: &self.train,
            test: &self.test,
            detector: &self.detector,
            template: GenomeTemplate { m, l, pixel_value },
            loss: LossConfig {
                lambda,
                ..Default::default()
            },
            options: OptimizeOptions {
                pso: PsoParams {
                    swarm_size: SWARM,
                    ..Default::default()
                },
                position_grid: None,
            },
            epochs: EPOCHS,
            eval: EvalConfig::default(),
        };
        let outcome = run_cell(&setup, method, seed).unwrap();
        let value = (
            outcome.report.asr.unwrap(),
            outcome.genome().map(|g| f64::from(g.active_cells())),
        );
        self.cache.insert(key, value);
        value
    }

    fn mean_asr(&mut self, method: Method, m: usize, l: f64, lambda: f64, pixel_value: f64, seeds: &[u64]) -> f64 {
        let v: Vec<f64> = seeds
            .iter()
            .map(|&s| self.run(method, m, l, lambda, pixel_value, s).0)
            .collect();
        mean(&v)
    }
}

fn oracle_optimality() -> Outcome {
    let train = generate_synthetic(20, 1, &SynthParams::default()).unwrap();
    let det = ToyDetector::default();
    let cfg = LossConfig {
        lambda: 0.0,
        ..Default::default()
    };
    let oracle = brute_force_oracle(&train, 0.3, 5, 0.2, &det, cfg.iou_threshold).unwrap();
    let options = OptimizeOptions {
        pso: PsoParams {
            swarm_size: 100,
            ..Default::default()
        },
        position_grid: Some(5),
    };
    let t = GenomeTemplate {
        m: 1,
        l: 0.3,
        pixel_value: 0.2,
    };
    let r = optimize(&train, t, 50, &cfg, &det, 7, &options).unwrap();
    Outcome {
        name: "oracle optimality",
        pass: r.loss <= 1.05 * oracle.loss && r.loss >= oracle.loss,
        detail: format!(
            "search loss {:.6} vs exhaustive {:.6} (limit {:.6}, {} oracle evaluations)",
            r.loss,
            oracle.loss,
            1.05 * oracle.loss,
            oracle.evaluations
        ),
    }
}

fn outperforms_baselines(runs: &mut Runs) -> Outcome {
    let hcb = runs.mean_asr(Method::HotCold, 4, 0.12, 3.0, 0.2, &SEEDS);
    let r = runs.mean_asr(Method::R, 4, 0.12, 3.0, 0.2, &SEEDS);
    let mr = runs.mean_asr(Method::MR, 4, 0.12, 3.0, 0.2, &SEEDS);
    Outcome {
        name: "HCB outperforms R and MR",
        pass: hcb > r && hcb > mr,
        detail: format!(
            "mean ASR over {} seeds: HCB {hcb:.4}, R {r:.4}, MR {mr:.4}",
            SEEDS.len()
        ),
    }
}

/// Non-decreasing with at most one dip, and that dip no deeper than `tol`.
fn nearly_monotone(values: &[f64], tol: f64) -> bool {
    let dips: Vec<f64> = values.windows(2).map(|w| w[0] - w[1]).filter(|&d| d > 0.0).collect();
    dips.len() <= 1 && dips.iter().all(|&d| d <= tol)
}

fn monotonic_trend(runs: &mut Runs) -> Outcome {
    let ms = [1usize, 2, 4];
    let ls = [0.08, 0.12, 0.16];
    let table: Vec<Vec<f64>> = ms
        .iter()
        .map(|&m| {
            ls.iter()
                .map(|&l| runs.mean_asr(Method::HotCold, m, l, 3.0, 0.2, &SEEDS))
                .collect()
        })
        .collect();
    let rows_ok = table.iter().all(|row| nearly_monotone(row, 0.02));
    let cols_ok = (0..ls.len()).all(|j| nearly_monotone(&table.iter().map(|r| r[j]).collect::<Vec<_>>(), 0.02));
    let cells: Vec<String> = ms
        .iter()
        .zip(&table)
        .map(|(m, row)| {
            format!(
                "m={m}: {}",
                row.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ")
            )
        })
        .collect();
    Outcome {
        name: "monotonic trend in m and l",
        pass: rows_ok && cols_ok,
        detail: format!("mean HCB ASR, l = 0.08 0.12 0.16; {}", cells.join("; ")),
    }
}

fn lambda_property(runs: &mut Runs) -> Outcome {
    let lambdas = [0.0, 1.0, 3.0, 6.0];
    let mut ns = Vec::new();
    let mut asrs = Vec::new();
    for &lambda in &lambdas {
        let (a, n): (Vec<f64>, Vec<f64>) = LAMBDA_SEEDS
            .iter()
            .map(|&s| {
                let (asr, n) = runs.run(Method::HotCold, 4, 0.12, lambda, 0.2, s);
                (asr, n.unwrap())
            })
            .unzip();
        asrs.push(mean(&a));
        ns.push(mean(&n));
    }
    let n_ok = ns.windows(2).all(|w| w[1] <= w[0]);
    let asr_ok = (asrs[2] - asrs[0]).abs() <= 0.10;
    Outcome {
        name: "lambda shrinks the patch, ASR stable",
        pass: n_ok && asr_ok,
        detail: format!(
            "over {} seeds, lambda 0/1/3/6: mean n {:?}, mean ASR {:?}",
            LAMBDA_SEEDS.len(),
            ns.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            asrs.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    }
}

fn pixel_concavity(runs: &mut Runs) -> Outcome {
    let [cold, mid, hot] = [0.2, 0.5, 0.9].map(|p| runs.mean_asr(Method::HotCold, 4, 0.12, 3.0, p, &SEEDS));
    Outcome {
        name: "pixel value concavity",
        pass: mid < cold.min(hot),
        detail: format!("mean ASR at 0.2 / 0.5 / 0.9: {cold:.4} / {mid:.4} / {hot:.4}"),
    }
}

fn metric_exactness() -> Outcome {
    let gt = |x: f64| BoundingBox::new(x, 0.0, 10.0, 30.0);
    let hit = |x: f64, s: f64| Detection::person(gt(x), s);
    let mut errors = Vec::new();
    let mut check = |what: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-9 {
            errors.push(format!("{what}: {got} != {want}"));
        }
    };

    // ranked hit, false positive, hit over two persons
    let ap = average_precision(
        &[vec![hit(0.0, 0.9), hit(100.0, 0.8), hit(50.0, 0.7)]],
        &[vec![gt(0.0), gt(50.0)]],
        0.5,
    );
    check("AP hit/miss/hit", ap.unwrap().ap, 5.0 / 6.0);
    let ap = average_precision(&[vec![hit(0.0, 0.9), hit(0.0, 0.8)]], &[vec![gt(0.0)]], 0.5);
    check("AP duplicate", ap.unwrap().ap, 1.0);
    let ap = average_precision(&[vec![], vec![hit(0.0, 0.6)]], &[vec![gt(0.0)], vec![gt(0.0)]], 0.5);
    check("AP half recall", ap.unwrap().ap, 0.5);

    let gts: Vec<Vec<BoundingBox>> = (0..10).map(|i| vec![gt(i as f64 * 20.0)]).collect();
    let clean: Vec<Vec<Detection>> = gts.iter().map(|g| vec![Detection::person(g[0], 0.95)]).collect();
    let none = vec![vec![]; 10];
    let mut four = none.clone();
    four[..4].clone_from_slice(&clean[..4]);
    check(
        "ASR none hidden",
        attack_success_rate(&clean, &clean, &gts, 0.25, 0.5).unwrap().asr,
        0.0,
    );
    check(
        "ASR all hidden",
        attack_success_rate(&clean, &none, &gts, 0.25, 0.5).unwrap().asr,
        1.0,
    );
    check(
        "ASR 4 of 10 survive",
        attack_success_rate(&clean, &four, &gts, 0.25, 0.5).unwrap().asr,
        0.6,
    );
    let mut weak = clean.clone();
    weak[0][0].score = 0.1;
    check(
        "ASR clean misses excluded",
        attack_success_rate(&weak, &none, &gts, 0.25, 0.5).unwrap().asr,
        1.0,
    );

    // penalty vanishes whenever the candidate is no larger than the reference
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut penalties = 0;
    for _ in 0..2000 {
        let a = random_genome(&mut rng);
        let b = random_genome(&mut rng);
        let (small, large) = if area_measure(&a) <= area_measure(&b) {
            (a, b)
        } else {
            (b, a)
        };
        if growth_penalty(&small, Some(&large), 3.0) != 0.0 || growth_penalty(&small, Some(&small), 6.0) != 0.0 {
            penalties += 1;
        }
    }
    if penalties > 0 {
        errors.push(format!("{penalties} non-zero penalties for non-growing candidates"));
    }
    Outcome {
        name: "metric exactness",
        pass: errors.is_empty(),
        detail: if errors.is_empty() {
            "AP, ASR and penalty oracles agree to 1e-9".into()
        } else {
            errors.join("; ")
        },
    }
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_hotcold")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_owned();
    run_cli(&["synth", "--count", "8", "--seed", "1", "--out", &p("train")]);
    let manifest = p("train/manifest.jsonl");
    for (tag, jobs) in [("a", "1"), ("b", "1"), ("c", "2"), ("d", "4")] {
        run_cli(&[
            "--jobs",
            jobs,
            "attack",
            "--train",
            &manifest,
            "--out",
            &p(&format!("{tag}.json")),
            "--trace",
            &p(&format!("{tag}.csv")),
            "--pop",
            "20",
            "--epochs",
            "5",
            "--seed",
            "3",
        ]);
    }
    let read = |name: &str| std::fs::read(Path::new(&p(name))).unwrap();
    let same = ["b", "c", "d"]
        .iter()
        .all(|t| read(&format!("{t}.json")) == read("a.json") && read(&format!("{t}.csv")) == read("a.csv"));
    Outcome {
        name: "CLI determinism",
        pass: same,
        detail: "genome and trace files from two runs at --jobs 1 and runs at --jobs 2 and 4".into(),
    }
}

fn random_shape<R: Rng>(rng: &mut R) -> ShapeMatrix {
    ShapeMatrix::from_mask(rng.random_range(1..512)).unwrap()
}

fn random_genome<R: Rng>(rng: &mut R) -> Genome {
    let m = rng.random_range(1..=7);
    let positions = (0..m).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    Genome::new(
        random_shape(rng),
        positions,
        rng.random_range(0.05..=0.5),
        rng.random::<f64>(),
    )
    .unwrap()
}

fn random_scene<R: Rng>(rng: &mut R) -> AnnotatedScene {
    let (w, h) = (rng.random_range(40..160), rng.random_range(40..160));
    let pixels = (0..w * h).map(|_| rng.random::<f32>()).collect();
    let image = GrayImage::from_vec(w, h, pixels).unwrap();
    let persons = (0..rng.random_range(1..=3))
        .map(|_| {
            // fractional boxes, possibly overlapping each other or the border
            let bw = rng.random_range(4.0..w as f64);
            let bh = rng.random_range(4.0..h as f64);
            let x = rng.random_range(-0.2 * bw..w as f64 - 0.8 * bw);
            let y = rng.random_range(-0.2 * bh..h as f64 - 0.8 * bh);
            BoundingBox::new(x, y, bw, bh)
        })
        .collect();
    AnnotatedScene {
        id: "random".into(),
        image,
        persons,
    }
}

fn compositor_containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut degenerate, mut violations) = (0usize, 0usize, Vec::new());
    while checked < 10_000 {
        let scene = random_scene(&mut rng);
        let g = random_genome(&mut rng);
        let out = match place_on_scene(&scene, &g) {
            Ok(out) => out,
            Err(Error::DegenerateScale { side, .. }) => {
                assert!(side < 3.0);
                degenerate += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        checked += 1;
        let spans: Vec<_> = scene.persons.iter().map(BoundingBox::pixel_span).collect();
        let value = g.pixel_value as f32;
        for y in 0..out.height() {
            for x in 0..out.width() {
                let (before, after) = (scene.image.get(x, y), out.get(x, y));
                if before == after {
                    continue;
                }
                let (xi, yi) = (x as i64, y as i64);
                let inside = spans
                    .iter()
                    .any(|&(x0, y0, x1, y1)| xi >= x0 && xi < x1 && yi >= y0 && yi < y1);
                if !inside || after != value {
                    violations.push(format!("({x},{y}) {before} -> {after}"));
                }
            }
        }
    }
    Outcome {
        name: "compositor containment",
        pass: violations.is_empty(),
        detail: format!(
            "{checked} random genomes ({degenerate} degenerate draws rejected), {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(", first {v}")).unwrap_or_default()
        ),
    }
}

fn main() {
    let started = Instant::now();
    let mut outcomes = Vec::new();
    let mut record = |o: Outcome| {
        report(&o, started);
        outcomes.push(o.pass);
    };
    record(metric_exactness());
    record(compositor_containment());
    record(cli_determinism());
    record(oracle_optimality());
    let mut runs = Runs::new();
    record(outperforms_baselines(&mut runs));
    record(lambda_property(&mut runs));
    record(pixel_concavity(&mut runs));
    record(monotonic_trend(&mut runs));

    let failed = outcomes.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
