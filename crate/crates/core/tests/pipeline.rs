//! End-to-end paths through the library: generation, disk round trips,
//! attack rendering, search and evaluation.

use hotcold::compositor::place_on_scene;
use hotcold::dataset::{emit_augmented, generate_synthetic, load_split, write_split, SynthParams, MIN_PERSON_HEIGHT};
use hotcold::detector::ToyDetector;
use hotcold::evaluation::{attacked_images, evaluate, Attack, EvalConfig};
use hotcold::grid::{Genome, GenomeFile, GenomeMeta, ShapeMatrix};
use hotcold::objective::{loss, mean_object_probability, LossConfig};
use hotcold::optimizer::{brute_force_oracle, optimize, GenomeTemplate, OptimizeOptions, PsoParams};

fn options(swarm: usize, grid: Option<usize>) -> OptimizeOptions {
    OptimizeOptions {
        pso: PsoParams {
            swarm_size: swarm,
            ..Default::default()
        },
        position_grid: grid,
    }
}

fn bar() -> Genome {
    let row = ShapeMatrix::from_rows([[0, 0, 0], [1, 1, 1], [0, 0, 0]]).unwrap();
    Genome::new(row, vec![[0.0, 0.5], [0.34, 0.5], [0.67, 0.5], [1.0, 0.5]], 0.16, 0.2).unwrap()
}

#[test]
fn synthetic_split_survives_a_disk_round_trip() {
    let scenes = generate_synthetic(8, 21, &SynthParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_split(&scenes, dir.path(), "png").unwrap();
    let loaded = load_split(&manifest, MIN_PERSON_HEIGHT).unwrap();
    assert_eq!(loaded.stats.dropped_scenes, 0);
    assert_eq!(loaded.scenes.len(), scenes.len());
    for (a, b) in scenes.iter().zip(&loaded.scenes) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.persons, b.persons);
        // synthetic frames are generated on the 8-bit lattice
        assert_eq!(a.image.to_bytes(), b.image.to_bytes());
    }
}

#[test]
fn applied_attack_on_disk_evaluates_like_in_memory() {
    let scenes = generate_synthetic(10, 4, &SynthParams::default()).unwrap();
    let det = ToyDetector::default();
    let cfg = EvalConfig::default();
    let g = bar();
    let in_memory = evaluate(&scenes, &det, Attack::Universal(&g), &cfg).unwrap();

    let images = attacked_images(&scenes, Attack::Universal(&g)).unwrap();
    for (s, img) in scenes.iter().zip(&images) {
        assert_eq!(img, &place_on_scene(s, &g).unwrap().quantized());
    }
    let attacked: Vec<_> = scenes
        .iter()
        .cloned()
        .zip(images)
        .map(|(s, image)| hotcold::dataset::AnnotatedScene { image, ..s })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_split(&attacked, dir.path(), "png").unwrap();
    let reloaded = load_split(&manifest, MIN_PERSON_HEIGHT).unwrap().scenes;
    let on_disk = evaluate(&reloaded, &det, Attack::None, &cfg).unwrap();
    assert!((on_disk.ap - in_memory.ap).abs() <= 1e-9);
}

#[test]
fn augmentation_writes_clean_and_attacked_copies() {
    let scenes = generate_synthetic(3, 9, &SynthParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = emit_augmented(&scenes, &bar(), dir.path(), "png").unwrap();
    let loaded = load_split(&manifest, MIN_PERSON_HEIGHT).unwrap().scenes;
    assert_eq!(loaded.len(), 2 * scenes.len());
    let attacked = attacked_images(&scenes, Attack::Universal(&bar())).unwrap();
    for s in &scenes {
        let clean = loaded.iter().find(|l| l.id == s.id).expect("clean copy keeps its id");
        assert_eq!(clean.image, s.image.quantized());
    }
    let copies: Vec<_> = loaded.iter().filter(|l| !scenes.iter().any(|s| s.id == l.id)).collect();
    assert_eq!(copies.len(), scenes.len());
    for c in copies {
        assert!(attacked.contains(&c.image));
    }
}

#[test]
fn search_is_identical_across_thread_pools() {
    let train = generate_synthetic(6, 1, &SynthParams::default()).unwrap();
    let det = ToyDetector::default();
    let cfg = LossConfig::default();
    let t = GenomeTemplate {
        m: 3,
        l: 0.12,
        pixel_value: 0.2,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| optimize(&train, t, 4, &cfg, &det, 5, &options(12, None)).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.genome, b.genome);
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.trace, b.trace);

    let doc = |r: &hotcold::optimizer::OptimizeResult| {
        GenomeFile::new(
            &r.genome,
            GenomeMeta {
                seed: Some(5),
                fitness: Some(r.loss),
                ..Default::default()
            },
        )
        .to_json()
    };
    assert_eq!(doc(&a), doc(&b));
}

#[test]
fn recorded_fitness_is_reproducible_from_the_genome() {
    let train = generate_synthetic(5, 2, &SynthParams::default()).unwrap();
    let det = ToyDetector::default();
    let cfg = LossConfig::default();
    let t = GenomeTemplate {
        m: 2,
        l: 0.16,
        pixel_value: 0.2,
    };
    let r = optimize(&train, t, 3, &cfg, &det, 8, &options(10, None)).unwrap();
    let recomputed = mean_object_probability(&train, &r.genome, &det, cfg.iou_threshold).unwrap();
    assert_eq!(r.loss, recomputed);
    // against itself the growth penalty vanishes
    assert_eq!(
        loss(&train, &r.genome, Some(&r.genome), &cfg, &det).unwrap(),
        recomputed
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    GenomeFile::new(&r.genome, GenomeMeta::default()).write(&path).unwrap();
    assert_eq!(GenomeFile::read(&path).unwrap().genome().unwrap(), r.genome);
}

#[test]
fn search_never_beats_the_exhaustive_oracle() {
    let train = generate_synthetic(3, 6, &SynthParams::default()).unwrap();
    let det = ToyDetector::default();
    let cfg = LossConfig {
        lambda: 0.0,
        ..Default::default()
    };
    let oracle = brute_force_oracle(&train, 0.3, 4, 0.2, &det, cfg.iou_threshold).unwrap();
    assert_eq!(oracle.evaluations, 511 * 16 * 3);
    let t = GenomeTemplate {
        m: 1,
        l: 0.3,
        pixel_value: 0.2,
    };
    let r = optimize(&train, t, 5, &cfg, &det, 1, &options(20, Some(4))).unwrap();
    assert!(r.loss >= oracle.loss, "{} < oracle {}", r.loss, oracle.loss);
}
