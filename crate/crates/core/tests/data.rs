use std::collections::{BTreeMap, HashSet};

use smem_vqa::dataset::Dataset;
use smem_vqa::features::{extract_grid_patch, write_precomputed, FeatureKind};
use smem_vqa::heuristic::PositionHeuristic;
use smem_vqa::synth::{generate, oracle_answer, SynthSpec, Task};
use smem_vqa::train::{train, TrainConfig, TrainData};

fn spec(task: Task, seed: u64) -> SynthSpec {
    SynthSpec {
        task,
        train: 40,
        test: 15,
        seed,
        ..SynthSpec::default()
    }
}

#[test]
fn saved_datasets_load_back_identically() {
    for task in [Task::Absolute, Task::Relative] {
        let s = generate(&spec(task, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.train.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, s.train);
        assert_eq!(back.manifest().unwrap(), s.train.manifest().unwrap());
    }
}

#[test]
fn manifest_lines_carry_geometry() {
    let s = generate(&spec(Task::Relative, 1)).unwrap();
    let first = s.train.manifest().unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    for key in ["image", "question", "answer", "category", "square_box", "object_box"] {
        assert!(line.get(key).is_some(), "missing {key}");
    }
    assert_eq!(line["square_box"].as_array().unwrap().len(), 4);
}

#[test]
fn generation_is_seeded() {
    let a = generate(&spec(Task::Relative, 5)).unwrap();
    let b = generate(&spec(Task::Relative, 5)).unwrap();
    let c = generate(&spec(Task::Relative, 6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.train, c.train);
}

#[test]
fn train_and_test_layouts_are_disjoint() {
    for task in [Task::Absolute, Task::Relative] {
        let s = generate(&SynthSpec {
            train: 400,
            test: 100,
            ..spec(task, 3)
        })
        .unwrap();
        let layout = |ds: &Dataset| -> HashSet<String> {
            ds.samples
                .iter()
                .map(|q| format!("{:?}{:?}", q.square_box, q.object_box))
                .collect()
        };
        assert!(layout(&s.train).is_disjoint(&layout(&s.test)));
        assert_eq!(s.train.images.len(), 400);
        assert_eq!(s.test.images.len(), 100);
    }
}

#[test]
fn labels_agree_with_geometry_and_prior_is_one_in_four() {
    for task in [Task::Absolute, Task::Relative] {
        let sp = spec(task, 8);
        let s = generate(&sp).unwrap();
        let mut yes_per_image: BTreeMap<usize, usize> = BTreeMap::new();
        for q in &s.train.samples {
            assert_eq!(oracle_answer(&sp, q).unwrap(), q.answer);
            *yes_per_image.entry(q.image).or_default() += (q.answer == "yes") as usize;
        }
        assert!(yes_per_image.values().all(|&n| n == 1));
        let yes = s.train.samples.iter().filter(|q| q.answer == "yes").count();
        assert_eq!(yes * 4, s.train.len());
    }
}

#[test]
fn always_no_scores_the_answer_prior() {
    let s = generate(&spec(Task::Absolute, 1)).unwrap();
    let always_no = PositionHeuristic {
        answers: vec!["no".into(), "yes".into()],
        table: BTreeMap::new(),
        fallback: "no".into(),
    };
    assert_eq!(always_no.evaluate(&s.test).unwrap().accuracy, 0.75);
}

#[test]
fn heuristic_survives_json_and_is_blind_to_relative_layout() {
    let s = generate(&SynthSpec {
        train: 400,
        test: 200,
        ..spec(Task::Relative, 4)
    })
    .unwrap();
    let h = PositionHeuristic::fit(&s.train).unwrap();
    let json = serde_json::to_string(&h).unwrap();
    let back: PositionHeuristic = serde_json::from_str(&json).unwrap();
    assert_eq!(back, h);
    let r = h.evaluate(&s.test).unwrap();
    assert!(r.accuracy <= 0.85, "heuristic too good: {}", r.accuracy);
    let weighted: f64 = r.per_category.values().map(|c| c.accuracy * c.count as f64).sum::<f64>();
    assert!((weighted / r.samples.len() as f64 - r.accuracy).abs() < 1e-12);
}

#[test]
fn consensus_is_reported_when_humans_answered() {
    let mut s = generate(&spec(Task::Absolute, 1)).unwrap();
    for q in &mut s.test.samples {
        // two annotators agree with the label, eight say "maybe"
        let mut humans = vec![q.answer.clone(); 2];
        humans.extend(std::iter::repeat_n("maybe".to_string(), 8));
        q.human_answers = humans;
    }
    let oracle = PositionHeuristic::fit(&s.train).unwrap();
    let r = oracle.evaluate(&s.test).unwrap();
    let expected = r.samples.iter().map(|x| if x.correct { 2.0 / 3.0 } else { 0.0 }).sum::<f64>() / r.samples.len() as f64;
    assert!((r.vqa_consensus.unwrap() - expected).abs() < 1e-12);
}

#[test]
fn precomputed_features_feed_training() {
    let s = generate(&spec(Task::Absolute, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut train_ds = s.train.clone();
    std::fs::create_dir_all(dir.path().join("feats")).unwrap();
    for (i, entry) in train_ds.images.iter_mut().enumerate() {
        // a 3x3 grid stands in for an external CNN's feature map
        let f = extract_grid_patch(&entry.image, 3, 3).unwrap();
        let rel = format!("feats/{i:05}.feat");
        write_precomputed(&dir.path().join(&rel), &f).unwrap();
        entry.features = Some(rel);
    }
    train_ds.save(dir.path()).unwrap();
    let loaded = Dataset::load(dir.path()).unwrap();
    assert_eq!(loaded.images[0].features.as_deref(), Some("feats/00000.feat"));
    let cfg = TrainConfig {
        epochs: 2,
        features: FeatureKind::Precomputed,
        ..TrainConfig::default()
    };
    let out = train(
        &cfg,
        TrainData {
            train: &loaded,
            val: None,
            dir: Some(dir.path()),
            val_dir: None,
        },
    )
    .unwrap();
    let set = out.trained.prepare(&loaded, Some(dir.path())).unwrap();
    assert_eq!(set.images[0].tensor.shape(), &[9, 12]);
    assert_eq!(out.history.len(), 2);
}

#[test]
fn missing_feature_file_is_reported() {
    let mut s = generate(&spec(Task::Absolute, 2)).unwrap();
    s.train.images[0].features = Some("nowhere.feat".into());
    let cfg = TrainConfig {
        epochs: 1,
        features: FeatureKind::Precomputed,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let err = train(
        &cfg,
        TrainData {
            train: &s.train,
            val: None,
            dir: Some(dir.path()),
            val_dir: None,
        },
    )
    .unwrap_err();
    assert!(matches!(err, smem_vqa::Error::Io { .. } | smem_vqa::Error::Data(_)), "{err}");
}
