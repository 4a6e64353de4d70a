use smem_vqa::image::RasterImage;
use smem_vqa::model::Model;
use smem_vqa::synth::{generate, SynthSpec, SynthSplits, Task};
use smem_vqa::train::{train, TrainConfig, TrainData, TrainedModel};
use smem_vqa::viz::{correlation_csv, export_attention_maps};

fn trained(hops: usize) -> (SynthSplits, TrainedModel) {
    let s = generate(&SynthSpec {
        task: Task::Absolute,
        train: 60,
        test: 10,
        seed: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        model: format!("smem-{hops}hop"),
        ..TrainConfig::default()
    };
    let out = train(
        &cfg,
        TrainData {
            train: &s.train,
            val: None,
            dir: None,
            val_dir: None,
        },
    )
    .unwrap();
    (s, out.trained)
}

fn read_pgm(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let header = b"P5\n64 64\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    (64, 64, bytes[header.len()..].to_vec())
}

#[test]
fn maps_overlays_and_sidecars_are_written() {
    let (s, model) = trained(2);
    let dir = tempfile::tempdir().unwrap();
    let files = export_attention_maps(&model, &s.test, None, &[0, 5], dir.path()).unwrap();
    assert_eq!(files.len(), 2 * (2 * 2 + 1));
    for i in [0usize, 5] {
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("sample_{i:05}.json"))).unwrap()).unwrap();
        let hops = sidecar["hops"].as_array().unwrap();
        assert_eq!(hops.len(), 2);
        assert!(hops[0]["argword"].is_string());
        assert!(hops[1]["argword"].is_null());
        for (h, hop) in hops.iter().enumerate() {
            let w: Vec<f64> = hop["weights"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let cell = hop["argmax_cell"].as_u64().unwrap() as usize;

            let pgm = std::fs::read(dir.path().join(format!("sample_{i:05}_hop{}.pgm", h + 1))).unwrap();
            let (_, width, gray) = read_pgm(&pgm);
            // the argmax cell is the brightest region of the map
            let (row, col) = (cell / 4, cell % 4);
            assert_eq!(gray[(row * 16 + 8) * width + col * 16 + 8], 255);

            let ppm = std::fs::read(dir.path().join(format!("sample_{i:05}_hop{}_overlay.ppm", h + 1))).unwrap();
            let overlay = RasterImage::from_ppm(&ppm).unwrap();
            assert_eq!((overlay.width(), overlay.height()), (64, 64));
        }
    }
}

#[test]
fn exports_are_byte_reproducible() {
    let (s, model) = trained(1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = export_attention_maps(&model, &s.test, None, &[3], a.path()).unwrap();
    export_attention_maps(&model, &s.test, None, &[3], b.path()).unwrap();
    for f in fa {
        let name = f.file_name().unwrap();
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn correlation_csv_matches_a_direct_recomputation() {
    let (s, model) = trained(1);
    let Model::SMem(p) = &model.model else {
        panic!("expected a memory network");
    };
    let set = model.prepare(&s.test, None).unwrap();
    let sample = 7;
    let csv = correlation_csv(&model, &set, sample).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("token,correlation"));
    let rows: Vec<(String, f64)> = lines
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.to_string(), v.parse().unwrap())
        })
        .collect();

    let ps = &set.samples[sample];
    let q = ps.question.as_ref().unwrap();
    assert_eq!(rows.len(), q.real_len());
    let feats = &set.images[ps.image].tensor;
    let input = set.input(ps, false).unwrap();
    let (_, trace) = model.model.predict(&input, false).unwrap();
    let cell = trace.unwrap().argmax_location(0);

    let n = p.embed_dim();
    let m = feats.cols();
    // embedded[cell] = S[cell]·W_A + b_A[cell]
    let embedded: Vec<f64> = (0..n)
        .map(|k| (0..m).map(|i| feats.get2(cell, i) * p.attention.w.get2(i, k)).sum::<f64>() + p.attention.b.get2(cell, k))
        .collect();
    for (j, (token, value)) in rows.iter().enumerate() {
        let id = q.ids[j] as usize;
        assert_eq!(model.vocab.token(id), Some(token.as_str()));
        let word = &p.embed.data()[id * n..(id + 1) * n];
        let direct: f64 = word.iter().zip(&embedded).map(|(a, b)| a * b).sum();
        assert!((direct - value).abs() < 1e-9, "{token}: {direct} vs {value}");
    }
}

#[test]
fn baseline_has_no_attention_maps() {
    let s = generate(&SynthSpec {
        train: 8,
        test: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        model: "ibowimg".into(),
        ..TrainConfig::default()
    };
    let out = train(
        &cfg,
        TrainData {
            train: &s.train,
            val: None,
            dir: None,
            val_dir: None,
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        export_attention_maps(&out.trained, &s.test, None, &[0], dir.path()),
        Err(smem_vqa::Error::Usage(_))
    ));
}
