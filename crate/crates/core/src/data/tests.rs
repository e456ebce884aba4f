use super::*;
use crate::linalg::{linear_probe_fit, linear_probe_predict};

fn spec(label_fn: LabelFn, seed: u64) -> SynthSpec {
    SynthSpec {
        n: 600,
        dims: PerModality::new(6, 4, 4),
        snr: PerModality::new(2.0, 0.8, 0.8),
        label_fn,
        seed,
    }
}

fn probe_mae(batch: &ModalityBatch<f64>, eval: &ModalityBatch<f64>, m: Modality) -> f64 {
    let xs: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| batch.feature(m).take_rows(&[i]).into_data())
        .collect();
    let w = linear_probe_fit(&xs, batch.labels(), 1e-6).unwrap();
    let mut acc = 0.0;
    for i in 0..eval.len() {
        let x = eval.feature(m).take_rows(&[i]).into_data();
        acc += (linear_probe_predict(&w, &x) - eval.labels()[i]).abs();
    }
    acc / eval.len() as f64
}

#[test]
fn same_seed_is_bitwise_identical() {
    let a = synth_full::<f64>(&spec(LabelFn::Additive, 7)).unwrap();
    let b = synth_full::<f64>(&spec(LabelFn::Additive, 7)).unwrap();
    assert_eq!(a, b);
    let c = synth_full::<f64>(&spec(LabelFn::Additive, 8)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn text_dominant_zeroes_other_signals() {
    // with snr_a = snr_v forced to 0, those features are pure noise:
    // a linear probe on them cannot beat predicting the mean label
    let s = spec(LabelFn::TextDominant, 11);
    let split = synth_generate::<f64>(&s).unwrap();
    let text_mae = probe_mae(&split.train, &split.test, Modality::Text);
    let audio_mae = probe_mae(&split.train, &split.test, Modality::Audio);
    let label_std = {
        let labels = split.test.labels();
        let mean: f64 = labels.iter().sum::<f64>() / labels.len() as f64;
        (labels.iter().map(|&y| (y - mean) * (y - mean)).sum::<f64>() / labels.len() as f64).sqrt()
    };
    assert!(
        text_mae < 0.75 * label_std,
        "text probe {text_mae} vs std {label_std}"
    );
    assert!(
        audio_mae > 0.8 * label_std,
        "audio probe {audio_mae} vs std {label_std}"
    );
}

#[test]
fn balanced_modalities_probe_alike() {
    let s = SynthSpec {
        n: 1500,
        ..spec(LabelFn::Balanced, 13)
    };
    let split = synth_generate::<f64>(&s).unwrap();
    let maes: Vec<f64> = Modality::ALL
        .iter()
        .map(|&m| probe_mae(&split.train, &split.test, m))
        .collect();
    let max = maes.iter().cloned().fold(f64::MIN, f64::max);
    let min = maes.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max - min < 0.1, "probe MAEs {maes:?}");
}

#[test]
fn split_is_disjoint_and_exhaustive() {
    for n in [10, 100, 237, 1000] {
        let (train, val, test) = split_indices(n, 3);
        assert_eq!(train.len() + val.len() + test.len(), n);
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&val).chain(&test) {
            assert!(!seen[i], "index {i} duplicated");
            seen[i] = true;
        }
        assert!(seen.into_iter().all(|s| s));
        assert_eq!(train.len(), n * 7 / 10);
        assert_eq!(val.len(), n / 10);
    }
}

#[test]
fn minibatch_partition_sizes() {
    let s = SynthSpec {
        n: 10,
        ..spec(LabelFn::Additive, 17)
    };
    let full = synth_full::<f64>(&s).unwrap();
    let sizes: Vec<usize> = minibatches(&full, 4, 1, 0).map(|b| b.len()).collect();
    assert_eq!(sizes, vec![4, 4, 2]);
}

#[test]
fn minibatch_order_is_epoch_deterministic() {
    let s = SynthSpec {
        n: 64,
        ..spec(LabelFn::Additive, 19)
    };
    let full = synth_full::<f64>(&s).unwrap();
    let labels = |epoch: usize| -> Vec<f64> {
        minibatches(&full, 16, 5, epoch)
            .flat_map(|b| b.labels().to_vec())
            .collect()
    };
    assert_eq!(labels(0), labels(0));
    assert_ne!(labels(0), labels(1));
}

#[test]
fn different_epochs_permute_differently() {
    let s = SynthSpec {
        n: 1000,
        ..spec(LabelFn::Additive, 23)
    };
    let full = synth_full::<f64>(&s).unwrap();
    let order = |epoch: usize| -> Vec<f64> {
        minibatches(&full, 1000, 5, epoch)
            .flat_map(|b| b.labels().to_vec())
            .collect()
    };
    let (o0, o1) = (order(0), order(1));
    let agreements = o0.iter().zip(&o1).filter(|(a, b)| a == b).count();
    assert!(
        agreements < 10,
        "epoch shuffles agree on {agreements}/1000 positions"
    );
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = std::env::temp_dir().join(format!("kan-mcp-data-test-{}", std::process::id()));
    let s = SynthSpec {
        n: 40,
        ..spec(LabelFn::Additive, 29)
    };
    let full = synth_full::<f64>(&s).unwrap();
    write_csv_dir(&full, &dir).unwrap();
    let loaded = load_features::<f64>(&dir).unwrap();
    assert_eq!(full, loaded);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn loader_reports_row_count_mismatch() {
    let dir = std::env::temp_dir().join(format!("kan-mcp-data-rc-{}", std::process::id()));
    let s = SynthSpec {
        n: 12,
        ..spec(LabelFn::Additive, 31)
    };
    let full = synth_full::<f64>(&s).unwrap();
    write_csv_dir(&full, &dir).unwrap();
    // append a row to audio.csv
    let audio = dir.join("audio.csv");
    let mut content = std::fs::read_to_string(&audio).unwrap();
    content.push_str("1.0,1.0,1.0,1.0\n");
    std::fs::write(&audio, content).unwrap();
    match load_features::<f64>(&dir) {
        Err(DataError::RowCountMismatch {
            file,
            expected,
            got,
        }) => {
            assert_eq!(file, "audio.csv");
            assert_eq!(expected, 12);
            assert_eq!(got, 13);
        }
        other => panic!("expected row-count mismatch, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn loader_reports_parse_error_with_position() {
    let dir = std::env::temp_dir().join(format!("kan-mcp-data-pe-{}", std::process::id()));
    let s = SynthSpec {
        n: 12,
        ..spec(LabelFn::Additive, 37)
    };
    let full = synth_full::<f64>(&s).unwrap();
    write_csv_dir(&full, &dir).unwrap();
    let text = dir.join("text.csv");
    let mut lines: Vec<String> = std::fs::read_to_string(&text)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[2] = "oops".to_string();
    lines[3] = cells.join(",");
    std::fs::write(&text, lines.join("\n") + "\n").unwrap();
    match load_features::<f64>(&dir) {
        Err(DataError::ParseError {
            file, line, col, ..
        }) => {
            assert_eq!(file, "text.csv");
            assert_eq!(line, 4);
            assert_eq!(col, 3);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn loader_rejects_missing_file() {
    let dir = std::env::temp_dir().join(format!("kan-mcp-data-mf-{}", std::process::id()));
    let s = SynthSpec {
        n: 12,
        ..spec(LabelFn::Additive, 41)
    };
    let full = synth_full::<f64>(&s).unwrap();
    write_csv_dir(&full, &dir).unwrap();
    std::fs::remove_file(dir.join("visual.csv")).unwrap();
    assert!(matches!(
        load_features::<f64>(&dir),
        Err(DataError::MissingFile { .. })
    ));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn loader_rejects_out_of_range_labels() {
    let dir = std::env::temp_dir().join(format!("kan-mcp-data-lr-{}", std::process::id()));
    let s = SynthSpec {
        n: 12,
        ..spec(LabelFn::Additive, 43)
    };
    let full = synth_full::<f64>(&s).unwrap();
    write_csv_dir(&full, &dir).unwrap();
    let labels = dir.join("labels.csv");
    let mut lines: Vec<String> = std::fs::read_to_string(&labels)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    lines[5] = "3.5".to_string();
    std::fs::write(&labels, lines.join("\n") + "\n").unwrap();
    match load_features::<f64>(&dir) {
        Err(DataError::LabelOutOfRange { line, value }) => {
            // vector index 5 is file line 6 (after the header), sample 4
            assert_eq!(line, 6);
            assert_eq!(value, 3.5);
        }
        other => panic!("expected label range error, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn standardization_zero_means_unit_variance_on_train() {
    let s = SynthSpec {
        n: 400,
        ..spec(LabelFn::Additive, 47)
    };
    let full = synth_full::<f64>(&s).unwrap();
    let prepared = prepare(&full, 47);
    for (_, t) in prepared.train.features().iter() {
        let stats = ColumnStats::fit(t);
        for j in 0..t.cols() {
            assert!(stats.mean[j].abs() < 1e-10);
            assert!((stats.std[j] - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn prepare_with_stats_reproduces_splits() {
    let s = SynthSpec {
        n: 200,
        ..spec(LabelFn::Additive, 53)
    };
    let full = synth_full::<f64>(&s).unwrap();
    let a = prepare(&full, 53);
    let b = prepare_with_stats(&full, 53, a.stats.clone());
    assert_eq!(a.test, b.test);
    assert_eq!(a.val, b.val);
    assert_eq!(a.train, b.train);
}

#[test]
fn bad_specs_are_rejected() {
    let mut s = spec(LabelFn::Additive, 1);
    s.n = 5;
    assert!(matches!(
        synth_full::<f64>(&s),
        Err(DataError::BadSpec { .. })
    ));
    let mut s = spec(LabelFn::Additive, 1);
    s.snr.audio = -1.0;
    assert!(matches!(
        synth_full::<f64>(&s),
        Err(DataError::BadSpec { .. })
    ));
}
