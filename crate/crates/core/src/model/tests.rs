use super::*;
use crate::autodiff::grad_check;
use crate::data::{prepare, synth_full, LabelFn, SynthSpec};

type T64 = Tensor<f64>;

fn tiny_hyper() -> HyperParams {
    HyperParams {
        beta: 1e-2,
        code_dim: 2,
        mid_dim: 8,
        head_hidden: vec![3],
        epochs: 2,
        batch_size: 16,
        seed: 5,
        ..HyperParams::default()
    }
}

fn tiny_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n: 120,
        dims: PerModality::new(5, 4, 4),
        snr: PerModality::new(2.0, 1.0, 1.0),
        label_fn: LabelFn::Additive,
        seed,
    }
}

fn tiny_batch(n: usize, dims: PerModality<usize>, seed: u64) -> ModalityBatch<f64> {
    let mut rng = Rng::seed_from_u64(seed);
    let features = dims.map(|_, &d| {
        T64::from_vec(vec![n, d], (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    });
    let labels: Vec<f64> = (0..n).map(|_| rng.range(-2.5, 2.5)).collect();
    ModalityBatch::new(features, labels).unwrap()
}

#[test]
fn construction_validates_head_input() {
    let model = KanMcpModel::<f64>::new(PerModality::new(5, 4, 4), tiny_hyper()).unwrap();
    assert_eq!(model.head.input_width(), 3 * model.hyper.code_dim);
}

#[test]
fn bad_hyperparams_are_rejected() {
    let mut h = tiny_hyper();
    h.beta = -1.0;
    assert!(matches!(
        KanMcpModel::<f64>::new(PerModality::new(2, 2, 2), h),
        Err(ModelError::BadConfig { .. })
    ));
    let mut h = tiny_hyper();
    h.epochs = 0;
    assert!(matches!(
        KanMcpModel::<f64>::new(PerModality::new(2, 2, 2), h),
        Err(ModelError::BadConfig { .. })
    ));
}

#[test]
fn temporal_average_cases() {
    // single step passes through
    let one = temporal_average(&[vec![1.0, 2.0]]).unwrap();
    assert_eq!(one, vec![1.0, 2.0]);
    // arithmetic mean of rows
    let avg = temporal_average(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
    assert_eq!(avg, vec![2.0, 2.0]);
    // constant sequence is idempotent
    let c = temporal_average(&[vec![0.5], vec![0.5], vec![0.5]]).unwrap();
    assert_eq!(c, vec![0.5]);
    assert!(matches!(
        temporal_average::<f64>(&[]),
        Err(ModelError::EmptySequence)
    ));
}

#[test]
fn forward_shape_contract_and_determinism() {
    let dims = PerModality::new(5, 4, 4);
    let model = KanMcpModel::<f64>::new(dims, tiny_hyper()).unwrap();
    let batch = tiny_batch(7, dims, 3);

    let mut g = Graph::new();
    let fwd = model.forward(&mut g, &batch, None).unwrap();
    assert_eq!(g.value(fwd.y_multi).shape(), &[7, 1]);
    for (_, &node) in fwd.y_uni.iter() {
        assert_eq!(g.value(node).shape(), &[7, 1]);
    }
    assert_eq!(g.value(fwd.fused).shape(), &[7, 3 * model.hyper.code_dim]);

    // same inputs, fresh graph: bit-identical outputs
    let mut g2 = Graph::new();
    let fwd2 = model.forward(&mut g2, &batch, None).unwrap();
    assert_eq!(g.value(fwd.y_multi), g2.value(fwd2.y_multi));
}

#[test]
fn forward_rejects_wrong_dims() {
    let model = KanMcpModel::<f64>::new(PerModality::new(5, 4, 4), tiny_hyper()).unwrap();
    let batch = tiny_batch(3, PerModality::new(5, 3, 4), 1);
    let mut g = Graph::new();
    assert!(matches!(
        model.forward(&mut g, &batch, None),
        Err(ModelError::DimMismatch {
            modality: Modality::Audio,
            ..
        })
    ));
}

#[test]
fn zeroed_model_predicts_zero() {
    let dims = PerModality::new(3, 3, 3);
    let mut model = KanMcpModel::<f64>::new(dims, tiny_hyper()).unwrap();
    let names: Vec<String> = model.store.names().map(str::to_string).collect();
    for name in names {
        let shape = model.store.get(&name).unwrap().shape().to_vec();
        model.store.set(&name, T64::zeros(shape)).unwrap();
    }
    let batch = tiny_batch(4, dims, 9);
    let (multi, uni) = model.predict(&batch).unwrap();
    assert!(multi.iter().all(|&v| v == 0.0));
    for (_, u) in uni.iter() {
        assert!(u.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn batch_permutation_permutes_predictions() {
    let dims = PerModality::new(5, 4, 4);
    let model = KanMcpModel::<f64>::new(dims, tiny_hyper()).unwrap();
    let batch = tiny_batch(9, dims, 11);
    let perm: Vec<usize> = vec![4, 7, 0, 8, 2, 6, 1, 5, 3];
    let permuted = batch.take(&perm);

    let (multi, _) = model.predict(&batch).unwrap();
    let (multi_p, _) = model.predict(&permuted).unwrap();
    let mut max_diff = 0.0f64;
    for (i, &pi) in perm.iter().enumerate() {
        max_diff = max_diff.max((multi_p[i] - multi[pi]).abs());
    }
    assert!(
        max_diff < 1e-10,
        "permutation broke rowwise predictions: {max_diff}"
    );

    // summed losses are permutation-invariant too
    let loss_of = |b: &ModalityBatch<f64>| -> f64 {
        let mut g = Graph::new();
        let fwd = model.forward(&mut g, b, None).unwrap();
        let y = g.constant(b.label_tensor());
        let losses =
            mib::drd_mib_loss(&mut g, fwd.y_multi, &fwd.y_uni, &fwd.codes, y, 1e-2).unwrap();
        g.scalar_value(losses.total)
    };
    assert!((loss_of(&batch) - loss_of(&permuted)).abs() < 1e-10);
}

#[test]
fn frozen_decoders_and_zero_beta_reduce_to_multimodal_training() {
    // beta = 0 with zeroed decoder weights sends no unimodal gradient into
    // the encoders; fifty steps of the remaining multimodal objective must
    // reduce its loss on an easy synthetic task
    let spec = tiny_spec(101);
    let full = synth_full::<f64>(&spec).unwrap();
    let data = prepare(&full, spec.seed);
    let hyper = HyperParams {
        beta: 0.0,
        epochs: 1,
        batch_size: 16,
        seed: 101,
        ..tiny_hyper()
    };
    let model = KanMcpModel::new(full.dims(), hyper).unwrap();
    let mut state = TrainState::new(model);
    let freeze = |state: &mut TrainState<f64>| {
        for m in Modality::ALL {
            for name in [format!("dec.{m}.w"), format!("dec.{m}.b")] {
                let shape = state.model.store.get(&name).unwrap().shape().to_vec();
                state.model.store.set(&name, T64::zeros(shape)).unwrap();
            }
        }
    };
    freeze(&mut state);

    let batch = data
        .train
        .take(&(0..data.train.len().min(64)).collect::<Vec<_>>());
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..50 {
        let out = train_step(&mut state, &batch).unwrap();
        // decoders stay frozen at zero, so the encoders never see a
        // unimodal gradient and no conflict can arise
        assert!(out
            .decisions
            .iter()
            .all(|(_, d)| !d.conflict && d.cos_beta == 0.0));
        freeze(&mut state);
        if first.is_none() {
            first = Some(out.loss_multi);
        }
        last = out.loss_multi;
    }
    let first = first.unwrap();
    assert!(last < first, "multimodal loss went {first} -> {last}");
}

#[test]
fn full_pipeline_grad_check_tiny_dims() {
    // d_m = 4, code_dim = 2, head [6, 3, 1]
    let hyper = HyperParams {
        beta: 1e-2,
        code_dim: 2,
        mid_dim: 4,
        head_hidden: vec![3],
        seed: 13,
        ..HyperParams::default()
    };
    let dims = PerModality::new(4, 4, 4);
    let model = KanMcpModel::<f64>::new(dims, hyper).unwrap();
    let batch = tiny_batch(3, dims, 21);
    let mut rng = Rng::seed_from_u64(77);
    let eps = PerModality::splat(())
        .map(|_, _| T64::from_vec(vec![3, 2], (0..6).map(|_| rng.normal()).collect()).unwrap());

    let store = model.store.clone();
    let err = grad_check(
        &move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            // rebind the parameter store grad_check perturbs
            let mut probed = model.clone();
            probed.store = s.clone();
            let fwd = probed.forward(g, &batch, Some(&eps)).map_err(|e| match e {
                ModelError::Ad(e) => e,
                other => panic!("unexpected: {other}"),
            })?;
            let y = g.constant(batch.label_tensor());
            let losses =
                mib::drd_mib_loss(g, fwd.y_multi, &fwd.y_uni, &fwd.codes, y, probed.hyper.beta)?;
            Ok(losses.total)
        },
        &store,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "err {err}");
}

#[test]
fn training_reduces_loss_on_synthetic_task() {
    let spec = tiny_spec(31);
    let full = synth_full::<f64>(&spec).unwrap();
    let data = prepare(&full, spec.seed);
    let hyper = HyperParams {
        epochs: 8,
        batch_size: 16,
        seed: 31,
        ..tiny_hyper()
    };
    let model = KanMcpModel::new(full.dims(), hyper).unwrap();
    let mut state = TrainState::new(model);
    run_training(&mut state, &data).unwrap();
    let h = &state.history;
    assert_eq!(h.len(), 8);
    let first = h.multi[0];
    let last = *h.multi.last().unwrap();
    assert!(last < first, "multi loss went {first} -> {last}");
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let spec = tiny_spec(37);
    let full = synth_full::<f64>(&spec).unwrap();
    let data = prepare(&full, spec.seed);
    let run = || {
        let hyper = HyperParams {
            epochs: 3,
            seed: 37,
            ..tiny_hyper()
        };
        let model = KanMcpModel::new(full.dims(), hyper).unwrap();
        let mut state = TrainState::new(model);
        let out = run_training(&mut state, &data).unwrap();
        (state.history.clone(), out.test, state.model.store.clone())
    };
    let (h1, t1, s1) = run();
    let (h2, t2, s2) = run();
    assert_eq!(h1, h2);
    assert_eq!(t1, t2);
    assert_eq!(s1, s2);
}

#[test]
fn mcpareto_toggle_diverges_exactly_when_conflicts_occur() {
    let spec = tiny_spec(43);
    let full = synth_full::<f64>(&spec).unwrap();
    let data = prepare(&full, spec.seed);
    let run = |mcpareto: bool| {
        let hyper = HyperParams {
            epochs: 4,
            seed: 43,
            mcpareto,
            ..tiny_hyper()
        };
        let model = KanMcpModel::new(full.dims(), hyper).unwrap();
        let mut state = TrainState::new(model);
        let out = run_training(&mut state, &data).unwrap();
        (out.pareto_rows, state.model.store.clone())
    };
    let (rows_on, store_on) = run(true);
    let (_, store_off) = run(false);

    let any_conflict = rows_on.iter().any(|r| r.conflict);
    let stores_equal = store_on == store_off;
    if any_conflict {
        assert!(
            !stores_equal,
            "conflicts occurred but parameters agree bitwise"
        );
    } else {
        assert!(stores_equal, "no conflicts, yet trajectories diverged");
    }
}

#[test]
fn coordinated_without_conflicts_matches_plain_sum_stepwise() {
    // engineer a conflict-free step: with zeroed decoder weights and
    // beta = 0, the unimodal losses send exactly zero gradient into the
    // encoders, so every cosine is 0 and no branch conflicts
    let dims = PerModality::new(4, 3, 3);
    let batch = tiny_batch(12, dims, 51);
    let build = |mcpareto: bool| {
        let hyper = HyperParams {
            seed: 3,
            code_dim: 2,
            mid_dim: 6,
            beta: 0.0,
            mcpareto,
            ..tiny_hyper()
        };
        let mut model = KanMcpModel::<f64>::new(dims, hyper).unwrap();
        for m in Modality::ALL {
            let name = format!("dec.{m}.w");
            let shape = model.store.get(&name).unwrap().shape().to_vec();
            model.store.set(&name, T64::zeros(shape)).unwrap();
        }
        TrainState::new(model)
    };
    let mut on = build(true);
    let out_on = train_step(&mut on, &batch).unwrap();
    assert!(out_on
        .decisions
        .iter()
        .all(|(_, d)| !d.conflict && d.cos_beta == 0.0));

    let mut off = build(false);
    train_step(&mut off, &batch).unwrap();
    assert_eq!(on.model.store, off.model.store);
}

#[test]
fn evaluation_matches_across_worker_counts() {
    // the test split must span several prediction chunks so the worker
    // pool really runs threaded
    let spec = SynthSpec {
        n: 6000,
        ..tiny_spec(61)
    };
    let full = synth_full::<f64>(&spec).unwrap();
    let data = prepare(&full, spec.seed);
    assert!(
        data.test.len() > 1024,
        "need multiple chunks, got {}",
        data.test.len()
    );
    let model = KanMcpModel::new(full.dims(), tiny_hyper()).unwrap();
    let one = evaluate(&model, &data.test, 1).unwrap();
    let four = evaluate(&model, &data.test, 4).unwrap();
    assert_eq!(one, four);
}

#[test]
fn evaluate_perfect_and_empty_cases() {
    let spec = tiny_spec(67);
    let full = synth_full::<f64>(&spec).unwrap();
    let labels: Vec<f64> = full.labels().to_vec();
    let report = crate::metrics::full_report(&labels, &labels).unwrap();
    assert_eq!(report.acc2, 100.0);
    assert_eq!(report.mae, 0.0);
}

#[test]
fn head_attribution_dimensions_follow_widths() {
    let dims = PerModality::new(5, 4, 4);
    let model = KanMcpModel::<f64>::new(dims, tiny_hyper()).unwrap();
    let batch = tiny_batch(6, dims, 71);
    let attrs = head_attribution(&model, &batch).unwrap();
    assert_eq!(attrs.len(), model.head.layers.len());
    assert_eq!(attrs[0].n_in, 3 * model.hyper.code_dim);
    let blocks = modality_block_attribution(&attrs, model.hyper.code_dim);
    for (_, &v) in blocks.iter() {
        assert!(v >= 0.0);
    }
}
