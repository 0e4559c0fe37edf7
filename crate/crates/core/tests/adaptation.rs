//! Adaptation-path checks: worked initialization examples, fine-tuning
//! contracts, transductive behaviour, and the nearest-centroid oracle.

use fewshot_core::adapt::{
    evaluate_episode, finetune, head_from_outputs, support_init, transductive_finetune,
    AdaptConfig, AdaptedModel, HeadInput, Method,
};
use fewshot_core::backbone::{pretrain, BackboneParams, PretrainConfig};
use fewshot_core::datakit::{make_synthetic, sample_episode, Dataset, Episode, SyntheticSpec};
use fewshot_core::ndgrad::Tensor;

fn dataset(center_scale: f64, noise: f64, seed: u64) -> Dataset {
    make_synthetic(&SyntheticSpec {
        n_classes: 16,
        dim: 12,
        samples_per_class: 30,
        center_scale,
        noise_sigma: noise,
        seed,
    })
    .unwrap()
}

/// Small pretrained backbone shared by the tests.
fn fitted_backbone(ds: &Dataset, pool: &[u32]) -> BackboneParams {
    pretrain(
        ds,
        pool,
        &PretrainConfig {
            hidden: vec![32, 32],
            cycles: vec![3, 6],
            augment_sigma: 0.05,
            seed: 7,
            ..PretrainConfig::default()
        },
    )
    .unwrap()
    .backbone
}

fn split_pool(ds: &Dataset) -> (Vec<u32>, Vec<u32>) {
    // First 10 classes pre-train, last 6 form episodes.
    let ids = ds.class_ids();
    (ids[..10].to_vec(), ids[10..].to_vec())
}

#[test]
fn head_from_outputs_reproduces_worked_example() {
    // Two supports of one class with ReLU'd outputs [1,0] and [0,1]:
    // mean [0.5, 0.5], normalized to [0.70711, 0.70711]; bias stays 0.
    let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-3.0, 5.0]]).unwrap();
    let head = head_from_outputs(&z, &[0, 0, 1], 2, true).unwrap();
    let w = head.weight.value;
    let inv_sqrt2 = 0.7071067811865475;
    assert!((w.row(0)[0] - inv_sqrt2).abs() < 1e-9);
    assert!((w.row(0)[1] - inv_sqrt2).abs() < 1e-9);
    // Second class: relu([-3, 5]) = [0, 5] -> normalized [0, 1].
    assert!((w.row(1)[0]).abs() < 1e-9);
    assert!((w.row(1)[1] - 1.0).abs() < 1e-9);
    assert!(head.bias.value.data().iter().all(|&b| b == 0.0));
    // Unit row norms.
    for r in 0..2 {
        let norm: f64 = w.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn degenerate_all_negative_class_gets_zero_row() {
    let z = Tensor::from_rows(&[vec![-1.0, -2.0], vec![3.0, 4.0]]).unwrap();
    let head = head_from_outputs(&z, &[0, 1], 2, true).unwrap();
    assert_eq!(head.weight.value.row(0), &[0.0, 0.0]);
}

#[test]
fn missing_class_support_is_a_contract_error() {
    let z = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    assert!(head_from_outputs(&z, &[0], 2, true).is_err());
}

#[test]
fn one_shot_supports_are_classified_into_their_own_class() {
    let ds = dataset(4.0, 1.0, 81);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let config = AdaptConfig::default();
    for seed in 0..50 {
        let e = sample_episode(&ds, &test, 5, 1, 3, seed).unwrap();
        let head = support_init(&bb, &e.support, 5, config.head_input, config.relu_before_norm)
            .unwrap();
        let model = AdaptedModel {
            backbone: bb.clone(),
            head,
            head_input: config.head_input,
            relu_before_norm: config.relu_before_norm,
        };
        let probs = model.predict(&e.support_matrix(), 1.0).unwrap();
        for (r, (_, y)) in e.support.iter().enumerate() {
            let row = probs.row(r);
            let best = (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap());
            assert_eq!(
                best.unwrap() as u32,
                *y,
                "episode {seed}: support {r} misclassified"
            );
        }
    }
}

#[test]
fn zero_epochs_finetune_is_identity() {
    let ds = dataset(4.0, 1.0, 82);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let e = sample_episode(&ds, &test, 5, 1, 15, 3).unwrap();
    let config = AdaptConfig {
        epochs: 0,
        ..AdaptConfig::default()
    };
    let init = evaluate_episode(&bb, &e, Method::InitOnly, &config).unwrap();
    let tuned = evaluate_episode(&bb, &e, Method::Finetune, &config).unwrap();
    assert_eq!(init.predictions, tuned.predictions);
    assert_eq!(init.probabilities, tuned.probabilities);
}

#[test]
fn finetune_does_not_worsen_support_loss() {
    let ds = dataset(3.0, 1.2, 83);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let config = AdaptConfig::default();
    let mut improved_or_equal = 0usize;
    let n = 100usize;
    for seed in 0..n as u64 {
        let e = sample_episode(&ds, &test, 5, 1, 5, seed).unwrap();
        let head = support_init(&bb, &e.support, 5, config.head_input, config.relu_before_norm)
            .unwrap();
        let mut model = AdaptedModel {
            backbone: bb.clone(),
            head,
            head_input: config.head_input,
            relu_before_norm: config.relu_before_norm,
        };
        let traces = finetune(&mut model, &e.support, &config).unwrap();
        let first = *traces.support_ce.first().unwrap();
        let last = *traces.support_ce.last().unwrap();
        if last <= first + 1e-12 {
            improved_or_equal += 1;
        }
    }
    assert_eq!(
        improved_or_equal, n,
        "support loss increased on {} of {n} episodes",
        n - improved_or_equal
    );
}

#[test]
fn frozen_backbone_leaves_theta_bit_unchanged() {
    let ds = dataset(3.0, 1.2, 84);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let e = sample_episode(&ds, &test, 5, 2, 4, 11).unwrap();
    let config = AdaptConfig {
        freeze_backbone: true,
        ..AdaptConfig::default()
    };
    let head = support_init(&bb, &e.support, 5, config.head_input, config.relu_before_norm)
        .unwrap();
    let head_before = head.weight.value.clone();
    let mut model = AdaptedModel {
        backbone: bb.clone(),
        head,
        head_input: config.head_input,
        relu_before_norm: config.relu_before_norm,
    };
    finetune(&mut model, &e.support, &config).unwrap();
    for (before, after) in bb.params().iter().zip(model.backbone.params()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before.value), bits(&after.value));
    }
    for (block_before, block_after) in bb.blocks.iter().zip(&model.backbone.blocks) {
        assert_eq!(block_before.bn.running_mean, block_after.bn.running_mean);
        assert_eq!(block_before.bn.running_var, block_after.bn.running_var);
    }
    assert_ne!(head_before, model.head.weight.value, "head did not move");
}

#[test]
fn single_query_datum_is_accepted() {
    let ds = dataset(3.0, 1.2, 85);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let e = sample_episode(&ds, &test, 5, 1, 3, 2).unwrap();
    // One test datum total, not even one per class.
    let single = Tensor::from_rows(&[e.query[0].0.clone()]).unwrap();
    let config = AdaptConfig::default();
    let head = support_init(&bb, &e.support, 5, config.head_input, config.relu_before_norm)
        .unwrap();
    let mut model = AdaptedModel {
        backbone: bb.clone(),
        head,
        head_input: config.head_input,
        relu_before_norm: config.relu_before_norm,
    };
    let traces = transductive_finetune(&mut model, &e.support, &single, &config).unwrap();
    assert_eq!(traces.query_entropy.len(), config.epochs + 1);
}

#[test]
fn empty_query_set_is_rejected() {
    let ds = dataset(3.0, 1.2, 86);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let e = sample_episode(&ds, &test, 5, 1, 3, 2).unwrap();
    let config = AdaptConfig::default();
    let head = support_init(&bb, &e.support, 5, config.head_input, config.relu_before_norm)
        .unwrap();
    let mut model = AdaptedModel {
        backbone: bb.clone(),
        head,
        head_input: config.head_input,
        relu_before_norm: config.relu_before_norm,
    };
    let empty = Tensor::zeros(vec![0, ds.dim()]);
    assert!(transductive_finetune(&mut model, &e.support, &empty, &config).is_err());
}

#[test]
fn zero_entropy_coefficient_matches_finetune_trajectory() {
    let ds = dataset(3.0, 1.2, 87);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let e = sample_episode(&ds, &test, 5, 1, 15, 5).unwrap();
    let config = AdaptConfig {
        entropy_coefficient: 0.0,
        epochs: 10,
        ..AdaptConfig::default()
    };
    let ft = evaluate_episode(&bb, &e, Method::Finetune, &config).unwrap();
    let tf = evaluate_episode(&bb, &e, Method::Transductive, &config).unwrap();
    assert_eq!(ft.predictions, tf.predictions);
    assert_eq!(ft.probabilities, tf.probabilities);
    assert_eq!(ft.traces.support_ce, tf.traces.support_ce);
}

#[test]
fn well_separated_one_shot_init_only_is_perfect_and_matches_centroid_oracle() {
    // Wide spread, tiny noise: clusters are point-like.
    let ds = dataset(10.0, 0.05, 88);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let config = AdaptConfig::default();
    for seed in 0..20 {
        let e = sample_episode(&ds, &test, 5, 1, 5, seed).unwrap();
        // Independent oracle: nearest support centroid in raw input space.
        let oracle_acc = nearest_centroid_accuracy(&e);
        assert_eq!(oracle_acc, 1.0, "oracle not perfect on episode {seed}");
        let r = evaluate_episode(&bb, &e, Method::InitOnly, &config).unwrap();
        assert_eq!(r.accuracy, 1.0, "init-only not perfect on episode {seed}");
    }
}

fn nearest_centroid_accuracy(e: &Episode) -> f64 {
    let way = e.way as usize;
    let dim = e.dim();
    let mut centroids = vec![vec![0.0f64; dim]; way];
    let mut counts = vec![0usize; way];
    for (v, y) in &e.support {
        for (c, &x) in centroids[*y as usize].iter_mut().zip(v) {
            *c += x;
        }
        counts[*y as usize] += 1;
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        for v in c {
            *v /= *n as f64;
        }
    }
    let mut correct = 0usize;
    for (v, y) in &e.query {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, c) in centroids.iter().enumerate() {
            let d: f64 = c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        if best == *y as usize {
            correct += 1;
        }
    }
    correct as f64 / e.query.len() as f64
}

#[test]
fn entropy_step_descends_at_small_lr() {
    // Descent property of the entropy objective: a single plain
    // gradient step at a tiny learning rate on the head (fixed
    // embeddings) cannot increase the mean query entropy.
    use fewshot_core::adapt::{embed_eval, head_logits_nodes};
    use fewshot_core::ndgrad::{Optimizer, Tape};

    let ds = dataset(3.0, 1.2, 89);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    for seed in 0..10 {
        let e = sample_episode(&ds, &test, 5, 1, 15, seed).unwrap();
        let mut head =
            support_init(&bb, &e.support, 5, HeadInput::Logits, true).unwrap();
        let embeddings = embed_eval(&bb, &e.query_matrix(), HeadInput::Logits, true).unwrap();
        let n = embeddings.rows() as f64;

        let entropy_of = |head: &fewshot_core::adapt::HeadParams| -> f64 {
            let mut tape = Tape::new();
            let bound = head.bind(&mut tape, false);
            let e_node = tape.constant(embeddings.clone());
            let logits = head_logits_nodes(&mut tape, &bound, e_node, 1.0).unwrap();
            let p = tape.softmax(logits);
            let lp = tape.log(p);
            let plp = tape.mul(p, lp).unwrap();
            let total = tape.sum(plp);
            let h = tape.scale(total, -1.0 / n);
            tape.value(h).item()
        };

        let before = entropy_of(&head);

        let mut tape = Tape::new();
        let bound = head.bind(&mut tape, true);
        let e_node = tape.constant(embeddings.clone());
        let logits = head_logits_nodes(&mut tape, &bound, e_node, 1.0).unwrap();
        let p = tape.softmax(logits);
        let lp = tape.log(p);
        let plp = tape.mul(p, lp).unwrap();
        let total = tape.sum(plp);
        let h = tape.scale(total, -1.0 / n);
        let mut grads = tape.backward(h).unwrap();
        let grad_list = vec![grads.take(bound.weight), grads.take(bound.bias)];
        let mut opt = Optimizer::sgd_nesterov(1e-6, 0.0, 0.0, &head.params());
        opt.step(&mut head.params_mut(), &grad_list).unwrap();

        let after = entropy_of(&head);
        assert!(
            after <= before + 1e-9,
            "episode {seed}: entropy rose {before} -> {after}"
        );
    }
}

#[test]
fn argmax_is_invariant_to_positive_logit_scaling() {
    let ds = dataset(3.0, 1.2, 90);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let config = AdaptConfig::default();
    let e = sample_episode(&ds, &test, 5, 1, 15, 0).unwrap();
    let head = support_init(&bb, &e.support, 5, config.head_input, config.relu_before_norm)
        .unwrap();
    let model = AdaptedModel {
        backbone: bb.clone(),
        head,
        head_input: config.head_input,
        relu_before_norm: config.relu_before_norm,
    };
    let baseline = model.predict(&e.query_matrix(), 1.0).unwrap();
    let argmax = |t: &Tensor, r: usize| -> usize {
        let row = t.row(r);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        best
    };
    for scale in [0.1, 0.5, 2.0, 10.0] {
        let mut scaled = model.clone();
        for v in scaled.head.weight.value.data_mut() {
            *v *= scale;
        }
        for v in scaled.head.bias.value.data_mut() {
            *v *= scale;
        }
        let probs = scaled.predict(&e.query_matrix(), 1.0).unwrap();
        for r in 0..probs.rows() {
            assert_eq!(argmax(&probs, r), argmax(&baseline, r), "scale {scale}");
        }
    }
}

#[test]
fn probability_vectors_sum_to_one() {
    let ds = dataset(3.0, 1.2, 91);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let config = AdaptConfig {
        epochs: 5,
        ..AdaptConfig::default()
    };
    let e = sample_episode(&ds, &test, 5, 1, 6, 1).unwrap();
    for method in Method::ALL {
        let r = evaluate_episode(&bb, &e, method, &config).unwrap();
        for p in &r.probabilities {
            let total: f64 = p.iter().sum();
            assert!((total - 1.0).abs() < 1e-6, "{method:?}: sum {total}");
        }
        assert!((0.0..=1.0).contains(&r.accuracy));
    }
}

#[test]
fn evaluate_episode_is_deterministic() {
    let ds = dataset(3.0, 1.2, 92);
    let (pool, test) = split_pool(&ds);
    let bb = fitted_backbone(&ds, &pool);
    let config = AdaptConfig {
        epochs: 5,
        ..AdaptConfig::default()
    };
    let e = sample_episode(&ds, &test, 5, 1, 10, 9).unwrap();
    let a = evaluate_episode(&bb, &e, Method::Transductive, &config).unwrap();
    let b = evaluate_episode(&bb, &e, Method::Transductive, &config).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.predictions, b.predictions);
    assert_eq!(a.probabilities, b.probabilities);
    assert_eq!(a.traces.support_ce, b.traces.support_ce);
    assert_eq!(a.traces.query_entropy, b.traces.query_entropy);
}
