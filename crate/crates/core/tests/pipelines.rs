mod common;

use std::collections::BTreeSet;

use common::{hand_model, planted_indices, set_index};
use gsae::netcore::TrainConfig;
use gsae::pipelines::*;
use gsae::stats::{gs_score, Direction};
use gsae::{Error, Model};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn group_labels(d: &SynthData) -> Vec<i64> {
    d.groups.iter().map(|&g| g as i64).collect()
}

fn planted_names(h: &SupersetHighImpact) -> BTreeSet<String> {
    h.entries.iter().map(|e| e.set_name.clone()).collect()
}

#[test]
fn subtype_finds_planted_sets_through_a_known_superset() {
    let d = synth(&SynthConfig::default()).unwrap();
    let planted = planted_indices(&d);
    let background: Vec<usize> = (0..30).filter(|i| !planted.contains(i)).collect();
    let m = hand_model(
        &d,
        &[
            (planted.iter().map(|&i| (i, 1.0)).collect(), 0.0),
            (background.iter().map(|&i| (i, 1.0)).collect(), 0.0),
            (planted.iter().map(|&i| (i, -1.0)).collect(), 100.0),
        ],
    );
    let r = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Labels(group_labels(&d)),
        &SubtypeConfig::new(0.0),
    )
    .unwrap();
    assert_eq!(
        r.target_cluster, 1,
        "the minority group is the default target"
    );
    assert_eq!(
        r.up_supersets.iter().map(|u| u.0).collect::<Vec<_>>(),
        vec![0]
    );
    assert_eq!(
        r.down_supersets.iter().map(|u| u.0).collect::<Vec<_>>(),
        vec![2]
    );

    let want: BTreeSet<String> = d.planted.iter().cloned().collect();
    let up = r.high_impact.iter().find(|h| h.superset == 0).unwrap();
    assert_eq!(up.direction, Direction::Up);
    assert_eq!(planted_names(up), want);
    let down = r.high_impact.iter().find(|h| h.superset == 2).unwrap();
    assert_eq!(down.direction, Direction::Down);
    assert_eq!(planted_names(down), want);
    // entries are ordered by |gsScore|
    assert!(up
        .entries
        .windows(2)
        .all(|w| w[0].gs_score.abs() >= w[1].gs_score.abs()));
}

#[test]
fn subtype_huge_shift_finds_nothing() {
    let d = synth(&SynthConfig::default()).unwrap();
    let planted = planted_indices(&d);
    let m = hand_model(&d, &[(planted.iter().map(|&i| (i, 1.0)).collect(), 0.0)]);
    let range = d.expression.values.iter().cloned().fold(0.0, f64::max);
    let r = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Labels(group_labels(&d)),
        &SubtypeConfig::new(10.0 * range),
    )
    .unwrap();
    assert!(r.up_supersets.is_empty() && r.down_supersets.is_empty());
    assert!(r.high_impact.is_empty());
}

#[test]
fn subtype_null_groups_are_calibrated() {
    // no planted signal and random group labels
    let d = synth(&SynthConfig {
        planted: 0,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..30).map(|i| (vec![(i, 1.0)], 0.0)).collect();
    let m = hand_model(&d, &rows);
    let mut labels: Vec<i64> = (0..200).map(|i| i64::from(i < 100)).collect();
    labels.shuffle(&mut gsae::rng::stream(5, 99));
    let r = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Labels(labels),
        &SubtypeConfig::new(0.0),
    )
    .unwrap();
    let hits = r.up_supersets.len() + r.down_supersets.len();
    // 60 one-sided tests at 0.01: expect 0.6 false positives
    assert!(hits <= 3, "{hits} false positives");
}

#[test]
fn subtype_ignores_noise_samples() {
    let d = synth(&SynthConfig::default()).unwrap();
    let planted = planted_indices(&d);
    let m = hand_model(
        &d,
        &[
            (planted.iter().map(|&i| (i, 1.0)).collect(), 0.0),
            (vec![(0, 1.0)], 0.0),
        ],
    );
    let mut labels = group_labels(&d);
    for l in labels.iter_mut().step_by(7) {
        *l = NOISE;
    }
    let r = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Labels(labels.clone()),
        &SubtypeConfig::new(0.0),
    )
    .unwrap();
    let noisy: Vec<usize> = (0..200).step_by(7).collect();
    assert!(r.group1.iter().chain(&r.group2).all(|i| !noisy.contains(i)));
    assert_eq!(r.group1.len() + r.group2.len(), 200 - noisy.len());

    // scrambling the expression of noise samples changes nothing
    let mut scrambled = d.expression.clone();
    for &i in &noisy {
        scrambled.values.column_mut(i).fill(0.0);
    }
    let r2 = subtype_pipeline(
        &m,
        &scrambled,
        &ClusterSource::Labels(labels),
        &SubtypeConfig::new(0.0),
    )
    .unwrap();
    assert_eq!(r.tests, r2.tests);
    assert_eq!(r.high_impact, r2.high_impact);
}

#[test]
fn subtype_needs_two_clusters() {
    let d = synth(&SynthConfig::default()).unwrap();
    let m = hand_model(&d, &[(vec![(0, 1.0)], 0.0)]);
    let mut labels = vec![0i64; 200];
    labels[3] = NOISE;
    let e = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Labels(labels),
        &SubtypeConfig::new(0.0),
    )
    .unwrap_err();
    assert!(matches!(e, Error::Degenerate(_)));
}

#[test]
fn subtype_internal_clustering_separates_groups() {
    let d = synth(&SynthConfig {
        effect: 4.0,
        ..Default::default()
    })
    .unwrap();
    let planted = planted_indices(&d);
    let m = hand_model(
        &d,
        &[
            (planted.iter().map(|&i| (i, 1.0)).collect(), 0.0),
            (vec![(planted[0], 1.0)], 0.0),
        ],
    );
    let tsne = TsneConfig {
        perplexity: 20.0,
        iterations: 500,
        seed: 3,
        ..Default::default()
    };
    let r = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Internal {
            tsne,
            eps: 4.0,
            min_pts: 5,
        },
        &SubtypeConfig::new(0.0),
    )
    .unwrap();
    let emb = r.embedding.as_ref().unwrap();
    assert_eq!(emb.dim(), (200, 2));
    // the target cluster is drawn almost entirely from one true group
    let in_g1 =
        r.group1.iter().filter(|&&i| d.groups[i] == 1).count() as f64 / r.group1.len() as f64;
    assert!(
        !(0.1..=0.9).contains(&in_g1),
        "target cluster purity {in_g1}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subtype_up_down_disjoint_and_monotone(s1 in 0.001f64..3.0, ds in 0.0f64..3.0) {
        let d = synth(&SynthConfig { n_samples: 60, ..Default::default() }).unwrap();
        let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..30).map(|i| (vec![(i, 1.0)], 0.0)).collect();
        let m = hand_model(&d, &rows);
        let src = ClusterSource::Labels(group_labels(&d));
        let a = subtype_pipeline(&m, &d.expression, &src, &SubtypeConfig::new(s1)).unwrap();
        let b = subtype_pipeline(&m, &d.expression, &src, &SubtypeConfig::new(s1 + ds)).unwrap();
        let up: BTreeSet<usize> = a.up_supersets.iter().map(|u| u.0).collect();
        prop_assert!(a.down_supersets.iter().all(|d| !up.contains(&d.0)));
        prop_assert!(b.up_supersets.len() + b.down_supersets.len() <= a.up_supersets.len() + a.down_supersets.len());
    }
}

#[test]
fn survival_planted_hazard_set_ranks_first() {
    let d = synth(&SynthConfig {
        hazard: HazardLink::Single,
        ..Default::default()
    })
    .unwrap();
    let h = set_index(&d, &d.hazard_sets[0]);
    let other = (h + 1) % 30;
    let m = hand_model(
        &d,
        &[
            (vec![(h, 1.0), (other, 0.2)], 0.0),
            (vec![(other, 1.0)], 0.0),
        ],
    );
    let r = survival_pipeline(
        &m,
        &d.expression,
        &d.clinical,
        &SurvivalConfig {
            superset_p: 0.01,
            top_k: 5,
        },
    )
    .unwrap();
    let s = r
        .significant
        .iter()
        .find(|s| s.superset == 0)
        .expect("hazard superset significant");
    assert_eq!(s.top[0].set_name, d.hazard_sets[0]);
    assert_eq!(s.high_risk, "high", "higher factor means higher hazard");
    assert!(s.top.len() <= 5);
    assert_eq!(r.km_curves.len(), r.significant.len());
    assert!(r
        .km_curves
        .iter()
        .all(|c| c.low.steps[0].survival == 1.0 && c.high.steps[0].survival == 1.0));
    // group 1 is the high-risk half
    let times: Vec<f64> = d
        .clinical
        .records
        .iter()
        .map(|r| f64::from(r.time_days))
        .collect();
    let mean = |idx: &[usize]| idx.iter().map(|&i| times[i]).sum::<f64>() / idx.len() as f64;
    assert!(mean(&s.group1) < mean(&s.group2));
}

#[test]
fn survival_null_has_no_significant_supersets() {
    let d = synth(&SynthConfig {
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..30).map(|i| (vec![(i, 1.0)], 0.0)).collect();
    let m = hand_model(&d, &rows);
    let r = survival_pipeline(&m, &d.expression, &d.clinical, &SurvivalConfig::default()).unwrap();
    assert!(r.significant.is_empty());
    assert_eq!(r.supersets.len(), 30);
    assert_eq!(r.geneset_logrank.len(), 30);
}

#[test]
fn survival_skips_degenerate_nodes() {
    let d = synth(&SynthConfig {
        hazard: HazardLink::Single,
        ..Default::default()
    })
    .unwrap();
    // an all-zero superset cannot be split at its median
    let m = hand_model(&d, &[(vec![], 0.0), (vec![(0, 1.0)], 0.0)]);
    let r = survival_pipeline(&m, &d.expression, &d.clinical, &SurvivalConfig::default()).unwrap();
    assert!(r.supersets[0].test.is_none() && r.supersets[0].skipped.is_some());
    assert!(r.supersets[1].test.is_some());
    assert!(r.supersets_tsv().lines().nth(1).unwrap().contains("NA"));
}

#[test]
fn gs_scores_recompute_from_serialized_model() {
    let d = synth(&SynthConfig {
        hazard: HazardLink::Single,
        ..Default::default()
    })
    .unwrap();
    let planted = planted_indices(&d);
    let mask = gsae::genesets::build_mask(&d.genesets, &d.expression.gene_ids).unwrap();
    let mut m = Model::<f64>::autoencoder(&mask, 12, 4).unwrap();
    // mean-of-members gene-set nodes (none dead), random superset weights except
    // for one unmistakable planted-set superset
    let rows = vec![(vec![], 0.0); 12];
    m.layers[0] = hand_model(&d, &rows).layers[0].clone();
    for &i in &planted {
        m.layers[1].weights[[0, i]] = 1.0;
    }
    m.layers[1].weights[[0, planted[0]]] = 3.0;
    let json = m.to_json().unwrap();
    let back = Model::<f64>::from_json(&json).unwrap();
    let enc = back
        .encode(&d.expression.gene_ids, d.expression.values.view())
        .unwrap();
    let mean = |row: usize, idx: &[usize]| {
        idx.iter().map(|&s| enc.geneset[[row, s]]).sum::<f64>() / idx.len() as f64
    };

    let sub = subtype_pipeline(
        &m,
        &d.expression,
        &ClusterSource::Labels(group_labels(&d)),
        &SubtypeConfig::new(0.0),
    )
    .unwrap();
    assert!(!sub.high_impact.is_empty());
    for h in &sub.high_impact {
        for e in &h.entries {
            let w = back.layers[1].weights[[h.superset, e.set_index]];
            let want = gs_score(
                mean(e.set_index, &sub.group1),
                mean(e.set_index, &sub.group2),
                w,
            );
            assert!((e.gs_score - want).abs() <= 1e-9);
        }
    }
    let surv = survival_pipeline(
        &m,
        &d.expression,
        &d.clinical,
        &SurvivalConfig {
            superset_p: 0.05,
            top_k: 30,
        },
    )
    .unwrap();
    assert!(!surv.significant.is_empty());
    for s in &surv.significant {
        for e in &s.top {
            let w = back.layers[1].weights[[s.superset, e.set_index]];
            let want = (mean(e.set_index, &s.group1) - mean(e.set_index, &s.group2)) * w;
            assert!((e.gs_score - want).abs() <= 1e-9);
        }
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.001,
        max_epochs: 20,
        patience: 5,
        ..Default::default()
    }
}

#[test]
fn repro_without_split_is_self_consistent() {
    let d = synth(&SynthConfig {
        n_samples: 120,
        hazard: HazardLink::Distributed,
        ..Default::default()
    })
    .unwrap();
    let cfg = ReproConfig {
        split: None,
        superset_size: 20,
        train: quick_train(),
        seed: 2,
        ..Default::default()
    };
    let r = repro_pipeline::<f64>(&d.expression, &d.clinical, &d.genesets, &cfg).unwrap();
    assert_eq!(r.train_samples, r.test_samples);
    for c in [&r.superset, &r.geneset] {
        assert_eq!(c.train_significant, c.test_significant);
        assert_eq!(c.overlap, c.train_significant);
        if c.both_empty {
            assert_eq!(c.jaccard, 0.0);
        } else {
            assert_eq!(c.jaccard, 1.0);
        }
    }
}

#[test]
fn repro_is_byte_reproducible() {
    let d = synth(&SynthConfig {
        n_samples: 120,
        hazard: HazardLink::Distributed,
        ..Default::default()
    })
    .unwrap();
    let cfg = ReproConfig {
        superset_size: 20,
        train: quick_train(),
        seed: 11,
        ..Default::default()
    };
    let a = repro_pipeline::<f64>(&d.expression, &d.clinical, &d.genesets, &cfg).unwrap();
    let b = repro_pipeline::<f64>(&d.expression, &d.clinical, &d.genesets, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.to_tsv(), b.to_tsv());
    assert_eq!(a.train_samples.len(), 72);
    assert!(a.train_samples.iter().all(|s| !a.test_samples.contains(s)));
    let c = repro_pipeline::<f64>(
        &d.expression,
        &d.clinical,
        &d.genesets,
        &ReproConfig { seed: 12, ..cfg },
    )
    .unwrap();
    assert_ne!(a.train_samples, c.train_samples);
}

#[test]
fn repro_flags_empty_training_significance() {
    let d = synth(&SynthConfig {
        n_samples: 80,
        ..Default::default()
    })
    .unwrap();
    let cfg = ReproConfig {
        sig_p: 1e-12,
        superset_size: 10,
        train: quick_train(),
        seed: 1,
        ..Default::default()
    };
    let r = repro_pipeline::<f64>(&d.expression, &d.clinical, &d.genesets, &cfg).unwrap();
    assert!(r.z_test.is_none());
    assert_eq!(r.flags.len(), 2);
    assert!(r.to_tsv().contains("NA"));
}

#[test]
fn repro_rejects_event_free_split() {
    let mut d = synth(&SynthConfig {
        n_samples: 40,
        ..Default::default()
    })
    .unwrap();
    for r in &mut d.clinical.records {
        r.event = false;
    }
    let cfg = ReproConfig {
        superset_size: 4,
        train: quick_train(),
        ..Default::default()
    };
    let e = repro_pipeline::<f64>(&d.expression, &d.clinical, &d.genesets, &cfg).unwrap_err();
    assert!(matches!(e, Error::Degenerate(_)));
}

fn four_class() -> (SynthData, Vec<String>) {
    let d = synth(&SynthConfig {
        n_groups: 4,
        planted: 30,
        effect: 3.0,
        ..Default::default()
    })
    .unwrap();
    let labels = d.groups.iter().map(|g| format!("c{g}")).collect();
    (d, labels)
}

#[test]
fn classify_geneset_variant_drops_the_superset_layer() {
    let (d, labels) = four_class();
    let cfg = ClassifyConfig {
        folds: 2,
        train: TrainConfig {
            max_epochs: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let s = classify_pipeline::<f64>(
        &d.expression,
        &labels,
        Some(&d.genesets),
        Variant::Superset,
        &cfg,
    )
    .unwrap();
    let g = classify_pipeline::<f64>(
        &d.expression,
        &labels,
        Some(&d.genesets),
        Variant::Geneset,
        &cfg,
    )
    .unwrap();
    assert_eq!(s.layer_widths, vec![30, 200, 4]);
    assert_eq!(g.layer_widths, vec![30, 4]);
    assert_eq!(g.layer_widths.len() + 1, s.layer_widths.len());
    let dense = classify_pipeline::<f64>(
        &d.expression,
        &labels,
        Some(&d.genesets),
        Variant::Dense,
        &cfg,
    )
    .unwrap();
    assert_eq!(dense.layer_widths, vec![30, 200, 4]);
    assert!(
        dense.n_params > s.n_params,
        "dense layers connect every gene"
    );
}

#[test]
fn classify_clips_pca_rank() {
    let (d, labels) = four_class();
    let cfg = ClassifyConfig {
        folds: 2,
        pca_k: 500,
        pca_hidden: vec![8],
        train: TrainConfig {
            max_epochs: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let r =
        classify_pipeline::<f64>(&d.expression, &labels, None, Variant::PcaDense, &cfg).unwrap();
    assert!(r.pca_truncated);
    assert!(r.pca_components.unwrap() < 200);
    assert_eq!(r.layer_widths, vec![8, 4]);
}

#[test]
fn classify_rejects_bad_requests() {
    assert!(matches!(
        "hdbscan".parse::<Variant>(),
        Err(Error::Config(_))
    ));
    assert_eq!("pca_dense".parse::<Variant>().unwrap(), Variant::PcaDense);
    let (d, labels) = four_class();
    let cfg = ClassifyConfig::default();
    let e = classify_pipeline::<f64>(&d.expression, &labels, None, Variant::Superset, &cfg)
        .unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    let one = vec!["x".to_string(); 200];
    assert!(classify_pipeline::<f64>(
        &d.expression,
        &one,
        Some(&d.genesets),
        Variant::Geneset,
        &cfg
    )
    .is_err());
}

#[test]
fn classify_separable_and_shuffled() {
    let (d, labels) = four_class();
    let train = TrainConfig {
        learning_rate: 0.005,
        patience: 30,
        max_epochs: 300,
        seed: 3,
        ..Default::default()
    };
    let cfg = ClassifyConfig {
        train,
        ..Default::default()
    };
    let r = classify_pipeline::<f64>(
        &d.expression,
        &labels,
        Some(&d.genesets),
        Variant::Superset,
        &cfg,
    )
    .unwrap();
    assert!(r.cv.accuracy >= 0.95, "accuracy {}", r.cv.accuracy);
    assert_eq!(r.cv.fold_sizes.iter().sum::<usize>(), 200);
    assert_eq!(r.to_tsv().lines().count(), 12);

    let mut shuffled = labels.clone();
    shuffled.shuffle(&mut gsae::rng::stream(3, 99));
    let s = classify_pipeline::<f64>(
        &d.expression,
        &shuffled,
        Some(&d.genesets),
        Variant::Superset,
        &cfg,
    )
    .unwrap();
    assert!(
        (s.cv.accuracy - 0.25).abs() <= 0.10,
        "shuffled accuracy {}",
        s.cv.accuracy
    );
}

#[test]
fn classify_runs_in_single_precision() {
    let (d, labels) = four_class();
    let train = TrainConfig {
        learning_rate: 0.005,
        max_epochs: 30,
        patience: 30,
        ..Default::default()
    };
    let cfg = ClassifyConfig {
        folds: 3,
        superset_size: 16,
        train,
        ..Default::default()
    };
    let r = classify_pipeline::<f32>(
        &d.expression,
        &labels,
        Some(&d.genesets),
        Variant::Superset,
        &cfg,
    )
    .unwrap();
    assert!(r.cv.accuracy > 0.5, "accuracy {}", r.cv.accuracy);
}
