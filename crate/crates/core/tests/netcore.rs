use gsae::genesets::MembershipMask;
use gsae::netcore::pca::pca;
use gsae::netcore::{one_hot, train, AnyModel, TrainConfig};
use gsae::{Activation, Head, Layer, Model};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = gsae::rng::stream(seed, 900);
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

/// Random mask with every gene set non-empty.
fn random_mask(n_genes: usize, n_sets: usize, seed: u64) -> MembershipMask {
    let mut rng = gsae::rng::stream(seed, 901);
    let columns = (0..n_sets)
        .map(|_| {
            let mut c: Vec<usize> = (0..n_genes).filter(|_| rng.random_bool(0.4)).collect();
            if c.is_empty() {
                c.push(rng.random_range(0..n_genes));
            }
            c
        })
        .collect();
    MembershipMask::from_columns(
        (0..n_genes).map(|g| format!("g{g}")).collect(),
        (0..n_sets).map(|s| format!("s{s}")).collect(),
        columns,
    )
    .unwrap()
}

/// masked(ReLU) -> dense -> output, small enough for per-parameter
/// differences.
fn small_net(n_genes: usize, n_sets: usize, classes: Option<usize>, seed: u64) -> Model<f64> {
    let mask = random_mask(n_genes, n_sets, seed);
    match classes {
        Some(k) => {
            let names = (0..k).map(|c| format!("c{c}")).collect();
            Model::masked_classifier(&mask, Some(2), names, seed).unwrap()
        }
        None => {
            let layers = vec![
                Layer::masked(&mask, Activation::Relu).unwrap(),
                Layer::dense(n_sets, 2, Activation::Linear),
                Layer::dense(2, n_genes, Activation::Linear),
            ];
            Model::new(
                layers,
                Head::Reconstruction,
                mask.gene_ids.clone(),
                mask.set_names.clone(),
                None,
                seed,
            )
            .unwrap()
        }
    }
}

fn near_kink(m: &Model<f64>, x: &Array2<f64>) -> bool {
    let acts = m.forward(x.view()).unwrap();
    m.layers.iter().enumerate().any(|(l, layer)| {
        layer.activation == Activation::Relu
            && (layer.weights.dot(&acts[l]) + layer.bias.view().insert_axis(Axis(1)))
                .iter()
                .any(|z| z.abs() < 1e-4)
    })
}

/// Central differences carry ~eps * loss / h of round-off, so tiny gradients
/// get an absolute allowance on top of the relative one.
fn close(a: f64, n: f64) -> bool {
    (a - n).abs() <= 1e-5 * a.abs().max(n.abs()) + 1e-9
}

fn loss(m: &Model<f64>, x: &Array2<f64>, t: &Array2<f64>) -> f64 {
    m.loss(&m.predict(x.view()).unwrap(), t.view()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gradients_match_central_differences(seed in 0u64..10_000, classify in any::<bool>()) {
        let (genes, sets) = (4, 3);
        let mut m = small_net(genes, sets, classify.then_some(3), seed);
        let mut rng = gsae::rng::stream(seed, 902);
        for l in &mut m.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = normal(genes, 6, seed);
        let t = if classify { one_hot(&[0, 1, 2, 0, 1, 2], 3) } else { normal(genes, 6, seed + 1) };
        prop_assume!(!near_kink(&m, &x));
        // the reported cross-entropy floors probabilities, which flattens it
        let p = m.predict(x.view()).unwrap();
        prop_assume!(!classify || p.iter().zip(t.iter()).all(|(p, t)| *t == 0.0 || *p > 1e-9));
        let g = m.backward(&m.forward(x.view()).unwrap(), t.view()).unwrap();
        let h = 1e-5;
        for l in 0..m.layers.len() {
            for ((i, j), &a) in g.weights[l].indexed_iter() {
                if m.layers[l].mask.as_ref().is_some_and(|mk| mk.keep[[i, j]] == 0.0) {
                    prop_assert_eq!(a, 0.0);
                    continue;
                }
                let (mut up, mut down) = (m.clone(), m.clone());
                up.layers[l].weights[[i, j]] += h;
                down.layers[l].weights[[i, j]] -= h;
                let n = (loss(&up, &x, &t) - loss(&down, &x, &t)) / (2.0 * h);
                prop_assert!(close(a, n), "w[{l}][{i},{j}]: {a} vs {n}");
            }
            for (i, &a) in g.biases[l].indexed_iter() {
                let (mut up, mut down) = (m.clone(), m.clone());
                up.layers[l].bias[i] += h;
                down.layers[l].bias[i] -= h;
                let n = (loss(&up, &x, &t) - loss(&down, &x, &t)) / (2.0 * h);
                prop_assert!(close(a, n), "b[{l}][{i}]: {a} vs {n}");
            }
        }
    }

    #[test]
    fn training_keeps_the_mask_and_round_trips(seed in 0u64..10_000) {
        let mask = random_mask(10, 4, seed);
        let mut m = Model::<f64>::autoencoder(&mask, 3, seed).unwrap();
        let x = normal(10, 30, seed).mapv(|v| v.abs());
        let cfg = TrainConfig { learning_rate: 0.01, max_epochs: 5, val_fraction: 0.2, seed, ..Default::default() };
        train(&mut m, x.view(), None, &cfg).unwrap();
        prop_assert!(m.mask_respected());
        let back = Model::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.predict(x.view()).unwrap(), m.predict(x.view()).unwrap());
        prop_assert_eq!(&back, &m);
    }

    #[test]
    fn pca_components_are_orthonormal(seed in 0u64..10_000, features in 2usize..12, samples in 3usize..20) {
        let data = normal(features, samples, seed);
        let p = pca(data.view(), features).unwrap();
        let gram = p.components.t().dot(&p.components);
        for ((i, j), v) in gram.indexed_iter() {
            prop_assert!((v - f64::from(u8::from(i == j))).abs() < 1e-8);
        }
        prop_assert!(p.explained_variance.windows(2).into_iter().all(|w| w[0] >= w[1]));
        if p.k() == p.rank {
            let err = (&p.reconstruct() - &data).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            prop_assert!(err < 1e-8);
        }
    }
}

#[test]
fn single_precision_model_loads_as_either_width() {
    let mask = random_mask(8, 3, 1);
    let mut m = Model::<f32>::autoencoder(&mask, 2, 1).unwrap();
    let x = normal(8, 20, 1).mapv(|v| v.abs() as f32);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 3,
        val_fraction: 0.2,
        ..Default::default()
    };
    train(&mut m, x.view(), None, &cfg).unwrap();
    let json = m.to_json().unwrap();
    assert!(Model::<f64>::from_json(&json).is_err(), "dtype is checked");
    match AnyModel::from_json(&json).unwrap() {
        AnyModel::F32(back) => assert_eq!(back, m),
        AnyModel::F64(_) => panic!("expected an f32 model"),
    }
}
