#![allow(dead_code)]

use gsae::genesets::build_mask;
use gsae::pipelines::SynthData;
use gsae::Model;

/// Autoencoder whose gene-set nodes output the mean of their member genes
/// and whose superset `j` is `relu(bias_j + sum_i w_ji * geneset_i)` for the
/// given sparse rows.
pub fn hand_model(data: &SynthData, supersets: &[(Vec<(usize, f64)>, f64)]) -> Model<f64> {
    let mask = build_mask(&data.genesets, &data.expression.gene_ids).unwrap();
    let mut m = Model::<f64>::autoencoder(&mask, supersets.len(), 0).unwrap();
    let l0 = &mut m.layers[0];
    l0.weights.fill(0.0);
    l0.bias.fill(0.0);
    for (j, col) in mask.columns.iter().enumerate() {
        for &g in col {
            l0.weights[[j, g]] = 1.0 / col.len() as f64;
        }
    }
    let l1 = &mut m.layers[1];
    l1.weights.fill(0.0);
    for (j, (row, bias)) in supersets.iter().enumerate() {
        for &(i, w) in row {
            l1.weights[[j, i]] = w;
        }
        l1.bias[j] = *bias;
    }
    assert!(m.mask_respected());
    m
}

pub fn set_index(data: &SynthData, name: &str) -> usize {
    data.genesets
        .sets
        .iter()
        .position(|s| s.name == name)
        .unwrap()
}

pub fn planted_indices(data: &SynthData) -> Vec<usize> {
    data.planted.iter().map(|p| set_index(data, p)).collect()
}
