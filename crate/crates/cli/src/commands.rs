use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ndarray::Array2;
use serde_json::{json, Value};

use gsae::dataio::{self, ExpressionUnit};
use gsae::genesets::{self, build_mask};
use gsae::netcore::{self, AnyModel};
use gsae::pipelines::{self as pl, ClusterSource, HazardLink, Variant};
use gsae::{ClinicalTable, Error, ExpressionMatrix, GeneSetCollection, Model, Scalar, TrainConfig};

use crate::run::RunDir;
use crate::settings::{parse_list, Settings};

/// Runs `$body` with `$m` bound to the model at its stored precision.
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            AnyModel::F64($m) => $body,
            AnyModel::F32($m) => $body,
        }
    };
}

pub struct Ctx<'a> {
    pub settings: &'a mut Settings,
    pub run: &'a mut RunDir,
    pub seed: u64,
}

fn expression(s: &mut Settings, key: &str) -> Result<ExpressionMatrix> {
    let path = s.input(key)?;
    let unit: ExpressionUnit = s.get_str("unit", "logtpm").parse()?;
    dataio::load_expression(&path, unit)
        .with_context(|| format!("loading expression {}", path.display()))
}

fn gene_sets(path: &Path) -> Result<GeneSetCollection> {
    dataio::load_gmt(path).with_context(|| format!("loading gene sets {}", path.display()))
}

fn clinical(s: &mut Settings, path: &Path) -> Result<ClinicalTable> {
    let cap = s.get("cap_days", dataio::DEFAULT_CAP_DAYS)?;
    dataio::load_clinical(path, cap)
        .with_context(|| format!("loading clinical table {}", path.display()))
}

fn load_model(s: &mut Settings) -> Result<AnyModel> {
    let path = s.input("model")?;
    let text = fs::read_to_string(&path)?;
    AnyModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn train_config(s: &mut Settings, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let c = TrainConfig {
        learning_rate: s.get("learning_rate", d.learning_rate)?,
        decay: s.get("decay", d.decay)?,
        momentum: s.get("momentum", d.momentum)?,
        nesterov: s.get("nesterov", d.nesterov)?,
        batch_size: s.get("batch_size", d.batch_size)?,
        max_epochs: s.get("max_epochs", d.max_epochs)?,
        val_fraction: s.get("val_fraction", d.val_fraction)?,
        patience: s.get("patience", d.patience)?,
        min_delta: s.get("min_delta", d.min_delta)?,
        seed,
    };
    c.validate()?;
    Ok(c)
}

/// Rows of `data` in the order the model was trained on.
fn in_model_order(data: &ExpressionMatrix, gene_ids: &[String]) -> Result<ExpressionMatrix> {
    let index: HashMap<&str, usize> = data
        .gene_ids
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let missing: Vec<&str> = gene_ids
        .iter()
        .filter(|g| !index.contains_key(g.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "{} model genes are missing from the expression data (first: {})",
            missing.len(),
            missing[0]
        ))
        .into());
    }
    Ok(data.select_genes(
        &gene_ids
            .iter()
            .map(|g| index[g.as_str()])
            .collect::<Vec<_>>(),
    ))
}

/// Keeps the samples that have a clinical record, in expression order.
fn with_clinical(
    data: &ExpressionMatrix,
    clin: &ClinicalTable,
) -> Result<(ExpressionMatrix, ClinicalTable)> {
    let idx: Vec<usize> = (0..data.n_samples())
        .filter(|&i| clin.get(&data.sample_ids[i]).is_some())
        .collect();
    if idx.is_empty() {
        return Err(Error::Alignment(
            "expression samples and clinical records do not overlap".into(),
        )
        .into());
    }
    let data = data.select_samples(&idx);
    let records = clin
        .for_samples(&data.sample_ids)?
        .into_iter()
        .cloned()
        .collect();
    Ok((
        data,
        ClinicalTable {
            records,
            label_columns: clin.label_columns.clone(),
        },
    ))
}

fn node_tsv(row_names: &[String], sample_ids: &[String], values: &Array2<f64>) -> String {
    let mut out = String::from("node");
    for s in sample_ids {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (name, row) in row_names.iter().zip(values.rows()) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

fn superset_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("superset_{j}")).collect()
}

pub fn prep(c: Ctx) -> Result<Value> {
    let s = c.settings;
    let expr = expression(s, "expr")?;
    let gmt = gene_sets(&s.input("gmt")?)?;
    let clin = match s.opt_input("clinical")? {
        Some(p) => Some(clinical(s, &p)?),
        None => None,
    };
    let mean_min = s.get("mean_min", 1.0)?;
    let sd_min = s.get("sd_min", 0.5)?;
    let min_size = s.get("min_size", genesets::DEFAULT_MIN_SIZE)?;
    let max_size = s.get("max_size", genesets::DEFAULT_MAX_SIZE)?;

    // restrict samples first so the gene filter sees exactly the samples
    // that are kept, which makes prep idempotent on its own output
    let (expr, clin) = match clin {
        Some(t) => {
            let (e, t) = with_clinical(&expr, &t)?;
            (e, Some(t))
        }
        None => (expr, None),
    };
    let filtered = dataio::filter_genes(&expr, mean_min, sd_min)?;
    let (aligned, sets, clin) = dataio::align(&filtered, &gmt, clin.as_ref())?;
    let sized = genesets::size_filter(&sets, min_size, max_size);
    if sized.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no gene set keeps between {min_size} and {max_size} members after the expression filter"
        ))
        .into());
    }
    let (aligned, sets, clin) = dataio::align(&aligned, &sized, clin.as_ref())?;

    let summary = json!({
        "n_genes": aligned.n_genes(),
        "n_samples": aligned.n_samples(),
        "n_sets": sets.len(),
        "filters": { "mean_min": mean_min, "sd_min": sd_min, "min_size": min_size, "max_size": max_size },
    });
    c.run.stage("expression.tsv", aligned.to_tsv());
    c.run.stage("genesets.gmt", sets.to_gmt());
    if let Some(t) = clin {
        c.run.stage("clinical.tsv", t.to_tsv());
    }
    c.run.stage_json("prep.json", &summary)?;
    Ok(json!({
        "input_genes": expr.n_genes(),
        "input_sets": gmt.len(),
        "prep": summary,
    }))
}

fn read_universe(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split('\t').next())
        .map(str::trim)
        .filter(|g| !g.is_empty() && !g.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn dedup(c: Ctx) -> Result<Value> {
    let s = c.settings;
    let gmt = gene_sets(&s.input("gmt")?)?;
    let gmt = match s.opt_input("universe")? {
        Some(p) => GeneSetCollection::with_universe(gmt.sets, read_universe(&p)?)?,
        None => gmt,
    };
    let p = s.get("p_threshold", genesets::DEFAULT_KAPPA_P)?;
    let r = genesets::dedup(&gmt, p);
    c.run.stage("genesets.gmt", r.collection.to_gmt());
    c.run.stage("dedup_audit.tsv", r.audit_tsv());
    Ok(json!({
        "input_sets": gmt.len(),
        "output_sets": r.collection.len(),
        "merged_components": r.components.iter().filter(|c| c.members.len() > 1).count(),
    }))
}

fn train_autoencoder<T: Scalar>(
    data: &ExpressionMatrix,
    sets: &GeneSetCollection,
    superset_size: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<(String, netcore::TrainHistory, usize)> {
    let mask = build_mask(sets, &data.gene_ids)?;
    let mut model = Model::<T>::autoencoder(&mask, superset_size, seed)?;
    let x = data.values.mapv(T::of);
    let history = netcore::train(&mut model, x.view(), None, config)?;
    Ok((model.to_json()?, history, model.n_params()))
}

pub fn train(c: Ctx, float32: bool) -> Result<Value> {
    let s = c.settings;
    let expr = expression(s, "expr")?;
    let gmt = gene_sets(&s.input("gmt")?)?;
    let superset_size = s.get("superset_size", 200usize)?;
    let config = train_config(s, c.seed)?;
    let (data, sets, _) = dataio::align(&expr, &gmt, None)?;
    let (json, history, n_params) = if float32 {
        train_autoencoder::<f32>(&data, &sets, superset_size, c.seed, &config)?
    } else {
        train_autoencoder::<f64>(&data, &sets, superset_size, c.seed, &config)?
    };
    c.run.stage("model.json", json);
    c.run.stage("history.csv", history.to_csv());
    Ok(json!({
        "n_genes": data.n_genes(),
        "n_samples": data.n_samples(),
        "n_sets": sets.len(),
        "n_params": n_params,
        "epochs": history.epochs(),
        "stopped_early": history.stopped_early,
        "final_train_loss": history.train_loss.last(),
        "final_val_loss": history.val_loss.last(),
    }))
}

pub fn encode(c: Ctx) -> Result<Value> {
    let s = c.settings;
    let model = load_model(s)?;
    let expr = expression(s, "expr")?;
    let (genesets_tsv, supersets_tsv, n_supersets) = with_model!(&model, m => {
        let data = in_model_order(&expr, &m.gene_ids)?;
        let enc = m.encode(&data.gene_ids, data.values.mapv(Scalar::of).view())?;
        let g = enc.geneset.mapv(|v| v.as_f64());
        let u = enc.superset.mapv(|v| v.as_f64());
        (node_tsv(&m.set_names, &data.sample_ids, &g), node_tsv(&superset_names(u.nrows()), &data.sample_ids, &u), u.nrows())
    });
    c.run.stage("genesets.tsv", genesets_tsv);
    c.run.stage("supersets.tsv", supersets_tsv);
    Ok(json!({ "n_samples": expr.n_samples(), "n_supersets": n_supersets }))
}

/// `sample_id<TAB>cluster` with a header line; samples missing from the
/// file are treated as noise.
fn read_clusters(path: &Path, sample_ids: &[String]) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split('\t');
        let (Some(id), Some(l)) = (f.next(), f.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1,
                msg: "expected sample_id<TAB>cluster".into(),
            }
            .into());
        };
        let l: i64 = l.trim().parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: format!("cluster `{l}` is not an integer"),
        })?;
        map.insert(id.to_string(), l);
    }
    Ok(sample_ids
        .iter()
        .map(|s| map.get(s).copied().unwrap_or(pl::NOISE))
        .collect())
}

fn tsne_config(s: &mut Settings, seed: u64) -> Result<pl::TsneConfig> {
    let d = pl::TsneConfig::default();
    Ok(pl::TsneConfig {
        perplexity: s.get("perplexity", d.perplexity)?,
        iterations: s.get("iterations", d.iterations)?,
        learning_rate: s.get("tsne_learning_rate", d.learning_rate)?,
        pca_dims: s.opt("pca_dims")?,
        seed,
        ..d
    })
}

pub fn subtype(c: Ctx) -> Result<Value> {
    let s = c.settings;
    let model = load_model(s)?;
    let expr = expression(s, "expr")?;
    let mut config = pl::SubtypeConfig::new(s.get("shift", 0.0)?);
    config.p_threshold = s.get("p_threshold", config.p_threshold)?;
    config.geneset_shift = s.get("geneset_shift", config.geneset_shift)?;
    config.target = s.opt("target")?;
    let labels = s.opt_input("clusters")?;
    let source = match labels {
        Some(p) => ClusterSource::Labels(read_clusters(&p, &expr.sample_ids)?),
        None => ClusterSource::Internal {
            tsne: tsne_config(s, c.seed)?,
            eps: s.required("eps")?,
            min_pts: s.get("min_pts", 5usize)?,
        },
    };
    let (report, sample_ids) = with_model!(&model, m => {
        let data = in_model_order(&expr, &m.gene_ids)?;
        (pl::subtype_pipeline(m, &data, &source, &config)?, data.sample_ids)
    });
    c.run.stage("supersets.tsv", report.supersets_tsv());
    c.run.stage("high_impact.tsv", report.high_impact_tsv());
    c.run
        .stage("clusters.tsv", report.clusters_tsv(&sample_ids));
    c.run.stage_json("report.json", &report)?;
    Ok(json!({
        "target_cluster": report.target_cluster,
        "group_sizes": [report.group1.len(), report.group2.len()],
        "up_supersets": report.up_supersets.len(),
        "down_supersets": report.down_supersets.len(),
    }))
}

pub fn survive(c: Ctx) -> Result<Value> {
    let s = c.settings;
    let model = load_model(s)?;
    let expr = expression(s, "expr")?;
    let clin_path = s.input("clinical")?;
    let clin = clinical(s, &clin_path)?;
    let d = pl::SurvivalConfig::default();
    let config = pl::SurvivalConfig {
        superset_p: s.get("superset_p", d.superset_p)?,
        top_k: s.get("top_k", d.top_k)?,
    };
    let (expr, clin) = with_clinical(&expr, &clin)?;
    let (report, set_names) = with_model!(&model, m => {
        let data = in_model_order(&expr, &m.gene_ids)?;
        (pl::survival_pipeline(m, &data, &clin, &config)?, m.set_names.clone())
    });
    c.run.stage("supersets.tsv", report.supersets_tsv());
    c.run.stage("genesets.tsv", report.genesets_tsv(&set_names));
    c.run.stage("top_genesets.tsv", report.top_tsv());
    c.run.stage("km.tsv", report.km_tsv());
    c.run.stage_json("report.json", &report)?;
    Ok(json!({
        "n_samples": expr.n_samples(),
        "significant_supersets": report.significant.iter().map(|x| x.superset).collect::<Vec<_>>(),
    }))
}

pub fn reproduce(c: Ctx, float32: bool) -> Result<Value> {
    let s = c.settings;
    let expr = expression(s, "expr")?;
    let gmt = gene_sets(&s.input("gmt")?)?;
    let clin_path = s.input("clinical")?;
    let clin = clinical(s, &clin_path)?;
    let d = pl::ReproConfig::default();
    let split =
        match s.get_str("split", "0.6").as_str() {
            "none" => None,
            v => Some(v.parse::<f64>().map_err(|_| {
                Error::Config(format!("split = {v}: expected a fraction or `none`"))
            })?),
        };
    let config = pl::ReproConfig {
        split,
        sig_p: s.get("sig_p", d.sig_p)?,
        superset_size: s.get("superset_size", d.superset_size)?,
        train: train_config(s, c.seed)?,
        seed: c.seed,
    };
    let (data, sets, clin) = dataio::align(&expr, &gmt, Some(&clin))?;
    let clin = clin.expect("clinical table was given");
    let report = if float32 {
        pl::repro_pipeline::<f32>(&data, &clin, &sets, &config)?
    } else {
        pl::repro_pipeline::<f64>(&data, &clin, &sets, &config)?
    };
    c.run.stage("repro.tsv", report.to_tsv());
    c.run.stage_json("report.json", &report)?;
    Ok(json!({
        "superset_jaccard": report.superset.jaccard,
        "geneset_jaccard": report.geneset.jaccard,
        "z_test_p": report.z_test.map(|t| t.p_value),
        "flags": report.flags,
    }))
}

pub fn classify(c: Ctx, float32: bool) -> Result<Value> {
    let s = c.settings;
    let expr = expression(s, "expr")?;
    let gmt = match s.opt_input("gmt")? {
        Some(p) => Some(gene_sets(&p)?),
        None => None,
    };
    let clin_path = s.input("clinical")?;
    let clin = clinical(s, &clin_path)?;
    let column = s.get_str("label_column", "label");
    let variant: Variant = s.get_str("variant", "superset").parse()?;
    let d = pl::ClassifyConfig::default();
    let config = pl::ClassifyConfig {
        folds: s.get("folds", d.folds)?,
        superset_size: s.get("superset_size", d.superset_size)?,
        dense_hidden: parse_list(&s.get_str("dense_hidden", ""))?,
        pca_k: s.get("pca_k", d.pca_k)?,
        pca_hidden: parse_list(&s.get_str("pca_hidden", "400,100"))?,
        train: train_config(s, c.seed)?,
    };
    let (data, sets, clin) = match &gmt {
        Some(g) => {
            let (e, g, t) = dataio::align(&expr, g, Some(&clin))?;
            (e, Some(g), t.expect("clinical table was given"))
        }
        None => {
            let (e, t) = with_clinical(&expr, &clin)?;
            (e, None, t)
        }
    };
    let labels = clin.labels_for(&column, &data.sample_ids)?;
    let report = if float32 {
        pl::classify_pipeline::<f32>(&data, &labels, sets.as_ref(), variant, &config)?
    } else {
        pl::classify_pipeline::<f64>(&data, &labels, sets.as_ref(), variant, &config)?
    };
    if report.pca_truncated {
        log::warn!(
            "pca_k clipped to {} components",
            report.pca_components.unwrap_or(0)
        );
    }
    c.run.stage("classify.tsv", report.to_tsv());
    c.run.stage_json("report.json", &report)?;
    Ok(json!({ "variant": variant, "accuracy": report.cv.accuracy, "n_params": report.n_params }))
}

fn embed_points<T: Scalar>(
    points: Array2<f64>,
    config: &pl::TsneConfig,
    dbscan: Option<(f64, usize)>,
) -> Result<(Array2<f64>, Option<Vec<i64>>, [f64; 3])> {
    let t = pl::tsne_exact(points.mapv(T::of).view(), config)?;
    let clusters = match dbscan {
        Some((eps, min_pts)) => Some(pl::dbscan(t.embedding.view(), eps, min_pts)?),
        None => None,
    };
    Ok((
        t.embedding.mapv(|v| v.as_f64()),
        clusters,
        [t.kl_start, t.kl_initial, t.kl_final],
    ))
}

pub fn embed(c: Ctx, float32: bool) -> Result<Value> {
    let s = c.settings;
    let expr = expression(s, "expr")?;
    let source = s.get_str("source", "superset");
    let config = tsne_config(s, c.seed)?;
    let dbscan = match s.opt::<f64>("eps")? {
        Some(eps) => Some((eps, s.get("min_pts", 5usize)?)),
        None => None,
    };
    // rows are samples
    let (points, sample_ids, f32_model) = match source.as_str() {
        "expression" => (expr.values.t().to_owned(), expr.sample_ids.clone(), false),
        "superset" | "geneset" => {
            let model = load_model(s)?;
            let is32 = matches!(model, AnyModel::F32(_));
            with_model!(&model, m => {
                let data = in_model_order(&expr, &m.gene_ids)?;
                let enc = m.encode(&data.gene_ids, data.values.mapv(Scalar::of).view())?;
                let a = if source == "superset" { enc.superset } else { enc.geneset };
                (a.t().mapv(|v| v.as_f64()), data.sample_ids, is32)
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown embedding source `{other}` (superset, geneset, expression)"
            ))
            .into())
        }
    };
    let (emb, clusters, kl) = if float32 || f32_model {
        embed_points::<f32>(points, &config, dbscan)?
    } else {
        embed_points::<f64>(points, &config, dbscan)?
    };
    let mut out = String::from(if clusters.is_some() {
        "sample_id\tx\ty\tcluster\n"
    } else {
        "sample_id\tx\ty\n"
    });
    for (i, id) in sample_ids.iter().enumerate() {
        let _ = write!(out, "{id}\t{}\t{}", emb[[i, 0]], emb[[i, 1]]);
        if let Some(cl) = &clusters {
            let _ = write!(out, "\t{}", cl[i]);
        }
        out.push('\n');
    }
    c.run.stage("embedding.tsv", out);
    let summary = json!({ "kl_start": kl[0], "kl_initial": kl[1], "kl_final": kl[2] });
    c.run.stage_json("embedding.json", &summary)?;
    Ok(summary)
}

pub fn synth(c: Ctx) -> Result<Value> {
    let s = c.settings;
    let d = pl::SynthConfig::default();
    let hazard: HazardLink = s.get_str("hazard", "none").parse()?;
    let config = pl::SynthConfig {
        n_samples: s.get("n_samples", d.n_samples)?,
        n_genes: s.get("n_genes", d.n_genes)?,
        n_sets: s.get("n_sets", d.n_sets)?,
        planted: s.get("planted", d.planted)?,
        effect: s.get("effect", d.effect)?,
        n_groups: s.get("n_groups", d.n_groups)?,
        minority_fraction: s.get("minority_fraction", d.minority_fraction)?,
        base_min: s.get("base_min", d.base_min)?,
        base_max: s.get("base_max", d.base_max)?,
        factor_sd: s.get("factor_sd", d.factor_sd)?,
        noise_sd: s.get("noise_sd", d.noise_sd)?,
        hazard,
        log_hazard_ratio: s.get("log_hazard_ratio", d.log_hazard_ratio)?,
        shared_loading: s.get("shared_loading", d.shared_loading)?,
        baseline_median_days: s.get("baseline_median_days", d.baseline_median_days)?,
        censor_max_days: s.get("censor_max_days", d.censor_max_days)?,
        seed: c.seed,
    };
    let data = pl::synth(&config)?;
    c.run.stage("expression.tsv", data.expression.to_tsv());
    c.run.stage("genesets.gmt", data.genesets.to_gmt());
    c.run.stage("clinical.tsv", data.clinical.to_tsv());
    let truth =
        json!({ "planted": data.planted, "hazard_sets": data.hazard_sets, "groups": data.groups });
    c.run.stage_json("truth.json", &truth)?;
    Ok(json!({ "planted": data.planted, "hazard_sets": data.hazard_sets }))
}
