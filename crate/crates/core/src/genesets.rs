//! Gene-set collections, kappa-based de-duplication and the gene x set
//! connectivity mask of the gene-set layer.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use libm::erfc;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::GeneSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MIN_SIZE: usize = 15;
pub const DEFAULT_MAX_SIZE: usize = 500;
pub const DEFAULT_KAPPA_P: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSetCollection {
    pub sets: Vec<GeneSet>,
    /// Genes over which set similarity is measured. Contains every member
    /// of every set, in first-seen order.
    pub universe: Vec<String>,
}

impl GeneSetCollection {
    /// Builds a collection whose universe is the union of its members.
    pub fn new(sets: Vec<GeneSet>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut universe = Vec::new();
        for g in sets.iter().flat_map(|s| &s.members) {
            if seen.insert(g.as_str()) {
                universe.push(g.clone());
            }
        }
        Self::with_universe(sets, universe)
    }

    pub fn with_universe(sets: Vec<GeneSet>, universe: Vec<String>) -> Result<Self> {
        let mut names = HashSet::new();
        for s in &sets {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Duplicate {
                    kind: "gene set",
                    name: s.name.clone(),
                });
            }
        }
        let in_universe: HashSet<&str> = universe.iter().map(String::as_str).collect();
        if in_universe.len() != universe.len() {
            return Err(Error::Consistency(
                "universe contains duplicate genes".into(),
            ));
        }
        if let Some(g) = sets
            .iter()
            .flat_map(|s| &s.members)
            .find(|g| !in_universe.contains(g.as_str()))
        {
            return Err(Error::Consistency(format!(
                "gene `{g}` is missing from the universe"
            )));
        }
        Ok(GeneSetCollection { sets, universe })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.sets.iter().map(|s| s.name.clone()).collect()
    }

    pub fn to_gmt(&self) -> String {
        let mut out = String::new();
        for s in &self.sets {
            out.push_str(&s.name);
            out.push('\t');
            out.push_str(&s.description);
            for g in &s.members {
                out.push('\t');
                out.push_str(g);
            }
            out.push('\n');
        }
        out
    }
}

/// Keeps sets with `min_size <= |members| <= max_size`. The universe is
/// recomputed from the surviving sets.
pub fn size_filter(c: &GeneSetCollection, min_size: usize, max_size: usize) -> GeneSetCollection {
    let sets = c
        .sets
        .iter()
        .filter(|s| (min_size..=max_size).contains(&s.len()))
        .cloned()
        .collect();
    GeneSetCollection::new(sets).expect("subset of a valid collection")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub kappa: f64,
    /// One-sided upper tail for positive association.
    pub p_value: f64,
}

/// Cohen's kappa from the 2x2 membership table over a universe of `n`
/// genes: `n_a` and `n_b` members, `n_both` shared.
pub fn kappa_from_counts(n_a: usize, n_b: usize, n_both: usize, n: usize) -> Result<Kappa> {
    if n == 0 {
        return Err(Error::Degenerate("kappa over an empty universe".into()));
    }
    if n_a == 0 || n_b == 0 || n_a == n || n_b == n {
        return Err(Error::Degenerate(
            "kappa is undefined for an empty or universal set".into(),
        ));
    }
    if n_both > n_a.min(n_b) || n_a + n_b - n_both > n {
        return Err(Error::Consistency("inconsistent membership counts".into()));
    }
    let nf = n as f64;
    let neither = n - (n_a + n_b - n_both);
    let observed = (n_both + neither) as f64 / nf;
    let (pa, pb) = (n_a as f64 / nf, n_b as f64 / nf);
    let expected = pa * pb + (1.0 - pa) * (1.0 - pb);
    let kappa = (observed - expected) / (1.0 - expected);
    let se0 = (expected / (nf * (1.0 - expected))).sqrt();
    let z = kappa / se0;
    let p_value = (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0);
    Ok(Kappa { kappa, p_value })
}

/// Kappa agreement of two sets' membership indicators over `universe`.
pub fn kappa(a: &GeneSet, b: &GeneSet, universe: &[String]) -> Result<Kappa> {
    let u: HashSet<&str> = universe.iter().map(String::as_str).collect();
    let outside = a
        .members
        .iter()
        .chain(&b.members)
        .find(|g| !u.contains(g.as_str()));
    if let Some(g) = outside {
        return Err(Error::Consistency(format!(
            "gene `{g}` is outside the kappa universe"
        )));
    }
    let in_a: HashSet<&str> = a.members.iter().map(String::as_str).collect();
    let both = b
        .members
        .iter()
        .filter(|g| in_a.contains(g.as_str()))
        .count();
    kappa_from_counts(a.len(), b.len(), both, universe.len())
}

/// One connected component of the significance graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupComponent {
    pub members: Vec<String>,
    pub representative: String,
    /// Smallest p-value over the component's edges; `None` for singletons.
    pub min_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupResult {
    pub collection: GeneSetCollection,
    pub components: Vec<DedupComponent>,
}

impl DedupResult {
    /// `component_id, member_set_names, representative_name, min_p_value`
    pub fn audit_tsv(&self) -> String {
        let mut out =
            String::from("component_id\tmember_set_names\trepresentative_name\tmin_p_value\n");
        for (i, c) in self.components.iter().enumerate() {
            let p = c
                .min_p
                .map_or_else(|| "NA".to_string(), |p| format!("{p:e}"));
            let _ = writeln!(
                out,
                "{i}\t{}\t{}\t{p}",
                c.members.join(","),
                c.representative
            );
        }
        out
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges sets whose membership agreement is significant (`kappa > 0` and
/// `p < p_threshold`) into connected components, keeping the largest set of
/// each component. Ties go to the lexicographically smallest name. The
/// universe of `c` is carried over unchanged.
pub fn dedup(c: &GeneSetCollection, p_threshold: f64) -> DedupResult {
    let index: HashMap<&str, u32> = c
        .universe
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i as u32))
        .collect();
    let members: Vec<Vec<u32>> = c
        .sets
        .iter()
        .map(|s| {
            let mut v: Vec<u32> = s.members.iter().map(|g| index[g.as_str()]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    let n = c.universe.len();
    let n_sets = c.sets.len();

    let edges: Vec<(usize, usize, f64)> = (0..n_sets)
        .into_par_iter()
        .flat_map_iter(|i| {
            let members = &members;
            (i + 1..n_sets).filter_map(move |j| {
                let both = sorted_intersection(&members[i], &members[j]);
                let k = kappa_from_counts(members[i].len(), members[j].len(), both, n).ok()?;
                (k.kappa > 0.0 && k.p_value < p_threshold).then_some((i, j, k.p_value))
            })
        })
        .collect();

    let mut parent: Vec<usize> = (0..n_sets).collect();
    for &(i, j, _) in &edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let roots: Vec<usize> = (0..n_sets).map(|i| find(&mut parent, i)).collect();

    let mut order: Vec<usize> = Vec::new();
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &r) in roots.iter().enumerate() {
        groups.entry(r).or_insert_with(|| {
            order.push(r);
            Vec::new()
        });
        groups.get_mut(&r).unwrap().push(i);
    }
    let mut min_p: HashMap<usize, f64> = HashMap::new();
    for &(i, _, p) in &edges {
        let e = min_p.entry(roots[i]).or_insert(p);
        *e = e.min(p);
    }

    let mut keep = vec![false; n_sets];
    let components = order
        .iter()
        .map(|r| {
            let group = &groups[r];
            let rep = *group
                .iter()
                .min_by(|&&a, &&b| {
                    c.sets[b]
                        .len()
                        .cmp(&c.sets[a].len())
                        .then_with(|| c.sets[a].name.cmp(&c.sets[b].name))
                })
                .unwrap();
            keep[rep] = true;
            DedupComponent {
                members: group.iter().map(|&i| c.sets[i].name.clone()).collect(),
                representative: c.sets[rep].name.clone(),
                min_p: min_p.get(r).copied(),
            }
        })
        .collect();

    let sets = c
        .sets
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| s.clone())
        .collect();
    let collection = GeneSetCollection::with_universe(sets, c.universe.clone())
        .expect("subset of a valid collection");
    DedupResult {
        collection,
        components,
    }
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Binary genes x sets connectivity, stored as per-set sorted row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipMask {
    pub gene_ids: Vec<String>,
    pub set_names: Vec<String>,
    /// `columns[s]` lists the gene rows connected to set `s`, ascending.
    pub columns: Vec<Vec<usize>>,
}

impl MembershipMask {
    pub fn from_columns(
        gene_ids: Vec<String>,
        set_names: Vec<String>,
        mut columns: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if columns.len() != set_names.len() {
            return Err(Error::Shape(format!(
                "{} mask columns for {} sets",
                columns.len(),
                set_names.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::Consistency(
                "mask needs at least one gene set".into(),
            ));
        }
        for (s, col) in columns.iter_mut().enumerate() {
            col.sort_unstable();
            col.dedup();
            if col.is_empty() {
                return Err(Error::Consistency(format!(
                    "gene set `{}` has no genes",
                    set_names[s]
                )));
            }
            if col.last().is_some_and(|&g| g >= gene_ids.len()) {
                return Err(Error::Shape(format!(
                    "mask column `{}` indexes past the gene list",
                    set_names[s]
                )));
            }
        }
        Ok(MembershipMask {
            gene_ids,
            set_names,
            columns,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_sets(&self) -> usize {
        self.set_names.len()
    }

    pub fn contains(&self, gene: usize, set: usize) -> bool {
        self.columns[set].binary_search(&gene).is_ok()
    }

    pub fn column_sizes(&self) -> Vec<usize> {
        self.columns.iter().map(Vec::len).collect()
    }

    /// `[n_genes, n_sets]` matrix of zeros and ones.
    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n_genes(), self.n_sets()));
        for (s, col) in self.columns.iter().enumerate() {
            for &g in col {
                m[[g, s]] = T::one();
            }
        }
        m
    }
}

/// Mask with rows in `gene_ids` order and columns in collection order.
pub fn build_mask(c: &GeneSetCollection, gene_ids: &[String]) -> Result<MembershipMask> {
    if c.is_empty() {
        return Err(Error::Consistency(
            "cannot build a mask from an empty collection".into(),
        ));
    }
    let row: HashMap<&str, usize> = gene_ids
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let columns = c
        .sets
        .iter()
        .map(|s| {
            s.members
                .iter()
                .map(|g| {
                    row.get(g.as_str()).copied().ok_or_else(|| {
                        Error::Consistency(format!(
                            "gene `{g}` of set `{}` is not in the gene list",
                            s.name
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    MembershipMask::from_columns(gene_ids.to_vec(), c.names(), columns)
}
