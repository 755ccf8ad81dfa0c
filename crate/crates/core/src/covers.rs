//! Node cover regions: which samples switch each node on, and how those sets
//! move between training snapshots.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::nncore::{forward, Activation, Network, NnError, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoverError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("layer {layer} out of range ({layers} layers)")]
    InvalidLayer { layer: usize, layers: usize },
    #[error("cover maps are not comparable: {0}")]
    Mismatch(String),
}

/// How a node's activation is compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// `a > τ`
    #[default]
    Value,
    /// `|a| > τ`
    Magnitude,
}

impl Criterion {
    fn covers<T: Scalar>(self, a: T, tau: T) -> bool {
        match self {
            Criterion::Value => a > tau,
            Criterion::Magnitude => a.abs() > tau,
        }
    }
}

/// Default threshold for a layer activation: strictly active for relu, `|a| > 0.5` for tanh.
pub fn default_threshold<T: Scalar>(act: Activation) -> (T, Criterion) {
    match act {
        Activation::Tanh => (T::of(0.5), Criterion::Magnitude),
        _ => (T::zero(), Criterion::Value),
    }
}

/// `entries[k][n]` holds the indices of samples whose layer-`k` output at node `n` clears `tau`.
///
/// Layer `k` refers to the output of network layer `k`, i.e. trajectory state `h_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverMap<T> {
    pub iteration: usize,
    pub tau: T,
    pub criterion: Criterion,
    pub dataset_len: usize,
    pub entries: Vec<Vec<BTreeSet<usize>>>,
}

impl<T: Scalar> CoverMap<T> {
    pub fn layers(&self) -> usize {
        self.entries.len()
    }

    pub fn cover(&self, layer: usize, node: usize) -> Option<&BTreeSet<usize>> {
        self.entries.get(layer).and_then(|l| l.get(node))
    }

    fn widths(&self) -> Vec<usize> {
        self.entries.iter().map(Vec::len).collect()
    }
}

pub fn cover_map<T: Scalar>(
    net: &Network<T>,
    dataset: &[Vec<T>],
    tau: T,
    iteration: usize,
) -> Result<CoverMap<T>, CoverError> {
    cover_map_with(net, dataset, tau, Criterion::Value, iteration)
}

pub fn cover_map_with<T: Scalar>(
    net: &Network<T>,
    dataset: &[Vec<T>],
    tau: T,
    criterion: Criterion,
    iteration: usize,
) -> Result<CoverMap<T>, CoverError> {
    if dataset.is_empty() {
        return Err(CoverError::EmptyDataset);
    }
    let mut entries: Vec<Vec<BTreeSet<usize>>> = net
        .layers()
        .iter()
        .map(|l| vec![BTreeSet::new(); l.out_dim()])
        .collect();
    for (i, x) in dataset.iter().enumerate() {
        let traj = forward(net, x)?;
        for (k, layer) in entries.iter_mut().enumerate() {
            for (n, set) in layer.iter_mut().enumerate() {
                if criterion.covers(traj.states[k + 1][n], tau) {
                    set.insert(i);
                }
            }
        }
    }
    Ok(CoverMap {
        iteration,
        tau,
        criterion,
        dataset_len: dataset.len(),
        entries,
    })
}

/// `C(x) = {(k, n)}` of nodes that `x` switches on.
pub fn active_covers<T: Scalar>(
    net: &Network<T>,
    x: &[T],
    tau: T,
    criterion: Criterion,
) -> Result<BTreeSet<(usize, usize)>, CoverError> {
    let traj = forward(net, x)?;
    let mut out = BTreeSet::new();
    for (k, h) in traj.states[1..].iter().enumerate() {
        for (n, &a) in h.iter().enumerate() {
            if criterion.covers(a, tau) {
                out.insert((k, n));
            }
        }
    }
    Ok(out)
}

/// Fraction of samples covered by at least one node of `layer`.
pub fn coverage_fraction<T: Scalar>(cm: &CoverMap<T>, layer: usize) -> Result<f64, CoverError> {
    let nodes = cm.entries.get(layer).ok_or(CoverError::InvalidLayer {
        layer,
        layers: cm.layers(),
    })?;
    let union: BTreeSet<usize> = nodes.iter().flatten().copied().collect();
    Ok(union.len() as f64 / cm.dataset_len as f64)
}

/// `1 − |A∩B|/|A∪B|`, zero when both sets are empty.
pub fn jaccard_distance(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverDriftReport {
    pub from_iteration: usize,
    pub to_iteration: usize,
    /// `distances[k][n]`
    pub distances: Vec<Vec<f64>>,
    pub mean_drift: Vec<f64>,
    pub coverage_before: Vec<f64>,
    pub coverage_after: Vec<f64>,
}

pub fn cover_drift<T: Scalar>(
    before: &CoverMap<T>,
    after: &CoverMap<T>,
) -> Result<CoverDriftReport, CoverError> {
    if before.dataset_len != after.dataset_len {
        return Err(CoverError::Mismatch(format!(
            "dataset sizes {} and {}",
            before.dataset_len, after.dataset_len
        )));
    }
    if before.tau != after.tau || before.criterion != after.criterion {
        return Err(CoverError::Mismatch("thresholds differ".into()));
    }
    if before.widths() != after.widths() {
        return Err(CoverError::Mismatch("architectures differ".into()));
    }
    let distances: Vec<Vec<f64>> = before
        .entries
        .iter()
        .zip(&after.entries)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| jaccard_distance(x, y)).collect())
        .collect();
    let mean_drift = distances
        .iter()
        .map(|d: &Vec<f64>| d.iter().sum::<f64>() / d.len() as f64)
        .collect();
    let coverage = |cm: &CoverMap<T>| -> Result<Vec<f64>, CoverError> {
        (0..cm.layers()).map(|k| coverage_fraction(cm, k)).collect()
    };
    Ok(CoverDriftReport {
        from_iteration: before.iteration,
        to_iteration: after.iteration,
        distances,
        mean_drift,
        coverage_before: coverage(before)?,
        coverage_after: coverage(after)?,
    })
}

/// One CSV row of a cover time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverRow {
    pub iteration: usize,
    pub layer: usize,
    pub node: usize,
    pub cover_size: usize,
    /// Empty for the first snapshot.
    pub jaccard_vs_prev: Option<f64>,
}

/// Flatten a sequence of snapshots into rows, comparing each with its predecessor.
pub fn cover_rows<T: Scalar>(series: &[CoverMap<T>]) -> Result<Vec<CoverRow>, CoverError> {
    let mut rows = Vec::new();
    for (s, cm) in series.iter().enumerate() {
        let drift = match s {
            0 => None,
            _ => Some(cover_drift(&series[s - 1], cm)?),
        };
        for (k, layer) in cm.entries.iter().enumerate() {
            for (n, set) in layer.iter().enumerate() {
                rows.push(CoverRow {
                    iteration: cm.iteration,
                    layer: k,
                    node: n,
                    cover_size: set.len(),
                    jaccard_vs_prev: drift.as_ref().map(|d| d.distances[k][n]),
                });
            }
        }
    }
    Ok(rows)
}
