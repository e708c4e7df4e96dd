//! Cluster characterisation by mean differences of normalised features, and
//! cross-fold summaries with normal-approximation intervals.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::Partition;
use crate::matrix::Matrix;
use crate::stability::ari;

const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDifference {
    pub feature: String,
    /// Cluster mean minus whole-set mean.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: u32,
    pub count: usize,
    pub share: f64,
    /// Ordered by decreasing absolute difference, ties by feature name.
    pub differences: Vec<FeatureDifference>,
}

impl ClusterProfile {
    pub fn top(&self, k: usize) -> &[FeatureDifference] {
        &self.differences[..k.min(self.differences.len())]
    }
}

/// Profiles of the non-null clusters of `partition` over the rows of
/// `matrix`, ordered by cluster id.
pub fn characterize(matrix: &Matrix, partition: &Partition, feature_names: &[String]) -> Result<Vec<ClusterProfile>> {
    if matrix.rows() != partition.labels.len() {
        return Err(Error::LengthMismatch {
            left: matrix.rows(),
            right: partition.labels.len(),
        });
    }
    if matrix.cols() != feature_names.len() {
        return Err(Error::Dimension {
            expected: feature_names.len(),
            found: matrix.cols(),
        });
    }
    if matrix.rows() == 0 {
        return Ok(Vec::new());
    }
    let d = matrix.cols();
    let n = partition.n_declared;
    let mut sums = vec![vec![0.0; d]; n];
    let mut counts = vec![0usize; n];
    let mut overall = vec![0.0; d];
    for (row, &l) in matrix.iter_rows().zip(&partition.labels) {
        let l = l as usize;
        counts[l] += 1;
        for ((s, o), v) in sums[l].iter_mut().zip(overall.iter_mut()).zip(row) {
            *s += v;
            *o += v;
        }
    }
    let total = matrix.rows() as f64;
    overall.iter_mut().for_each(|o| *o /= total);
    let mut profiles = Vec::new();
    for (c, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
        if count == 0 {
            log::info!("cluster {c} has no members and is omitted");
            continue;
        }
        let mut differences: Vec<FeatureDifference> = sum
            .iter()
            .zip(&overall)
            .zip(feature_names)
            .map(|((s, o), name)| FeatureDifference {
                feature: name.clone(),
                difference: s / count as f64 - o,
            })
            .collect();
        differences.sort_by(|a, b| {
            b.difference
                .abs()
                .total_cmp(&a.difference.abs())
                .then_with(|| a.feature.cmp(&b.feature))
        });
        profiles.push(ClusterProfile {
            cluster: c as u32,
            count,
            share: count as f64 / total,
            differences,
        });
    }
    Ok(profiles)
}

/// Mean with a normal-approximation 95% interval from the sample standard
/// deviation across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
}

impl Interval {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            lower: mean - Z95 * sd,
            upper: mean + Z95 * sd,
            replicates: values.len(),
        })
    }
}

/// The fold whose labels agree best (mean ARI) with the other folds; ties
/// go to the lower index.
pub fn primary_fold(partitions: &[Partition]) -> Result<usize> {
    if partitions.is_empty() {
        return Err(Error::Parameter("no fold-models".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..partitions.len() {
        let mut s = 0.0;
        for j in 0..partitions.len() {
            if i != j {
                s += ari(&partitions[i].labels, &partitions[j].labels)?;
            }
        }
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}

/// Greedy maximum-overlap matching of the clusters of `other` onto the
/// clusters of `reference`. Returns, per reference cluster, the matched
/// cluster of `other`.
pub fn match_clusters(reference: &Partition, other: &Partition) -> Result<Vec<Option<u32>>> {
    if reference.labels.len() != other.labels.len() {
        return Err(Error::LengthMismatch {
            left: reference.labels.len(),
            right: other.labels.len(),
        });
    }
    let (nr, no) = (reference.n_declared, other.n_declared);
    let mut overlap = vec![0usize; nr * no];
    for (&a, &b) in reference.labels.iter().zip(&other.labels) {
        overlap[a as usize * no + b as usize] += 1;
    }
    let mut cells: Vec<(usize, usize, usize)> = (0..nr)
        .flat_map(|i| (0..no).map(move |j| (i, j)))
        .map(|(i, j)| (overlap[i * no + j], i, j))
        .filter(|c| c.0 > 0)
        .collect();
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matched = vec![None; nr];
    let mut used = vec![false; no];
    for (_, i, j) in cells {
        if matched[i].is_none() && !used[j] {
            matched[i] = Some(j as u32);
            used[j] = true;
        }
    }
    Ok(matched)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Cluster id in the primary fold-model.
    pub cluster: u32,
    /// Matched cluster id per fold, `None` where unmatched.
    pub matched: Vec<Option<u32>>,
    /// Share per fold where matched.
    pub shares: Vec<Option<f64>>,
    pub share: Interval,
    pub admit_rates: Vec<Option<f64>>,
    pub admit_rate: Option<Interval>,
    pub profile: ClusterProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedCluster {
    pub fold: usize,
    pub cluster: u32,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeSummary {
    pub primary_fold: usize,
    pub clusters: Vec<ClusterSummary>,
    pub unmatched: Vec<UnmatchedCluster>,
    /// The interval basis: variation across fold-models.
    pub interval_basis: String,
}

/// Summarises per-fold characterisations against the primary fold-model.
/// `outcome` (per test row, `None` when unknown) is used only for the
/// reported admit rates.
pub fn summarize_across_folds(
    partitions: &[Partition],
    profiles: &[Vec<ClusterProfile>],
    primary: usize,
    outcome: Option<&[Option<bool>]>,
) -> Result<PhenotypeSummary> {
    if partitions.len() < 2 || partitions.len() != profiles.len() {
        return Err(Error::Parameter("need matching partitions and profiles for at least two fold-models".into()));
    }
    if primary >= partitions.len() {
        return Err(Error::Parameter("primary fold out of range".into()));
    }
    let rows = partitions[primary].labels.len();
    if let Some(o) = outcome {
        if o.len() != rows {
            return Err(Error::LengthMismatch { left: o.len(), right: rows });
        }
    }
    let folds = partitions.len();
    let matchings: Vec<Vec<Option<u32>>> = partitions
        .iter()
        .enumerate()
        .map(|(f, p)| {
            if f == primary {
                Ok((0..p.n_declared as u32).map(Some).collect())
            } else {
                match_clusters(&partitions[primary], p)
            }
        })
        .collect::<Result<_>>()?;

    let admit = |fold: usize, cluster: u32| -> Option<f64> {
        let o = outcome?;
        let (mut pos, mut known) = (0usize, 0usize);
        for (&l, v) in partitions[fold].labels.iter().zip(o) {
            if l == cluster {
                if let Some(v) = v {
                    known += 1;
                    pos += *v as usize;
                }
            }
        }
        (known > 0).then(|| pos as f64 / known as f64)
    };
    let share_of = |fold: usize, cluster: u32| -> Option<f64> {
        profiles[fold].iter().find(|p| p.cluster == cluster).map(|p| p.share)
    };

    let mut clusters = Vec::new();
    for profile in &profiles[primary] {
        let c = profile.cluster as usize;
        let matched: Vec<Option<u32>> = (0..folds)
            .map(|f| matchings[f][c].filter(|&m| share_of(f, m).is_some()))
            .collect();
        let shares: Vec<Option<f64>> = matched
            .iter()
            .enumerate()
            .map(|(f, m)| m.and_then(|m| share_of(f, m)))
            .collect();
        let admit_rates: Vec<Option<f64>> = matched
            .iter()
            .enumerate()
            .map(|(f, m)| m.and_then(|m| admit(f, m)))
            .collect();
        let present: Vec<f64> = shares.iter().flatten().copied().collect();
        let rates: Vec<f64> = admit_rates.iter().flatten().copied().collect();
        clusters.push(ClusterSummary {
            cluster: profile.cluster,
            matched,
            shares,
            share: Interval::from_values(&present).unwrap_or(Interval {
                mean: profile.share,
                lower: profile.share,
                upper: profile.share,
                replicates: 1,
            }),
            admit_rates,
            admit_rate: Interval::from_values(&rates),
            profile: profile.clone(),
        });
    }
    let mut unmatched = Vec::new();
    for (f, fold_profiles) in profiles.iter().enumerate() {
        for p in fold_profiles {
            let used = clusters.iter().any(|c| c.matched[f] == Some(p.cluster));
            if !used {
                unmatched.push(UnmatchedCluster {
                    fold: f,
                    cluster: p.cluster,
                    share: p.share,
                });
            }
        }
    }
    Ok(PhenotypeSummary {
        primary_fold: primary,
        clusters,
        unmatched,
        interval_basis: "across fold-models".into(),
    })
}
