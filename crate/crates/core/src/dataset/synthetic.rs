//! Hypercube-vertex classification benchmark generator.
//!
//! Class centroids sit on distinct vertices of `{±separation}^informative`.
//! Each sample is its class centroid plus Gaussian noise pushed through a
//! per-class random linear map. Redundant features are random linear
//! combinations of the informative ones and the rest are standard normal.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from;

use super::table::{Cell, Column, ColumnKind, Table};

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub sample_count: usize,
    pub feature_count: usize,
    pub informative_count: usize,
    pub class_count: usize,
    /// Half side length of the hypercube holding the class centroids.
    pub class_separation: f64,
    pub redundant_count: usize,
    /// Standard deviation of the within-class noise before the linear map.
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(
        sample_count: usize,
        feature_count: usize,
        informative_count: usize,
        class_count: usize,
        class_separation: f64,
        seed: u64,
    ) -> Self {
        Self {
            sample_count,
            feature_count,
            informative_count,
            class_count,
            class_separation,
            redundant_count: 0,
            noise_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.informative_count == 0 || self.class_count == 0 || self.sample_count == 0 {
            return Err(Error::Infeasible(
                "samples, informative features and classes must be positive".into(),
            ));
        }
        if self.informative_count + self.redundant_count > self.feature_count {
            return Err(Error::Infeasible(format!(
                "{} informative + {} redundant features exceed {} features",
                self.informative_count, self.redundant_count, self.feature_count
            )));
        }
        if self.informative_count < 64 && self.class_count as u128 > 1u128 << self.informative_count {
            return Err(Error::Infeasible(format!(
                "{} classes do not fit on the {} vertices of a {}-cube",
                self.class_count,
                1u128 << self.informative_count,
                self.informative_count
            )));
        }
        if !(self.class_separation.is_finite() && self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Infeasible("separation and noise must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Numeric feature columns `f0..` plus an excluded `label` column.
    pub table: Table,
    pub labels: Vec<usize>,
    /// Noise-free class centres in the emitted feature order.
    pub centroids: Matrix,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = rng_from(spec.seed);
    let inf = spec.informative_count;
    let red = spec.redundant_count;
    let nf = spec.feature_count;

    let mut seen = BTreeSet::new();
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(spec.class_count);
    while vertices.len() < spec.class_count {
        let bits: Vec<bool> = (0..inf).map(|_| rng.random::<bool>()).collect();
        if seen.insert(bits.clone()) {
            vertices.push(
                bits.iter()
                    .map(|&b| if b { spec.class_separation } else { -spec.class_separation })
                    .collect(),
            );
        }
    }
    let maps: Vec<Vec<f64>> = (0..spec.class_count)
        .map(|_| (0..inf * inf).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let redundant_map: Vec<f64> = (0..inf * red).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut labels: Vec<usize> = (0..spec.sample_count).map(|i| i % spec.class_count).collect();
    labels.shuffle(&mut rng);

    let mut raw = Matrix::zeros(spec.sample_count, nf);
    let mut z = vec![0.0; inf];
    for (i, &class) in labels.iter().enumerate() {
        for zi in z.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *zi = n * spec.noise_scale;
        }
        let row = raw.row_mut(i);
        let a = &maps[class];
        for (j, &c) in vertices[class].iter().enumerate() {
            let mut acc = c;
            for (k, &zk) in z.iter().enumerate() {
                acc += zk * a[k * inf + j];
            }
            row[j] = acc;
        }
        for r in 0..red {
            let mut acc = 0.0;
            for k in 0..inf {
                acc += row[k] * redundant_map[k * red + r];
            }
            row[inf + r] = acc;
        }
        for v in row.iter_mut().skip(inf + red) {
            *v = StandardNormal.sample(&mut rng);
        }
    }

    let mut permutation: Vec<usize> = (0..nf).collect();
    permutation.shuffle(&mut rng);

    let mut columns: Vec<Column> = (0..nf)
        .map(|j| Column::new(format!("f{j}"), ColumnKind::Numeric))
        .collect();
    columns.push(Column::new(LABEL_COLUMN, ColumnKind::Numeric));
    let mut table = Table::new(columns, vec![LABEL_COLUMN.into()], vec![])?;
    for (i, &label) in labels.iter().enumerate() {
        let src = raw.row(i);
        let mut cells: Vec<Cell> = permutation.iter().map(|&p| Cell::Number(src[p])).collect();
        cells.push(Cell::Number(label as f64));
        table.push_row(cells)?;
    }

    let mut centroids = Matrix::zeros(spec.class_count, nf);
    for (c, v) in vertices.iter().enumerate() {
        let mut full = vec![0.0; nf];
        full[..inf].copy_from_slice(v);
        for r in 0..red {
            full[inf + r] = (0..inf).map(|k| v[k] * redundant_map[k * red + r]).sum();
        }
        for (dst, &p) in centroids.row_mut(c).iter_mut().zip(&permutation) {
            *dst = full[p];
        }
    }

    Ok(SyntheticData {
        table,
        labels,
        centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::squared_distance;

    #[test]
    fn infeasible_class_count() {
        let spec = SyntheticSpec::new(100, 4, 2, 5, 1.0, 0);
        assert!(matches!(generate_synthetic(&spec), Err(Error::Infeasible(_))));
        let mut spec = SyntheticSpec::new(100, 4, 3, 2, 1.0, 0);
        spec.redundant_count = 2;
        assert!(matches!(generate_synthetic(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn shape_and_balance() {
        let spec = SyntheticSpec::new(1003, 12, 5, 7, 0.75, 3);
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.table.row_count(), 1003);
        assert_eq!(d.table.feature_columns().count(), 12);
        let mut counts = [0usize; 7];
        for &l in &d.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        let label_col = d.table.numeric_column(LABEL_COLUMN).unwrap();
        assert!(label_col.iter().zip(&d.labels).all(|(a, &b)| *a == Some(b as f64)));
    }

    #[test]
    fn deterministic_under_seed() {
        let mut spec = SyntheticSpec::new(200, 10, 4, 3, 1.0, 11);
        spec.redundant_count = 2;
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.table, b.table);
        spec.seed = 12;
        assert_ne!(a.table, generate_synthetic(&spec).unwrap().table);
    }

    #[test]
    fn redundant_features_are_combinations() {
        let mut spec = SyntheticSpec::new(50, 6, 3, 2, 1.0, 5);
        spec.redundant_count = 3;
        let d = generate_synthetic(&spec).unwrap();
        let features = crate::matrix::Matrix::from_rows(
            &d.table
                .rows()
                .iter()
                .map(|r| r[..6].iter().map(|c| c.as_number().unwrap()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        // rank of a 50x6 matrix built from 3 informative directions is 3
        let mut gram = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                let v: f64 = (0..50).map(|r| features.get(r, i) * features.get(r, j)).sum();
                gram.set(i, j, v);
            }
        }
        let eig = crate::linalg::symmetric_eigen(&gram).unwrap();
        assert!(eig.values[2] > 1e-6 * eig.values[0]);
        assert!(eig.values[3].abs() < 1e-8 * eig.values[0]);
    }

    #[test]
    fn nearest_centroid_recovers_labels_when_well_separated() {
        let mut spec = SyntheticSpec::new(2000, 20, 8, 10, 10.0, 21);
        spec.redundant_count = 4;
        spec.noise_scale = 0.05;
        let d = generate_synthetic(&spec).unwrap();
        let mut correct = 0;
        for (r, &label) in d.labels.iter().enumerate() {
            let x: Vec<f64> = d.table.row(r)[..20].iter().map(|c| c.as_number().unwrap()).collect();
            let best = (0..10)
                .min_by(|&a, &b| {
                    squared_distance(&x, d.centroids.row(a)).total_cmp(&squared_distance(&x, d.centroids.row(b)))
                })
                .unwrap();
            correct += usize::from(best == label);
        }
        assert!(correct as f64 >= 0.99 * 2000.0, "{correct}");
    }
}
