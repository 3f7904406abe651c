//! Sandwich covariance estimators.
//!
//! One-way clustering scales the meat by `G/(G-1) * (n-1)/(n-k)`. Two-way clustering combines
//! chain, month and chain∩month estimates by inclusion–exclusion and floors negative
//! eigenvalues at zero; a dimension with a single cluster is dropped, leaving one-way
//! clustering on the other.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::ols::{dense_ids, Design};
use super::spec::Clustering;
use crate::error::{Error, Result};

pub(crate) struct Covariance {
    pub matrix: DMatrix<f64>,
    pub clusters: Vec<(String, usize)>,
}

fn meat(x: &DMatrix<f64>, resid: &[f64], ids: &[u32], n_clusters: usize) -> DMatrix<f64> {
    let k = x.ncols();
    let mut sums = DMatrix::<f64>::zeros(n_clusters, k);
    for (i, &g) in ids.iter().enumerate() {
        for j in 0..k {
            sums[(g as usize, j)] += x[(i, j)] * resid[i];
        }
    }
    sums.transpose() * sums
}

fn count(ids: &[u32]) -> usize {
    ids.iter().map(|&g| g as usize + 1).max().unwrap_or(0)
}

fn one_way(
    x: &DMatrix<f64>,
    resid: &[f64],
    bread: &DMatrix<f64>,
    ids: &[u32],
    dof_params: usize,
) -> (DMatrix<f64>, usize) {
    let n = x.nrows() as f64;
    let g = count(ids);
    let gf = g as f64;
    let c = gf / (gf - 1.0) * (n - 1.0) / (n - dof_params as f64);
    (bread * meat(x, resid, ids, g) * bread * c, g)
}

fn hc1(x: &DMatrix<f64>, resid: &[f64], bread: &DMatrix<f64>, dof_params: usize) -> DMatrix<f64> {
    let n = x.nrows();
    let k = x.ncols();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let e2 = resid[i] * resid[i];
        for a in 0..k {
            let xa = x[(i, a)] * e2;
            for b in 0..k {
                m[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    let c = n as f64 / (n - dof_params) as f64;
    bread * m * bread * c
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for a in 0..k {
        for b in (a + 1)..k {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}

fn floor_eigenvalues(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return m;
    }
    let mut vals = eig.eigenvalues.clone();
    for l in vals.iter_mut() {
        *l = l.max(0.0);
    }
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

pub(crate) fn cluster_covariance(
    x: &DMatrix<f64>,
    resid: &[f64],
    bread: &DMatrix<f64>,
    design: &Design,
    clustering: Clustering,
    dof_params: usize,
) -> Result<Covariance> {
    let need_two = |dimension: &'static str, ids: &[u32]| {
        let g = count(ids);
        if g < 2 {
            Err(Error::InsufficientClusters { dimension, found: g })
        } else {
            Ok(())
        }
    };
    let (mut matrix, clusters) = match clustering {
        Clustering::None => (hc1(x, resid, bread, dof_params), Vec::new()),
        Clustering::ByChain => {
            need_two("chain", &design.chain_ids)?;
            let (v, g) = one_way(x, resid, bread, &design.chain_ids, dof_params);
            (v, alloc::vec![("chain".into(), g)])
        }
        Clustering::ByMonth => {
            need_two("month", &design.month_ids)?;
            let (v, g) = one_way(x, resid, bread, &design.month_ids, dof_params);
            (v, alloc::vec![("month".into(), g)])
        }
        Clustering::ByChainMonthCell => {
            let cells = cell_ids(design);
            need_two("chain-x-month", &cells)?;
            let (v, g) = one_way(x, resid, bread, &cells, dof_params);
            (v, alloc::vec![("chain-x-month".into(), g)])
        }
        Clustering::ByChainMonth => {
            let gc = count(&design.chain_ids);
            let gm = count(&design.month_ids);
            match (gc >= 2, gm >= 2) {
                (false, false) => return Err(Error::InsufficientClusters { dimension: "chain-month", found: gc.max(gm) }),
                (true, false) => {
                    let (v, g) = one_way(x, resid, bread, &design.chain_ids, dof_params);
                    (v, alloc::vec![("chain".into(), g)])
                }
                (false, true) => {
                    let (v, g) = one_way(x, resid, bread, &design.month_ids, dof_params);
                    (v, alloc::vec![("month".into(), g)])
                }
                (true, true) => {
                    let cells = cell_ids(design);
                    let (vc, gc) = one_way(x, resid, bread, &design.chain_ids, dof_params);
                    let (vm, gm) = one_way(x, resid, bread, &design.month_ids, dof_params);
                    let (vi, gi) = one_way(x, resid, bread, &cells, dof_params);
                    let mut v = vc + vm - vi;
                    symmetrize(&mut v);
                    (
                        floor_eigenvalues(v),
                        alloc::vec![("chain".into(), gc), ("month".into(), gm), ("chain-x-month".into(), gi)],
                    )
                }
            }
        }
    };
    symmetrize(&mut matrix);
    Ok(Covariance { matrix, clusters })
}

fn cell_ids(design: &Design) -> Vec<u32> {
    let pairs: Vec<(u32, u32)> = design
        .chain_ids
        .iter()
        .copied()
        .zip(design.month_ids.iter().copied())
        .collect();
    dense_ids(&pairs)
}
