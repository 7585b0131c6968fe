//! Truncated SVD, a per-class affine-subspace classifier built on it, and a
//! benchmark comparing its construction cost with random subspace heads.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::seeded_rng;
use crate::error::{shape_err, Error, Result};
use crate::model::{EnsembleConfig, SubspaceEnsemble};
use crate::numeric::{dot, norm, Matrix};

const MAX_SWEEPS: usize = 60;

/// Top-`r` singular triplets: `data ≈ u · diag(singular_values) · vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    /// `a × r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `b × r`, orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        us.matmul_nt(&self.v).expect("factor shapes agree")
    }
}

/// Truncated SVD of an `a × b` matrix by one-sided Jacobi rotations.
pub fn truncated_svd(data: &Matrix, r: usize) -> Result<Svd> {
    let (a, b) = data.shape();
    let max = a.min(b);
    if r == 0 || r > max {
        return Err(Error::Rank { rank: r, max });
    }
    if !data.is_finite() {
        return Err(Error::Degenerate("matrix has non-finite entries".into()));
    }
    if a < b {
        let t = truncated_svd(&data.transpose(), r)?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }

    // Columns of `data` are stored as rows of `cols` so rotations touch
    // contiguous memory.
    let mut cols = data.transpose();
    let mut v = Matrix::identity(b);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..b {
            for q in p + 1..b {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (cols.row(p), cols.row(q));
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut cols, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = (0..b).map(|j| norm(cols.row(j))).collect();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    order.truncate(r);

    let tol = sigma[order[0]].max(1.0) * (a.max(b) as f64) * f64::EPSILON;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut values = Vec::with_capacity(r);
    for &j in &order {
        let s = sigma[j];
        if s > tol {
            u_cols.push(cols.row(j).iter().map(|x| x / s).collect());
            values.push(s);
        } else {
            // Direction unconstrained by the data: any unit vector
            // orthogonal to the columns found so far.
            u_cols.push(orthonormal_complement(&u_cols, a));
            values.push(0.0);
        }
    }
    let u = Matrix::from_rows(&u_cols)?.transpose();
    let v_rows: Vec<&[f64]> = order.iter().map(|&j| v.row(j)).collect();
    let v = Matrix::from_rows(&v_rows)?.transpose();
    Ok(Svd {
        u,
        singular_values: values,
        v,
    })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn orthonormal_complement(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&e, b);
                e.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let n = norm(&e);
        if n > 1e-6 {
            e.iter_mut().for_each(|x| *x /= n);
            return e;
        }
    }
    unreachable!("fewer than {dim} basis vectors always leave a complement")
}

/// Affine subspace `mean + span(basis)` fitted to one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSubspace {
    pub class: usize,
    /// `M × r`, orthonormal columns.
    pub basis: Matrix,
    pub mean: Vec<f64>,
}

impl ClassSubspace {
    /// Centers `points` (one per row) and keeps the top-`r` right singular
    /// vectors. Requires at least two points and `r ≤ min(C − 1, M)`.
    pub fn fit(class: usize, points: &Matrix, r: usize) -> Result<Self> {
        let (c, m) = points.shape();
        if c < 2 {
            return Err(Error::Degenerate(format!(
                "class {class} has {c} support point(s), need at least 2"
            )));
        }
        let max = (c - 1).min(m);
        if r == 0 || r > max {
            return Err(Error::Rank { rank: r, max });
        }
        let mut mean = vec![0.0; m];
        for i in 0..c {
            mean.iter_mut().zip(points.row(i)).for_each(|(s, x)| *s += x);
        }
        mean.iter_mut().for_each(|s| *s /= c as f64);
        let mut centered = points.clone();
        for i in 0..c {
            centered.row_mut(i).iter_mut().zip(&mean).for_each(|(x, mu)| *x -= mu);
        }
        let svd = truncated_svd(&centered, r)?;
        Ok(Self {
            class,
            basis: svd.v,
            mean,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// `‖(I − B·Bᵀ)(q − mean)‖₂`.
    pub fn residual(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.mean.len() {
            return Err(shape_err(format!(
                "query has {} dims, subspace lives in {}",
                query.len(),
                self.mean.len()
            )));
        }
        let d: Vec<f64> = query.iter().zip(&self.mean).map(|(q, m)| q - m).collect();
        let coords = Matrix::row_vector(&d).matmul(&self.basis)?;
        let proj = coords.matmul_nt(&self.basis)?;
        Ok(d.iter()
            .zip(proj.as_slice())
            .map(|(x, p)| (x - p) * (x - p))
            .sum::<f64>()
            .sqrt())
    }
}

/// Fits one subspace per class; class `j` is `support[j]`.
pub fn fit_class_subspaces(support: &[Matrix], r: usize) -> Result<Vec<ClassSubspace>> {
    support
        .par_iter()
        .enumerate()
        .map(|(j, pts)| ClassSubspace::fit(j, pts, r))
        .collect()
}

/// Index of the subspace with the smallest residual (ties go to the lowest
/// index).
pub fn nearest_subspace(subspaces: &[ClassSubspace], query: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in subspaces.iter().enumerate() {
        let r = s.residual(query)?;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((j, r));
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::Config("no class subspaces to compare".into()))
}

pub fn svd_classify(support: &[Matrix], query: &[f64], r: usize) -> Result<usize> {
    nearest_subspace(&fit_class_subspaces(support, r)?, query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Random,
    Tsvd,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Tsvd => "tsvd",
        })
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "tsvd" => Ok(Self::Tsvd),
            other => Err(Error::Config(format!("unknown benchmark method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub a_values: Vec<usize>,
    pub b: usize,
    pub r: usize,
    pub subspaces: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            a_values: vec![50, 500, 5000],
            b: 64,
            // K − 1: the largest rank of centered 5-shot class data.
            r: 4,
            subspaces: 30,
            hidden_dim: 512,
            output_dim: 64,
            repeats: 5,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_values.is_empty() || self.a_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("a values must be non-empty and strictly increasing".into()));
        }
        if self.repeats < 3 {
            return Err(Error::Config(format!("repeats must be >= 3, got {}", self.repeats)));
        }
        if self.b == 0 || self.a_values[0] == 0 {
            return Err(Error::Config("matrix dimensions must be positive".into()));
        }
        let max = self.a_values[0].min(self.b);
        if self.r == 0 || self.r > max {
            return Err(Error::Rank { rank: self.r, max });
        }
        EnsembleConfig {
            input_dim: self.b,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            subspaces: self.subspaces,
            ..EnsembleConfig::default()
        }
        .validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: BenchMethod,
    pub a: usize,
    pub b: usize,
    pub r: usize,
    pub subspaces: usize,
    /// Median wall time in seconds.
    pub wall_time: f64,
    pub repeats: usize,
}

pub fn bench_records_tsv(records: &[BenchRecord]) -> String {
    let mut s = String::from("method\ta\tb\tr\tsubspaces\tmedian_seconds\trepeats\n");
    for r in records {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{:e}\t{}",
            r.method, r.a, r.b, r.r, r.subspaces, r.wall_time, r.repeats
        );
    }
    s
}

pub fn bench_table(records: &[BenchRecord]) -> String {
    let mut s = format!("{:<8} {:>8} {:>5} {:>14} {:>8}\n", "method", "a", "b", "median (ms)", "repeats");
    for r in records {
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>5} {:>14.3} {:>8}",
            r.method,
            r.a,
            r.b,
            1e3 * r.wall_time,
            r.repeats
        );
    }
    s
}

/// Median construction time of random subspace heads and of a t-SVD over
/// an `a × b` matrix, for every `a`. One warm-up run per cell is discarded.
pub fn benchmark_scaling(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let ensemble = EnsembleConfig {
        input_dim: config.b,
        hidden_dim: config.hidden_dim,
        output_dim: config.output_dim,
        subspaces: config.subspaces,
        ..EnsembleConfig::default()
    };
    let mut rng = seeded_rng(config.seed);
    let mut records = Vec::new();
    for &a in &config.a_values {
        // The random heads never look at the data, so `a` only labels the row.
        let random = median_time(config.repeats, |i| {
            let model = SubspaceEnsemble::init(ensemble.clone(), config.seed.wrapping_add(i as u64))?;
            std::hint::black_box(model);
            Ok(())
        })?;
        let matrices: Vec<Matrix> = (0..=config.repeats)
            .map(|_| {
                let data = (0..a * config.b)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                Matrix::from_vec(a, config.b, data)
            })
            .collect::<Result<_>>()?;
        let tsvd = median_time(config.repeats, |i| {
            let pts = &matrices[i];
            let mut mean = vec![0.0; config.b];
            for row in 0..a {
                mean.iter_mut().zip(pts.row(row)).for_each(|(s, x)| *s += x);
            }
            let mut centered = pts.clone();
            for row in 0..a {
                centered
                    .row_mut(row)
                    .iter_mut()
                    .zip(&mean)
                    .for_each(|(x, m)| *x -= m / a as f64);
            }
            std::hint::black_box(truncated_svd(&centered, config.r)?);
            Ok(())
        })?;
        for (method, wall_time) in [(BenchMethod::Random, random), (BenchMethod::Tsvd, tsvd)] {
            records.push(BenchRecord {
                method,
                a,
                b: config.b,
                r: config.r,
                subspaces: config.subspaces,
                wall_time,
                repeats: config.repeats,
            });
        }
    }
    Ok(records)
}

/// Runs `f(0)` as warm-up, then `f(1..=repeats)`, and returns the median
/// of the timed runs.
fn median_time<F: FnMut(usize) -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    f(0)?;
    let mut times = Vec::with_capacity(repeats);
    for i in 1..=repeats {
        let start = Instant::now();
        f(i)?;
        times.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
    }
    Ok(median(&mut times))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(a: usize, b: usize, seed: u64) -> Matrix {
        let mut rng = seeded_rng(seed);
        Matrix::from_vec(a, b, (0..a * b).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn oracle_singular_values(m: &Matrix) -> Vec<f64> {
        let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
        let mut s: Vec<f64> = dm.svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    }

    fn assert_orthonormal_columns(m: &Matrix, tol: f64) {
        let g = m.matmul_tn(m).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(m.cols())) <= tol, "{g:?}");
    }

    #[test]
    fn identity_and_diagonal_spectra() {
        let s = truncated_svd(&Matrix::identity(3), 2).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0]);
        let d = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let s = truncated_svd(&d, 2).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0]);
        assert!((s.v[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_is_recovered_exactly() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 1.0, -1.0];
        let rows: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let s = truncated_svd(&m, 1).unwrap();
        assert!((s.singular_values[0] - norm(&u) * norm(&v)).abs() < 1e-9);
        assert!(s.reconstruct().max_abs_diff(&m) < 1e-9);
        // Wide input and a rank request beyond the numerical rank.
        let s = truncated_svd(&m.transpose(), 3).unwrap();
        assert_eq!(&s.singular_values[1..], &[0.0, 0.0]);
        assert_orthonormal_columns(&s.u, 1e-12);
        assert_orthonormal_columns(&s.v, 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let m = random_matrix(4, 3, 0);
        assert!(matches!(truncated_svd(&m, 0), Err(Error::Rank { rank: 0, max: 3 })));
        assert!(matches!(truncated_svd(&m, 4), Err(Error::Rank { rank: 4, max: 3 })));
    }

    #[test]
    fn eckart_young_against_oracle() {
        for seed in 0..20 {
            let m = random_matrix(8, 6, seed);
            let full = oracle_singular_values(&m);
            for r in 1..6 {
                let s = truncated_svd(&m, r).unwrap();
                for (x, y) in s.singular_values.iter().zip(&full) {
                    assert!((x - y).abs() < 1e-10);
                }
                let residual = m.sub(&s.reconstruct()).unwrap();
                let dm = DMatrix::from_row_slice(8, 6, residual.as_slice());
                assert!((dm.norm() - full[r..].iter().map(|x| x * x).sum::<f64>().sqrt()).abs() < 1e-8);
                // Spectral norm of the residual is σ_{r+1}.
                assert!((oracle_singular_values(&residual)[0] - full[r]).abs() < 1e-8);
                assert_orthonormal_columns(&s.u, 1e-10);
                assert_orthonormal_columns(&s.v, 1e-10);
            }
        }
    }

    #[test]
    fn two_class_projector_example() {
        // Class 0 lies on the line y = 1 (direction e1), class 1 on the line
        // x = 3 (direction e2).
        let a = Matrix::from_rows(&[[0.0, 1.0], [2.0, 1.0], [4.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0, -1.0], [3.0, 1.0]]).unwrap();
        let subspaces = fit_class_subspaces(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(subspaces[0].mean, vec![2.0, 1.0]);
        assert_eq!(subspaces[1].mean, vec![3.0, 0.0]);
        // Query (1, 2): distance 1 to y = 1, distance 2 to x = 3.
        let q = [1.0, 2.0];
        assert!((subspaces[0].residual(&q).unwrap() - 1.0).abs() < 1e-12);
        assert!((subspaces[1].residual(&q).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(svd_classify(&[a.clone(), b.clone()], &q, 1).unwrap(), 0);
        // Query (2.5, 5): 4 from y = 1 but only 0.5 from x = 3.
        assert_eq!(svd_classify(&[a.clone(), b.clone()], &[2.5, 5.0], 1).unwrap(), 1);
        // Equidistant query (2, 2) ties and goes to class 0.
        assert_eq!(svd_classify(&[a, b], &[2.0, 2.0], 1).unwrap(), 0);
    }

    #[test]
    fn full_rank_subspace_has_zero_residual_in_span() {
        let pts = random_matrix(4, 6, 3);
        let s = ClassSubspace::fit(0, &pts, 3).unwrap();
        assert_orthonormal_columns(&s.basis, 1e-9);
        let q: Vec<f64> = (0..6).map(|k| 0.3 * pts[(0, k)] + 0.7 * pts[(2, k)]).collect();
        assert!(s.residual(&q).unwrap() < 1e-10);
    }

    #[test]
    fn class_preconditions() {
        let one = random_matrix(1, 4, 0);
        assert!(matches!(ClassSubspace::fit(0, &one, 1), Err(Error::Degenerate(_))));
        let two = random_matrix(2, 4, 0);
        assert!(matches!(ClassSubspace::fit(0, &two, 2), Err(Error::Rank { rank: 2, max: 1 })));
    }

    #[test]
    fn nearly_collinear_classes_still_get_a_label() {
        let mut rng = seeded_rng(8);
        let dir: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let support: Vec<Matrix> = (0..3)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..5)
                    .map(|_| {
                        let t: f64 = rng.random_range(-1.0..1.0);
                        dir.iter().map(|d| t * d + 1e-9 * rng.random_range(-1.0..1.0)).collect()
                    })
                    .collect();
                Matrix::from_rows(&rows).unwrap()
            })
            .collect();
        let label = svd_classify(&support, &dir, 1).unwrap();
        assert!(label < 3);
    }

    #[test]
    fn median_and_records() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let cfg = BenchConfig {
            a_values: vec![10, 20],
            b: 8,
            r: 2,
            subspaces: 3,
            hidden_dim: 8,
            output_dim: 4,
            repeats: 3,
            seed: 1,
        };
        let recs = benchmark_scaling(&cfg).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.wall_time > 0.0 && r.repeats == 3));
        let tsv = bench_records_tsv(&recs);
        assert_eq!(tsv.lines().count(), 5);
        assert!(tsv.lines().nth(2).unwrap().starts_with("tsvd\t10\t8\t2\t3\t"));
        assert!(bench_table(&recs).contains("random"));
        for bad in [
            BenchConfig { repeats: 2, ..cfg.clone() },
            BenchConfig { a_values: vec![20, 10], ..cfg.clone() },
            BenchConfig { r: 9, ..cfg.clone() },
        ] {
            assert!(benchmark_scaling(&bad).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn singular_values_match_oracle(a in 1usize..7, b in 1usize..7, seed in any::<u64>()) {
            let m = random_matrix(a, b, seed);
            let r = a.min(b);
            let s = truncated_svd(&m, r).unwrap();
            let full = oracle_singular_values(&m);
            for (x, y) in s.singular_values.iter().zip(&full) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.reconstruct().max_abs_diff(&m) < 1e-10);
        }

        #[test]
        fn residual_is_rotation_invariant(theta in -3.0f64..3.0, seed in any::<u64>()) {
            let pts = random_matrix(6, 5, seed);
            let s = ClassSubspace::fit(0, &pts, 2).unwrap();
            let (c, sn) = (theta.cos(), theta.sin());
            let rot = Matrix::from_rows(&[[c, -sn], [sn, c]]).unwrap();
            let rotated = ClassSubspace { basis: s.basis.matmul(&rot).unwrap(), ..s.clone() };
            let q: Vec<f64> = random_matrix(1, 5, seed ^ 1).into_vec();
            prop_assert!((s.residual(&q).unwrap() - rotated.residual(&q).unwrap()).abs() < 1e-12);
        }
    }
}
