//! Supervised clustering scores: homogeneity, completeness, V-measure,
//! adjusted Rand index and adjusted mutual information (natural logs).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::Clustering;

/// Counts `n_ij` of true class `i` against predicted cluster `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

impl ContingencyTable {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Argument(format!(
                "clusterings cover {} and {} nodes",
                truth.len(),
                pred.len()
            )));
        }
        let truth = Clustering::from_labels(truth);
        let pred = Clustering::from_labels(pred);
        let (r, c) = (truth.num_clusters(), pred.num_clusters());
        let mut counts = vec![vec![0usize; c]; r];
        for (&t, &p) in truth.assignment.iter().zip(&pred.assignment) {
            counts[t][p] += 1;
        }
        let row_sums = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..c).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: truth.assignment.len(),
        })
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(|(_, &v)| v > 0).map(move |(j, &v)| (i, j, v)))
    }

    /// True when both partitions are the same up to relabelling.
    pub fn is_identity(&self) -> bool {
        self.counts.len() == self.col_sums.len() && self.cells().count() == self.counts.len()
    }
}

fn entropy(sums: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -sums
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.total as f64;
    table
        .cells()
        .map(|(i, j, v)| {
            let v = v as f64;
            v / n * (n * v / (table.row_sums[i] as f64 * table.col_sums[j] as f64)).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneityCompleteness {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

pub fn homogeneity_completeness_v(truth: &Clustering, pred: &Clustering) -> Result<HomogeneityCompleteness> {
    hcv_labels(&truth.assignment, &pred.assignment)
}

fn hcv_labels(truth: &[usize], pred: &[usize]) -> Result<HomogeneityCompleteness> {
    let table = ContingencyTable::new(truth, pred)?;
    let h_true = entropy(&table.row_sums, table.total);
    let h_pred = entropy(&table.col_sums, table.total);
    let mi = mutual_information(&table);
    // H(C|K) = H(C) - I(C;K), H(K|C) = H(K) - I(C;K)
    let homogeneity = if h_true <= 0.0 { 1.0 } else { (mi / h_true).clamp(0.0, 1.0) };
    let completeness = if h_pred <= 0.0 { 1.0 } else { (mi / h_pred).clamp(0.0, 1.0) };
    let v_measure = if homogeneity + completeness <= 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(HomogeneityCompleteness {
        homogeneity,
        completeness,
        v_measure,
    })
}

fn comb2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert–Arabie).
pub fn ari(truth: &Clustering, pred: &Clustering) -> Result<f64> {
    ari_labels(&truth.assignment, &pred.assignment)
}

fn ari_labels(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.total < 2 {
        return Ok(1.0);
    }
    let index: f64 = table.cells().map(|(_, _, v)| comb2(v)).sum();
    let sum_a: f64 = table.row_sums.iter().map(|&a| comb2(a)).sum();
    let sum_b: f64 = table.col_sums.iter().map(|&b| comb2(b)).sum();
    let expected = sum_a * sum_b / comb2(table.total);
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// `ln(k!)` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Expected mutual information of two random partitions with the table's
/// marginals under the hypergeometric model.
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.total;
    if n == 0 {
        return 0.0;
    }
    let lf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &table.row_sums {
        for &b in &table.col_sums {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for k in lo..=hi {
                let kf = k as f64;
                let term = kf / nf * (nf * kf / (a as f64 * b as f64)).ln();
                let log_p = fixed - lf[k] - lf[a - k] - lf[b - k] - lf[n + k - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information, arithmetic-mean normalization.
pub fn ami(truth: &Clustering, pred: &Clustering) -> Result<f64> {
    ami_labels(&truth.assignment, &pred.assignment)
}

fn ami_labels(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.is_identity() {
        return Ok(1.0);
    }
    let mi = mutual_information(&table);
    let emi = expected_mutual_information(&table);
    let h_true = entropy(&table.row_sums, table.total);
    let h_pred = entropy(&table.col_sums, table.total);
    let denom = 0.5 * (h_true + h_pred) - emi;
    if denom <= f64::EPSILON {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// All five scores for one clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub ari: f64,
    pub ami: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 5] = ["ari", "ami", "homogeneity", "completeness", "v_measure"];

    pub fn values(&self) -> [f64; 5] {
        [self.ari, self.ami, self.homogeneity, self.completeness, self.v_measure]
    }

    fn mean(sets: &[MetricSet]) -> MetricSet {
        let n = sets.len() as f64;
        let avg = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        MetricSet {
            ari: avg(|m| m.ari),
            ami: avg(|m| m.ami),
            homogeneity: avg(|m| m.homogeneity),
            completeness: avg(|m| m.completeness),
            v_measure: avg(|m| m.v_measure),
        }
    }
}

pub fn evaluate(truth: &Clustering, pred: &Clustering) -> Result<MetricSet> {
    let hcv = homogeneity_completeness_v(truth, pred)?;
    Ok(MetricSet {
        ari: ari(truth, pred)?,
        ami: ami(truth, pred)?,
        homogeneity: hcv.homogeneity,
        completeness: hcv.completeness,
        v_measure: hcv.v_measure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub per_frame: Vec<MetricSet>,
    /// Unweighted mean over frames.
    pub mean: MetricSet,
    /// Scores of all frames concatenated with frame-offset cluster ids.
    pub pooled: MetricSet,
}

pub fn evaluate_sequence(truth: &[Clustering], pred: &[Clustering]) -> Result<SequenceReport> {
    if truth.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty sequence".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::Argument(format!(
            "{} ground-truth frames but {} predicted frames",
            truth.len(),
            pred.len()
        )));
    }
    let mut per_frame = Vec::with_capacity(truth.len());
    let (mut pooled_t, mut pooled_p) = (Vec::new(), Vec::new());
    let (mut off_t, mut off_p) = (0, 0);
    for (k, (t, p)) in truth.iter().zip(pred).enumerate() {
        if t.len() != p.len() {
            return Err(Error::Argument(format!(
                "frame {k}: {} ground-truth nodes but {} predicted",
                t.len(),
                p.len()
            )));
        }
        per_frame.push(evaluate(t, p)?);
        pooled_t.extend(t.assignment.iter().map(|c| c + off_t));
        pooled_p.extend(p.assignment.iter().map(|c| c + off_p));
        off_t += t.num_clusters();
        off_p += p.num_clusters();
    }
    let pooled = evaluate(&Clustering { assignment: pooled_t }, &Clustering { assignment: pooled_p })?;
    Ok(SequenceReport {
        mean: MetricSet::mean(&per_frame),
        per_frame,
        pooled,
    })
}

impl SequenceReport {
    /// One `name=value` line per metric and aggregate.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        writeln!(out, "frames={}", self.per_frame.len()).unwrap();
        for (prefix, set) in [("mean", &self.mean), ("pooled", &self.pooled)] {
            for (name, v) in MetricSet::NAMES.iter().zip(set.values()) {
                writeln!(out, "{prefix}.{name}={v}").unwrap();
            }
        }
        out
    }

    /// Aligned table, scores in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<10}{:>9}{:>9}{:>9}{:>9}{:>9}", "", "ARI", "AMI", "H", "C", "V-m").unwrap();
        for (label, set) in [("mean", &self.mean), ("pooled", &self.pooled)] {
            write!(out, "{label:<10}").unwrap();
            for v in set.values() {
                write!(out, "{:>9.2}", 100.0 * v).unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "({} frames)", self.per_frame.len()).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(labels: &[usize]) -> Clustering {
        Clustering { assignment: labels.to_vec() }
    }

    #[test]
    fn hcv_conventions() {
        let r = homogeneity_completeness_v(&c(&[0, 0, 1, 1]), &c(&[1, 1, 0, 0])).unwrap();
        assert_eq!((r.homogeneity, r.completeness, r.v_measure), (1.0, 1.0, 1.0));
        let r = homogeneity_completeness_v(&c(&[0, 0, 1, 1]), &c(&[0, 0, 0, 0])).unwrap();
        assert_eq!((r.homogeneity, r.completeness, r.v_measure), (0.0, 1.0, 0.0));
        let r = homogeneity_completeness_v(&c(&[0, 0, 1, 1]), &c(&[0, 1, 2, 3])).unwrap();
        assert_eq!(r.homogeneity, 1.0);
        assert!((r.completeness - 0.5).abs() < 1e-12 && (r.v_measure - 2.0 / 3.0).abs() < 1e-12);
        let r = homogeneity_completeness_v(&c(&[0, 0, 0, 0]), &c(&[0, 1, 2, 3])).unwrap();
        assert_eq!((r.homogeneity, r.completeness, r.v_measure), (1.0, 0.0, 0.0));
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&c(&[0, 0, 1, 2]), &c(&[5, 5, 3, 4])).unwrap(), 1.0);
        assert!((ari(&c(&[0, 0, 1, 1]), &c(&[0, 1, 0, 1])).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ami_identical_is_one() {
        assert_eq!(ami(&c(&[0, 0, 1, 1, 2]), &c(&[2, 2, 0, 0, 1])).unwrap(), 1.0);
    }

    #[test]
    fn node_set_mismatch() {
        assert!(matches!(ari(&c(&[0]), &c(&[0, 1])), Err(Error::Argument(_))));
        assert!(ami(&c(&[0]), &c(&[0, 1])).is_err());
        assert!(homogeneity_completeness_v(&c(&[0]), &c(&[0, 1])).is_err());
    }

    #[test]
    fn sequence_aggregates() {
        let perfect = c(&[0, 0, 1, 1]);
        let merged = c(&[0, 0, 0, 0]);
        let r = evaluate_sequence(&[perfect.clone(), perfect.clone()], &[perfect.clone(), merged]).unwrap();
        assert!((r.mean.v_measure - 0.5).abs() < 1e-12);
        let r = evaluate_sequence(&[perfect.clone(), perfect.clone()], &[perfect.clone(), perfect]).unwrap();
        for v in r.mean.values().into_iter().chain(r.pooled.values()) {
            assert_eq!(v, 1.0);
        }
        assert!(r.to_key_values().contains("mean.v_measure=1\n"));
        assert!(evaluate_sequence(&[], &[]).is_err());
    }

    #[test]
    fn permutation_average_matches_emi() {
        // E[MI] is the mean MI over all relabelings of one side.
        let truth = [0, 0, 1, 1, 1, 2];
        let pred = [0, 1, 1, 0, 2, 2];
        let table = ContingencyTable::new(&truth, &pred).unwrap();
        let mut perm: Vec<usize> = (0..truth.len()).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let shuffled: Vec<usize> = p.iter().map(|&k| pred[k]).collect();
            total += mutual_information(&ContingencyTable::new(&truth, &shuffled).unwrap());
            count += 1;
        });
        assert!((total / count as f64 - expected_mutual_information(&table)).abs() < 1e-12);
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    proptest! {
        #[test]
        fn invariants(pairs in prop::collection::vec((0usize..4, 0usize..5), 1..30), shift in 1usize..7) {
            let t: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let m = evaluate(&c(&t), &c(&p)).unwrap();
            // relabelling invariance
            let relabel: Vec<usize> = p.iter().map(|&x| (x + shift) % 5 + 10 * (x % 2)).collect();
            let m2 = evaluate(&c(&t), &Clustering::from_labels(&relabel)).unwrap();
            for (a, b) in m.values().iter().zip(m2.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            for v in [m.homogeneity, m.completeness, m.v_measure] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.ari <= 1.0 + 1e-12 && m.ami <= 1.0 + 1e-12);
            if m.homogeneity + m.completeness > 0.0 {
                let hm = 2.0 * m.homogeneity * m.completeness / (m.homogeneity + m.completeness);
                prop_assert!((m.v_measure - hm).abs() < 1e-12);
            }
            let swapped = homogeneity_completeness_v(&c(&p), &c(&t)).unwrap();
            prop_assert!((m.homogeneity - swapped.completeness).abs() < 1e-12);
        }
    }
}
