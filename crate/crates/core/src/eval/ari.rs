use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
///
/// When both labelings put every item in one group (or every item alone) the
/// index is undefined; that agreement is reported as 1.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("labelings have {} and {} items", a.len(), b.len())));
    }
    let n = a.len() as u64;
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
        *table.entry((x, y)).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// ARI over `(cluster, segment)` labels, on the cells observed in both labelings.
pub fn joint_ari(pred: &[Option<(usize, usize)>], truth: &[Option<(usize, usize)>]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "partitions cover {} and {} cells",
            pred.len(),
            truth.len()
        )));
    }
    let (p, t): (Vec<_>, Vec<_>) = pred
        .iter()
        .zip(truth)
        .filter_map(|(p, t)| Some(((*p)?, (*t)?)))
        .unzip();
    adjusted_rand_index(&p, &t)
}
