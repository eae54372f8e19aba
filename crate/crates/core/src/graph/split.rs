use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidArgument(format!("split fractions must be positive: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions must sum to 1: {all:?}")));
        }
        Ok(())
    }
}

/// Disjoint index sets covering the whole dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// False when some class was too small to stratify.
    pub stratified: bool,
}

const MIN_CLASS_FOR_STRATA: usize = 3;

/// Label-stratified shuffle split. Global split sizes are `round(f * N)`
/// (test takes the remainder); per-class sizes are allotted by largest
/// remainder so each class lands within one graph of its proportional share.
pub fn split_dataset(labels: &[usize], fractions: SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class.retain(|c| !c.is_empty());
    let stratified = by_class.iter().all(|c| c.len() >= MIN_CLASS_FOR_STRATA);
    if !stratified {
        log::warn!("a class has fewer than {MIN_CLASS_FOR_STRATA} graphs; splitting without stratification");
        by_class = vec![(0..n).collect()];
    }
    for c in &mut by_class {
        c.shuffle(&mut rng);
    }

    let n_train = (fractions.train * n as f64).round() as usize;
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    // Cumulative cut points per class: [0, cut1) train, [cut1, cut2) val.
    let cut1 = allot(&sizes, fractions.train, n_train, &vec![0; sizes.len()]);
    let cut2 = allot(&sizes, fractions.train + fractions.val, n_train + n_val, &cut1);

    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new(), stratified };
    for (c, members) in by_class.iter().enumerate() {
        split.train.extend_from_slice(&members[..cut1[c]]);
        split.val.extend_from_slice(&members[cut1[c]..cut2[c]]);
        split.test.extend_from_slice(&members[cut2[c]..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Per-class counts near `fraction * size` summing to `total`, each at least
/// `floor[c]` and at most `size[c]`.
fn allot(sizes: &[usize], fraction: f64, total: usize, floor: &[usize]) -> Vec<usize> {
    let ideal: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut counts: Vec<usize> =
        ideal.iter().zip(floor).zip(sizes).map(|((x, &lo), &s)| (x.floor() as usize).clamp(lo, s)).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - counts[a] as f64;
        let rb = ideal[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    while assigned < total {
        let before = assigned;
        for &c in &order {
            if assigned == total {
                break;
            }
            if counts[c] < sizes[c] {
                counts[c] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    counts
}
