use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

fn by_class(labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        groups
            .get_mut(y)
            .ok_or_else(|| Error::invalid(format!("label {y} out of range for {n_classes} classes")))?
            .push(i);
    }
    Ok(groups)
}

/// One epoch of indices into `labels` with a uniform class distribution.
///
/// Every class contributes each of its samples once, then is topped up to the
/// size of the largest class by drawing its samples with replacement. The
/// sequence is shuffled.
pub fn resample_epoch<R: Rng + ?Sized>(labels: &[usize], n_classes: usize, rng: &mut R) -> Result<Vec<usize>> {
    let groups = by_class(labels, n_classes)?;
    if let Some(c) = groups.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("class {c} has no training samples")));
    }
    let target = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut epoch = Vec::with_capacity(target * n_classes);
    for g in &groups {
        epoch.extend_from_slice(g);
        for _ in g.len()..target {
            epoch.push(g[rng.random_range(0..g.len())]);
        }
    }
    epoch.shuffle(rng);
    Ok(epoch)
}

/// Stratified `(train, val)` index split. Each class sends
/// `round(count · val_fraction)` samples to validation. When some class cannot
/// contribute to both sides the split falls back to a plain random one.
pub fn split_train_val<R: Rng + ?Sized>(
    labels: &[usize],
    n_classes: usize,
    val_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!("val_fraction must be in (0, 1), got {val_fraction}")));
    }
    if labels.len() < 2 {
        return Err(Error::invalid("need at least two samples to split"));
    }
    let groups = by_class(labels, n_classes)?;
    let quota = |n: usize| (n as f64 * val_fraction).round() as usize;
    let stratifiable = groups
        .iter()
        .filter(|g| !g.is_empty())
        .all(|g| quota(g.len()) >= 1 && quota(g.len()) < g.len());
    let (mut train, mut val) = (Vec::new(), Vec::new());
    if stratifiable {
        for g in groups {
            let mut g = g;
            g.shuffle(rng);
            let k = quota(g.len());
            val.extend_from_slice(&g[..k]);
            train.extend_from_slice(&g[k..]);
        }
    } else {
        log::warn!("a class is too small to stratify; using a plain random split");
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(rng);
        let k = quota(all.len()).clamp(1, all.len() - 1);
        val.extend_from_slice(&all[..k]);
        train.extend_from_slice(&all[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}
