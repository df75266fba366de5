use std::collections::BTreeMap;

use super::{CorpusError, CorpusManifest};

/// Cohen's kappa, `(p_o − p_e) / (1 − p_e)`. Returns 1.0 when chance agreement is total
/// (both coders constant on the same label).
pub fn cohen_kappa<T: Ord>(labels_a: &[T], labels_b: &[T]) -> Result<f64, CorpusError> {
    if labels_a.len() != labels_b.len() || labels_a.is_empty() {
        return Err(CorpusError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    let n = labels_a.len() as f64;
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (a, b) in labels_a.iter().zip(labels_b) {
        *marg_a.entry(a).or_default() += 1;
        *marg_b.entry(b).or_default() += 1;
        agree += usize::from(a == b);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg_a
        .iter()
        .map(|(label, &ca)| ca as f64 * marg_b.get(label).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(if agree == labels_a.len() { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Kappa over the first ("major") label of records that carry both annotations.
pub fn major_label_kappa(manifest: &CorpusManifest) -> Option<Result<f64, CorpusError>> {
    let (a, b): (Vec<&str>, Vec<&str>) = manifest
        .records
        .iter()
        .filter_map(|r| {
            let a = r.ann_a.as_ref()?.first()?;
            let b = r.ann_b.as_ref()?.first()?;
            Some((a.as_str(), b.as_str()))
        })
        .unzip();
    (!a.is_empty()).then(|| cohen_kappa(&a, &b))
}
