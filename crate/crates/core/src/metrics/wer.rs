use super::MetricsError;

/// Minimum number of substitutions, insertions and deletions turning `hyp`
/// into `reference`.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut curr = vec![0; reference.len() + 1];
    for (i, h) in hyp.iter().enumerate() {
        curr[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[reference.len()]
}

/// Word error rate of one segment, as a fraction of the reference length.
pub fn wer(hyp: &[String], reference: &[String]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::Argument("WER needs a nonempty reference".into()));
    }
    Ok(edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Corpus WER: total edits over total reference words.
pub fn corpus_wer(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64, MetricsError> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::Argument(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let words: usize = refs.iter().map(Vec::len).sum();
    if words == 0 {
        return Err(MetricsError::Argument("WER needs at least one reference word".into()));
    }
    let edits: usize = hyps.iter().zip(refs).map(|(h, r)| edit_distance(h, r)).sum();
    Ok(edits as f64 / words as f64)
}
