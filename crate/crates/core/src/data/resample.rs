/// For each target timestamp, the index of the nearest source timestamp.
///
/// Timestamps are integer microseconds and `source` must be sorted. Ties go to
/// the earlier source frame. A target whose nearest source frame lies more than
/// `max_offset` away yields `None`, which callers treat as a data gap.
pub fn nearest_timestamp_indices(source: &[i64], targets: &[i64], max_offset: i64) -> Vec<Option<usize>> {
    targets
        .iter()
        .map(|&t| {
            let idx = source.partition_point(|&s| s < t);
            let before = idx.checked_sub(1);
            let after = (idx < source.len()).then_some(idx);
            let best = match (before, after) {
                (Some(b), Some(a)) => {
                    if t - source[b] <= source[a] - t {
                        b
                    } else {
                        a
                    }
                }
                (Some(b), None) => b,
                (None, Some(a)) => a,
                (None, None) => return None,
            };
            ((source[best] - t).abs() <= max_offset).then_some(best)
        })
        .collect()
}

/// Target grid from `start` spanning the source, spaced by `step` microseconds.
pub(crate) fn target_grid(start: i64, end: i64, step: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut t = start;
    while t <= end {
        out.push(t);
        t += step;
    }
    out
}
