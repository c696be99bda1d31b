use bregman_kd::PointSet;

/// Coordinates below this are lifted to it by `--clamp-simplex`.
pub const CLAMP_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClampSummary {
    pub coords: usize,
    pub rows: usize,
}

/// Lifts every coordinate below [`CLAMP_FLOOR`] to the floor, then rescales
/// each row to sum to one (which also absorbs rounding in single-precision
/// inputs). The summary counts the lifted coordinates.
pub fn clamp_simplex(points: &PointSet) -> (PointSet, ClampSummary) {
    let dim = points.dim();
    let mut data = points.as_slice().to_vec();
    let mut summary = ClampSummary::default();
    for row in data.chunks_exact_mut(dim) {
        let lifted = row.iter().filter(|&&v| v < CLAMP_FLOOR).count();
        summary.coords += lifted;
        summary.rows += (lifted > 0) as usize;
        for v in row.iter_mut() {
            *v = v.max(CLAMP_FLOOR);
        }
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let clamped = PointSet::new(data, dim).expect("clamping keeps values finite");
    (clamped, summary)
}
