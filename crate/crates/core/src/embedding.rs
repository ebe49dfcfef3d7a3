//! Distances, the Gaussian similarity kernel, and kernel-width calibration
//! over scene embedding vectors.
//!
//! A raw L2 distance between two scene embeddings says little on its own.
//! Calibration picks the kernel width `S*` so that, over a reference
//! collection of environments, the average kernel value between an entry and
//! its nearest other entry equals a target (0.5 by default). After that,
//! `exp(-d² / S*²)` reads as "how well is this environment known".

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A precomputed scene embedding with optional display metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentDescriptor {
    id: String,
    label: Option<String>,
    vector: Vec<f64>,
    image_ref: Option<String>,
}

impl EnvironmentDescriptor {
    /// Builds a descriptor, rejecting empty or non-finite vectors.
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if vector.is_empty() {
            return Err(Error::InvalidDescriptor {
                id,
                reason: "vector is empty".into(),
            });
        }
        if let Some(pos) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidDescriptor {
                id,
                reason: format!("coordinate {pos} is not finite"),
            });
        }
        Ok(Self {
            id,
            label: None,
            vector,
            image_ref: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_image_ref(mut self, image_ref: impl Into<String>) -> Self {
        self.image_ref = Some(image_ref.into());
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn image_ref(&self) -> Option<&str> {
        self.image_ref.as_deref()
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }

    /// Copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(
            self.id.clone(),
            self.vector.iter().map(|x| x * factor).collect(),
        )?;
        out.label.clone_from(&self.label);
        out.image_ref.clone_from(&self.image_ref);
        Ok(out)
    }
}

/// Free-form metadata attached to a calibration (reference id, creation time, ...).
pub type Provenance = BTreeMap<String, String>;

/// The calibrated kernel width together with what it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    kernel_width: f64,
    dimension: usize,
    reference_count: usize,
    mean_target: f64,
    solver_tolerance: f64,
    provenance: Provenance,
}

impl CalibrationModel {
    /// A model with a known kernel width, bypassing the solver.
    pub fn from_kernel_width(kernel_width: f64, dimension: usize) -> Result<Self> {
        Self::from_parts(
            kernel_width,
            dimension,
            0,
            DEFAULT_MEAN_TARGET,
            DEFAULT_TOLERANCE,
            Provenance::new(),
        )
    }

    pub(crate) fn from_parts(
        kernel_width: f64,
        dimension: usize,
        reference_count: usize,
        mean_target: f64,
        solver_tolerance: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        check_width(kernel_width)?;
        if dimension == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self {
            kernel_width,
            dimension,
            reference_count,
            mean_target,
            solver_tolerance,
            provenance,
        })
    }

    pub fn with_provenance(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.provenance.insert(key.into(), value.into());
        self
    }

    pub fn kernel_width(&self) -> f64 {
        self.kernel_width
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn reference_count(&self) -> usize {
        self.reference_count
    }

    pub fn mean_target(&self) -> f64 {
        self.mean_target
    }

    pub fn solver_tolerance(&self) -> f64 {
        self.solver_tolerance
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Kernel value for a raw distance under this model's width.
    pub fn similarity(&self, distance: f64) -> f64 {
        gaussian(distance, self.kernel_width)
    }

    pub(crate) fn check_dimension(&self, found: usize) -> Result<()> {
        if found != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found,
            });
        }
        Ok(())
    }
}

pub const DEFAULT_MEAN_TARGET: f64 = 0.5;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

fn check_width(width: f64) -> Result<()> {
    if width > 0.0 && width.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidKernelWidth(width))
    }
}

/// Euclidean distance between two raw vectors.
pub fn l2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// L2 distance between two descriptors.
pub fn distance(a: &EnvironmentDescriptor, b: &EnvironmentDescriptor) -> Result<f64> {
    l2(&a.vector, &b.vector)
}

#[inline]
fn gaussian(d: f64, width: f64) -> f64 {
    (-(d * d) / (width * width)).exp()
}

/// `exp(-d² / S²)`: 1 at zero distance, strictly decreasing in `d`.
pub fn kernel(d: f64, width: f64) -> Result<f64> {
    check_width(width)?;
    Ok(gaussian(d, width))
}

/// Index and distance of the entry nearest to `query`.
///
/// Entries whose id equals `exclude_id` are skipped. Ties go to the lowest
/// index. Returns `None` when nothing is left to compare against.
pub fn nearest_neighbor(
    query: &EnvironmentDescriptor,
    collection: &[EnvironmentDescriptor],
    exclude_id: Option<&str>,
) -> Result<Option<(usize, f64)>> {
    let candidates = collection
        .iter()
        .enumerate()
        .filter(|(_, e)| exclude_id != Some(e.id.as_str()));
    nearest_in(query.vector(), candidates.map(|(i, e)| (i, e.vector())))
}

pub(crate) fn nearest_in<'a>(
    query: &[f64],
    candidates: impl Iterator<Item = (usize, &'a [f64])>,
) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for (index, vector) in candidates {
        let d = l2(query, vector)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((index, d));
        }
    }
    Ok(best)
}

/// For every entry, the distance to its nearest other entry.
///
/// Self-exclusion is by position, so duplicated ids or vectors are treated
/// as distinct entries (a duplicate pair yields distance 0 for both).
pub fn nn_distances(reference: &[EnvironmentDescriptor]) -> Result<Vec<f64>> {
    if reference.len() < 2 {
        return Err(Error::InsufficientReference(reference.len()));
    }
    let dim = reference[0].dimension();
    if let Some(bad) = reference.iter().find(|e| e.dimension() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dimension(),
        });
    }
    let n = reference.len();
    let mut best = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = l2(reference[i].vector(), reference[j].vector())?;
            if d < best[i] {
                best[i] = d;
            }
            if d < best[j] {
                best[j] = d;
            }
        }
    }
    Ok(best)
}

/// Mean kernel value over a set of nearest-neighbor distances.
pub fn mean_kernel(nn_distances: &[f64], width: f64) -> Result<f64> {
    check_width(width)?;
    Ok(mean_gaussian(nn_distances, width))
}

fn mean_gaussian(nn: &[f64], width: f64) -> f64 {
    nn.iter().map(|&d| gaussian(d, width)).sum::<f64>() / nn.len() as f64
}

/// Solves for the width `S` with `mean_kernel(nn, S) = mean_target`.
///
/// The mean is continuous and strictly increasing in `S` once any distance
/// is positive; it tends to the zero-distance fraction as `S -> 0` and to 1
/// as `S -> inf`. Bisection runs until the bracket cannot shrink further, and
/// the residual is then checked against `tolerance`.
pub fn solve_kernel_width(nn_distances: &[f64], mean_target: f64, tolerance: f64) -> Result<f64> {
    if nn_distances.is_empty() {
        return Err(Error::InsufficientReference(0));
    }
    if !(mean_target > 0.0 && mean_target < 1.0) {
        return Err(Error::InvalidMeanTarget(mean_target));
    }
    let n = nn_distances.len() as f64;
    let zeros = nn_distances.iter().filter(|&&d| d == 0.0).count() as f64;
    let max_d = nn_distances.iter().copied().fold(0.0_f64, f64::max);
    let zero_fraction = zeros / n;
    if max_d == 0.0 || zero_fraction >= mean_target {
        return Err(Error::DegenerateReference {
            zero_fraction,
            mean_target,
        });
    }

    let residual = |s: f64| mean_gaussian(nn_distances, s) - mean_target;

    let mut lo = 1e-9 * max_d;
    while residual(lo) >= 0.0 {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::DegenerateReference {
                zero_fraction,
                mean_target,
            });
        }
    }
    let mut hi = 10.0 * max_d;
    while residual(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::CalibrationDidNotConverge {
                residual: residual(f64::MAX),
                tolerance,
            });
        }
    }

    loop {
        let mid = lo + (hi - lo) * 0.5;
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (r_lo, r_hi) = (residual(lo).abs(), residual(hi).abs());
    let (width, r) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
    if r > tolerance {
        return Err(Error::CalibrationDidNotConverge {
            residual: r,
            tolerance,
        });
    }
    Ok(width)
}

/// Calibrates the kernel width on a reference collection.
///
/// The returned width makes the mean, over all entries, of
/// `kernel(nn_distance(entry), S*)` equal `mean_target` within `tolerance`.
/// The caller decides how the reference collection is sampled.
pub fn calibrate(
    reference: &[EnvironmentDescriptor],
    mean_target: f64,
    tolerance: f64,
) -> Result<CalibrationModel> {
    let nn = nn_distances(reference)?;
    let width = solve_kernel_width(&nn, mean_target, tolerance)?;
    CalibrationModel::from_parts(
        width,
        reference[0].dimension(),
        reference.len(),
        mean_target,
        tolerance,
        Provenance::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(id: &str, v: &[f64]) -> EnvironmentDescriptor {
        EnvironmentDescriptor::new(id, v.to_vec()).unwrap()
    }

    fn line(points: &[f64]) -> Vec<EnvironmentDescriptor> {
        points
            .iter()
            .enumerate()
            .map(|(i, &x)| d(&format!("p{i}"), &[x]))
            .collect()
    }

    #[test]
    fn descriptor_rejects_bad_vectors() {
        assert!(EnvironmentDescriptor::new("a", vec![]).is_err());
        assert!(EnvironmentDescriptor::new("a", vec![1.0, f64::NAN]).is_err());
        assert!(EnvironmentDescriptor::new("a", vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn distance_cases() {
        let a = d("a", &[0.0, 0.0]);
        let b = d("b", &[3.0, 4.0]);
        assert_eq!(distance(&a, &b).unwrap(), 5.0);
        assert_eq!(distance(&b, &a).unwrap(), 5.0);
        assert_eq!(distance(&b, &b).unwrap(), 0.0);
        let c = d("c", &[1.0]);
        assert!(matches!(
            distance(&a, &c),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn kernel_cases() {
        let s = 1.7;
        assert_eq!(kernel(0.0, s).unwrap(), 1.0);
        assert!((kernel(s, s).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((kernel(2.0 * s, s).unwrap() - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert!(matches!(
            kernel(1.0, 0.0),
            Err(Error::InvalidKernelWidth(_))
        ));
        assert!(matches!(
            kernel(1.0, -2.0),
            Err(Error::InvalidKernelWidth(_))
        ));
        assert!(matches!(
            kernel(1.0, f64::INFINITY),
            Err(Error::InvalidKernelWidth(_))
        ));
    }

    #[test]
    fn nearest_neighbor_cases() {
        let v = d("v", &[2.0]);
        assert_eq!(
            nearest_neighbor(&v, std::slice::from_ref(&v), Some("v")).unwrap(),
            None
        );
        assert_eq!(nearest_neighbor(&v, &[], None).unwrap(), None);

        let q = d("q", &[0.0]);
        let coll = line(&[1.0, 3.0]);
        assert_eq!(nearest_neighbor(&q, &coll, None).unwrap(), Some((0, 1.0)));

        let coll = line(&[5.0, 4.0, -2.0, 9.0, 3.0, 2.0]);
        assert_eq!(nearest_neighbor(&q, &coll, None).unwrap(), Some((2, 2.0)));
    }

    #[test]
    fn nn_distances_cases() {
        assert_eq!(
            nn_distances(&line(&[0.0, 1.0, 3.0])).unwrap(),
            vec![1.0, 1.0, 2.0]
        );
        assert_eq!(nn_distances(&line(&[4.0, 4.0])).unwrap(), vec![0.0, 0.0]);
        let pts = vec![
            d("a", &[0.0, 0.0]),
            d("b", &[0.0, 2.0]),
            d("c", &[5.0, 0.0]),
        ];
        assert_eq!(nn_distances(&pts).unwrap(), vec![2.0, 2.0, 5.0]);
        assert!(matches!(
            nn_distances(&line(&[1.0])),
            Err(Error::InsufficientReference(1))
        ));
    }

    #[test]
    fn nn_distances_ignores_duplicate_ids() {
        let pts = vec![d("x", &[0.0]), d("x", &[1.0])];
        assert_eq!(nn_distances(&pts).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn calibrate_three_points_matches_root_finder() {
        // mpmath findroot on (2 e^{-1/S^2} + e^{-4/S^2}) / 3 = 1/2
        let oracle = 1.542_616_504_262_500_4;
        let model = calibrate(&line(&[0.0, 1.0, 3.0]), 0.5, 1e-9).unwrap();
        assert!((model.kernel_width() - oracle).abs() < 1e-12);
        assert_eq!(model.reference_count(), 3);
        assert_eq!(model.dimension(), 1);
    }

    #[test]
    fn calibrate_pair_closed_form() {
        for dist in [1e-3, 0.5, 1.0, 7.25, 1e4] {
            let model = calibrate(&line(&[0.0, dist]), 0.5, 1e-9).unwrap();
            let expected = dist / std::f64::consts::LN_2.sqrt();
            assert!(((model.kernel_width() - expected) / expected).abs() < 1e-12);
        }
    }

    #[test]
    fn calibrate_degenerate_reference() {
        let pts = line(&[0.0, 0.0, 5.0]);
        assert!(matches!(
            calibrate(&pts, 0.5, 1e-9),
            Err(Error::DegenerateReference { .. })
        ));
        assert!(matches!(
            calibrate(&line(&[1.0, 1.0, 1.0]), 0.5, 1e-9),
            Err(Error::DegenerateReference { .. })
        ));
        // one of four zero: fraction 0.5 >= 0.5 still degenerate
        assert!(matches!(
            calibrate(&line(&[0.0, 0.0, 10.0, 30.0]), 0.5, 1e-9),
            Err(Error::DegenerateReference { .. })
        ));
    }

    #[test]
    fn calibrate_rejects_bad_target() {
        let pts = line(&[0.0, 1.0]);
        assert!(matches!(
            calibrate(&pts, 1.0, 1e-9),
            Err(Error::InvalidMeanTarget(_))
        ));
        assert!(matches!(
            calibrate(&pts, 0.0, 1e-9),
            Err(Error::InvalidMeanTarget(_))
        ));
    }

    #[test]
    fn calibrate_other_targets() {
        let pts = line(&[0.0, 1.0, 3.0, 3.5, 10.0]);
        for target in [0.1, 0.3, 0.75, 0.95] {
            let m = calibrate(&pts, target, 1e-9).unwrap();
            let nn = nn_distances(&pts).unwrap();
            assert!((mean_kernel(&nn, m.kernel_width()).unwrap() - target).abs() < 1e-9);
        }
    }

    #[test]
    fn calibrate_with_tiny_spacing_expands_lower_bracket() {
        // min distance far below 1e-9 * max distance
        let pts = line(&[0.0, 1e-14, 1.0, 1.0 + 1e-14, 1e6]);
        let m = calibrate(&pts, 0.5, 1e-9).unwrap();
        let nn = nn_distances(&pts).unwrap();
        assert!(m.kernel_width() < 1e-13);
        assert!((mean_kernel(&nn, m.kernel_width()).unwrap() - 0.5).abs() < 1e-9);
    }
}
