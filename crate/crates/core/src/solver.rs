//! Common interface of the three-view solvers and a name-keyed registry.
//!
//! ```
//! use trifocal::solver::SolverRegistry;
//!
//! let registry = SolverRegistry::with_builtin();
//! let solver = registry.get("4pt").unwrap();
//! assert_eq!(solver.sample_size(), 4);
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{triplet_residual, PointTriplet, TrifocalTensor, YawPose};
use crate::{linear, minimal};

/// A full three-view hypothesis.
#[derive(Debug, Clone)]
pub struct TripletModel {
    pub p2: YawPose,
    pub p3: YawPose,
    pub tensor: TrifocalTensor,
    pub inliers: Vec<usize>,
    pub score: usize,
    pub mean_inlier_error: f64,
    /// Largest incidence residual over the sample that produced the model.
    pub residual: f64,
}

impl TripletModel {
    pub fn new(p2: YawPose, p3: YawPose, tensor: TrifocalTensor) -> Self {
        Self {
            p2,
            p3,
            tensor,
            inliers: Vec::new(),
            score: 0,
            mean_inlier_error: f64::INFINITY,
            residual: f64::NAN,
        }
    }

    pub fn with_residual(mut self, sample: &[PointTriplet]) -> Self {
        self.residual = max_residual(&self.tensor, sample);
        self
    }
}

/// Largest absolute entry of the incidence residual over the triplets, with
/// the tensor scaled to unit Frobenius norm.
pub fn max_residual(tensor: &TrifocalTensor, trips: &[PointTriplet]) -> f64 {
    let norm = tensor
        .slices
        .iter()
        .map(|s| s.norm_squared())
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return f64::INFINITY;
    }
    trips
        .iter()
        .map(|t| triplet_residual(t, tensor).amax() / norm)
        .fold(0.0, f64::max)
}

/// A relative-pose solver over point triplets.
pub trait TripletSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of triplets consumed by one hypothesis.
    fn sample_size(&self) -> usize;

    /// All hypotheses produced by the sample, best first. `refine` applies
    /// tensor constraint enforcement before decoding the poses.
    fn solve(&self, sample: &[PointTriplet], refine: bool) -> Result<Vec<TripletModel>>;
}

/// Linear solver over four (or more) triplets.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearFourPoint;

impl TripletSolver for LinearFourPoint {
    fn name(&self) -> &'static str {
        "4pt"
    }

    fn sample_size(&self) -> usize {
        4
    }

    fn solve(&self, sample: &[PointTriplet], refine: bool) -> Result<Vec<TripletModel>> {
        Ok(linear::solve_4pt(sample, refine)?
            .into_iter()
            .map(|m| m.with_residual(sample))
            .collect())
    }
}

/// Minimal solver over three triplets. With more than three triplets the
/// first three are solved and candidates are ranked on all of them.
#[derive(Debug, Clone, Default)]
pub struct MinimalThreePoint {
    pub options: minimal::MinimalOptions,
}

impl TripletSolver for MinimalThreePoint {
    fn name(&self) -> &'static str {
        "3pt"
    }

    fn sample_size(&self) -> usize {
        3
    }

    fn solve(&self, sample: &[PointTriplet], refine: bool) -> Result<Vec<TripletModel>> {
        if sample.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: sample.len(),
            });
        }
        let candidates = minimal::solve_3pt_with(&sample[..3], &self.options)?;
        let mut models: Vec<TripletModel> = candidates
            .iter()
            .filter_map(|c| minimal::candidate_model(c, &sample[..3], refine).ok())
            .map(|m| m.with_residual(sample))
            .collect();
        models.sort_by(|a, b| a.residual.total_cmp(&b.residual));
        Ok(models)
    }
}

impl std::fmt::Debug for dyn TripletSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TripletSolver({})", self.name())
    }
}

type Factory = Arc<dyn TripletSolver>;

/// Solvers registered under their names.
#[derive(Clone, Default)]
pub struct SolverRegistry {
    entries: BTreeMap<String, Factory>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `3pt` and `4pt`.
    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.register(Arc::new(MinimalThreePoint::default()));
        r.register(Arc::new(LinearFourPoint));
        r
    }

    /// Adds a solver, replacing any previous one with the same name.
    pub fn register(&mut self, solver: Arc<dyn TripletSolver>) {
        self.entries.insert(solver.name().to_string(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TripletSolver>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for SolverRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dummy;

    impl TripletSolver for Dummy {
        fn name(&self) -> &'static str {
            "dummy"
        }
        fn sample_size(&self) -> usize {
            1
        }
        fn solve(&self, _: &[PointTriplet], _: bool) -> Result<Vec<TripletModel>> {
            Ok(vec![])
        }
    }

    #[test]
    fn builtin_names() {
        let r = SolverRegistry::with_builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["3pt", "4pt"]);
        assert_eq!(r.get("3pt").unwrap().sample_size(), 3);
        assert_eq!(
            r.get("nope").unwrap_err(),
            Error::UnknownSolver("nope".into())
        );
    }

    #[test]
    fn custom_registration() {
        let mut r = SolverRegistry::with_builtin();
        r.register(Arc::new(Dummy));
        assert_eq!(r.get("dummy").unwrap().sample_size(), 1);
        assert_eq!(r.names().count(), 3);
    }
}
