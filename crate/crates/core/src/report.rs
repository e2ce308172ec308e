use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::grid::{norms, Field};

/// Relative discrepancy between two route outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairError {
    pub sup_rel: f64,
    pub l2_rel: f64,
}

/// Outputs of several evaluation routes with their pairwise discrepancies.
///
/// Discrepancies are measured against the larger of the two outputs, so the
/// table is symmetric. No entry exists for a route against itself.
#[derive(Debug, Clone, Default)]
pub struct RouteReport {
    pub outputs: BTreeMap<String, Field>,
    pairwise: BTreeMap<(String, String), PairError>,
    pub calibration: BTreeMap<String, f64>,
}

impl RouteReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, route: &str, output: Field) -> Result<()> {
        for (other, field) in &self.outputs {
            let (a, b) = if field.l2_norm() >= output.l2_norm() {
                (&output, field)
            } else {
                (field, &output)
            };
            let (sup_rel, l2_rel) = norms(a, b)?;
            let err = PairError { sup_rel, l2_rel };
            self.pairwise.insert((route.to_string(), other.clone()), err);
            self.pairwise.insert((other.clone(), route.to_string()), err);
        }
        self.outputs.insert(route.to_string(), output);
        Ok(())
    }

    pub fn error(&self, a: &str, b: &str) -> Option<PairError> {
        self.pairwise.get(&(a.to_string(), b.to_string())).copied()
    }

    /// Each unordered pair once, in name order.
    pub fn pairs(&self) -> Vec<(String, String, PairError)> {
        self.pairwise
            .iter()
            .filter(|((a, b), _)| a < b)
            .map(|((a, b), e)| (a.clone(), b.clone(), *e))
            .collect()
    }

    pub fn max_l2(&self) -> f64 {
        self.pairwise.values().fold(0.0, |m, e| m.max(e.l2_rel))
    }

    pub fn max_sup(&self) -> f64 {
        self.pairwise.values().fold(0.0, |m, e| m.max(e.sup_rel))
    }

    /// JSON summary without the output samples.
    pub fn summary_json(&self) -> serde_json::Value {
        let pairs: Vec<_> = self
            .pairs()
            .into_iter()
            .map(|(a, b, e)| {
                serde_json::json!({ "a": a, "b": b, "sup_rel": e.sup_rel, "l2_rel": e.l2_rel })
            })
            .collect();
        serde_json::json!({
            "routes": self.outputs.keys().collect::<Vec<_>>(),
            "pairwise": pairs,
            "calibration": self.calibration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceTimeGrid;

    #[test]
    fn symmetric_without_diagonal() {
        let g = SpaceTimeGrid::new(1, 1.0, 8, 1.0, 4).unwrap();
        let f = Field::from_fn(g, |x, _| x[0]);
        let mut r = RouteReport::new();
        r.insert("a", f.clone()).unwrap();
        r.insert("b", f.scale(2.0)).unwrap();
        r.insert("c", f.scale(1.5)).unwrap();
        assert_eq!(r.error("a", "b"), r.error("b", "a"));
        assert!(r.error("a", "a").is_none());
        assert_eq!(r.pairs().len(), 3);
        assert!((r.error("a", "b").unwrap().l2_rel - 0.5).abs() < 1e-15);
    }
}
