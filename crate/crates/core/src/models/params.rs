//! Named parameter storage shared by the trainable models.
//!
//! A `ParamSet` owns the tensors; each forward pass binds them into a fresh
//! graph as parameter leaves whose slot is the parameter's index, so the
//! gradient map lines up with the set by construction.

use crate::error::{CoreError, Result};
use crate::graph::{Gradients, Graph, NodeId};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn set_value(&mut self, id: ParamId, value: Matrix) -> Result<()> {
        if self.values[id.0].shape() != value.shape() {
            return Err(CoreError::contract(format!(
                "parameter {} shape {:?} cannot be replaced by {:?}",
                self.names[id.0],
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Matrix::all_finite)
    }

    /// Bind every parameter into `g`; the returned node list is indexed by
    /// `ParamId`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let nodes = self
            .values
            .iter()
            .enumerate()
            .map(|(slot, v)| g.param(slot, v.clone()))
            .collect();
        BoundParams { nodes }
    }

    /// Gradient for each parameter, zeros where the loss did not touch it.
    pub fn gather(&self, grads: &Gradients) -> Vec<Matrix> {
        self.values
            .iter()
            .enumerate()
            .map(|(slot, v)| {
                grads
                    .get(slot)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(v.rows(), v.cols()))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BoundParams {
    nodes: Vec<NodeId>,
}

impl BoundParams {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn bind_and_gather_line_up() {
        let mut set = ParamSet::new();
        let a = set.add("a", Matrix::full(1, 2, 3.0));
        let b = set.add("b", Matrix::full(2, 1, -1.0));
        let mut g = Graph::new();
        let bound = set.bind(&mut g);
        let prod = g.matmul(bound.node(a), bound.node(b)).unwrap();
        let grads = g.reverse_sweep(prod).unwrap();
        let gathered = set.gather(&grads);
        assert_eq!(gathered.len(), 2);
        assert_eq!(gathered[0], Matrix::full(1, 2, -1.0));
        assert_eq!(gathered[1], Matrix::full(2, 1, 3.0));
    }

    #[test]
    fn set_value_checks_shape() {
        let mut set = ParamSet::new();
        let a = set.add("a", Matrix::zeros(2, 2));
        assert!(set.set_value(a, Matrix::zeros(1, 2)).is_err());
        assert!(set.set_value(a, Matrix::identity(2)).is_ok());
    }
}
