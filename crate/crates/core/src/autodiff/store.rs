//! Named parameter storage.
//!
//! A [`ParamStore`] owns the trainable tensors of one network (or a group of
//! networks that are always optimised together, like twin critics). Slots are
//! stable after insertion, which keeps optimiser state, gradients, and
//! checkpoint manifests aligned by index.

use super::tensor::{Tensor, TensorError};
use std::collections::HashMap;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Slot index, usable to pick the matching leaf out of
    /// [`super::Tape::bind`]'s result.
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateParam {
                name: name.to_string(),
            });
        }
        let slot = self.tensors.len();
        self.by_name.insert(name.to_string(), slot);
        self.names.push(name.to_string());
        self.tensors.push(t);
        Ok(ParamId(slot))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn tensor_at(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn tensor_at_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn name_at(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn id_of(&self, name: &str) -> Result<ParamId, TensorError> {
        self.by_name
            .get(name)
            .map(|&s| ParamId(s))
            .ok_or_else(|| TensorError::UnknownParam {
                name: name.to_string(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// In-place Polyak average: `self = tau * self + (1 - tau) * other`.
    ///
    /// Both stores must have been built by the same constructor so slots
    /// line up; shapes are checked per tensor.
    pub fn polyak_from(&mut self, other: &ParamStore, tau: f64) -> Result<(), TensorError> {
        for slot in 0..self.tensors.len() {
            let mine = &mut self.tensors[slot];
            let theirs = &other.tensors[slot];
            if mine.shape() != theirs.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "polyak_from",
                    lhs: mine.shape(),
                    rhs: theirs.shape(),
                });
            }
            for (a, b) in mine.data_mut().iter_mut().zip(theirs.data().iter()) {
                *a = tau * *a + (1.0 - tau) * b;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_and_lookup() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::scalar(2.0)).unwrap();
        assert_eq!(s.get(id).item().unwrap(), 2.0);
        assert_eq!(s.id_of("w").unwrap(), id);
        assert!(s.id_of("nope").is_err());
        assert!(s.insert("w", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn polyak_blends_elementwise() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        a.insert("w", Tensor::scalar(1.0)).unwrap();
        b.insert("w", Tensor::scalar(3.0)).unwrap();
        a.polyak_from(&b, 0.75).unwrap();
        assert!((a.tensor_at(0).item().unwrap() - 1.5).abs() < 1e-15);
    }
}
