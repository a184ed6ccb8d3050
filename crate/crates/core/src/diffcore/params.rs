use std::collections::HashMap;

use rand::Rng;

use super::{DiffError, Real, Tensor};

/// Handle to a named parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Owns every trainable tensor of a model, keyed by unique name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, DiffError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(DiffError::DuplicateParam(name));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    /// Adds a `rows × cols` parameter drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId, DiffError> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-bound..=bound))).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.values.iter().enumerate().map(|(i, v)| (ParamId(i), self.names[i].as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::all_finite)
    }

    /// Same names and shapes, values converted to another element type.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Overwrites values from `(name, tensor)` records. Every parameter must be
    /// present with a matching shape.
    pub fn assign_from(&mut self, records: &[(String, Tensor<f32>)]) -> Result<(), DiffError> {
        let mut seen = vec![false; self.values.len()];
        for (name, tensor) in records {
            let id = self.lookup(name).ok_or_else(|| DiffError::UnknownParam(name.clone()))?;
            if tensor.shape() != self.values[id.0].shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "assign",
                    left: self.values[id.0].shape().to_vec(),
                    right: tensor.shape().to_vec(),
                });
            }
            self.values[id.0] = tensor.cast();
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(DiffError::MissingParam(self.names[missing].clone()));
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    grads: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Gradients { grads: store.values.iter().map(|v| Tensor::zeros(v.shape())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    /// Summation merge of per-sample gradient buffers.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::zeros(&[1, 1])).unwrap();
        assert!(matches!(store.add("w", Tensor::zeros(&[1, 1])), Err(DiffError::DuplicateParam(_))));
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f32>::new();
        let id = store.add_uniform("w", 16, 16, 16, &mut rng).unwrap();
        assert!(store.get(id).data().iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn assign_requires_every_param() {
        let mut store = ParamStore::<f32>::new();
        store.add("a", Tensor::zeros(&[1, 2])).unwrap();
        store.add("b", Tensor::zeros(&[1, 1])).unwrap();
        let records = vec![("a".to_string(), Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap())];
        assert!(matches!(store.assign_from(&records), Err(DiffError::MissingParam(n)) if n == "b"));
    }
}
