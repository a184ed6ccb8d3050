use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment buffers and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = store.iter().map(|(_, _, p)| Tensor::zeros(p.shape())).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One Adam update with decoupled weight decay: every parameter is first
/// shrunk by `lr · weight_decay · param`, then moved by the bias-corrected
/// Adam step.
pub fn adam_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grads.get(id).data();
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let p = params.get_mut(id).data_mut();
        for k in 0..p.len() {
            let gk = g[k].as_f64();
            let mut pk = p[k].as_f64();
            pk -= lr * weight_decay * pk;
            let mk = ADAM_BETA1 * m[k].as_f64() + (1.0 - ADAM_BETA1) * gk;
            let vk = ADAM_BETA2 * v[k].as_f64() + (1.0 - ADAM_BETA2) * gk * gk;
            m[k] = T::of(mk);
            v[k] = T::of(vk);
            let m_hat = mk / bc1;
            let v_hat = vk / bc2;
            pk -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            p[k] = T::of(pk);
        }
    }
}

/// Plain gradient descent with the same decoupled decay.
pub fn sgd_step<T: Real>(params: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64, weight_decay: f64) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grads.get(id).data();
        let p = params.get_mut(id).data_mut();
        for (pk, &gk) in p.iter_mut().zip(g) {
            let mut v = pk.as_f64();
            v -= lr * weight_decay * v;
            v -= lr * gk.as_f64();
            *pk = T::of(v);
        }
    }
}

/// Optimizer plus its state.
#[derive(Clone, Debug)]
pub struct Optimizer<T = f32> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    adam: Option<AdamState<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, store: &ParamStore<T>) -> Self {
        let adam = matches!(kind, OptimizerKind::Adam).then(|| AdamState::new(store));
        Optimizer { kind, lr, weight_decay, adam }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        match (&self.kind, self.adam.as_mut()) {
            (OptimizerKind::Adam, Some(state)) => adam_step(params, grads, state, self.lr, self.weight_decay),
            _ => sgd_step(params, grads, self.lr, self.weight_decay),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::ParamId;

    fn single(value: f64) -> (ParamStore<f64>, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::matrix(1, 3, vec![value; 3]).unwrap()).unwrap();
        (store, id)
    }

    fn grads_of(store: &ParamStore<f64>, id: ParamId, g: &[f64]) -> Gradients<f64> {
        let mut grads = Gradients::zeros_like(store);
        grads.get_mut(id).data_mut().copy_from_slice(g);
        grads
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let (mut store, id) = single(0.7);
        let grads = Gradients::zeros_like(&store);
        let mut state = AdamState::new(&store);
        for _ in 0..5 {
            adam_step(&mut store, &grads, &mut state, 1e-3, 0.0);
        }
        assert_eq!(store.get(id).data(), &[0.7; 3]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the first update is lr · g / (|g| + ε).
        let (mut store, id) = single(0.0);
        let grads = grads_of(&store, id, &[0.5, -3.0, 1e-2]);
        let mut state = AdamState::new(&store);
        let lr = 1e-3;
        adam_step(&mut store, &grads, &mut state, lr, 0.0);
        for (&p, g) in store.get(id).data().iter().zip([0.5, -3.0, 1e-2f64]) {
            let expected = -lr * g / (g.abs() + ADAM_EPS);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let (mut store, id) = single(0.0);
        let grads = grads_of(&store, id, &[2.0, -0.1, 0.3]);
        let mut state = AdamState::new(&store);
        for _ in 0..200 {
            adam_step(&mut store, &grads, &mut state, 2e-4, 0.0);
        }
        let p = store.get(id).data();
        assert!(p[0] < 0.0 && p[1] > 0.0 && p[2] < 0.0);
    }

    #[test]
    fn decay_is_applied_before_the_adam_step() {
        let (mut store, id) = single(1.0);
        let grads = Gradients::zeros_like(&store);
        let mut state = AdamState::new(&store);
        adam_step(&mut store, &grads, &mut state, 0.1, 0.5);
        assert!((store.get(id).data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_follows_negative_gradient() {
        let (mut store, id) = single(1.0);
        let grads = grads_of(&store, id, &[1.0, -1.0, 0.0]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.0, &store);
        opt.step(&mut store, &grads);
        assert_eq!(store.get(id).data(), &[0.9, 1.1, 1.0]);
    }
}
