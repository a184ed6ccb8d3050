//! GRU update, edge-typed message passing, gated gather and the FC head.
//!
//! Node states are stored one row per atom, so a linear map `W` acts as
//! `h · W` with `W` shaped `in × out`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, ParamId, ParamStore, Real, SparsePattern, Tape, Tensor, Var};

/// Affine map `x · W (+ b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_width: usize,
    pub out_width: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_width: usize,
        out_width: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let w = store.add_uniform(format!("{name}.w"), in_width, out_width, in_width, rng)?;
        let b = if bias { Some(store.add_uniform(format!("{name}.b"), 1, out_width, in_width, rng)?) } else { None };
        Ok(Linear { w, b, in_width, out_width })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var, DiffError> {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                tape.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Gated recurrent unit acting row-wise on node states:
///
/// ```text
/// z  = σ(m W_z + h U_z + b_z)
/// r  = σ(m W_r + h U_r + b_r)
/// ĥ  = tanh(m W_h + (r ⊙ h) U_h + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ ĥ
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
    pub width: usize,
}

impl GruCell {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        width: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let mut p = |suffix: &str, rows| store.add_uniform(format!("{name}.{suffix}"), rows, width, width, rng);
        Ok(GruCell {
            w_z: p("w_z", width)?,
            u_z: p("u_z", width)?,
            b_z: p("b_z", 1)?,
            w_r: p("w_r", width)?,
            u_r: p("u_r", width)?,
            b_r: p("b_r", 1)?,
            w_h: p("w_h", width)?,
            u_h: p("u_h", width)?,
            b_h: p("b_h", 1)?,
            width,
        })
    }

    fn gate<T: Real>(&self, tape: &mut Tape<T>, m: Var, h: Var, w: ParamId, u: ParamId, b: ParamId) -> Result<Var, DiffError> {
        let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
        let mw = tape.matmul(m, w)?;
        let hu = tape.matmul(h, u)?;
        let s = tape.add(mw, hu)?;
        tape.add(s, b)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, h: Var, m: Var) -> Result<Var, DiffError> {
        for (op, v) in [("gru hidden", h), ("gru message", m)] {
            let shape = tape.shape(v);
            if shape.len() != 2 || shape[1] != self.width {
                return Err(DiffError::ShapeMismatch { op, left: shape.to_vec(), right: vec![shape[0], self.width] });
            }
        }
        let z_pre = self.gate(tape, m, h, self.w_z, self.u_z, self.b_z)?;
        let z = tape.sigmoid(z_pre);
        let r_pre = self.gate(tape, m, h, self.w_r, self.u_r, self.b_r)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h)?;
        let c_pre = self.gate(tape, m, rh, self.w_h, self.u_h, self.b_h)?;
        let candidate = tape.tanh(c_pre);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, candidate)?;
        tape.add(old, new)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// `h W^(e)`, no bias.
    Linear,
    /// `ReLU(h W1 + b1) W2 + b2`, hidden width equal to the state width.
    #[default]
    Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MessageFn {
    Linear(Linear),
    Mlp(Linear, Linear),
}

impl MessageFn {
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, h: Var) -> Result<Var, DiffError> {
        match self {
            MessageFn::Linear(l) => l.forward(tape, h),
            MessageFn::Mlp(a, b) => {
                let hidden = a.forward(tape, h)?;
                let hidden = tape.relu(hidden);
                b.forward(tape, hidden)
            }
        }
    }
}

/// One message function per edge type.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMessageNet {
    pub nets: Vec<MessageFn>,
    pub width: usize,
}

impl EdgeMessageNet {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        n_edge_types: usize,
        width: usize,
        kind: MessageKind,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let mut nets = Vec::with_capacity(n_edge_types);
        for e in 0..n_edge_types {
            let net = match kind {
                MessageKind::Linear => MessageFn::Linear(Linear::new(store, &format!("{name}.{e}"), width, width, false, rng)?),
                MessageKind::Mlp => MessageFn::Mlp(
                    Linear::new(store, &format!("{name}.{e}.0"), width, width, true, rng)?,
                    Linear::new(store, &format!("{name}.{e}.1"), width, width, true, rng)?,
                ),
            };
            nets.push(net);
        }
        Ok(EdgeMessageNet { nets, width })
    }
}

/// `m = Σ_e A^(e) · NN^(e)(h)`. Edge types without any edge are skipped.
pub fn message_pass<T: Real>(
    tape: &mut Tape<T>,
    adjacency: &[Arc<SparsePattern>],
    h: Var,
    nets: &EdgeMessageNet,
) -> Result<Var, DiffError> {
    if adjacency.len() != nets.nets.len() {
        return Err(DiffError::Argument(format!(
            "{} adjacency slices but {} message functions",
            adjacency.len(),
            nets.nets.len()
        )));
    }
    let shape = tape.shape(h).to_vec();
    let mut total: Option<Var> = None;
    for (pattern, net) in adjacency.iter().zip(&nets.nets) {
        if pattern.n_rows() != shape[0] {
            return Err(DiffError::ShapeMismatch { op: "message_pass", left: vec![pattern.n_rows(), pattern.n_cols()], right: shape });
        }
        if pattern.nnz() == 0 {
            continue;
        }
        let transformed = net.forward(tape, h)?;
        let m = tape.sparse_matmul(pattern.clone(), transformed)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, m)?,
            None => m,
        });
    }
    match total {
        Some(m) => Ok(m),
        None => Ok(tape.constant(Tensor::zeros(&[shape[0], nets.width]))),
    }
}

/// Gather gate `σ(i([h_final, h_initial])) ⊙ j(h_final)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherGate {
    pub i_net: Linear,
    pub j_net: Linear,
}

impl GatherGate {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        final_width: usize,
        initial_width: usize,
        out_width: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        Ok(GatherGate {
            i_net: Linear::new(store, &format!("{name}.i"), final_width + initial_width, out_width, true, rng)?,
            j_net: Linear::new(store, &format!("{name}.j"), final_width, out_width, true, rng)?,
        })
    }

    pub fn out_width(&self) -> usize {
        self.j_net.out_width
    }

    /// Per-row gated features, `N × out_width`.
    pub fn gate_rows<T: Real>(&self, tape: &mut Tape<T>, h_final: Var, h_initial: Var) -> Result<Var, DiffError> {
        let joined = tape.concat_cols(&[h_final, h_initial])?;
        let i = self.i_net.forward(tape, joined)?;
        let gate = tape.sigmoid(i);
        let j = self.j_net.forward(tape, h_final)?;
        tape.mul(gate, j)
    }

    /// Sum of the gated rows listed in `rows`, `1 × out_width`.
    pub fn gather<T: Real>(&self, tape: &mut Tape<T>, h_final: Var, h_initial: Var, rows: &[usize]) -> Result<Var, DiffError> {
        if rows.is_empty() {
            return Err(DiffError::Empty("graph gather rows"));
        }
        let gated = self.gate_rows(tape, h_final, h_initial)?;
        sum_selected(tape, gated, rows)
    }
}

/// Sums the listed rows; a full prefix skips the selection copy.
pub fn sum_selected<T: Real>(tape: &mut Tape<T>, v: Var, rows: &[usize]) -> Result<Var, DiffError> {
    if rows.is_empty() {
        return Err(DiffError::Empty("row sum"));
    }
    let n = tape.shape(v)[0];
    let all = rows.len() == n && rows.iter().enumerate().all(|(k, &r)| k == r);
    let picked = if all { v } else { tape.select_rows(v, rows)? };
    tape.sum_rows(picked)
}

/// Fully connected head: ReLU after every layer but the last, dropout on the
/// input of each layer while training.
#[derive(Clone, Debug, PartialEq)]
pub struct FcStack {
    pub layers: Vec<Linear>,
}

impl FcStack {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_width: usize,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        if widths.is_empty() {
            return Err(DiffError::Argument("FC stack needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = in_width;
        for (k, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{k}"), prev, w, true, rng)?);
            prev = w;
        }
        Ok(FcStack { layers })
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_width)
    }

    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        dropout: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, DiffError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = tape.dropout(h, dropout, train, rng)?;
            h = layer.forward(tape, h)?;
            if k != last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
