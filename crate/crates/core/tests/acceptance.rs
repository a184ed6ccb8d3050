//! Acceptance suite. Every criterion prints one PASS or FAIL line; the
//! process exits non-zero when any criterion fails. Passing a substring as
//! an argument runs only the matching criteria.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgc::chemio::{Bond, ElementVocab, MolecularSystem};
use sgc::cvsplit::{agglomerative_split, ward_cluster, ward_linkage, Cut, DistanceMatrix, Fold, Fractions};
use sgc::diffcore::{DiffError, GradCheck, GradCheckReport, ParamStore, SparsePattern, Tape, Tensor, Var};
use sgc::graphbuild::{build_graph, EdgeSchema};
use sgc::harness::{
    hyperparameter_search, predict_samples, train, Dataset, DatasetMeta, FoldOrder, HyperGrid, Sample, SearchSetup,
    TrainOptions,
};
use sgc::layers::{message_pass, EdgeMessageNet, FcStack, GatherGate, GruCell, MessageKind};
use sgc::metrics::{ef_chi_regression, mue, pearson, r2, rmse, roc_auc, spearman};
use sgc::potentialnet::{batch_weights, weighted_loss, Mode, ModelConfig, ModelError, PotentialNet, TaskKind};
use sgc::synth::{random_complex, random_ligand};

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, Check); 9] = [
        ("gradient_integrity", gradient_integrity),
        ("symmetry", symmetry),
        ("ef_oracle", ef_oracle),
        ("ward_equivalence", ward_equivalence),
        ("split_proportions", split_proportions),
        ("staged_vs_single_ablation", staged_vs_single_ablation),
        ("overfit_sanity", overfit_sanity),
        ("metric_oracles", metric_oracles),
        ("determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_matrix(g: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::matrix(r, c, (0..r * c).map(|_| g.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so that ReLU kinks stay outside the stencil.
fn away_from_zero(g: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    let data = (0..r * c)
        .map(|_| {
            let v: f64 = g.gen_range(0.05..1.0);
            if g.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::matrix(r, c, data).unwrap()
}

fn symmetric_pattern(g: &mut ChaCha8Rng, n: usize, p: f64) -> Arc<SparsePattern> {
    let mut rows = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if g.gen_bool(p) {
                rows[i].push(j as u32);
                rows[j].push(i as u32);
            }
        }
    }
    for r in &mut rows {
        r.sort_unstable();
    }
    Arc::new(SparsePattern::from_rows(n, &rows).unwrap())
}

/// `Σ v ⊙ C` for a fixed random `C`, so that every output entry carries a
/// distinct weight.
fn project(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var, DiffError> {
    let shape = t.shape(v).to_vec();
    let len: usize = shape.iter().product();
    let mut g = rng(seed);
    let c = Tensor::from_vec(&shape, (0..len).map(|_| g.gen_range(-1.5..1.5)).collect())?;
    let c = t.constant(c);
    let prod = t.mul(v, c)?;
    Ok(t.sum(prod))
}

fn model_diff(e: ModelError) -> DiffError {
    match e {
        ModelError::Diff(d) => d,
        other => panic!("unexpected model error: {other}"),
    }
}

struct GradTally {
    checked: usize,
    max_rel: f64,
    failures: Vec<String>,
}

impl GradTally {
    fn record(&mut self, name: &str, report: Result<GradCheckReport, DiffError>) {
        match report {
            Ok(r) => {
                self.checked += r.checked;
                self.max_rel = self.max_rel.max(r.max_rel_error);
                if let Some(m) = r.mismatches.first() {
                    self.failures.push(format!(
                        "{name}: {} mismatches, first {}[{}] analytic {} numeric {}",
                        r.mismatches.len(),
                        m.param,
                        m.index,
                        m.analytic,
                        m.numeric
                    ));
                }
            }
            Err(e) => self.failures.push(format!("{name}: {e}")),
        }
    }
}

fn gradient_integrity() -> Result<String, String> {
    let start = Instant::now();
    let primitive = GradCheck::default();
    let layer = GradCheck { eps: 1e-5, ..GradCheck::default() };
    let mut tally = GradTally { checked: 0, max_rel: 0.0, failures: Vec::new() };
    for trial in 0..4u64 {
        let mut g = rng(100 + trial);
        let n = g.gen_range(2..=6);
        let f = g.gen_range(1..=8);
        let m = g.gen_range(1..=8);
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", random_matrix(&mut g, n, f)).unwrap();
        let b = store.add("b", random_matrix(&mut g, n, f)).unwrap();
        let w = store.add("w", random_matrix(&mut g, f, m)).unwrap();
        let row = store.add("row", random_matrix(&mut g, 1, f)).unwrap();
        let kink = store.add("kink", away_from_zero(&mut g, n, f)).unwrap();
        let adj = symmetric_pattern(&mut g, n, 0.5);
        let picks: Vec<usize> = (0..n + 2).map(|_| g.gen_range(0..n)).collect();
        let targets: Vec<f64> = (0..n * f).map(|_| if g.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let values: Vec<f64> = (0..n * f).map(|_| g.gen_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..n * f).map(|_| if g.gen_bool(0.2) { 0.0 } else { g.gen_range(0.1..2.0) }).collect();
        let k = g.gen_range(-2.0..2.0);
        let seed = 1000 + trial;
        type Op = Box<dyn Fn(&mut Tape<f64>) -> Result<Var, DiffError>>;
        let ops: Vec<(&str, Op)> = vec![
            ("matmul", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(w));
                t.matmul(x, y)
            })),
            ("add", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(b));
                t.add(x, y)
            })),
            ("add_broadcast", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(row));
                t.add(x, y)
            })),
            ("sub", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(b));
                t.sub(x, y)
            })),
            ("mul", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(b));
                t.mul(x, y)
            })),
            ("mul_self", Box::new(move |t| {
                let x = t.param(a);
                t.mul(x, x)
            })),
            ("sigmoid", Box::new(move |t| {
                let x = t.param(a);
                Ok(t.sigmoid(x))
            })),
            ("tanh", Box::new(move |t| {
                let x = t.param(a);
                Ok(t.tanh(x))
            })),
            ("relu", Box::new(move |t| {
                let x = t.param(kink);
                Ok(t.relu(x))
            })),
            ("sum_rows", Box::new(move |t| {
                let x = t.param(a);
                t.sum_rows(x)
            })),
            ("select_rows", Box::new({
                let picks = picks.clone();
                move |t| {
                    let x = t.param(a);
                    t.select_rows(x, &picks)
                }
            })),
            ("concat_cols", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(b));
                t.concat_cols(&[x, y])
            })),
            ("concat_rows", Box::new(move |t| {
                let (x, y) = (t.param(a), t.param(row));
                t.concat_rows(&[x, y])
            })),
            ("scale", Box::new(move |t| {
                let x = t.param(a);
                Ok(t.scale(x, k))
            })),
            ("add_scalar", Box::new(move |t| {
                let x = t.param(a);
                let y = t.add_scalar(x, k);
                t.mul(y, x)
            })),
            ("one_minus", Box::new(move |t| {
                let x = t.param(a);
                let y = t.one_minus(x);
                t.mul(y, x)
            })),
            ("sum", Box::new(move |t| {
                let x = t.param(a);
                let y = t.mul(x, x)?;
                Ok(t.sum(y))
            })),
            ("mean", Box::new(move |t| {
                let x = t.param(a);
                let y = t.tanh(x);
                t.mean(y)
            })),
            ("dropout", Box::new(move |t| {
                let x = t.param(a);
                let mut drng = rng(seed);
                t.dropout(x, 0.3, true, &mut drng)
            })),
            ("sparse_matmul", Box::new({
                let adj = adj.clone();
                move |t| {
                    let x = t.param(a);
                    t.sparse_matmul(adj.clone(), x)
                }
            })),
            ("bce_with_logits", Box::new({
                let (targets, weights) = (targets.clone(), weights.clone());
                move |t| {
                    let x = t.param(a);
                    t.bce_with_logits(x, &targets, &weights)
                }
            })),
            ("squared_error", Box::new({
                let (values, weights) = (values.clone(), weights.clone());
                move |t| {
                    let x = t.param(a);
                    t.squared_error(x, &values, &weights)
                }
            })),
        ];
        for (name, op) in &ops {
            let report = primitive.run(&store, |t| {
                let v = op(t)?;
                project(t, v, seed)
            });
            tally.record(name, report);
        }
    }

    for trial in 0..3u64 {
        let mut g = rng(200 + trial);
        let n = g.gen_range(3..=6);
        let f = g.gen_range(2..=8);
        let f0 = g.gen_range(1..=8);
        let out = g.gen_range(1..=8);
        let mut store = ParamStore::<f64>::new();
        let h = store.add("h", random_matrix(&mut g, n, f)).unwrap();
        let m = store.add("m", random_matrix(&mut g, n, f)).unwrap();
        let x0 = store.add("x0", random_matrix(&mut g, n, f0)).unwrap();
        let pooled = store.add("pooled", random_matrix(&mut g, 1, f)).unwrap();
        let cell = GruCell::new(&mut store, "gru", f, &mut g).unwrap();
        let mlp = EdgeMessageNet::new(&mut store, "mlp", 3, f, MessageKind::Mlp, &mut g).unwrap();
        let lin = EdgeMessageNet::new(&mut store, "lin", 3, f, MessageKind::Linear, &mut g).unwrap();
        let gate = GatherGate::new(&mut store, "gate", f, f0, out, &mut g).unwrap();
        let fc = FcStack::new(&mut store, "fc", f, &[g.gen_range(1..=8), g.gen_range(1..=8), 2], &mut g).unwrap();
        let adj: Vec<_> = (0..3).map(|_| symmetric_pattern(&mut g, n, 0.4)).collect();
        let rows: Vec<usize> = (0..n).filter(|_| g.gen_bool(0.7)).chain([0]).collect();
        let seed = 2000 + trial;
        tally.record(
            "gru",
            layer.run(&store, |t| {
                let (hv, mv) = (t.param(h), t.param(m));
                let v = cell.forward(t, hv, mv)?;
                project(t, v, seed)
            }),
        );
        for (name, nets) in [("message_pass_mlp", &mlp), ("message_pass_linear", &lin)] {
            tally.record(
                name,
                layer.run(&store, |t| {
                    let hv = t.param(h);
                    let v = message_pass(t, &adj, hv, nets)?;
                    project(t, v, seed)
                }),
            );
        }
        tally.record(
            "gather",
            layer.run(&store, |t| {
                let (hv, xv) = (t.param(h), t.param(x0));
                let v = gate.gather(t, hv, xv, &rows)?;
                project(t, v, seed)
            }),
        );
        tally.record(
            "fc",
            layer.run(&store, |t| {
                let p = t.param(pooled);
                let mut drng = rng(seed);
                let v = fc.forward(t, p, 0.25, true, &mut drng)?;
                project(t, v, seed)
            }),
        );
    }

    for (trial, kind) in [TaskKind::Regression, TaskKind::MultitaskClassification].into_iter().enumerate() {
        let mut g = rng(300 + trial as u64);
        let systems = [random_complex(&mut g, 3, 1, 3, "c"), random_ligand(&mut g, 5, "l")];
        let labels = [vec![Some(0.7), None], vec![Some(1.0), Some(0.0)]];
        let config = ModelConfig {
            task_kind: kind,
            n_tasks: 2,
            f_bond: 6,
            f_spatial: 5,
            bond_k: 2,
            spatial_k: 2,
            fc_widths: vec![4, 2],
            dropout: 0.2,
            seed: trial as u64,
            ..Default::default()
        };
        let model = PotentialNet::<f64>::new(config).unwrap();
        let graphs: Vec<_> = systems.iter().map(|s| model.prepare_system(s).unwrap()).collect();
        let label_refs: Vec<&[Option<f64>]> = labels.iter().map(|l| l.as_slice()).collect();
        let weights = batch_weights(&label_refs, kind).unwrap();
        tally.record(
            "staged_model",
            layer.run(&model.params, |t| {
                let mut total: Option<Var> = None;
                for (k, graph) in graphs.iter().enumerate() {
                    let mut drng = rng(k as u64);
                    let pred = model.forward(t, graph, true, &mut drng).map_err(model_diff)?;
                    let l = weighted_loss(t, pred, &labels[k], &weights[k], kind).map_err(model_diff)?;
                    total = Some(match total {
                        Some(acc) => t.add(acc, l)?,
                        None => l,
                    });
                }
                Ok(total.expect("two samples"))
            }),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    if !tally.failures.is_empty() {
        return Err(tally.failures.join("; "));
    }
    ensure(secs < 60.0, || format!("suite took {secs:.1} s, limit 60 s"))?;
    Ok(format!("{} coordinates, max relative error {:.2e}", tally.checked, tally.max_rel))
}

/// New system whose atom `k` is atom `perm[k]` of `sys`.
fn permute_system(sys: &MolecularSystem, perm: &[usize]) -> MolecularSystem {
    let mut inverse = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inverse[p] = k;
    }
    let atoms = perm.iter().map(|&p| sys.atoms()[p].clone()).collect();
    let bonds = sys.bonds().iter().map(|b| Bond { i: inverse[b.i], j: inverse[b.j], order: b.order }).collect();
    let mut out = MolecularSystem::new(atoms, bonds, sys.n_ligand(), sys.sample_id.clone()).unwrap();
    out.labels = sys.labels.clone();
    out
}

/// Random permutation that keeps the ligand block in front.
fn block_permutation(g: &mut ChaCha8Rng, n_ligand: usize, n: usize) -> Vec<usize> {
    let mut lig: Vec<usize> = (0..n_ligand).collect();
    let mut prot: Vec<usize> = (n_ligand..n).collect();
    lig.shuffle(g);
    prot.shuffle(g);
    lig.extend(prot);
    lig
}

fn symmetry() -> Result<String, String> {
    let vocab = ElementVocab::default();
    let schema = EdgeSchema::default();
    let mut g = rng(7);
    let mut worst = 0.0f64;
    let mut n_models = 0;
    for trial in 0..10 {
        let (n_lig, n_frag, frag) = (g.gen_range(3..=9), g.gen_range(1..=4), g.gen_range(2..=4));
        let sys = random_complex(&mut g, n_lig, n_frag, frag, "s");
        let perm = block_permutation(&mut g, sys.n_ligand(), sys.n_atoms());
        let permuted = permute_system(&sys, &perm);

        let a = build_graph(&sys, &vocab, &schema).map_err(|e| e.to_string())?;
        let b = build_graph(&permuted, &vocab, &schema).map_err(|e| e.to_string())?;
        let n = sys.n_atoms();
        for i in 0..n {
            ensure(a.x().row(perm[i]) == b.x().row(i), || format!("trial {trial}: feature row {i} not permuted"))?;
            for j in 0..n {
                let (pi, pj) = (perm[i], perm[j]);
                ensure(a.r(pi, pj).to_bits() == b.r(i, j).to_bits(), || format!("trial {trial}: R[{i},{j}] differs"))?;
                for e in 0..a.n_edge_types() {
                    ensure(a.a(pi, pj, e) == b.a(i, j, e), || format!("trial {trial}: A[{i},{j},{e}] differs"))?;
                }
            }
        }

        for mode in [Mode::Staged, Mode::SingleUpdate, Mode::LigandOnly, Mode::GgnnPlain] {
            let config = ModelConfig { mode, bond_k: 2, spatial_k: 2, k: 2, seed: trial, ..Default::default() };
            let model = PotentialNet::<f32>::new(config).unwrap();
            let pa = model.predict(&model.prepare_system(&sys).unwrap()).unwrap();
            let pb = model.predict(&model.prepare_system(&permuted).unwrap()).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                worst = worst.max((x - y).abs());
            }
            n_models += 1;
        }

        let mut store = ParamStore::<f32>::new();
        let gate = GatherGate::new(&mut store, "gate", 6, 4, 5, &mut g).unwrap();
        let h = random_matrix(&mut g, n, 6).cast::<f32>();
        let h0 = random_matrix(&mut g, n, 4).cast::<f32>();
        let rows: Vec<usize> = (0..sys.n_ligand()).collect();
        let permute_rows = |t: &Tensor<f32>| {
            let data = perm.iter().flat_map(|&p| t.row(p).to_vec()).collect();
            Tensor::matrix(t.rows(), t.cols(), data).unwrap()
        };
        let mut tape = Tape::new(&store);
        let (hv, h0v) = (tape.constant(h.clone()), tape.constant(h0.clone()));
        let base = gate.gather(&mut tape, hv, h0v, &rows).unwrap();
        let mut reordered = rows.clone();
        reordered.shuffle(&mut g);
        let shuffled = gate.gather(&mut tape, hv, h0v, &reordered).unwrap();
        let (ph, ph0) = (tape.constant(permute_rows(&h)), tape.constant(permute_rows(&h0)));
        let permuted_rows = gate.gather(&mut tape, ph, ph0, &rows).unwrap();
        let bits = |v: Var, tape: &Tape<f32>| tape.value(v).data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(base, &tape) == bits(shuffled, &tape), || format!("trial {trial}: gather depends on row list order"))?;
        ensure(bits(base, &tape) == bits(permuted_rows, &tape), || format!("trial {trial}: gather depends on node order"))?;
    }
    ensure(worst <= 1e-5, || format!("model output moved by {worst:.3e} under node permutation"))?;
    Ok(format!("{n_models} models, max output change {worst:.2e}; graphs and gathers exact"))
}

/// Brute-force EF: repeatedly takes the highest remaining prediction
/// (lowest index among equals) and averages the z-scores of the picks.
fn ef_oracle_value(y: &[f64], y_hat: &[f64], chi: f64) -> f64 {
    let n = y.len();
    let k = ((chi * n as f64 + 0.5).floor() as usize).max(1);
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    let mut taken = vec![false; n];
    let mut total = 0.0;
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !taken[i] && best.is_none_or(|b| y_hat[i] > y_hat[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("k <= n");
        taken[b] = true;
        total += (y[b] - mean) / sd;
    }
    total / k as f64
}

fn ef_oracle() -> Result<String, String> {
    let mut g = rng(11);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let n = g.gen_range(2..=200);
        let y: Vec<f64> = (0..n).map(|_| g.gen_range(-3.0..9.0)).collect();
        let y_hat: Vec<f64> = if trial % 2 == 0 {
            (0..n).map(|_| g.gen_range(-5.0..5.0)).collect()
        } else {
            (0..n).map(|_| g.gen_range(0..8) as f64 * 0.5).collect()
        };
        let chi = match trial % 4 {
            0 => 0.01,
            1 => 0.05,
            2 => 0.1,
            _ => g.gen_range(0.001..=1.0),
        };
        let got = ef_chi_regression(&y, &y_hat, chi).map_err(|e| format!("trial {trial}: {e}"))?;
        let want = ef_oracle_value(&y, &y_hat, chi);
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("trial {trial}: {got} vs oracle {want}"))?;

        let full = ef_chi_regression(&y, &y_hat, 1.0).map_err(|e| e.to_string())?;
        ensure(full == 0.0, || format!("trial {trial}: chi = 1 gave {full}"))?;

        let scale = [0.25, 2.0, 8.0][trial % 3];
        let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let s = ef_chi_regression(&scaled, &y_hat, chi).map_err(|e| e.to_string())?;
        ensure(s.to_bits() == got.to_bits(), || format!("trial {trial}: scaling by {scale} changed {got} to {s}"))?;

        let (a, b) = (g.gen_range(0.1..10.0), g.gen_range(-50.0..50.0));
        let affine: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let s = ef_chi_regression(&affine, &y_hat, chi).map_err(|e| e.to_string())?;
        ensure((s - got).abs() <= 1e-12 * got.abs().max(1.0), || format!("trial {trial}: affine labels gave {s} vs {got}"))?;

        let transforms: [fn(f64) -> f64; 3] = [|x| x * x * x + 3.0 * x, |x| (x / 4.0).exp(), |x| 2.0 * x - 7.0];
        for (ti, tf) in transforms.iter().enumerate() {
            let moved: Vec<f64> = y_hat.iter().map(|&x| tf(x)).collect();
            let same_order = (0..n).all(|i| {
                (0..n).all(|j| y_hat[i].total_cmp(&y_hat[j]) == moved[i].total_cmp(&moved[j]))
            });
            ensure(same_order, || format!("trial {trial}: transform {ti} is not strictly increasing on this input"))?;
            let s = ef_chi_regression(&y, &moved, chi).map_err(|e| e.to_string())?;
            ensure(s.to_bits() == got.to_bits(), || format!("trial {trial}: monotone transform {ti} changed {got} to {s}"))?;
        }
    }
    let mut y = vec![0.0; 20];
    y[19] = 10.0;
    let ef = ef_chi_regression(&y, &y, 0.05).map_err(|e| e.to_string())?;
    ensure(ef > 1.0, || format!("single strong hit gave EF {ef}"))?;
    Ok(format!("1000 instances, max oracle error {worst:.2e}; invariances exact; constructed EF {ef:.3}"))
}

/// Ward objective of a cluster: `Σ_{i,j∈C} D²_ij / (2|C|)`.
fn ess(d: &DistanceMatrix, members: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in members {
        for &j in members {
            s += d.get(i, j).powi(2);
        }
    }
    s / (2.0 * members.len() as f64)
}

fn partition_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match seen.iter().position(|&s| s == l) {
            Some(k) => groups[k].push(i),
            None => {
                seen.push(l);
                groups.push(vec![i]);
            }
        }
    }
    groups.sort();
    groups
}

fn ward_equivalence() -> Result<String, String> {
    let mut g = rng(13);
    let mut steps = 0;
    for trial in 0..200 {
        let n = g.gen_range(2..=8);
        let discrete = trial % 3 == 0;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = if discrete { g.gen_range(1..=4) as f64 * 0.25 } else { g.gen_range(0.01..1.0) };
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let d = DistanceMatrix::new(ids, data).map_err(|e| e.to_string())?;
        let tol = 1e-9 * n as f64;
        let merges = ward_linkage(&d);
        ensure(merges.len() == n - 1, || format!("trial {trial}: {} merges for {n} points", merges.len()))?;
        let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        for (step, m) in merges.iter().enumerate() {
            let active: Vec<usize> = (0..n).filter(|&i| clusters[i].is_some()).collect();
            let delta = |x: usize, y: usize| {
                let (cx, cy) = (clusters[x].as_ref().unwrap(), clusters[y].as_ref().unwrap());
                let joined: Vec<usize> = cx.iter().chain(cy).copied().collect();
                ess(&d, &joined) - ess(&d, cx) - ess(&d, cy)
            };
            let mut best = f64::INFINITY;
            for (k, &x) in active.iter().enumerate() {
                for &y in &active[k + 1..] {
                    best = best.min(delta(x, y));
                }
            }
            ensure(m.a < m.b && clusters[m.a].is_some() && clusters[m.b].is_some(), || {
                format!("trial {trial} step {step}: merge ({}, {}) of inactive clusters", m.a, m.b)
            })?;
            let chosen = delta(m.a, m.b);
            ensure(chosen <= best + tol, || {
                format!("trial {trial} step {step}: merge cost {chosen} exceeds optimum {best}")
            })?;
            ensure((m.height * m.height - 2.0 * chosen).abs() <= tol, || {
                format!("trial {trial} step {step}: height {} inconsistent with cost {chosen}", m.height)
            })?;
            let mut merged = clusters[m.a].take().unwrap();
            merged.extend(clusters[m.b].take().unwrap());
            merged.sort_unstable();
            ensure(m.size == merged.len() && merged[0] == m.a, || format!("trial {trial} step {step}: size or name wrong"))?;
            clusters[m.a] = Some(merged);
            steps += 1;

            let remaining = n - step - 1;
            let labels = ward_cluster(&d, Cut::Clusters(remaining)).map_err(|e| e.to_string())?;
            let mut expect: Vec<Vec<usize>> = clusters.iter().flatten().cloned().collect();
            expect.sort();
            ensure(partition_of(&labels) == expect, || format!("trial {trial}: cut at {remaining} disagrees with merges"))?;
        }
    }

    let mut recovered = 0;
    for seed in 0..100u64 {
        let mut g = rng(5000 + seed);
        let sizes = [g.gen_range(3..=20), g.gen_range(3..=20)];
        let centers = [[0.0, 0.0], [6.0, 6.0]];
        let mut points: Vec<([f64; 2], usize)> = Vec::new();
        for (blob, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                let p = [centers[blob][0] + g.gen_range(-1.0..1.0), centers[blob][1] + g.gen_range(-1.0..1.0)];
                points.push((p, blob));
            }
        }
        points.shuffle(&mut g);
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (p, q) = (points[i].0, points[j].0);
                data[i * n + j] = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            }
        }
        let max = data.iter().cloned().fold(0.0, f64::max);
        data.iter_mut().for_each(|v| *v /= max);
        let d = DistanceMatrix::new((0..n).map(|i| format!("x{i}")).collect(), data).map_err(|e| e.to_string())?;
        let labels = ward_cluster(&d, Cut::Clusters(2)).map_err(|e| e.to_string())?;
        let truth: Vec<usize> = points.iter().map(|p| p.1).collect();
        if partition_of(&labels) == partition_of(&truth) {
            recovered += 1;
        }
    }
    ensure(recovered == 100, || format!("two blobs recovered in {recovered}/100 seeds"))?;
    Ok(format!("200 trials, {steps} merges optimal; two blobs recovered 100/100"))
}

fn split_proportions() -> Result<String, String> {
    let targets = Fractions::default().as_array();
    let mut good = 0;
    let mut worst = Vec::new();
    for seed in 0..20u64 {
        let mut g = rng(7000 + seed);
        let n_clusters = 200;
        let dim = 8;
        let weights: Vec<f64> = (0..n_clusters).map(|_| (g.gen_range(-1.0f64..1.0) * 1.5).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut sizes: Vec<usize> = weights.iter().map(|w| 1 + (w / total * 1100.0).floor() as usize).collect();
        while sizes.iter().sum::<usize>() < 1300 {
            let k = g.gen_range(0..n_clusters);
            sizes[k] += 1;
        }
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(1300);
        for &size in &sizes {
            let center: Vec<f64> = (0..dim).map(|_| g.gen_range(0.0..100.0)).collect();
            for _ in 0..size {
                points.push(center.iter().map(|c| c + g.gen_range(-0.5..0.5)).collect());
            }
        }
        points.shuffle(&mut g);
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        let max = data.iter().cloned().fold(0.0, f64::max);
        data.iter_mut().for_each(|v| *v /= max);
        let d = DistanceMatrix::new((0..n).map(|i| format!("s{i}")).collect(), data).map_err(|e| e.to_string())?;
        let split = agglomerative_split(&d, Cut::Clusters(n_clusters), Fractions::default(), seed)
            .map_err(|e| e.to_string())?;
        let counts = split.counts();
        let achieved: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let dev = achieved.iter().zip(&targets).map(|(a, t)| (a - t).abs()).fold(0.0, f64::max);
        if dev <= 0.03 {
            good += 1;
        }
        worst.push(dev);
        ensure(split.ids_in(Fold::Test).len() == counts[2], || "fold listing disagrees with counts".into())?;
    }
    let max_dev = worst.iter().cloned().fold(0.0, f64::max);
    ensure(good >= 18, || format!("{good}/20 seeds within 3%, worst deviation {max_dev:.4}"))?;
    Ok(format!("{good}/20 seeds within 3%, worst deviation {max_dev:.4}"))
}

/// Label built from a bond-local term (ligand carbons bonded to N or O)
/// plus a spatial term (ligand contacts with protein N or O within 4 Å).
fn ablation_label(sys: &MolecularSystem) -> f64 {
    let atoms = sys.atoms();
    let n_lig = sys.n_ligand();
    let mut polar_carbons = 0.0;
    for (k, a) in atoms[..n_lig].iter().enumerate() {
        let bonded_polar = sys.bonds().iter().any(|b| {
            let other = if b.i == k {
                b.j
            } else if b.j == k {
                b.i
            } else {
                return false;
            };
            matches!(atoms[other].element, 7 | 8)
        });
        if a.element == 6 && bonded_polar {
            polar_carbons += 1.0;
        }
    }
    let mut contacts = 0.0;
    for a in &atoms[..n_lig] {
        for p in &atoms[n_lig..] {
            if matches!(p.element, 7 | 8) && a.distance(p) <= 4.0 {
                contacts += 1.0;
            }
        }
    }
    polar_carbons + 0.5 * contacts
}

fn regression_dataset(systems: &[MolecularSystem]) -> Dataset {
    let meta = DatasetMeta { tasks: vec!["y".into()], schema: EdgeSchema::default(), vocab: ElementVocab::default() };
    Dataset::from_systems(systems, meta).unwrap()
}

fn mse(model: &PotentialNet<f32>, samples: &[&Sample]) -> Result<f64, String> {
    let preds = predict_samples(model, samples).map_err(|e| e.to_string())?;
    let total: f64 = preds.iter().zip(samples).map(|(p, s)| (p[0] - s.labels[0].unwrap()).powi(2)).sum();
    Ok(total / samples.len() as f64)
}

fn staged_vs_single_ablation() -> Result<String, String> {
    let start = Instant::now();
    let mut g = rng(17);
    let mut systems: Vec<MolecularSystem> = (0..500)
        .map(|k| {
            let n_lig = g.gen_range(5..=8);
            random_complex(&mut g, n_lig, 3, 3, &format!("c{k}"))
        })
        .collect();
    let raw: Vec<f64> = systems.iter().map(ablation_label).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
    for (s, v) in systems.iter_mut().zip(&raw) {
        s.labels = vec![Some((v - mean) / sd)];
    }
    let data = regression_dataset(&systems);
    let opts = TrainOptions { epochs: 100, batch_size: 32 };
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let mut order: Vec<&Sample> = data.samples.iter().collect();
        order.shuffle(&mut rng(900 + seed));
        let (train_set, valid_set) = order.split_at(400);
        let base = ModelConfig { f_bond: 16, f_spatial: 16, fc_widths: vec![16, 1], seed, ..Default::default() };
        let staged = ModelConfig { mode: Mode::Staged, bond_k: 2, spatial_k: 1, ..base.clone() };
        let single = ModelConfig { mode: Mode::SingleUpdate, spatial_k: 3, ..base };
        let mut scores = [0.0; 2];
        for (slot, config) in [staged, single].iter().enumerate() {
            let out = train(config, train_set, valid_set, &opts).map_err(|e| e.to_string())?;
            if let Some(f) = &out.failure {
                return Err(format!("seed {seed}: {f}"));
            }
            scores[slot] = mse(&out.model, valid_set)?;
        }
        if scores[0] <= scores[1] {
            wins += 1;
        }
        lines.push(format!("{:.3}/{:.3}", scores[0], scores[1]));
    }
    let secs = start.elapsed().as_secs_f64();
    let summary = format!("staged/single validation MSE {}", lines.join(", "));
    ensure(wins >= 4, || format!("staged won {wins}/5 seeds; {summary}"))?;
    ensure(secs < 1800.0, || format!("took {secs:.0} s, limit 1800 s"))?;
    Ok(format!("staged won {wins}/5; {summary}"))
}

fn overfit_sanity() -> Result<String, String> {
    let mut g = rng(19);
    let systems: Vec<MolecularSystem> = (0..20)
        .map(|k| {
            let n = g.gen_range(4..=12);
            let mut s = random_ligand(&mut g, n, &format!("m{k}"));
            s.labels = vec![Some(g.gen_range(-2.0..2.0))];
            s
        })
        .collect();
    let data = regression_dataset(&systems);
    let samples: Vec<&Sample> = data.samples.iter().collect();
    let config = ModelConfig {
        mode: Mode::LigandOnly,
        f_bond: 32,
        f_spatial: 32,
        bond_k: 2,
        spatial_k: 1,
        fc_widths: vec![32, 1],
        learning_rate: 3e-3,
        ..Default::default()
    };
    let out = train(&config, &samples, &[], &TrainOptions { epochs: 500, batch_size: 4 }).map_err(|e| e.to_string())?;
    if let Some(f) = out.failure {
        return Err(f);
    }
    let err = mse(&out.model, &samples)?;
    ensure(err < 1e-2, || format!("training MSE {err:.4e} after 500 epochs"))?;
    Ok(format!("training MSE {err:.2e} after 500 epochs"))
}

fn oracle_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank of each value: `1 + #smaller + (#equal − 1)/2`, counted pairwise.
fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn oracle_auc(labels: &[f64], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1.0 && lj == 0.0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn metric_oracles() -> Result<String, String> {
    let mut g = rng(23);
    let mut worst = 0.0f64;
    let mut compare = |name: &str, trial: usize, got: f64, want: f64| -> Result<(), String> {
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure(err <= 1e-10, || format!("{name} trial {trial}: {got} vs oracle {want}"))
    };
    for trial in 0..100 {
        let n = g.gen_range(3..=200);
        let tied = trial % 2 == 1;
        let draw = |g: &mut ChaCha8Rng| if tied { g.gen_range(0..6) as f64 } else { g.gen_range(-4.0..6.0) };
        let y: Vec<f64> = (0..n).map(|_| draw(&mut g)).collect();
        let y_hat: Vec<f64> = y.iter().map(|v| 0.6 * v + draw(&mut g)).collect();
        if y.iter().all(|&v| v == y[0]) || y_hat.iter().all(|&v| v == y_hat[0]) {
            continue;
        }
        let run = |r: Result<f64, sgc::metrics::MetricError>| r.map_err(|e| format!("trial {trial}: {e}"));
        compare("pearson", trial, run(pearson(&y, &y_hat))?, oracle_pearson(&y, &y_hat))?;
        compare(
            "spearman",
            trial,
            run(spearman(&y, &y_hat))?,
            oracle_pearson(&oracle_ranks(&y), &oracle_ranks(&y_hat)),
        )?;
        let my = oracle_mean(&y);
        let ss_res: f64 = y.iter().zip(&y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
        compare("r2", trial, run(r2(&y, &y_hat))?, 1.0 - ss_res / ss_tot)?;
        compare("rmse", trial, run(rmse(&y, &y_hat))?, (ss_res / n as f64).sqrt())?;
        let abs: Vec<f64> = y.iter().zip(&y_hat).map(|(a, b)| (a - b).abs()).collect();
        compare("mue", trial, run(mue(&y, &y_hat))?, oracle_mean(&abs))?;
        let mut labels: Vec<f64> = (0..n).map(|_| if g.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
        labels[0] = 1.0;
        labels[1] = 0.0;
        compare("roc_auc", trial, run(roc_auc(&labels, &y_hat))?, oracle_auc(&labels, &y_hat))?;
    }
    Ok(format!("6 metrics on 100 instances, max error {worst:.2e}"))
}

fn determinism() -> Result<String, String> {
    let mut g = rng(29);
    let mut systems: Vec<MolecularSystem> = (0..36)
        .map(|k| {
            let n_lig = g.gen_range(4..=7);
            random_complex(&mut g, n_lig, 2, 3, &format!("d{k}"))
        })
        .collect();
    for s in &mut systems {
        s.labels = vec![Some(ablation_label(s))];
    }
    let data = regression_dataset(&systems);
    let samples: Vec<&Sample> = data.samples.iter().collect();
    let config = ModelConfig { f_bond: 8, f_spatial: 8, fc_widths: vec![8, 1], dropout: 0.25, seed: 3, ..Default::default() };
    let opts = TrainOptions { epochs: 4, batch_size: 8 };
    let pool = |threads: usize| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let single = pool(1);
    let run = || train(&config, &samples[..28], &samples[28..], &opts).map(|o| o.model.to_checkpoint());
    let a = single.install(run).map_err(|e| e.to_string())?;
    let b = single.install(run).map_err(|e| e.to_string())?;
    ensure(a == b, || "single-threaded reruns produced different checkpoints".into())?;
    let c = pool(4).install(run).map_err(|e| e.to_string())?;
    ensure(a == c, || "four worker threads changed the checkpoint".into())?;

    let setup = SearchSetup {
        base: ModelConfig { seed: 5, ..Default::default() },
        grid: HyperGrid {
            gather_widths: vec![64],
            f_gather: vec![64],
            fc_widths: vec![vec![64, 1]],
            ..HyperGrid::default()
        },
        training: TrainOptions { epochs: 2, batch_size: 8 },
        k: 3,
        fold_order: FoldOrder::Random,
        dates: None,
        seed: 5,
    };
    let search = |threads: usize| pool(threads).install(|| hyperparameter_search(&setup, &samples, 4));
    let first = search(4).map_err(|e| e.to_string())?;
    let second = search(4).map_err(|e| e.to_string())?;
    let serial = search(1).map_err(|e| e.to_string())?;
    ensure(first.best_run().hyper == second.best_run().hyper && first == second, || {
        "parallel searches disagree".into()
    })?;
    ensure(first == serial, || "parallel and serial searches disagree".into())?;
    Ok(format!("checkpoints bit-identical; search selected run {} in every repetition", first.best))
}
