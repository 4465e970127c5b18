use std::cell::RefCell;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{format_hidden, parse_hidden, Activation, NetworkArch};
use crate::dataset::StandardizedSample;
use crate::error::{Error, Result};
use crate::seed::stage_seed;

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Half-width of the uniform weight initialisation interval.
pub const INIT_WEIGHT_BOUND: f64 = 0.05;

/// First line of every model file.
pub const MODEL_FILE_MAGIC: &str = "gated-depth-model";
pub const MODEL_FILE_VERSION: u32 = 1;

/// Affine layer `z = W a + b`, weights row-major with one row per output.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn new(n_in: usize, n_out: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != n_in * n_out || biases.len() != n_out {
            return Err(Error::DimensionMismatch {
                expected: (n_out, n_in),
                actual: (biases.len(), weights.len() / n_out.max(1)),
            });
        }
        Ok(Self {
            n_in,
            n_out,
            weights,
            biases,
        })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    #[inline]
    fn affine(&self, a: &[f64], z: &mut [f64]) {
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.weights[k * self.n_in..(k + 1) * self.n_in];
            *zk = self.biases[k] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Bookkeeping written alongside the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    arch: NetworkArch,
    layers: Vec<Layer>,
    pub meta: TrainingMeta,
}

/// Pre-activations of every layer for one input, plus the output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub output: f64,
}

/// Gradient with the same layout as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    layers: Vec<Layer>,
}

impl Gradient {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Weights then biases, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }
}

/// Reusable activation buffers for one forward/backward pass.
struct Workspace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(widths: &[usize]) -> Self {
        Self {
            z: widths.iter().map(|&w| vec![0.0; w]).collect(),
            a: widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

/// Weights uniform on `[-0.05, 0.05]`, biases zero, deterministic in `seed`.
pub fn init_params(arch: &NetworkArch, seed: u64) -> NetworkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(seed, "init"));
    let dist = Uniform::new_inclusive(-INIT_WEIGHT_BOUND, INIT_WEIGHT_BOUND);
    let layers = arch
        .layer_widths()
        .windows(2)
        .map(|w| Layer {
            n_in: w[0],
            n_out: w[1],
            weights: (0..w[0] * w[1]).map(|_| dist.sample(&mut rng)).collect(),
            biases: vec![0.0; w[1]],
        })
        .collect();
    NetworkModel {
        arch: arch.clone(),
        layers,
        meta: TrainingMeta {
            seed,
            epochs_run: 0,
            val_mae: None,
        },
    }
}

/// Mean absolute error.
pub fn loss_mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: (targets.len(), 1),
            actual: (predictions.len(), 1),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("batch"));
    }
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / predictions.len() as f64)
}

#[inline]
fn sign(e: f64) -> f64 {
    if e > 0.0 {
        1.0
    } else if e < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl NetworkModel {
    /// Assembles a model from explicit layers, checking that widths chain
    /// from 3 inputs through the hidden widths to 1 output.
    pub fn from_layers(arch: NetworkArch, layers: Vec<Layer>, meta: TrainingMeta) -> Result<Self> {
        let widths = arch.layer_widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::invalid(
                "layers",
                format!("{} layers for {} weight matrices", layers.len(), widths.len() - 1),
            ));
        }
        for (l, w) in layers.iter().zip(widths.windows(2)) {
            if (l.n_in, l.n_out) != (w[0], w[1]) {
                return Err(Error::DimensionMismatch {
                    expected: (w[1], w[0]),
                    actual: (l.n_out, l.n_in),
                });
            }
        }
        if layers.iter().any(|l| l.weights.iter().chain(&l.biases).any(|v| !v.is_finite())) {
            return Err(Error::invalid("layers", "parameters must be finite"));
        }
        Ok(Self { arch, layers, meta })
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn workspace(&self) -> Workspace {
        Workspace::new(&self.arch.layer_widths())
    }

    fn forward_into(&self, x: &[f64; 3], ws: &mut Workspace) -> f64 {
        let act = self.arch.activation();
        ws.a[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (prev, next) = ws.a.split_at_mut(i + 1);
            layer.affine(&prev[i], &mut ws.z[i + 1]);
            if i == last {
                next[0].copy_from_slice(&ws.z[i + 1]);
            } else {
                for (a, &z) in next[0].iter_mut().zip(&ws.z[i + 1]) {
                    *a = act.apply(z);
                }
            }
        }
        ws.a[last + 1][0]
    }

    /// Range prediction (m) for a standardised triple.
    pub fn forward(&self, x: &[f64; 3]) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input", format!("non-finite input {x:?}")));
        }
        Ok(SCRATCH.with(|buf| {
            let (cur, next) = &mut *buf.borrow_mut();
            self.forward_scratch(x, cur, next)
        }))
    }

    /// Same arithmetic as `forward_into`, ping-ponging two reusable buffers
    /// instead of keeping every layer.
    fn forward_scratch(&self, x: &[f64; 3], cur: &mut Vec<f64>, next: &mut Vec<f64>) -> f64 {
        let act = self.arch.activation();
        let last = self.layers.len() - 1;
        cur.clear();
        cur.extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            next.clear();
            next.resize(layer.n_out, 0.0);
            layer.affine(cur, next);
            if i != last {
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            std::mem::swap(cur, next);
        }
        cur[0]
    }

    pub fn forward_trace(&self, x: &[f64; 3]) -> ForwardTrace {
        let mut ws = self.workspace();
        let output = self.forward_into(x, &mut ws);
        ForwardTrace {
            pre_activations: ws.z[1..].to_vec(),
            output,
        }
    }

    pub fn predict_batch(&self, xs: &[StandardizedSample]) -> Vec<f64> {
        let mut ws = self.workspace();
        xs.iter().map(|s| self.forward_into(&s.x, &mut ws)).collect()
    }

    pub fn mae(&self, data: &[StandardizedSample]) -> Result<f64> {
        let targets: Vec<f64> = data.iter().map(|s| s.r).collect();
        loss_mae(&self.predict_batch(data), &targets)
    }

    /// Subgradient of the batch MAE with respect to every parameter.
    pub fn backward(&self, batch: &[StandardizedSample]) -> Result<Gradient> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grad = self.zero_gradient();
        let mut ws = self.workspace();
        self.accumulate(batch, &mut grad, &mut ws)?;
        Ok(grad)
    }

    pub(crate) fn zero_gradient(&self) -> Gradient {
        Gradient {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    fn accumulate(&self, batch: &[StandardizedSample], grad: &mut Gradient, ws: &mut Workspace) -> Result<f64> {
        let act = self.arch.activation();
        let scale = 1.0 / batch.len() as f64;
        let last = self.layers.len() - 1;
        for g in &mut grad.layers {
            g.weights.iter_mut().for_each(|v| *v = 0.0);
            g.biases.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut loss = 0.0;
        for sample in batch {
            let pred = self.forward_into(&sample.x, ws);
            if !pred.is_finite() {
                return Err(Error::Divergence { epoch: 0 });
            }
            let e = pred - sample.r;
            loss += e.abs();
            let g = sign(e) * scale;
            if g == 0.0 {
                continue;
            }
            ws.delta[last + 1][0] = g;
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                let gl = &mut grad.layers[i];
                let (lo, hi) = ws.delta.split_at_mut(i + 1);
                let delta = &hi[0];
                let a_prev = &ws.a[i];
                for (k, &d) in delta.iter().enumerate().take(layer.n_out) {
                    if d == 0.0 {
                        continue;
                    }
                    gl.biases[k] += d;
                    let row = &mut gl.weights[k * layer.n_in..(k + 1) * layer.n_in];
                    for (w, &a) in row.iter_mut().zip(a_prev) {
                        *w += d * a;
                    }
                }
                if i > 0 {
                    let prev = &mut lo[i];
                    for (j, p) in prev.iter_mut().enumerate() {
                        let s: f64 = delta[..layer.n_out]
                            .iter()
                            .enumerate()
                            .map(|(k, &d)| layer.weights[k * layer.n_in + j] * d)
                            .sum();
                        *p = s * act.derivative(ws.z[i][j], ws.a[i][j]);
                    }
                }
            }
        }
        Ok(loss * scale)
    }

    /// Fills `grad` with the batch subgradient and returns the batch MAE.
    pub(crate) fn batch_gradient(
        &self,
        batch: &[StandardizedSample],
        grad: &mut Gradient,
        ws: &mut WorkspaceHandle,
    ) -> Result<f64> {
        self.accumulate(batch, grad, &mut ws.0)
    }

    /// Plain gradient step `θ -= lr · g`.
    pub(crate) fn sgd_step(&mut self, grad: &Gradient, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (p, &gp) in l.weights.iter_mut().zip(&g.weights).chain(l.biases.iter_mut().zip(&g.biases)) {
                *p -= lr * gp;
            }
        }
    }

    pub(crate) fn workspace_handle(&self) -> WorkspaceHandle {
        WorkspaceHandle(self.workspace())
    }

    pub(crate) fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Weights then biases, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let n = self.arch.param_count();
        if params.len() != n {
            return Err(Error::DimensionMismatch {
                expected: (n, 1),
                actual: (params.len(), 1),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    /// Writes the text model format documented in `docs/model-format.md`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MODEL_FILE_MAGIC} {MODEL_FILE_VERSION}")?;
        writeln!(w, "activation {}", self.arch.activation())?;
        writeln!(w, "hidden {}", format_hidden(self.arch.hidden()))?;
        writeln!(w, "seed {}", self.meta.seed)?;
        writeln!(w, "epochs {}", self.meta.epochs_run)?;
        match self.meta.val_mae {
            Some(v) => writeln!(w, "val_mae {v:e}")?,
            None => writeln!(w, "val_mae none")?,
        }
        for l in &self.layers {
            writeln!(w, "layer {} {}", l.n_in, l.n_out)?;
            for row in l.weights.chunks(l.n_in) {
                writeln!(w, "{}", join(row))?;
            }
            writeln!(w, "{}", join(&l.biases))?;
        }
        writeln!(w, "end")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = vec![];
        self.write_to(&mut buf).expect("writing to memory");
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the text model format; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: 0,
                reason: format!("unexpected end of file, expected {what}"),
            })
        };
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.into(),
            line,
            reason,
        };
        let field = |(line, s): (usize, &str), key: &str| -> Result<String> {
            s.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| err(line, format!("expected `{key} ...`, got `{s}`")))
        };

        let (line, header) = next("header")?;
        let expected = format!("{MODEL_FILE_MAGIC} {MODEL_FILE_VERSION}");
        if header != expected {
            return Err(err(line, format!("expected `{expected}`, got `{header}`")));
        }
        let l = next("activation")?;
        let activation: Activation = field(l, "activation")?.parse().map_err(|e: Error| err(l.0, e.to_string()))?;
        let l = next("hidden")?;
        let hidden = parse_hidden(&field(l, "hidden")?).map_err(|e| err(l.0, e.to_string()))?;
        let arch = NetworkArch::new(hidden, activation).map_err(|e| err(l.0, e.to_string()))?;
        let l = next("seed")?;
        let seed = field(l, "seed")?.parse::<u64>().map_err(|e| err(l.0, e.to_string()))?;
        let l = next("epochs")?;
        let epochs_run = field(l, "epochs")?.parse::<usize>().map_err(|e| err(l.0, e.to_string()))?;
        let l = next("val_mae")?;
        let val_mae = match field(l, "val_mae")?.as_str() {
            "none" => None,
            v => Some(v.parse::<f64>().map_err(|e| err(l.0, e.to_string()))?),
        };

        let parse_row = |(line, s): (usize, &str), n: usize| -> Result<Vec<f64>> {
            let row = s
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| err(line, format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != n {
                return Err(err(line, format!("expected {n} values, got {}", row.len())));
            }
            Ok(row)
        };

        let mut layers = vec![];
        for w in arch.layer_widths().windows(2) {
            let l = next("layer")?;
            let dims = field(l, "layer")?;
            if dims != format!("{} {}", w[0], w[1]) {
                return Err(err(l.0, format!("expected layer {} {}, got `{dims}`", w[0], w[1])));
            }
            let mut weights = Vec::with_capacity(w[0] * w[1]);
            for _ in 0..w[1] {
                weights.extend(parse_row(next("weights")?, w[0])?);
            }
            let biases = parse_row(next("biases")?, w[1])?;
            layers.push(Layer::new(w[0], w[1], weights, biases)?);
        }
        let l = next("end")?;
        if l.1 != "end" {
            return Err(err(l.0, format!("expected `end`, got `{}`", l.1)));
        }
        let meta = TrainingMeta {
            seed,
            epochs_run,
            val_mae,
        };
        Self::from_layers(arch, layers, meta).map_err(|e| err(l.0, e.to_string()))
    }
}

/// Opaque reusable buffers for training loops.
pub(crate) struct WorkspaceHandle(Workspace);

fn join(values: &[f64]) -> String {
    // `{:e}` is the shortest representation that parses back to the same f64.
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}
