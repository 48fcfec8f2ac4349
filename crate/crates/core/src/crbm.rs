//! Gaussian-Bernoulli RBM conditioned on an n-step history window.
//!
//! The model couples a real-valued frame `v` (unit-variance Gaussian
//! visibles) to binary hidden units through `W`, while two extra maps shift
//! the biases as a function of the flattened history `u`:
//!
//! ```text
//! c_hat = c + A^T u        (history -> visible bias)
//! b_hat = b + D^T u        (history -> hidden bias)
//! E(v, h | u) = sum_i (v_i - c_hat_i)^2 / 2 - sum_j b_hat_j h_j - sum_ij v_i h_j w_ij
//! F(v | u)    = sum_i (v_i - c_hat_i)^2 / 2 - sum_j softplus(b_hat_j + sum_i v_i w_ij)
//! ```
//!
//! Training is contrastive divergence with momentum and weight decay;
//! encoding returns the deterministic hidden probabilities.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::window::{NormStats, WindowedInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct CrbmModel {
    pub n_v: usize,
    pub n_h: usize,
    /// History length in frames.
    pub n: usize,
    /// Visible-hidden coupling, n_v x n_h.
    pub w: Array2<f64>,
    /// History -> visible bias map, (n * n_v) x n_v.
    pub a: Array2<f64>,
    /// History -> hidden bias map, (n * n_v) x n_h.
    pub d: Array2<f64>,
    /// Visible bias.
    pub c: Array1<f64>,
    /// Hidden bias.
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub cd_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 2e-4,
            cd_k: 1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::validation("learning rate must be non-negative"));
        }
        if self.cd_k == 0 {
            return Err(Error::validation("cd_k must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        Ok(())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gradient (or statistics) container shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbmGrad {
    pub w: Array2<f64>,
    pub a: Array2<f64>,
    pub d: Array2<f64>,
    pub c: Array1<f64>,
    pub b: Array1<f64>,
}

impl CrbmGrad {
    pub fn zeros_like(model: &CrbmModel) -> CrbmGrad {
        CrbmGrad {
            w: Array2::zeros(model.w.dim()),
            a: Array2::zeros(model.a.dim()),
            d: Array2::zeros(model.d.dim()),
            c: Array1::zeros(model.c.len()),
            b: Array1::zeros(model.b.len()),
        }
    }
}

impl CrbmModel {
    /// Fresh model with W, A, D ~ Normal(0, 0.01^2) and zero biases.
    pub fn init(n_v: usize, n_h: usize, n: usize, seed: u64) -> Result<CrbmModel> {
        if n_v == 0 || n_h == 0 || n == 0 {
            return Err(Error::validation("model dimensions must be positive"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.01).expect("valid normal");
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
        };
        Ok(CrbmModel {
            n_v,
            n_h,
            n,
            w: draw(n_v, n_h),
            a: draw(n * n_v, n_v),
            d: draw(n * n_v, n_h),
            c: Array1::zeros(n_v),
            b: Array1::zeros(n_h),
        })
    }

    pub fn history_len(&self) -> usize {
        self.n * self.n_v
    }

    fn check_frame(&self, v: ArrayView1<f64>) -> Result<()> {
        if v.len() != self.n_v {
            return Err(Error::dimension(format!(
                "frame has {} entries, model expects {}",
                v.len(),
                self.n_v
            )));
        }
        Ok(())
    }

    fn check_history(&self, history: ArrayView1<f64>) -> Result<()> {
        if history.len() != self.history_len() {
            return Err(Error::dimension(format!(
                "history has {} entries, model expects {}",
                history.len(),
                self.history_len()
            )));
        }
        Ok(())
    }

    /// History-shifted biases: `c_hat = c + A^T u`, `b_hat = b + D^T u`.
    pub fn dynamic_biases(
        &self,
        history: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        self.check_history(history)?;
        let c_hat = &self.c + &self.a.t().dot(&history);
        let b_hat = &self.b + &self.d.t().dot(&history);
        Ok((c_hat, b_hat))
    }

    fn hidden_input(&self, v: ArrayView1<f64>, b_hat: &Array1<f64>) -> Array1<f64> {
        b_hat + &v.dot(&self.w)
    }

    /// `p(h_j = 1 | v, u) = logistic(b_hat_j + sum_i v_i w_ij)`.
    pub fn hidden_probs(
        &self,
        v: ArrayView1<f64>,
        history: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        self.check_frame(v)?;
        let (_, b_hat) = self.dynamic_biases(history)?;
        Ok(self.hidden_input(v, &b_hat).mapv(logistic))
    }

    /// Gaussian means of the visibles given hidden state:
    /// `mean_i = c_hat_i + sum_j w_ij h_j` (sigma fixed at 1).
    pub fn visible_means(
        &self,
        h: ArrayView1<f64>,
        history: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        if h.len() != self.n_h {
            return Err(Error::dimension(format!(
                "hidden vector has {} entries, model expects {}",
                h.len(),
                self.n_h
            )));
        }
        let (c_hat, _) = self.dynamic_biases(history)?;
        Ok(c_hat + self.w.dot(&h))
    }

    /// Free energy of a frame given its history, hidden units marginalized:
    /// `F = sum_i (v_i - c_hat_i)^2 / 2 - sum_j softplus(b_hat_j + sum_i v_i w_ij)`.
    pub fn free_energy(&self, v: ArrayView1<f64>, history: ArrayView1<f64>) -> Result<f64> {
        self.check_frame(v)?;
        let (c_hat, b_hat) = self.dynamic_biases(history)?;
        let quad: f64 = v
            .iter()
            .zip(c_hat.iter())
            .map(|(vi, ci)| (vi - ci) * (vi - ci) / 2.0)
            .sum();
        let soft: f64 = self.hidden_input(v, &b_hat).iter().map(|&x| softplus(x)).sum();
        Ok(quad - soft)
    }

    /// Analytic gradient of [`free_energy`] with respect to every parameter.
    pub fn free_energy_grad(
        &self,
        v: ArrayView1<f64>,
        history: ArrayView1<f64>,
    ) -> Result<CrbmGrad> {
        self.check_frame(v)?;
        let (c_hat, b_hat) = self.dynamic_biases(history)?;
        let p = self.hidden_input(v, &b_hat).mapv(logistic);
        let resid = &v.to_owned() - &c_hat; // v_i - c_hat_i

        let mut grad = CrbmGrad::zeros_like(self);
        // dF/dw_ij = -v_i p_j ; dF/db_j = -p_j ; dF/dc_i = -(v_i - c_hat_i)
        // dF/dA_ki = -u_k (v_i - c_hat_i) ; dF/dD_kj = -u_k p_j
        for i in 0..self.n_v {
            for j in 0..self.n_h {
                grad.w[[i, j]] = -v[i] * p[j];
            }
        }
        grad.b.assign(&p.mapv(|x| -x));
        grad.c.assign(&resid.mapv(|x| -x));
        for k in 0..self.history_len() {
            for i in 0..self.n_v {
                grad.a[[k, i]] = -history[k] * resid[i];
            }
            for j in 0..self.n_h {
                grad.d[[k, j]] = -history[k] * p[j];
            }
        }
        Ok(grad)
    }

    /// Deterministic activation vector for one instance (hidden
    /// probabilities, no sampling).
    pub fn encode(&self, instance: &WindowedInstance) -> Result<Array1<f64>> {
        let v = ArrayView1::from(&instance.frame);
        let u = ArrayView1::from(&instance.history);
        self.hidden_probs(v, u)
    }

    /// Deterministic one-step reconstruction of a frame through the hidden
    /// probabilities.
    pub fn reconstruct(&self, instance: &WindowedInstance) -> Result<Array1<f64>> {
        let v = ArrayView1::from(&instance.frame);
        let u = ArrayView1::from(&instance.history);
        let p = self.hidden_probs(v, u)?;
        self.visible_means(p.view(), u)
    }

    fn all_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
            && self.a.iter().all(|x| x.is_finite())
            && self.d.iter().all(|x| x.is_finite())
            && self.c.iter().all(|x| x.is_finite())
            && self.b.iter().all(|x| x.is_finite())
    }
}

/// Per-trainer state: momentum velocity and the Gibbs-sampling RNG.
pub struct CdState {
    pub velocity: CrbmGrad,
    pub rng: ChaCha20Rng,
}

impl CdState {
    pub fn new(model: &CrbmModel, seed: u64) -> CdState {
        CdState { velocity: CrbmGrad::zeros_like(model), rng: ChaCha20Rng::seed_from_u64(seed) }
    }
}

/// One CD-k parameter update over a mini-batch. Returns the mean squared
/// error between the data frames and their one-step reconstructions from
/// the Gibbs chain.
///
/// Update rule per parameter theta with statistics S:
/// `delta = momentum * delta_prev + lr * ((S_data - S_model) / |batch| - weight_decay * theta)`.
pub fn cd_update(
    model: &mut CrbmModel,
    batch: &[WindowedInstance],
    config: &TrainConfig,
    state: &mut CdState,
) -> Result<f64> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::validation("cd_update needs a non-empty batch"));
    }

    let mut pos = CrbmGrad::zeros_like(model);
    let mut neg = CrbmGrad::zeros_like(model);
    let mut recon_sse = 0.0;

    for inst in batch {
        let v0 = ArrayView1::from(&inst.frame);
        let u = ArrayView1::from(&inst.history);
        model.check_frame(v0)?;
        let (c_hat, b_hat) = model.dynamic_biases(u)?;

        let p0 = model.hidden_input(v0, &b_hat).mapv(logistic);

        // positive statistics (negated free-energy gradient at the data)
        accumulate(&mut pos, v0, &p0, &c_hat, u);

        // Gibbs chain: sample h, move to visible means, re-infer.
        let mut h: Array1<f64> =
            p0.mapv(|p| if state.rng.gen::<f64>() < p { 1.0 } else { 0.0 });
        let mut vk = Array1::zeros(model.n_v);
        let mut pk = Array1::zeros(model.n_h);
        for step in 0..config.cd_k {
            vk = &c_hat + &model.w.dot(&h);
            pk = model.hidden_input(vk.view(), &b_hat).mapv(logistic);
            if step + 1 < config.cd_k {
                h = pk.mapv(|p| if state.rng.gen::<f64>() < p { 1.0 } else { 0.0 });
            }
            if step == 0 {
                recon_sse += v0
                    .iter()
                    .zip(vk.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }

        accumulate(&mut neg, vk.view(), &pk, &c_hat, u);
    }

    let scale = config.learning_rate / batch.len() as f64;
    let wd = config.learning_rate * config.weight_decay;
    let m = config.momentum;

    macro_rules! step_param {
        ($param:ident) => {{
            let delta = state.velocity.$param.mapv(|v| v * m)
                + (&pos.$param - &neg.$param).mapv(|g| g * scale)
                - model.$param.mapv(|p| p * wd);
            model.$param += &delta;
            state.velocity.$param = delta;
        }};
    }
    step_param!(w);
    step_param!(a);
    step_param!(d);
    step_param!(c);
    step_param!(b);

    if !model.all_finite() {
        return Err(Error::Divergence(
            "CRBM parameters became non-finite during training".into(),
        ));
    }

    Ok(recon_sse / (batch.len() * model.n_v) as f64)
}

fn accumulate(
    stats: &mut CrbmGrad,
    v: ArrayView1<f64>,
    p: &Array1<f64>,
    c_hat: &Array1<f64>,
    u: ArrayView1<f64>,
) {
    let n_v = v.len();
    let n_h = p.len();
    for i in 0..n_v {
        for j in 0..n_h {
            stats.w[[i, j]] += v[i] * p[j];
        }
    }
    for i in 0..n_v {
        stats.c[i] += v[i] - c_hat[i];
    }
    for j in 0..n_h {
        stats.b[j] += p[j];
    }
    for k in 0..u.len() {
        let uk = u[k];
        if uk == 0.0 {
            continue;
        }
        for i in 0..n_v {
            stats.a[[k, i]] += uk * (v[i] - c_hat[i]);
        }
        for j in 0..n_h {
            stats.d[[k, j]] += uk * p[j];
        }
    }
}

/// Full training loop: `epochs` passes of shuffled mini-batches. Returns
/// the trained model and the per-epoch mean reconstruction MSE.
pub fn train(
    model_init: CrbmModel,
    dataset: &[WindowedInstance],
    config: &TrainConfig,
) -> Result<(CrbmModel, Vec<f64>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    let mut model = model_init;
    let mut state = CdState::new(&model, config.seed);
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for _ in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut sse_weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<WindowedInstance> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let mse = cd_update(&mut model, &batch, config, &mut state)?;
            sse_weighted += mse * chunk.len() as f64;
        }
        curve.push(sse_weighted / dataset.len() as f64);
    }
    Ok((model, curve))
}

/// Mean reconstruction MSE of a set of windows through the deterministic
/// encode/decode path.
pub fn simulate_reconstruction(
    model: &CrbmModel,
    windows: &[WindowedInstance],
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::validation("no windows to reconstruct"));
    }
    let mut sse = 0.0;
    for inst in windows {
        let recon = model.reconstruct(inst)?;
        sse += inst
            .frame
            .iter()
            .zip(recon.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(sse / (windows.len() * model.n_v) as f64)
}

const MODEL_VERSION: u32 = 1;

/// On-disk form: versioned JSON with row-major matrices.
#[derive(Serialize, Deserialize)]
struct CrbmModelFile {
    version: u32,
    n_v: usize,
    n_h: usize,
    n: usize,
    w: Vec<f64>,
    a: Vec<f64>,
    d: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    norm_stats: NormStats,
}

pub fn save_model<W: Write>(model: &CrbmModel, stats: &NormStats, writer: W) -> Result<()> {
    let file = CrbmModelFile {
        version: MODEL_VERSION,
        n_v: model.n_v,
        n_h: model.n_h,
        n: model.n,
        w: model.w.iter().copied().collect(),
        a: model.a.iter().copied().collect(),
        d: model.d.iter().copied().collect(),
        b: model.b.to_vec(),
        c: model.c.to_vec(),
        norm_stats: stats.clone(),
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

pub fn load_model<R: Read>(reader: R) -> Result<(CrbmModel, NormStats)> {
    let file: CrbmModelFile = serde_json::from_reader(reader)?;
    if file.version != MODEL_VERSION {
        return Err(Error::parse(format!("unsupported model version {}", file.version)));
    }
    let shape_err = |name: &str| Error::dimension(format!("model matrix '{name}' has wrong size"));
    let w = Array2::from_shape_vec((file.n_v, file.n_h), file.w).map_err(|_| shape_err("W"))?;
    let a = Array2::from_shape_vec((file.n * file.n_v, file.n_v), file.a)
        .map_err(|_| shape_err("A"))?;
    let d = Array2::from_shape_vec((file.n * file.n_v, file.n_h), file.d)
        .map_err(|_| shape_err("D"))?;
    if file.b.len() != file.n_h || file.c.len() != file.n_v {
        return Err(shape_err("bias"));
    }
    let model = CrbmModel {
        n_v: file.n_v,
        n_h: file.n_h,
        n: file.n,
        w,
        a,
        d,
        c: Array1::from_vec(file.c),
        b: Array1::from_vec(file.b),
    };
    if !model.all_finite() {
        return Err(Error::parse("model file contains non-finite parameters"));
    }
    Ok((model, file.norm_stats))
}

pub fn save_model_file(model: &CrbmModel, stats: &NormStats, path: &Path) -> Result<()> {
    save_model(model, stats, BufWriter::new(File::create(path)?))
}

pub fn load_model_file(path: &Path) -> Result<(CrbmModel, NormStats)> {
    let file = File::open(path)
        .map_err(|e| Error::MissingArtifact(format!("model file '{}': {e}", path.display())))?;
    load_model(BufReader::new(file))
}
