//! Per-modality regression network: one LSTM layer over the `k` segment
//! vectors of a video, a three-layer fully connected head applied at every
//! step, and hand-written backpropagation through time.

use serde::{Deserialize, Serialize};

use crate::data::{ModalityTag, VideoSample};
use crate::error::{Error, Result};
use crate::numcore::{dot, relu, relu_grad, seeded_rng, sigmoid, DetRng, Matrix, Param, Parameterized};

/// Gate order used everywhere a per-gate array appears.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn suffix(self) -> &'static str {
        ["i", "f", "o", "g"][self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub hidden: usize,
    pub h1: usize,
    pub h2: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            hidden: 64,
            h1: 512,
            h2: 128,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("hidden_dim", self.hidden), ("h1", self.h1), ("h2", self.h2)] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }
}

/// How per-step scores become the video score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Mean of the scores of all steps.
    #[default]
    PerStep,
    /// Score of the final step only.
    LastStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    input_dim: usize,
    hidden_dim: usize,
    /// Input weights per gate, `H x D`.
    pub w: [Param; 4],
    /// Recurrent weights per gate, `H x H`.
    pub u: [Param; 4],
    /// Biases per gate, `H x 1`.
    pub b: [Param; 4],
}

impl LstmParams {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn gate_input_weights(&self, gate: Gate) -> &Matrix {
        &self.w[gate as usize].value
    }
}

/// Affine `H -> h1 -> h2 -> 1`, relu on the two hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
    pub w3: Param,
    pub b3: Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    modality: ModalityTag,
    head_mode: HeadMode,
    pub lstm: LstmParams,
    pub head: HeadParams,
}

fn xavier(rows: usize, cols: usize, rng: &mut DetRng) -> Param {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Param::new(Matrix::uniform(rows, cols, s, rng))
}

/// Builds a freshly initialised model for `modality`.
///
/// Weight matrices are Xavier-uniform, biases zero except the forget-gate
/// bias, which starts at 1.
pub fn init_model(modality: ModalityTag, dims: ModelDims, seed: u64) -> Result<RegressionModel> {
    dims.validate()?;
    let mut rng = seeded_rng(seed);
    let d = modality.dims();
    let h = dims.hidden;
    let w = std::array::from_fn(|_| xavier(h, d, &mut rng));
    let u = std::array::from_fn(|_| xavier(h, h, &mut rng));
    let b = std::array::from_fn(|g| {
        let fill = if g == Gate::Forget as usize { 1.0 } else { 0.0 };
        Param::new(Matrix::filled(h, 1, fill))
    });
    let head = HeadParams {
        w1: xavier(dims.h1, h, &mut rng),
        b1: Param::new(Matrix::zeros(dims.h1, 1)),
        w2: xavier(dims.h2, dims.h1, &mut rng),
        b2: Param::new(Matrix::zeros(dims.h2, 1)),
        w3: xavier(1, dims.h2, &mut rng),
        b3: Param::new(Matrix::zeros(1, 1)),
    };
    Ok(RegressionModel {
        modality,
        head_mode: HeadMode::default(),
        lstm: LstmParams {
            input_dim: d,
            hidden_dim: h,
            w,
            u,
            b,
        },
        head,
    })
}

/// Intermediates of one LSTM + head step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub input: Vec<f64>,
    /// Post-activation gates in [`Gate`] order.
    pub gates: [Vec<f64>; 4],
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub steps: Vec<StepTrace>,
    /// Mean over steps of the penultimate (`h2`) activation.
    pub embedding: Vec<f64>,
}

impl ForwardTrace {
    pub fn scores(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.score).collect()
    }

    pub fn k(&self) -> usize {
        self.steps.len()
    }
}

/// Combines per-step scores into one video score.
pub fn aggregate_scores(scores: &[f64], mode: HeadMode) -> f64 {
    match mode {
        HeadMode::PerStep => scores.iter().sum::<f64>() / scores.len() as f64,
        HeadMode::LastStep => *scores.last().expect("at least one step"),
    }
}

impl RegressionModel {
    pub fn modality(&self) -> ModalityTag {
        self.modality
    }

    pub fn head_mode(&self) -> HeadMode {
        self.head_mode
    }

    pub fn set_head_mode(&mut self, mode: HeadMode) {
        self.head_mode = mode;
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            hidden: self.lstm.hidden_dim,
            h1: self.head.w1.value.rows(),
            h2: self.head.w2.value.rows(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.head.w2.value.rows()
    }

    /// Runs the network over `inputs` (one vector per segment), starting
    /// from zero hidden and cell state.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<ForwardTrace> {
        if inputs.is_empty() {
            return Err(Error::Empty("segment sequence"));
        }
        let d = self.lstm.input_dim;
        let h = self.lstm.hidden_dim;
        let ModelDims { h1, h2, .. } = self.dims();
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut steps = Vec::with_capacity(inputs.len());
        let mut embedding = vec![0.0; h2];
        let mut tmp = vec![0.0; h];

        for (t, x) in inputs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::InputDimension {
                    step: t,
                    expected: d,
                    found: x.len(),
                });
            }
            let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
                let mut pre = vec![0.0; h];
                self.lstm.w[g].value.matvec_into(x, &mut pre);
                self.lstm.u[g].value.matvec_into(&h_prev, &mut tmp);
                let bias = self.lstm.b[g].value.as_slice();
                for j in 0..h {
                    pre[j] += tmp[j] + bias[j];
                }
                if g == Gate::Candidate as usize {
                    pre.iter_mut().for_each(|v| *v = v.tanh());
                } else {
                    pre.iter_mut().for_each(|v| *v = sigmoid(*v));
                }
                pre
            });
            let [ig, fg, og, gg] = &gates;
            let cell: Vec<f64> = (0..h).map(|j| fg[j] * c_prev[j] + ig[j] * gg[j]).collect();
            let cell_tanh: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
            let hidden: Vec<f64> = (0..h).map(|j| og[j] * cell_tanh[j]).collect();

            let mut z1 = vec![0.0; h1];
            self.head.w1.value.matvec_into(&hidden, &mut z1);
            for (z, b) in z1.iter_mut().zip(self.head.b1.value.as_slice()) {
                *z += b;
            }
            let a1: Vec<f64> = z1.iter().map(|&v| relu(v)).collect();
            let mut z2 = vec![0.0; h2];
            self.head.w2.value.matvec_into(&a1, &mut z2);
            for (z, b) in z2.iter_mut().zip(self.head.b2.value.as_slice()) {
                *z += b;
            }
            let a2: Vec<f64> = z2.iter().map(|&v| relu(v)).collect();
            let score = dot(self.head.w3.value.as_slice(), &a2) + self.head.b3.value.get(0, 0);
            for (e, a) in embedding.iter_mut().zip(&a2) {
                *e += a;
            }

            h_prev.clone_from(&hidden);
            c_prev.clone_from(&cell);
            steps.push(StepTrace {
                input: x.clone(),
                gates,
                cell,
                cell_tanh,
                hidden,
                z1,
                a1,
                z2,
                a2,
                score,
            });
        }
        let k = steps.len() as f64;
        embedding.iter_mut().for_each(|e| *e /= k);
        Ok(ForwardTrace { steps, embedding })
    }

    /// Video score for `sample` under the model's head mode.
    pub fn predict_video(&self, sample: &VideoSample) -> Result<f64> {
        let trace = self.forward(sample.features(self.modality)?)?;
        Ok(aggregate_scores(&trace.scores(), self.head_mode))
    }

    /// Spreads a gradient w.r.t. the video score onto the per-step scores.
    pub fn score_upstream(&self, k: usize, d_video: f64) -> Vec<f64> {
        match self.head_mode {
            HeadMode::PerStep => vec![d_video / k as f64; k],
            HeadMode::LastStep => {
                let mut d = vec![0.0; k];
                d[k - 1] = d_video;
                d
            }
        }
    }

    /// Backpropagates through `trace`, accumulating into every parameter's
    /// `grad`, and returns the gradient w.r.t. each input vector.
    pub fn backward(
        &mut self,
        trace: &ForwardTrace,
        d_scores: &[f64],
        d_embedding: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let d = self.lstm.input_dim;
        let h = self.lstm.hidden_dim;
        let ModelDims { h1, h2, .. } = self.dims();
        let k = trace.steps.len();
        if k == 0 || d_scores.len() != k {
            return Err(Error::TraceMismatch(format!(
                "{} score gradients for {k} steps",
                d_scores.len()
            )));
        }
        if d_embedding.len() != h2 {
            return Err(Error::TraceMismatch(format!(
                "embedding gradient has {} entries, model h2 is {h2}",
                d_embedding.len()
            )));
        }
        let step_ok = |s: &StepTrace| {
            s.input.len() == d && s.hidden.len() == h && s.a1.len() == h1 && s.a2.len() == h2
        };
        if !trace.steps.iter().all(step_ok) {
            return Err(Error::TraceMismatch("step shapes differ from model dims".into()));
        }

        let de_step: Vec<f64> = d_embedding.iter().map(|v| v / k as f64).collect();
        let zeros = vec![0.0; h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut d_inputs = vec![vec![0.0; d]; k];

        for t in (0..k).rev() {
            let s = &trace.steps[t];
            let dr = d_scores[t];

            // head
            let mut d_a2 = de_step.clone();
            for (g, w) in d_a2.iter_mut().zip(self.head.w3.value.as_slice()) {
                *g += w * dr;
            }
            self.head.w3.grad.add_outer(&[dr], &s.a2);
            self.head.b3.grad.as_mut_slice()[0] += dr;

            let d_z2: Vec<f64> = d_a2.iter().zip(&s.z2).map(|(g, z)| g * relu_grad(*z)).collect();
            self.head.w2.grad.add_outer(&d_z2, &s.a1);
            self.head.b2.grad.add_assign_slice(&d_z2);
            let mut d_a1 = vec![0.0; h1];
            self.head.w2.value.matvec_t_acc(&d_z2, &mut d_a1);

            let d_z1: Vec<f64> = d_a1.iter().zip(&s.z1).map(|(g, z)| g * relu_grad(*z)).collect();
            self.head.w1.grad.add_outer(&d_z1, &s.hidden);
            self.head.b1.grad.add_assign_slice(&d_z1);
            let mut d_h = dh_next.clone();
            self.head.w1.value.matvec_t_acc(&d_z1, &mut d_h);

            // lstm cell
            let [ig, fg, og, gg] = &s.gates;
            let c_prev = if t > 0 { &trace.steps[t - 1].cell } else { &zeros };
            let h_prev = if t > 0 { &trace.steps[t - 1].hidden } else { &zeros };
            let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
            for j in 0..h {
                let th = s.cell_tanh[j];
                let d_o = d_h[j] * th;
                let d_c = d_h[j] * og[j] * (1.0 - th * th) + dc_next[j];
                let d_i = d_c * gg[j];
                let d_g = d_c * ig[j];
                let d_f = d_c * c_prev[j];
                dc_next[j] = d_c * fg[j];
                d_pre[Gate::Input as usize][j] = d_i * ig[j] * (1.0 - ig[j]);
                d_pre[Gate::Forget as usize][j] = d_f * fg[j] * (1.0 - fg[j]);
                d_pre[Gate::Output as usize][j] = d_o * og[j] * (1.0 - og[j]);
                d_pre[Gate::Candidate as usize][j] = d_g * (1.0 - gg[j] * gg[j]);
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for g in 0..4 {
                let dp = &d_pre[g];
                self.lstm.w[g].grad.add_outer(dp, &s.input);
                self.lstm.u[g].grad.add_outer(dp, h_prev);
                self.lstm.b[g].grad.add_assign_slice(dp);
                self.lstm.w[g].value.matvec_t_acc(dp, &mut d_inputs[t]);
                self.lstm.u[g].value.matvec_t_acc(dp, &mut dh_next);
            }
        }
        Ok(d_inputs)
    }

    /// Parameters paired with their stable checkpoint names.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::with_capacity(18);
        for (kind, arr) in [("w", &self.lstm.w), ("u", &self.lstm.u), ("b", &self.lstm.b)] {
            for g in Gate::ALL {
                out.push((format!("lstm.{kind}_{}", g.suffix()), &arr[g as usize]));
            }
        }
        let hp = &self.head;
        for (name, p) in [
            ("head.w1", &hp.w1),
            ("head.b1", &hp.b1),
            ("head.w2", &hp.w2),
            ("head.b2", &hp.b2),
            ("head.w3", &hp.w3),
            ("head.b3", &hp.b3),
        ] {
            out.push((name.to_string(), p));
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }

    /// Whether the parameter with this checkpoint name is a bias vector.
    pub fn is_bias_name(name: &str) -> bool {
        name.starts_with("lstm.b_") || name.starts_with("head.b")
    }

    /// Rebuilds a model from parameter values in [`named_params`](Self::named_params) order.
    pub fn from_parts(
        modality: ModalityTag,
        dims: ModelDims,
        head_mode: HeadMode,
        values: Vec<Matrix>,
    ) -> Result<Self> {
        let mut model = init_model(modality, dims, 0)?;
        model.head_mode = head_mode;
        let names = model.param_names();
        if values.len() != names.len() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: values.len(),
            });
        }
        for ((p, v), name) in model.params_mut().into_iter().zip(values).zip(&names) {
            if p.value.shape() != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: if name.starts_with("lstm") { "lstm parameter" } else { "head parameter" },
                    left: p.value.shape(),
                    right: v.shape(),
                });
            }
            *p = Param::new(v);
        }
        Ok(model)
    }
}

impl Parameterized for RegressionModel {
    fn params(&self) -> Vec<&Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let LstmParams { w, u, b, .. } = &mut self.lstm;
        let HeadParams {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        } = &mut self.head;
        w.iter_mut()
            .chain(u.iter_mut())
            .chain(b.iter_mut())
            .chain([w1, b1, w2, b2, w3, b3])
            .collect()
    }
}
