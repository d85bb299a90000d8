//! Action-quality model: two input streams per modality, a static graph
//! convolution, a convolutional GRU over frames, a data-dependent joint
//! adjacency, a cascade of residual graph blocks, and a temporal attention
//! fusion of the position and angle branches into one score.
//!
//! Everything is expressed through `Tape` ops, so one `backward` call yields
//! gradients for every parameter. The dynamic adjacency is symmetrized,
//! masked to the skeleton topology, and degree-normalized on tape, which
//! keeps its spectral radius at most one and its gradient exact.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Stream;
use crate::skeleton::{SkeletonSequence, CHANNELS};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use crate::topology::{build_adjacency, normalize_adjacency, Topology};

// ── configuration ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_joints: usize,
    /// Features per input stream; the two streams concatenate to twice this.
    pub stream_features: usize,
    /// Width of the graph and recurrent feature space.
    pub hidden: usize,
    /// Temporal kernel width, odd.
    pub k_time: usize,
    /// Joint-axis kernel width, odd.
    pub k_joint: usize,
    pub res_blocks: usize,
    pub fusion_units: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(n_joints: usize) -> ModelConfig {
        ModelConfig {
            n_joints,
            stream_features: 16,
            hidden: 16,
            k_time: 9,
            k_joint: 3,
            res_blocks: 3,
            fusion_units: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints < 2 {
            return Err(Error::Config(format!("n_joints {} is below 2", self.n_joints)));
        }
        for (label, v) in [
            ("stream_features", self.stream_features),
            ("hidden", self.hidden),
            ("res_blocks", self.res_blocks),
            ("fusion_units", self.fusion_units),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{label} must be positive")));
            }
        }
        for (label, k) in [("k_time", self.k_time), ("k_joint", self.k_joint)] {
            if k % 2 == 0 || k == 0 {
                return Err(Error::Config(format!("{label} {k} must be odd")));
            }
        }
        Ok(())
    }

    /// Name and shape of every parameter, in ascending name order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (f, d) = (self.stream_features, self.hidden);
        let (kt, kj) = (self.k_time, self.k_joint);
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for m in ["pos", "ang"] {
            out.push((format!("{m}.stream.time_kernel"), vec![kt, CHANNELS, f]));
            out.push((format!("{m}.stream.joint_kernel"), vec![kj, CHANNELS, f]));
            out.push((format!("{m}.gcn.weight"), vec![2 * f, d]));
            for gate in ["update", "reset", "cand"] {
                out.push((format!("{m}.gru.{gate}_x"), vec![kj, d, d]));
                out.push((format!("{m}.gru.{gate}_h"), vec![kj, d, d]));
                out.push((format!("{m}.gru.{gate}_b"), vec![d]));
            }
            for r in 1..=self.res_blocks {
                out.push((format!("{m}.res{r}.time_kernel"), vec![kt, d, d]));
                out.push((format!("{m}.res{r}.graph_weight"), vec![d, d]));
            }
        }
        out.push(("fusion.hidden_w".into(), vec![2 * d, self.fusion_units]));
        out.push(("fusion.hidden_b".into(), vec![self.fusion_units]));
        out.push(("fusion.logit_w".into(), vec![self.fusion_units, 1]));
        out.push(("fusion.logit_b".into(), vec![1]));
        out.push(("head.weight".into(), vec![2 * d, 1]));
        out.push(("head.bias".into(), vec![1]));
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

/// Uniform initialization half-width from the fan sum: biases start at zero,
/// matrices use their two axes as fans, kernels multiply both fans by the
/// kernel width.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape.len() {
        1 => return 0.0,
        2 => (shape[0], shape[1]),
        3 => (shape[0] * shape[1], shape[0] * shape[2]),
        _ => unreachable!("parameters are rank 1, 2, or 3"),
    };
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

// ── reusable blocks ─────────────────────────────────────────────────────

/// Per-frame graph convolution: mixes joints through `adj3` `[T, N, N]`
/// and projects features through `weight` `[F_in, F_out]`.
pub fn graph_conv(tape: &mut Tape, x: NodeId, adj3: NodeId, weight: NodeId) -> Result<NodeId> {
    let mixed = tape.bmm_left(adj3, x)?;
    let (t, n, fin) = dims3(tape, mixed);
    let fout = tape.value(weight).shape()[1];
    let flat = tape.reshape(mixed, vec![t * n, fin])?;
    let proj = tape.matmul(flat, weight)?;
    tape.reshape(proj, vec![t, n, fout])
}

/// Parameter handles of one convolutional GRU.
pub struct GruParams {
    pub update_x: NodeId,
    pub update_h: NodeId,
    pub update_b: NodeId,
    pub reset_x: NodeId,
    pub reset_h: NodeId,
    pub reset_b: NodeId,
    pub cand_x: NodeId,
    pub cand_h: NodeId,
    pub cand_b: NodeId,
}

impl GruParams {
    /// Looks up the nine `prefix.*` parameters, e.g. prefix `pos.gru`.
    pub fn bind(params: &BoundParams, prefix: &str) -> Result<GruParams> {
        Ok(GruParams {
            update_x: params.node(&format!("{prefix}.update_x"))?,
            update_h: params.node(&format!("{prefix}.update_h"))?,
            update_b: params.node(&format!("{prefix}.update_b"))?,
            reset_x: params.node(&format!("{prefix}.reset_x"))?,
            reset_h: params.node(&format!("{prefix}.reset_h"))?,
            reset_b: params.node(&format!("{prefix}.reset_b"))?,
            cand_x: params.node(&format!("{prefix}.cand_x"))?,
            cand_h: params.node(&format!("{prefix}.cand_h"))?,
            cand_b: params.node(&format!("{prefix}.cand_b"))?,
        })
    }
}

/// One GRU step over a frame `[N, d]`. Gates convolve along the joint axis;
/// the state blends the current input with the candidate,
/// `h = z (*) x + (1 - z) (*) o`.
pub fn convgru_step(tape: &mut Tape, x: NodeId, h_prev: NodeId, p: &GruParams) -> Result<NodeId> {
    let gate = |tape: &mut Tape, kx, kh, b, src| -> Result<NodeId> {
        let cx = tape.conv1d(x, kx, 0)?;
        let ch = tape.conv1d(src, kh, 0)?;
        let s = tape.add(cx, ch)?;
        tape.add(s, b)
    };
    let z_in = gate(tape, p.update_x, p.update_h, p.update_b, h_prev)?;
    let z = tape.sigmoid(z_in);
    let r_in = gate(tape, p.reset_x, p.reset_h, p.reset_b, h_prev)?;
    let r = tape.sigmoid(r_in);
    let gated = tape.hadamard(r, h_prev)?;
    let o_in = gate(tape, p.cand_x, p.cand_h, p.cand_b, gated)?;
    let o = tape.tanh(o_in);
    let keep = tape.hadamard(z, x)?;
    let one_minus_z = tape.affine(z, -1.0, 1.0);
    let blend = tape.hadamard(one_minus_z, o)?;
    tape.add(keep, blend)
}

/// Runs the GRU over every frame of `[T, N, d]` from a zero state and
/// stacks the states back into `[T, N, d]`.
pub fn convgru_encode(tape: &mut Tape, x: NodeId, p: &GruParams) -> Result<NodeId> {
    let (t, n, d) = dims3(tape, x);
    let mut h = tape.leaf(Tensor::zeros(vec![n, d]));
    let mut frames = Vec::with_capacity(t);
    for frame in 0..t {
        let x_t = tape.slice_frame(x, frame)?;
        h = convgru_step(tape, x_t, h, p)?;
        frames.push(h);
    }
    tape.stack_frames(&frames)
}

/// Data-dependent adjacency from hidden states `[T, N, d]`.
///
/// Returns the degree-normalized symmetric adjacency `[T, N, N]` restricted
/// to the skeleton (`mask3` is the 0/1 topology with self loops tiled over
/// frames) and the per-frame joint attention `[T, N]`. With identical
/// hidden rows the affinity softmax is uniform, so the output collapses to
/// the degree-normalized static adjacency.
pub fn dynamic_adjacency(
    tape: &mut Tape,
    h: NodeId,
    mask3: NodeId,
) -> Result<(NodeId, NodeId)> {
    let (t, n, d) = dims3(tape, h);
    let scores = tape.bmm_nt(h, h)?;
    let scaled = tape.affine(scores, 1.0 / libm::sqrt(d as f64), 0.0);
    let m = tape.softmax(scaled, 2)?;
    // Attention received: averaging over axis 2 would always give 1/n
    // (each row of a softmax sums to one), so chi averages each column.
    let received = tape.reduce_mean(m, 1)?;
    let chi = tape.softmax(received, 1)?;
    let mt = tape.transpose_frames(m)?;
    let msum = tape.add(m, mt)?;
    let msym = tape.affine(msum, 0.5, 0.0);
    let masked = tape.hadamard(msym, mask3)?;
    // Self loops keep every degree positive: diag(M) > 0 after softmax.
    let deg = tape.reduce_sum(masked, 2)?;
    let inv_root = tape.rsqrt(deg);
    let col = tape.reshape(inv_root, vec![t, n, 1])?;
    let outer = tape.bmm_nt(col, col)?;
    let atilde = tape.hadamard(masked, outer)?;
    Ok((atilde, chi))
}

/// Residual unit: temporal convolution, graph convolution over the dynamic
/// adjacency, relu, then the skip connection.
pub fn residual_block(
    tape: &mut Tape,
    x: NodeId,
    adj3: NodeId,
    time_kernel: NodeId,
    graph_weight: NodeId,
) -> Result<NodeId> {
    let c = tape.conv1d(x, time_kernel, 0)?;
    let g = graph_conv(tape, c, adj3, graph_weight)?;
    let a = tape.relu(g);
    tape.add(x, a)
}

/// Repeats a `[N, M]` matrix across `t` frames.
pub fn tile_frames(t: usize, base: &Tensor) -> Tensor {
    let shape = base.shape();
    let mut data = Vec::with_capacity(t * base.numel());
    for _ in 0..t {
        data.extend_from_slice(base.data());
    }
    Tensor::raw(vec![t, shape[0], shape[1]], data)
}

/// Clamps a raw head output into the score range. Applied at reporting
/// time only; training sees the raw value.
pub fn clamp_score(raw: f64) -> f64 {
    raw.clamp(0.0, 1.0)
}

/// Temporal mean of a `[T, N]` attention map: one weight per joint.
pub fn role_vector(chi: &Tensor) -> Vec<f64> {
    let (t, n) = (chi.shape()[0], chi.shape()[1]);
    let mut out = vec![0.0; n];
    for frame in 0..t {
        for j in 0..n {
            out[j] += chi.at(&[frame, j]) / t as f64;
        }
    }
    out
}

// ── the assembled model ─────────────────────────────────────────────────

pub struct Model {
    config: ModelConfig,
    /// Degree-normalized static adjacency with self loops, `[N, N]`.
    adj_static: Tensor,
    /// Raw 0/1 adjacency with self loops, `[N, N]`.
    adj_mask: Tensor,
}

/// Handles into the tape for the score and every attention read-out.
pub struct ForwardPass {
    /// Raw score, shape `[1, 1]`; clamp only when reporting.
    pub score: NodeId,
    /// Temporal fusion attention, `[T, 1]`, sums to one over frames.
    pub fusion_att: NodeId,
    /// Per-frame joint attention of each branch, `[T, N]`.
    pub chi_pos: NodeId,
    pub chi_ang: NodeId,
    /// Dynamic adjacency of each branch, `[T, N, N]`.
    pub dyn_adj_pos: NodeId,
    pub dyn_adj_ang: NodeId,
}

/// Attention values copied out of a finished tape.
#[derive(Debug, Clone)]
pub struct AttentionRead {
    pub score: f64,
    pub fusion: Vec<f64>,
    pub chi_pos: Tensor,
    pub chi_ang: Tensor,
    pub role_pos: Vec<f64>,
    pub role_ang: Vec<f64>,
}

struct ModalityTrace {
    features: NodeId,
    chi: NodeId,
    dyn_adj: NodeId,
}

impl Model {
    pub fn new(config: ModelConfig, topology: &Topology) -> Result<Model> {
        config.validate()?;
        if topology.n_joints() != config.n_joints {
            return Err(Error::Config(format!(
                "topology has {} joints, config expects {}",
                topology.n_joints(),
                config.n_joints
            )));
        }
        let mask = build_adjacency(topology, true);
        let adj_static = normalize_adjacency(&mask)?.values().clone();
        Ok(Model { config, adj_static, adj_mask: mask.values().clone() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn static_adjacency(&self) -> &Tensor {
        &self.adj_static
    }

    pub fn adjacency_mask(&self) -> &Tensor {
        &self.adj_mask
    }

    /// Fresh parameters drawn in ascending name order from the config seed.
    pub fn init_params(&self) -> ParamStore {
        let mut rng = Stream::new(self.config.seed);
        let mut store = ParamStore::new();
        for (name, shape) in self.config.param_shapes() {
            let bound = glorot_bound(&shape);
            let numel: usize = shape.iter().product();
            let data: Vec<f64> = if bound == 0.0 {
                vec![0.0; numel]
            } else {
                (0..numel).map(|_| rng.uniform(-bound, bound)).collect()
            };
            store
                .insert(&name, Tensor::raw(shape, data))
                .expect("parameter names are unique");
        }
        store
    }

    /// Runs the full network on one normalized sequence pair. Inputs are
    /// `[T, N, 3]` with `T >= 2` and `N` matching the topology.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        positions: &Tensor,
        angles: &Tensor,
    ) -> Result<ForwardPass> {
        self.check_input(positions).map_err(|e| e.at_stage("positions"))?;
        self.check_input(angles).map_err(|e| e.at_stage("angles"))?;
        let x_pos = tape.leaf(positions.clone());
        let x_ang = tape.leaf(angles.clone());
        let pos = self.encode_modality(tape, params, "pos", x_pos)?;
        let ang = self.encode_modality(tape, params, "ang", x_ang)?;

        let joint = tape.concat(pos.features, ang.features, 1).map_err(|e| e.at_stage("fusion"))?;
        let w1 = params.node("fusion.hidden_w")?;
        let b1 = params.node("fusion.hidden_b")?;
        let hidden = tape.matmul(joint, w1).map_err(|e| e.at_stage("fusion"))?;
        let hidden = tape.add(hidden, b1)?;
        let hidden = tape.relu(hidden);
        let w2 = params.node("fusion.logit_w")?;
        let b2 = params.node("fusion.logit_b")?;
        let logits = tape.matmul(hidden, w2)?;
        let logits = tape.add(logits, b2)?;
        let fusion_att = tape.softmax(logits, 0)?;
        let weighted = tape.hadamard(joint, fusion_att)?;
        let pooled = tape.reduce_mean(weighted, 0)?;
        let width = tape.value(pooled).numel();
        let pooled = tape.reshape(pooled, vec![1, width])?;
        let hw = params.node("head.weight")?;
        let hb = params.node("head.bias")?;
        let out = tape.matmul(pooled, hw).map_err(|e| e.at_stage("head"))?;
        let score = tape.add(out, hb)?;
        tape.value(score).check_finite().map_err(|e| e.at_stage("head"))?;
        Ok(ForwardPass {
            score,
            fusion_att,
            chi_pos: pos.chi,
            chi_ang: ang.chi,
            dyn_adj_pos: pos.dyn_adj,
            dyn_adj_ang: ang.dyn_adj,
        })
    }

    /// `forward` on a sequence that has been through `normalize`.
    pub fn forward_seq(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        seq: &SkeletonSequence,
    ) -> Result<ForwardPass> {
        if !seq.normalized {
            return Err(Error::Contract("sequence must be normalized before forward".into()));
        }
        self.forward(tape, params, &seq.positions, &seq.angles)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 3 || s[2] != CHANNELS {
            return Err(Error::dim(format!("input must be [T, N, 3], got {s:?}")));
        }
        if s[1] != self.config.n_joints {
            return Err(Error::dim(format!(
                "input has {} joints, model expects {}",
                s[1], self.config.n_joints
            )));
        }
        if s[0] < 2 {
            return Err(Error::dim(format!("input needs at least 2 frames, got {}", s[0])));
        }
        x.check_finite()
    }

    fn encode_modality(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        prefix: &str,
        x: NodeId,
    ) -> Result<ModalityTrace> {
        let stage = |e: Error, what: &str| e.at_stage(&format!("{prefix} {what}"));
        let t = tape.value(x).shape()[0];

        let tk = params.node(&format!("{prefix}.stream.time_kernel"))?;
        let jk = params.node(&format!("{prefix}.stream.joint_kernel"))?;
        let s_time = tape.conv1d(x, tk, 0).map_err(|e| stage(e, "stream"))?;
        let s_time = tape.relu(s_time);
        let s_joint = tape.conv1d(x, jk, 1).map_err(|e| stage(e, "stream"))?;
        let s_joint = tape.relu(s_joint);
        let z = tape.concat(s_time, s_joint, 2)?;

        let w = params.node(&format!("{prefix}.gcn.weight"))?;
        let adj3 = tape.leaf(tile_frames(t, &self.adj_static));
        let g = graph_conv(tape, z, adj3, w).map_err(|e| stage(e, "graph"))?;
        let g = tape.relu(g);

        let gru = GruParams::bind(params, &format!("{prefix}.gru"))?;
        let h = convgru_encode(tape, g, &gru).map_err(|e| stage(e, "gru"))?;

        let mask3 = tape.leaf(tile_frames(t, &self.adj_mask));
        let (atilde, chi) =
            dynamic_adjacency(tape, h, mask3).map_err(|e| stage(e, "adjacency"))?;

        let mut current = h;
        let mut total: Option<NodeId> = None;
        for r in 1..=self.config.res_blocks {
            let tkr = params.node(&format!("{prefix}.res{r}.time_kernel"))?;
            let gwr = params.node(&format!("{prefix}.res{r}.graph_weight"))?;
            current = residual_block(tape, current, atilde, tkr, gwr)
                .map_err(|e| stage(e, "residual"))?;
            total = Some(match total {
                None => current,
                Some(acc) => tape.add(acc, current)?,
            });
        }
        let total = total.expect("res_blocks is validated positive");
        let blocks_mean = tape.affine(total, 1.0 / self.config.res_blocks as f64, 0.0);
        let features = tape.reduce_mean(blocks_mean, 1)?;
        Ok(ModalityTrace { features, chi, dyn_adj: atilde })
    }
}

impl ForwardPass {
    /// Copies score and attention values out of the evaluated tape.
    pub fn read_attention(&self, tape: &Tape) -> AttentionRead {
        let chi_pos = tape.value(self.chi_pos).clone();
        let chi_ang = tape.value(self.chi_ang).clone();
        AttentionRead {
            score: clamp_score(tape.value(self.score).data()[0]),
            fusion: tape.value(self.fusion_att).data().to_vec(),
            role_pos: role_vector(&chi_pos),
            role_ang: role_vector(&chi_ang),
            chi_pos,
            chi_ang,
        }
    }
}

fn dims3(tape: &Tape, x: NodeId) -> (usize, usize, usize) {
    let s = tape.value(x).shape();
    (s[0], s[1], s[2])
}
