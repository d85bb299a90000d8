//! Independent reimplementation of the network's forward pass: nothing but
//! nested loops over flat `f64` buffers. It shares no code with the crates
//! under test — parameters arrive as raw name -> (shape, values) pairs — so
//! agreement with the tape-built forward is evidence, not tautology.

use std::collections::BTreeMap;

/// Width settings mirroring the model configuration.
pub struct Dims {
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub k_time: usize,
    pub k_joint: usize,
    pub res_blocks: usize,
    pub fusion_units: usize,
}

pub type RawParams = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

pub struct Out {
    pub score: f64,
    /// `[T]` temporal attention.
    pub fusion: Vec<f64>,
    /// `[T * N]` per-frame joint attention, row major.
    pub chi_pos: Vec<f64>,
    pub chi_ang: Vec<f64>,
}

fn values<'p>(params: &'p RawParams, name: &str) -> &'p [f64] {
    &params.get(name).unwrap_or_else(|| panic!("oracle needs parameter {name}")).1
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn relu_inplace(buf: &mut [f64]) {
    for v in buf.iter_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

/// Same-length convolution along the first of `len` positions with zero
/// padding; `x` is `[len, inner, fin]`, kernel `[kw, fin, fout]`.
fn conv_lines(
    x: &[f64],
    outer: usize,
    len: usize,
    inner: usize,
    fin: usize,
    kernel: &[f64],
    kw: usize,
    fout: usize,
) -> Vec<f64> {
    let half = kw / 2;
    let mut out = vec![0.0; outer * len * inner * fout];
    for o in 0..outer {
        for p in 0..len {
            for i in 0..inner {
                let obase = ((o * len + p) * inner + i) * fout;
                for t in 0..kw {
                    let q = p + t;
                    if q < half || q - half >= len {
                        continue;
                    }
                    let xbase = ((o * len + (q - half)) * inner + i) * fin;
                    for f in 0..fin {
                        let xv = x[xbase + f];
                        for fo in 0..fout {
                            out[obase + fo] += xv * kernel[(t * fin + f) * fout + fo];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Softmax over `len` entries for each (outer, inner) line.
fn softmax_lines(buf: &mut [f64], outer: usize, len: usize, inner: usize) {
    for o in 0..outer {
        for i in 0..inner {
            let idx = |p: usize| (o * len + p) * inner + i;
            let mut hi = f64::NEG_INFINITY;
            for p in 0..len {
                hi = hi.max(buf[idx(p)]);
            }
            let mut sum = 0.0;
            for p in 0..len {
                let e = (buf[idx(p)] - hi).exp();
                buf[idx(p)] = e;
                sum += e;
            }
            for p in 0..len {
                buf[idx(p)] /= sum;
            }
        }
    }
}

/// Degree-normalized adjacency with self loops from the edge list, `[N, N]`.
fn static_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for &(p, c) in edges {
        a[p * n + c] = 1.0;
        a[c * n + p] = 1.0;
    }
    for j in 0..n {
        a[j * n + j] = 1.0;
    }
    let mut inv_root = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = a[i * n..(i + 1) * n].iter().sum();
        inv_root[i] = 1.0 / deg.sqrt();
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[i * n + j] * inv_root[i] * inv_root[j];
        }
    }
    out
}

/// 0/1 adjacency with self loops, `[N, N]`.
fn mask_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for &(p, c) in edges {
        a[p * n + c] = 1.0;
        a[c * n + p] = 1.0;
    }
    for j in 0..n {
        a[j * n + j] = 1.0;
    }
    a
}

/// Per-frame `adj ([N,N] or [T,N,N]) * x [T,N,fin] * w [fin,fout]`.
fn graph_conv(
    x: &[f64],
    t: usize,
    n: usize,
    fin: usize,
    adj: &[f64],
    adj_per_frame: bool,
    w: &[f64],
    fout: usize,
) -> Vec<f64> {
    let mut mixed = vec![0.0; t * n * fin];
    for fr in 0..t {
        let ab = if adj_per_frame { fr * n * n } else { 0 };
        for i in 0..n {
            for l in 0..n {
                let av = adj[ab + i * n + l];
                for f in 0..fin {
                    mixed[(fr * n + i) * fin + f] += av * x[(fr * n + l) * fin + f];
                }
            }
        }
    }
    let mut out = vec![0.0; t * n * fout];
    for row in 0..t * n {
        for l in 0..fin {
            let mv = mixed[row * fin + l];
            for j in 0..fout {
                out[row * fout + j] += mv * w[l * fout + j];
            }
        }
    }
    out
}

/// One branch: streams, graph conv, gated recurrence, dynamic adjacency,
/// residual cascade, joint pooling. Returns `[T, d]` features and `[T, N]`
/// joint attention.
#[allow(clippy::too_many_arguments)]
fn encode(
    dims: &Dims,
    params: &RawParams,
    prefix: &str,
    x: &[f64],
    t: usize,
    a_static: &[f64],
    mask: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (n, f, d) = (dims.n, dims.f, dims.d);

    // Two convolution streams over the raw channels, relu'd and concatenated.
    let tk = values(params, &format!("{prefix}.stream.time_kernel"));
    let mut s_time = conv_lines(x, 1, t, n, 3, tk, dims.k_time, f);
    relu_inplace(&mut s_time);
    let jk = values(params, &format!("{prefix}.stream.joint_kernel"));
    let mut s_joint = conv_lines(x, t, n, 1, 3, jk, dims.k_joint, f);
    relu_inplace(&mut s_joint);
    let mut z = vec![0.0; t * n * 2 * f];
    for row in 0..t * n {
        z[row * 2 * f..row * 2 * f + f].copy_from_slice(&s_time[row * f..(row + 1) * f]);
        z[row * 2 * f + f..(row + 1) * 2 * f].copy_from_slice(&s_joint[row * f..(row + 1) * f]);
    }

    // Static graph convolution.
    let gw = values(params, &format!("{prefix}.gcn.weight"));
    let mut g = graph_conv(&z, t, n, 2 * f, a_static, false, gw, d);
    relu_inplace(&mut g);

    // Convolutional GRU along the joints, frame by frame from a zero state.
    let kx = |gate: &str| values(params, &format!("{prefix}.gru.{gate}_x"));
    let kh = |gate: &str| values(params, &format!("{prefix}.gru.{gate}_h"));
    let kb = |gate: &str| values(params, &format!("{prefix}.gru.{gate}_b"));
    let conv_n = |src: &[f64], k: &[f64]| conv_lines(src, 1, n, 1, d, k, dims.k_joint, d);
    let mut h_all = vec![0.0; t * n * d];
    let mut h_prev = vec![0.0; n * d];
    for fr in 0..t {
        let x_t = &g[fr * n * d..(fr + 1) * n * d];
        let gate = |kxv: &[f64], khv: &[f64], b: &[f64], src: &[f64]| -> Vec<f64> {
            let cx = conv_n(x_t, kxv);
            let ch = conv_n(src, khv);
            (0..n * d).map(|i| cx[i] + ch[i] + b[i % d]).collect()
        };
        let z_gate: Vec<f64> =
            gate(kx("update"), kh("update"), kb("update"), &h_prev).iter().map(|&v| sigmoid(v)).collect();
        let r_gate: Vec<f64> =
            gate(kx("reset"), kh("reset"), kb("reset"), &h_prev).iter().map(|&v| sigmoid(v)).collect();
        let gated: Vec<f64> = (0..n * d).map(|i| r_gate[i] * h_prev[i]).collect();
        let o: Vec<f64> =
            gate(kx("cand"), kh("cand"), kb("cand"), &gated).iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..n * d)
            .map(|i| z_gate[i] * x_t[i] + (-1.0 * z_gate[i] + 1.0) * o[i])
            .collect();
        h_all[fr * n * d..(fr + 1) * n * d].copy_from_slice(&h);
        h_prev = h;
    }

    // Data-dependent adjacency and the per-frame joint attention.
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut m = vec![0.0; t * n * n];
    for fr in 0..t {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += h_all[(fr * n + i) * d + l] * h_all[(fr * n + j) * d + l];
                }
                m[(fr * n + i) * n + j] = acc * inv_sqrt_d;
            }
        }
    }
    softmax_lines(&mut m, t * n, n, 1);
    // Joint attention: softmax over the mean attention each joint receives
    // (column means of the row-normalized affinities).
    let mut chi = vec![0.0; t * n];
    for fr in 0..t {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += m[(fr * n + i) * n + j];
            }
            chi[fr * n + j] = acc / n as f64;
        }
    }
    softmax_lines(&mut chi, t, n, 1);
    let mut atilde = vec![0.0; t * n * n];
    for fr in 0..t {
        let base = fr * n * n;
        let masked: Vec<f64> = (0..n * n)
            .map(|ij| {
                let (i, j) = (ij / n, ij % n);
                0.5 * (m[base + i * n + j] + m[base + j * n + i]) * mask[ij]
            })
            .collect();
        let mut inv_root = vec![0.0; n];
        for i in 0..n {
            let deg: f64 = masked[i * n..(i + 1) * n].iter().sum();
            inv_root[i] = 1.0 / deg.sqrt();
        }
        for i in 0..n {
            for j in 0..n {
                atilde[base + i * n + j] = masked[i * n + j] * (inv_root[i] * inv_root[j]);
            }
        }
    }

    // Residual cascade; block outputs are averaged, then joints pooled.
    let mut current = h_all;
    let mut total = vec![0.0; t * n * d];
    for r in 1..=dims.res_blocks {
        let tkr = values(params, &format!("{prefix}.res{r}.time_kernel"));
        let gwr = values(params, &format!("{prefix}.res{r}.graph_weight"));
        let c = conv_lines(&current, 1, t, n, d, tkr, dims.k_time, d);
        let mut gr = graph_conv(&c, t, n, d, &atilde, true, gwr, d);
        relu_inplace(&mut gr);
        let next: Vec<f64> = (0..t * n * d).map(|i| current[i] + gr[i]).collect();
        for i in 0..t * n * d {
            total[i] += next[i];
        }
        current = next;
    }
    let scale = 1.0 / dims.res_blocks as f64;
    let mut features = vec![0.0; t * d];
    for fr in 0..t {
        for l in 0..d {
            let mut acc = 0.0;
            for j in 0..n {
                acc += total[(fr * n + j) * d + l] * scale;
            }
            features[fr * d + l] = acc / n as f64;
        }
    }
    (features, chi)
}

/// Full two-branch forward; `positions` and `angles` are `[T, N, 3]` flat.
pub fn forward(
    dims: &Dims,
    edges: &[(usize, usize)],
    params: &RawParams,
    positions: &[f64],
    angles: &[f64],
    t: usize,
) -> Out {
    let (n, d, u) = (dims.n, dims.d, dims.fusion_units);
    let a_static = static_adjacency(n, edges);
    let mask = mask_adjacency(n, edges);
    let (feat_pos, chi_pos) = encode(dims, params, "pos", positions, t, &a_static, &mask);
    let (feat_ang, chi_ang) = encode(dims, params, "ang", angles, t, &a_static, &mask);

    // Fusion: concat branches, a two-layer scorer, softmax over frames.
    let width = 2 * d;
    let mut joint = vec![0.0; t * width];
    for fr in 0..t {
        joint[fr * width..fr * width + d].copy_from_slice(&feat_pos[fr * d..(fr + 1) * d]);
        joint[fr * width + d..(fr + 1) * width].copy_from_slice(&feat_ang[fr * d..(fr + 1) * d]);
    }

    let w1 = values(params, "fusion.hidden_w");
    let b1 = values(params, "fusion.hidden_b");
    let mut hidden = vec![0.0; t * u];
    for fr in 0..t {
        for l in 0..width {
            let jv = joint[fr * width + l];
            for j in 0..u {
                hidden[fr * u + j] += jv * w1[l * u + j];
            }
        }
        for j in 0..u {
            hidden[fr * u + j] += b1[j];
        }
    }
    relu_inplace(&mut hidden);
    let w2 = values(params, "fusion.logit_w");
    let b2 = values(params, "fusion.logit_b");
    let mut att = vec![0.0; t];
    for fr in 0..t {
        let mut acc = 0.0;
        for l in 0..u {
            acc += hidden[fr * u + l] * w2[l];
        }
        att[fr] = acc + b2[0];
    }
    softmax_lines(&mut att, 1, t, 1);

    let mut pooled = vec![0.0; width];
    for fr in 0..t {
        for l in 0..width {
            pooled[l] += joint[fr * width + l] * att[fr];
        }
    }
    for v in pooled.iter_mut() {
        *v /= t as f64;
    }

    let hw = values(params, "head.weight");
    let hb = values(params, "head.bias");
    let mut score = 0.0;
    for l in 0..width {
        score += pooled[l] * hw[l];
    }
    score += hb[0];

    Out { score, fusion: att, chi_pos, chi_ang }
}
