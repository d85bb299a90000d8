//! Feedback drawings: a projected skeleton with role-colored joints and a
//! frames-by-joints attention heatmap. Pure string building, deterministic
//! output, no drawing library.

use kinescore_core::tensor::Tensor;
use kinescore_core::topology::Topology;

/// Cold end of the color ramp (low attention).
pub const RAMP_LO: (u8, u8, u8) = (43, 131, 186);
/// Hot end of the color ramp (high attention).
pub const RAMP_HI: (u8, u8, u8) = (215, 25, 28);

/// Linear blend between the ramp anchors; `t` is clamped to [0, 1].
pub fn ramp(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    (mix(RAMP_LO.0, RAMP_HI.0), mix(RAMP_LO.1, RAMP_HI.1), mix(RAMP_LO.2, RAMP_HI.2))
}

fn rgb(c: (u8, u8, u8)) -> String {
    format!("rgb({},{},{})", c.0, c.1, c.2)
}

/// Rescales values to [0, 1] against their own extremes; a flat vector maps
/// to the ramp midpoint everywhere, so equal inputs get identical colors.
pub fn unit_scale(values: &[f64]) -> (Vec<f64>, f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    let scaled = if span > 1e-15 {
        values.iter().map(|&v| (v - lo) / span).collect()
    } else {
        values.iter().map(|_| 0.5).collect()
    };
    (scaled, lo, hi)
}

fn anchor_note(what: &str, lo: f64, hi: f64) -> String {
    format!(
        "{what}; color ramp {} at {lo:.6e} to {} at {hi:.6e}",
        rgb(RAMP_LO),
        rgb(RAMP_HI)
    )
}

/// Draws the first frame of a sequence projected onto the x/y plane: bones
/// as lines, one circle per joint colored by its role-vector entry. The
/// document title records the ramp anchors.
pub fn skeleton_svg(topo: &Topology, frame_xy: &[(f64, f64)], roles: &[f64]) -> String {
    assert_eq!(frame_xy.len(), topo.n_joints());
    assert_eq!(roles.len(), topo.n_joints());
    let (scaled, lo, hi) = unit_scale(roles);

    let (size, margin) = (420.0, 30.0);
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for &(x, y) in frame_xy {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-12);
    let scale = (size - 2.0 * margin) / span;
    let px = |x: f64| margin + (x - min_x) * scale;
    // SVG y grows downward; flip so "up" in the data is up on screen.
    let py = |y: f64| size - margin - (y - min_y) * scale;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n"
    ));
    out.push_str(&format!("  <title>{}</title>\n", anchor_note("joint roles", lo, hi)));
    out.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for &(a, b) in topo.edges() {
        out.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"#888\" stroke-width=\"2\"/>\n",
            px(frame_xy[a].0),
            py(frame_xy[a].1),
            px(frame_xy[b].0),
            py(frame_xy[b].1),
        ));
    }
    for (j, &(x, y)) in frame_xy.iter().enumerate() {
        out.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"7\" fill=\"{}\" stroke=\"#333\">\
             <title>{} role={:.6e}</title></circle>\n",
            px(x),
            py(y),
            rgb(ramp(scaled[j])),
            topo.names()[j],
            roles[j],
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Draws a frames-by-joints attention matrix as a cell grid, one row per
/// joint, colored on the same ramp anchored at the matrix extremes.
pub fn heatmap_svg(chi: &Tensor, names: &[String]) -> String {
    assert_eq!(chi.rank(), 2);
    let (t, n) = (chi.shape()[0], chi.shape()[1]);
    assert_eq!(names.len(), n);
    let (scaled, lo, hi) = unit_scale(chi.data());

    let cell = 14.0;
    let margin = 20.0;
    let width = margin * 2.0 + cell * t as f64;
    let height = margin * 2.0 + cell * n as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(&format!(
        "  <title>{}</title>\n",
        anchor_note("joint attention per frame", lo, hi)
    ));
    out.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for i in 0..t {
        for j in 0..n {
            let v = chi.data()[i * n + j];
            out.push_str(&format!(
                "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\">\
                 <title>frame {i}, {}: {v:.6e}</title></rect>\n",
                margin + cell * i as f64,
                margin + cell * j as f64,
                rgb(ramp(scaled[i * n + j])),
                names[j],
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

// ── tests ──────────────────────────────────────────────────────────────────
