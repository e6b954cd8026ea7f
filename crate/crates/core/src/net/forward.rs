use super::config::NetConfig;
use super::weights::ParamVars;
use crate::engine::{Tape, Tensor, Var};
use crate::error::{Error, Result};

fn conv1x1(tape: &mut Tape, p: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    tape.conv2d_circular(x, w, Some(b), 1, 1)
}

fn backbone_block(tape: &mut Tape, p: &ParamVars, cfg: &NetConfig, view: &str, level: usize, x: Var) -> Result<Var> {
    let prefix = format!("{view}.block{level}");
    let w = p.get(&format!("{prefix}.conv.weight"))?;
    let y = tape.conv2d_circular(x, w, None, cfg.vertical_strides[level], cfg.azimuth_strides[level])?;
    let g = p.get(&format!("{prefix}.norm.gamma"))?;
    let b = p.get(&format!("{prefix}.norm.beta"))?;
    let y = tape.instance_norm_affine(y, g, b)?;
    Ok(tape.relu(y))
}

/// `query + FFN(attention(query -> context))` within each azimuth column.
fn fuse(tape: &mut Tape, p: &ParamVars, cfg: &NetConfig, level: usize, dir: &str, query: Var, context: Var) -> Result<Var> {
    let prefix = format!("fuse{level}.{dir}");
    let q = conv1x1(tape, p, &format!("{prefix}.q"), query)?;
    let k = tape.conv2d_circular(context, p.get(&format!("{prefix}.k.weight"))?, None, 1, 1)?;
    let v = conv1x1(tape, p, &format!("{prefix}.v"), context)?;
    let a = tape.azimuth_attention(q, k, v, cfg.heads)?;
    let h = conv1x1(tape, p, &format!("{prefix}.ffn1"), a)?;
    let h = tape.relu(h);
    let h = conv1x1(tape, p, &format!("{prefix}.ffn2"), h)?;
    tape.add(query, h)
}

/// Intermediate nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    /// Pooled, projected columns of every level and view, `[D_s, 1, N]`.
    pub columns: Var,
    /// Flattened intra-normalized NetVLAD vector, `[D]`.
    pub pre_gate: Var,
    /// `pre_gate * sigmoid(W_g pre_gate + b_g)`.
    pub gated: Var,
    /// Unit-norm output.
    pub descriptor: Var,
}

/// Records the full network on `tape` and returns the descriptor node.
///
/// `riv` is `[riv_channels, H_r, W]` and `bev` is `[bev_channels, H_b, W]`;
/// both views must share the azimuth width.
pub fn forward(tape: &mut Tape, p: &ParamVars, cfg: &NetConfig, riv: &Tensor, bev: &Tensor) -> Result<Var> {
    Ok(forward_nodes(tape, p, cfg, riv, bev)?.descriptor)
}

pub fn forward_nodes(tape: &mut Tape, p: &ParamVars, cfg: &NetConfig, riv: &Tensor, bev: &Tensor) -> Result<ForwardNodes> {
    let (cr, _, wr) = riv.dims3()?;
    let (cb, _, wb) = bev.dims3()?;
    if cr != cfg.riv_channels || cb != cfg.bev_channels {
        return Err(Error::Shape(format!(
            "network expects {} RIV and {} BEV channels, got {cr} and {cb}",
            cfg.riv_channels, cfg.bev_channels
        )));
    }
    if wr != wb {
        return Err(Error::Shape(format!("RIV width {wr} differs from BEV width {wb}")));
    }
    cfg.check_width(wr)?;

    let mut fr = tape.constant(riv.clone());
    let mut fb = tape.constant(bev.clone());
    let mut columns = Vec::with_capacity(2 * cfg.levels);
    let ds = cfg.shared_dim();
    for level in 0..cfg.levels {
        fr = backbone_block(tape, p, cfg, "riv", level, fr)?;
        fb = backbone_block(tape, p, cfg, "bev", level, fb)?;
        let fused_r = fuse(tape, p, cfg, level, "riv", fr, fb)?;
        let fused_b = fuse(tape, p, cfg, level, "bev", fb, fr)?;
        for (view, f) in [("riv", fused_r), ("bev", fused_b)] {
            let pooled = tape.mean_h(f)?;
            columns.push(conv1x1(tape, p, &format!("pool{level}.{view}"), pooled)?);
        }
    }

    let columns = tape.concat_w(&columns)?;
    let n = tape.value(columns).shape()[2];
    let logits = conv1x1(tape, p, "vlad.assign", columns)?;
    let logits = tape.reshape(logits, &[cfg.clusters, n])?;
    let logits = tape.transpose(logits)?;
    let assign = tape.softmax_rows(logits)?;
    let x = tape.reshape(columns, &[ds, n])?;
    let v = tape.vlad_aggregate(x, assign, p.get("vlad.centers")?)?;
    let v = tape.l2_normalize_rows(v)?;
    let y = tape.reshape(v, &[cfg.descriptor_dim])?;

    let g = tape.linear(y, p.get("gate.weight")?, p.get("gate.bias")?)?;
    let g = tape.sigmoid(g);
    let gated = tape.mul(y, g)?;
    let descriptor = tape.l2_normalize(gated);
    Ok(ForwardNodes { columns, pre_gate: y, gated, descriptor })
}
