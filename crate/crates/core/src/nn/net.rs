//! Forward and reverse passes of the kernel-prediction network.
//!
//! Per-photon rows go through a shared two-layer ReLU encoder; a masked
//! max-pool over the rows forms the across-photon context. The kernel head
//! sees [row encoding, context] and emits a softplus weight per color
//! channel, applied to the photon's physical contribution; the ablation
//! (direct) head regresses radiance from the context alone.

use thiserror::Error;

use crate::math::{Real, Rgb};
use crate::nn::params::{
    NetParams, DIR1_W, DIR2_W, ENC1_W, ENC2_W, FEATURE_DIM, HIDDEN, KER1_W, KER2_W, OUT,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {what}")]
    ShapeMismatch { what: String },
    #[error("non-finite activation in {layer}")]
    NonFinite { layer: &'static str },
    #[error("neighborhood has no valid photon rows")]
    EmptyNeighborhood,
    #[error("degenerate neighborhood bandwidth (r_K = 0)")]
    DegenerateBandwidth,
}

/// Intermediates kept for the reverse pass.
pub struct ForwardCache<T> {
    k: usize,
    mask: Vec<bool>,
    features: Vec<T>,
    contributions: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    ctx: [T; HIDDEN],
    argmax_row: [u32; HIDDEN],
    head: HeadCache<T>,
    pub lhat: Rgb<T>,
}

enum HeadCache<T> {
    Kernel { u: Vec<T>, z: Vec<T> },
    Direct { v: [T; HIDDEN], z: [T; OUT] },
}

#[inline]
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// y = b + x W, with W stored input-major.
#[inline]
fn affine_forward<T: Real>(w: &[T], b: &[T], x: &[T], y: &mut [T]) {
    let n_out = b.len();
    y.copy_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n_out..(i + 1) * n_out];
        for (yo, &wio) in y.iter_mut().zip(row) {
            *yo += xi * wio;
        }
    }
}

/// Accumulate dW and db; optionally produce dx.
#[inline]
fn affine_backward<T: Real>(
    w: &[T],
    x: &[T],
    gy: &[T],
    gw: &mut [T],
    gb: &mut [T],
    mut gx: Option<&mut [T]>,
) {
    let n_out = gy.len();
    for (gbo, &g) in gb.iter_mut().zip(gy) {
        *gbo += g;
    }
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n_out..(i + 1) * n_out];
        let grow = &mut gw[i * n_out..(i + 1) * n_out];
        let mut acc = T::zero();
        for o in 0..n_out {
            grow[o] += xi * gy[o];
            acc += row[o] * gy[o];
        }
        if let Some(gx) = gx.as_deref_mut() {
            gx[i] = acc;
        }
    }
}

fn check_finite<T: Real>(values: &[T], layer: &'static str) -> Result<(), NetError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NetError::NonFinite { layer })
    }
}

fn check_shapes<T>(
    features: &[T],
    contributions: Option<&[T]>,
    mask: &[bool],
) -> Result<usize, NetError> {
    let k = mask.len();
    if features.len() != k * FEATURE_DIM {
        return Err(NetError::ShapeMismatch {
            what: format!("features: {} values for k = {k}", features.len()),
        });
    }
    if let Some(c) = contributions {
        if c.len() != k * OUT {
            return Err(NetError::ShapeMismatch {
                what: format!("contributions: {} values for k = {k}", c.len()),
            });
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(NetError::EmptyNeighborhood);
    }
    Ok(k)
}

struct Encoded<T> {
    h1: Vec<T>,
    h2: Vec<T>,
    ctx: [T; HIDDEN],
    argmax_row: [u32; HIDDEN],
}

/// Shared encoder + masked max-pool. Masked rows are skipped entirely; they
/// cannot influence the pool or any head.
fn encode<T: Real>(
    params: &NetParams<T>,
    features: &[T],
    mask: &[bool],
    k: usize,
) -> Result<Encoded<T>, NetError> {
    let (w1, b1) = (params.tensor(ENC1_W), params.tensor(ENC1_W + 1));
    let (w2, b2) = (params.tensor(ENC2_W), params.tensor(ENC2_W + 1));
    let mut h1 = vec![T::zero(); k * HIDDEN];
    let mut h2 = vec![T::zero(); k * HIDDEN];
    let mut ctx = [T::neg_infinity(); HIDDEN];
    let mut argmax_row = [u32::MAX; HIDDEN];
    for t in 0..k {
        if !mask[t] {
            continue;
        }
        let x = &features[t * FEATURE_DIM..(t + 1) * FEATURE_DIM];
        let h1_row = &mut h1[t * HIDDEN..(t + 1) * HIDDEN];
        affine_forward(w1, b1, x, h1_row);
        check_finite(h1_row, "encoder1")?;
        for v in h1_row.iter_mut() {
            *v = v.max(T::zero());
        }
        let (h1_done, h2_part) = (&h1[t * HIDDEN..(t + 1) * HIDDEN], &mut h2[t * HIDDEN..(t + 1) * HIDDEN]);
        affine_forward(w2, b2, h1_done, h2_part);
        check_finite(h2_part, "encoder2")?;
        for (d, v) in h2_part.iter_mut().enumerate() {
            *v = v.max(T::zero());
            // Strict > keeps the earliest row on ties (deterministic).
            if *v > ctx[d] {
                ctx[d] = *v;
                argmax_row[d] = t as u32;
            }
        }
    }
    Ok(Encoded { h1, h2, ctx, argmax_row })
}

/// Kernel-prediction forward pass: per-photon softplus weights applied to
/// the physical contributions, summed over valid rows.
pub fn forward<T: Real>(
    params: &NetParams<T>,
    features: &[T],
    contributions: &[T],
    mask: &[bool],
) -> Result<(Rgb<T>, ForwardCache<T>), NetError> {
    let k = check_shapes(features, Some(contributions), mask)?;
    let Encoded { h1, h2, ctx, argmax_row } = encode(params, features, mask, k)?;

    let (w3, b3) = (params.tensor(KER1_W), params.tensor(KER1_W + 1));
    let (w4, b4) = (params.tensor(KER2_W), params.tensor(KER2_W + 1));
    let (w3_row, w3_ctx) = w3.split_at(HIDDEN * HIDDEN);
    let mut u = vec![T::zero(); k * HIDDEN];
    let mut z = vec![T::zero(); k * OUT];
    let mut lhat = Rgb::black();
    for t in 0..k {
        if !mask[t] {
            continue;
        }
        let h2_row = &h2[t * HIDDEN..(t + 1) * HIDDEN];
        let u_row = &mut u[t * HIDDEN..(t + 1) * HIDDEN];
        // Concatenated input [h2_row, ctx]: apply the two halves of W3.
        u_row.copy_from_slice(b3);
        for (i, &xi) in h2_row.iter().enumerate() {
            let row = &w3_row[i * HIDDEN..(i + 1) * HIDDEN];
            for (yo, &wio) in u_row.iter_mut().zip(row) {
                *yo += xi * wio;
            }
        }
        for (i, &xi) in ctx.iter().enumerate() {
            let row = &w3_ctx[i * HIDDEN..(i + 1) * HIDDEN];
            for (yo, &wio) in u_row.iter_mut().zip(row) {
                *yo += xi * wio;
            }
        }
        check_finite(u_row, "kernel_head1")?;
        for v in u_row.iter_mut() {
            *v = v.max(T::zero());
        }
        let z_row = &mut z[t * OUT..(t + 1) * OUT];
        affine_forward(w4, b4, &u[t * HIDDEN..(t + 1) * HIDDEN], z_row);
        check_finite(z_row, "kernel_head2")?;
        let c = &contributions[t * OUT..(t + 1) * OUT];
        lhat.r += softplus(z_row[0]) * c[0];
        lhat.g += softplus(z_row[1]) * c[1];
        lhat.b += softplus(z_row[2]) * c[2];
    }
    if !lhat.is_finite() {
        return Err(NetError::NonFinite { layer: "weighted_sum" });
    }

    let cache = ForwardCache {
        k,
        mask: mask.to_vec(),
        features: features.to_vec(),
        contributions: contributions.to_vec(),
        h1,
        h2,
        ctx,
        argmax_row,
        head: HeadCache::Kernel { u, z },
        lhat,
    };
    Ok((lhat, cache))
}

/// Ablation head: radiance regressed from the pooled context alone.
pub fn forward_direct<T: Real>(
    params: &NetParams<T>,
    features: &[T],
    mask: &[bool],
) -> Result<(Rgb<T>, ForwardCache<T>), NetError> {
    let k = check_shapes(features, None, mask)?;
    let Encoded { h1, h2, ctx, argmax_row } = encode(params, features, mask, k)?;

    let (w5, b5) = (params.tensor(DIR1_W), params.tensor(DIR1_W + 1));
    let (w6, b6) = (params.tensor(DIR2_W), params.tensor(DIR2_W + 1));
    let mut v = [T::zero(); HIDDEN];
    affine_forward(w5, b5, &ctx, &mut v);
    check_finite(&v, "direct_head1")?;
    for x in v.iter_mut() {
        *x = x.max(T::zero());
    }
    let mut z = [T::zero(); OUT];
    affine_forward(w6, b6, &v, &mut z);
    check_finite(&z, "direct_head2")?;
    let lhat = Rgb::new(softplus(z[0]), softplus(z[1]), softplus(z[2]));

    let cache = ForwardCache {
        k,
        mask: mask.to_vec(),
        features: features.to_vec(),
        contributions: Vec::new(),
        h1,
        h2,
        ctx,
        argmax_row,
        head: HeadCache::Direct { v, z },
        lhat,
    };
    Ok((lhat, cache))
}

/// Reverse pass: accumulate d(loss)/d(theta) into `grads` given
/// `upstream` = d(loss)/d(L-hat).
pub fn backward<T: Real>(
    params: &NetParams<T>,
    cache: &ForwardCache<T>,
    upstream: Rgb<T>,
    grads: &mut NetParams<T>,
) {
    let k = cache.k;
    let mut g_ctx = [T::zero(); HIDDEN];
    let mut g_h2 = vec![T::zero(); k * HIDDEN];

    match &cache.head {
        HeadCache::Kernel { u, z } => {
            let w4 = params.tensor(KER2_W);
            let (w3_row, w3_ctx) = params.tensor(KER1_W).split_at(HIDDEN * HIDDEN);
            let mut gz = [T::zero(); OUT];
            let mut gu = [T::zero(); HIDDEN];
            for t in 0..k {
                if !cache.mask[t] {
                    continue;
                }
                let c = &cache.contributions[t * OUT..(t + 1) * OUT];
                let z_row = &z[t * OUT..(t + 1) * OUT];
                gz[0] = upstream.r * c[0] * sigmoid(z_row[0]);
                gz[1] = upstream.g * c[1] * sigmoid(z_row[1]);
                gz[2] = upstream.b * c[2] * sigmoid(z_row[2]);
                let u_row = &u[t * HIDDEN..(t + 1) * HIDDEN];
                {
                    let (gw4, gb4) = grads.wb_mut(KER2_W);
                    affine_backward(w4, u_row, &gz, gw4, gb4, Some(&mut gu));
                }
                for (g, &uv) in gu.iter_mut().zip(u_row) {
                    if uv <= T::zero() {
                        *g = T::zero();
                    }
                }
                let h2_row = &cache.h2[t * HIDDEN..(t + 1) * HIDDEN];
                let (gw3, gb3) = grads.wb_mut(KER1_W);
                let (gw3_row, gw3_ctx) = gw3.split_at_mut(HIDDEN * HIDDEN);
                for (gbo, &g) in gb3.iter_mut().zip(&gu) {
                    *gbo += g;
                }
                let g_h2_row = &mut g_h2[t * HIDDEN..(t + 1) * HIDDEN];
                for i in 0..HIDDEN {
                    let row = &w3_row[i * HIDDEN..(i + 1) * HIDDEN];
                    let grow = &mut gw3_row[i * HIDDEN..(i + 1) * HIDDEN];
                    let (xi, mut acc) = (h2_row[i], T::zero());
                    for o in 0..HIDDEN {
                        grow[o] += xi * gu[o];
                        acc += row[o] * gu[o];
                    }
                    g_h2_row[i] += acc;
                }
                for i in 0..HIDDEN {
                    let row = &w3_ctx[i * HIDDEN..(i + 1) * HIDDEN];
                    let grow = &mut gw3_ctx[i * HIDDEN..(i + 1) * HIDDEN];
                    let (xi, mut acc) = (cache.ctx[i], T::zero());
                    for o in 0..HIDDEN {
                        grow[o] += xi * gu[o];
                        acc += row[o] * gu[o];
                    }
                    g_ctx[i] += acc;
                }
            }
        }
        HeadCache::Direct { v, z } => {
            let gz = [
                upstream.r * sigmoid(z[0]),
                upstream.g * sigmoid(z[1]),
                upstream.b * sigmoid(z[2]),
            ];
            let mut gv = [T::zero(); HIDDEN];
            {
                let w6 = params.tensor(DIR2_W);
                let (gw6, gb6) = grads.wb_mut(DIR2_W);
                affine_backward(w6, v, &gz, gw6, gb6, Some(&mut gv));
            }
            for (g, &vv) in gv.iter_mut().zip(v.iter()) {
                if vv <= T::zero() {
                    *g = T::zero();
                }
            }
            let w5 = params.tensor(DIR1_W);
            let (gw5, gb5) = grads.wb_mut(DIR1_W);
            affine_backward(w5, &cache.ctx, &gv, gw5, gb5, Some(&mut g_ctx));
        }
    }

    // Max-pool: each context dimension routes to its argmax row.
    for d in 0..HIDDEN {
        let row = cache.argmax_row[d];
        if row != u32::MAX {
            g_h2[row as usize * HIDDEN + d] += g_ctx[d];
        }
    }

    // Encoder backward over valid rows.
    let w2 = params.tensor(ENC2_W);
    let mut g_h1 = [T::zero(); HIDDEN];
    for t in 0..k {
        if !cache.mask[t] {
            continue;
        }
        let h2_row = &cache.h2[t * HIDDEN..(t + 1) * HIDDEN];
        let g_h2_row = &mut g_h2[t * HIDDEN..(t + 1) * HIDDEN];
        for (g, &hv) in g_h2_row.iter_mut().zip(h2_row) {
            if hv <= T::zero() {
                *g = T::zero();
            }
        }
        let h1_row = &cache.h1[t * HIDDEN..(t + 1) * HIDDEN];
        {
            let (gw2, gb2) = grads.wb_mut(ENC2_W);
            affine_backward(w2, h1_row, g_h2_row, gw2, gb2, Some(&mut g_h1));
        }
        for (g, &hv) in g_h1.iter_mut().zip(h1_row) {
            if hv <= T::zero() {
                *g = T::zero();
            }
        }
        let x = &cache.features[t * FEATURE_DIM..(t + 1) * FEATURE_DIM];
        let w1 = params.tensor(ENC1_W);
        let (gw1, gb1) = grads.wb_mut(ENC1_W);
        affine_backward(w1, x, &g_h1, gw1, gb1, None);
    }
}

/// Relative squared error: |L - L_ref|^2 / (|L_ref|^2 + eps).
pub fn loss_relative_l2<T: Real>(lhat: Rgb<T>, lref: Rgb<T>, eps_rel: T) -> T {
    loss_relative_l2_with_grad(lhat, lref, eps_rel).0
}

/// Loss plus its gradient with respect to the prediction.
pub fn loss_relative_l2_with_grad<T: Real>(
    lhat: Rgb<T>,
    lref: Rgb<T>,
    eps_rel: T,
) -> (T, Rgb<T>) {
    let diff = lhat - lref;
    let denom = lref.r * lref.r + lref.g * lref.g + lref.b * lref.b + eps_rel;
    let loss = (diff.r * diff.r + diff.g * diff.g + diff.b * diff.b) / denom;
    let scale = T::of(2.0) / denom;
    (loss, diff * scale)
}
