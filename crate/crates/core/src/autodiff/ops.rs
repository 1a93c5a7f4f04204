//! Forward operations and their reverse-mode rules.
//!
//! Ops execute eagerly and record a backward closure onto the tape whenever
//! any input requires a gradient. Shape mismatches and non-finite outputs
//! are programmer errors and panic with the offending op named; fallible
//! validation belongs to the public model and loss APIs built on top.
//!
//! Broadcasting follows trailing-axis rules: shapes align on the right and
//! size-1 axes expand. Nothing fancier is supported.

use super::graph::{Graph, NodeId};
use super::tensor::{strides_of, Scalar, Tensor};

fn assert_finite<T: Scalar>(op: &str, t: &Tensor<T>) {
    assert!(t.all_finite(), "op `{op}` produced a non-finite value");
}

fn t<T: Scalar>(v: f64) -> T {
    T::from_f64(v)
}

// ---------------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------------

pub(crate) fn broadcast_shape(op: &str, a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![1usize; rank];
    for i in 0..rank {
        let ad = dim_from_right(a, rank - 1 - i);
        let bd = dim_from_right(b, rank - 1 - i);
        out[i] = if ad == bd {
            ad
        } else if ad == 1 {
            bd
        } else if bd == 1 {
            ad
        } else {
            panic!("op `{op}`: cannot broadcast shapes {a:?} and {b:?}");
        };
    }
    out
}

fn dim_from_right(shape: &[usize], from_right: usize) -> usize {
    if from_right < shape.len() {
        shape[shape.len() - 1 - from_right]
    } else {
        1
    }
}

/// Strides into `shape` as seen from a broadcast result of rank `rank`;
/// broadcast axes get stride 0.
fn broadcast_strides(shape: &[usize], rank: usize) -> Vec<usize> {
    let strides = strides_of(shape);
    let mut out = vec![0usize; rank];
    for i in 0..shape.len() {
        let out_axis = rank - shape.len() + i;
        out[out_axis] = if shape[i] == 1 { 0 } else { strides[i] };
    }
    out
}

fn binary_broadcast<T: Scalar>(
    op: &str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Tensor<T> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let out_shape = broadcast_shape(op, a.shape(), b.shape());
    let rank = out_shape.len();
    let sa = broadcast_strides(a.shape(), rank);
    let sb = broadcast_strides(b.shape(), rank);
    let numel: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let ad = a.data();
    let bd = b.data();
    for _ in 0..numel {
        data.push(f(ad[oa], bd[ob]));
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            oa += sa[axis];
            ob += sb[axis];
            if idx[axis] < out_shape[axis] {
                break;
            }
            idx[axis] = 0;
            oa -= sa[axis] * out_shape[axis];
            ob -= sb[axis] * out_shape[axis];
        }
    }
    Tensor::new(out_shape, data)
}

/// Sum `grad` back down to `target` shape, undoing broadcast expansion.
fn reduce_grad<T: Scalar>(grad: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if grad.shape() == target {
        return grad.clone();
    }
    let rank = grad.rank();
    let st = broadcast_strides(target, rank);
    let mut out = vec![T::zero(); target.iter().product()];
    let mut idx = vec![0usize; rank];
    let mut ot = 0usize;
    let gd = grad.data();
    let gshape = grad.shape().to_vec();
    for &g in gd {
        out[ot] += g;
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            ot += st[axis];
            if idx[axis] < gshape[axis] {
                break;
            }
            idx[axis] = 0;
            ot -= st[axis] * gshape[axis];
        }
    }
    Tensor::new(target.to_vec(), out)
}

fn record_binary<T: Scalar>(
    g: &mut Graph<T>,
    op: &'static str,
    a: NodeId,
    b: NodeId,
    out: Tensor<T>,
    backward: impl Fn(&Tensor<T>, &Tensor<T>, &Tensor<T>) -> (Tensor<T>, Tensor<T>) + 'static,
) -> NodeId {
    assert_finite(op, &out);
    let requires = g.requires_grad(a) || g.requires_grad(b);
    if !requires {
        return g.constant(out);
    }
    let va = g.value(a).clone();
    let vb = g.value(b).clone();
    let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
    g.push(
        out,
        true,
        vec![a, b],
        Some(Box::new(move |gout| {
            let (da, db) = backward(gout, &va, &vb);
            vec![reduce_grad(&da, &sa), reduce_grad(&db, &sb)]
        })),
    )
}

fn record_unary<T: Scalar>(
    g: &mut Graph<T>,
    op: &'static str,
    x: NodeId,
    out: Tensor<T>,
    backward: impl Fn(&Tensor<T>) -> Tensor<T> + 'static,
) -> NodeId {
    assert_finite(op, &out);
    if !g.requires_grad(x) {
        return g.constant(out);
    }
    g.push(
        out,
        true,
        vec![x],
        Some(Box::new(move |gout| vec![backward(gout)])),
    )
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

pub fn add<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = binary_broadcast("add", g.value(a), g.value(b), |x, y| x + y);
    record_binary(g, "add", a, b, out, |gout, _, _| (gout.clone(), gout.clone()))
}

pub fn sub<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = binary_broadcast("sub", g.value(a), g.value(b), |x, y| x - y);
    record_binary(g, "sub", a, b, out, |gout, _, _| {
        (gout.clone(), gout.map(|v| -v))
    })
}

pub fn mul<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = binary_broadcast("mul", g.value(a), g.value(b), |x, y| x * y);
    record_binary(g, "mul", a, b, out, |gout, va, vb| {
        (
            binary_broadcast("mul", gout, vb, |x, y| x * y),
            binary_broadcast("mul", gout, va, |x, y| x * y),
        )
    })
}

pub fn div<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = binary_broadcast("div", g.value(a), g.value(b), |x, y| x / y);
    record_binary(g, "div", a, b, out, |gout, va, vb| {
        let da = binary_broadcast("div", gout, vb, |x, y| x / y);
        let gv = binary_broadcast("div", gout, va, |x, y| x * y);
        let db = binary_broadcast("div", &gv, vb, |x, y| -x / (y * y));
        (da, db)
    })
}

pub fn maximum<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = binary_broadcast("maximum", g.value(a), g.value(b), |x, y| x.max(y));
    // Ties route the gradient to the first argument.
    record_binary(g, "maximum", a, b, out, |gout, va, vb| {
        let mask = binary_broadcast("maximum", va, vb, |x, y| if x >= y { T::one() } else { T::zero() });
        let da = binary_broadcast("maximum", gout, &mask, |x, m| x * m);
        let db = binary_broadcast("maximum", gout, &mask, |x, m| x * (T::one() - m));
        (da, db)
    })
}

pub fn minimum<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = binary_broadcast("minimum", g.value(a), g.value(b), |x, y| x.min(y));
    record_binary(g, "minimum", a, b, out, |gout, va, vb| {
        let mask = binary_broadcast("minimum", va, vb, |x, y| if x <= y { T::one() } else { T::zero() });
        let da = binary_broadcast("minimum", gout, &mask, |x, m| x * m);
        let db = binary_broadcast("minimum", gout, &mask, |x, m| x * (T::one() - m));
        (da, db)
    })
}

/// `y = mul * x + add`, elementwise with scalar coefficients.
pub fn affine<T: Scalar>(g: &mut Graph<T>, x: NodeId, mul: f64, add: f64) -> NodeId {
    let (m, a) = (t::<T>(mul), t::<T>(add));
    let out = g.value(x).map(|v| m * v + a);
    record_unary(g, "affine", x, out, move |gout| gout.map(|v| v * m))
}

pub fn scale<T: Scalar>(g: &mut Graph<T>, x: NodeId, factor: f64) -> NodeId {
    affine(g, x, factor, 0.0)
}

pub fn neg<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    affine(g, x, -1.0, 0.0)
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities
// ---------------------------------------------------------------------------

pub fn relu<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let vx = g.value(x).clone();
    let out = vx.map(|v| v.max(T::zero()));
    // Subgradient at exactly 0 is taken as 0.
    record_unary(g, "relu", x, out, move |gout| {
        zip_map(gout, &vx, |go, v| if v > T::zero() { go } else { T::zero() })
    })
}

pub fn sigmoid<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let out = g.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
    let y = out.clone();
    record_unary(g, "sigmoid", x, out, move |gout| {
        zip_map(gout, &y, |go, yv| go * yv * (T::one() - yv))
    })
}

pub fn tanh<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let out = g.value(x).map(|v| v.tanh());
    let y = out.clone();
    record_unary(g, "tanh", x, out, move |gout| {
        zip_map(gout, &y, |go, yv| go * (T::one() - yv * yv))
    })
}

pub fn exp<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let out = g.value(x).map(|v| v.exp());
    let y = out.clone();
    record_unary(g, "exp", x, out, move |gout| zip_map(gout, &y, |go, yv| go * yv))
}

pub fn log<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let vx = g.value(x).clone();
    let out = vx.map(|v| v.ln());
    record_unary(g, "log", x, out, move |gout| zip_map(gout, &vx, |go, v| go / v))
}

pub fn sqrt<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let out = g.value(x).map(|v| v.sqrt());
    let y = out.clone();
    record_unary(g, "sqrt", x, out, move |gout| {
        zip_map(gout, &y, |go, yv| go / (t::<T>(2.0) * yv))
    })
}

pub fn sin<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let vx = g.value(x).clone();
    let out = vx.map(|v| v.sin());
    record_unary(g, "sin", x, out, move |gout| {
        zip_map(gout, &vx, |go, v| go * v.cos())
    })
}

pub fn abs<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let vx = g.value(x).clone();
    let out = vx.map(|v| v.abs());
    record_unary(g, "abs", x, out, move |gout| {
        zip_map(gout, &vx, |go, v| go * v.signum() * if v == T::zero() { T::zero() } else { T::one() })
    })
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

fn matmul_2d<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

fn matmul_value<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    match (a.rank(), b.rank()) {
        (2, 2) => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let (k2, n) = (b.shape()[0], b.shape()[1]);
            assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
            let mut out = vec![T::zero(); m * n];
            matmul_2d(a.data(), b.data(), m, k, n, &mut out);
            Tensor::new(vec![m, n], out)
        }
        (3, 3) => {
            let (ba, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let (bb, k2, n) = (b.shape()[0], b.shape()[1], b.shape()[2]);
            assert_eq!(ba, bb, "matmul: batch dims {ba} vs {bb}");
            assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
            let mut out = vec![T::zero(); ba * m * n];
            for bi in 0..ba {
                matmul_2d(
                    &a.data()[bi * m * k..(bi + 1) * m * k],
                    &b.data()[bi * k * n..(bi + 1) * k * n],
                    m,
                    k,
                    n,
                    &mut out[bi * m * n..(bi + 1) * m * n],
                );
            }
            Tensor::new(vec![ba, m, n], out)
        }
        (ra, rb) => panic!("matmul: unsupported ranks {ra} and {rb}"),
    }
}

fn transpose_last2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let r = x.rank();
    assert!(r >= 2);
    transpose_value(x, r - 2, r - 1)
}

/// Matrix product: `[m,k] @ [k,n]`, or batched `[b,m,k] @ [b,k,n]`.
pub fn matmul<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let out = matmul_value(g.value(a), g.value(b));
    record_binary(g, "matmul", a, b, out, |gout, va, vb| {
        let da = matmul_value(gout, &transpose_last2(vb));
        let db = matmul_value(&transpose_last2(va), gout);
        (da, db)
    })
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

pub fn conv1d_out_len(t_in: usize, kernel: usize, stride: usize, dilation: usize, padding: usize) -> usize {
    let span = dilation * (kernel - 1) + 1;
    assert!(
        t_in + 2 * padding >= span,
        "conv1d: input length {t_in} (+2*{padding} pad) shorter than receptive span {span}"
    );
    (t_in + 2 * padding - span) / stride + 1
}

/// 1-D convolution. `x` is `[B, Cin, T]`, `w` is `[Cout, Cin/groups, K]`,
/// optional bias `[Cout]`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    w: NodeId,
    bias: Option<NodeId>,
    stride: usize,
    dilation: usize,
    padding: usize,
    groups: usize,
) -> NodeId {
    let vx = g.value(x).clone();
    let vw = g.value(w).clone();
    let vb = bias.map(|b| g.value(b).clone());
    assert_eq!(vx.rank(), 3, "conv1d: input must be [B, C, T], got {:?}", vx.shape());
    assert_eq!(vw.rank(), 3, "conv1d: weight must be [Cout, Cin/groups, K]");
    let (bsz, cin, t_in) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
    let (cout, cin_g, k) = (vw.shape()[0], vw.shape()[1], vw.shape()[2]);
    assert_eq!(cin % groups, 0, "conv1d: Cin {cin} not divisible by groups {groups}");
    assert_eq!(cout % groups, 0, "conv1d: Cout {cout} not divisible by groups {groups}");
    assert_eq!(cin / groups, cin_g, "conv1d: weight Cin/groups mismatch");
    if let Some(vb) = &vb {
        assert_eq!(vb.shape(), &[cout], "conv1d: bias shape");
    }
    let t_out = conv1d_out_len(t_in, k, stride, dilation, padding);

    let mut out = vec![T::zero(); bsz * cout * t_out];
    let xd = vx.data();
    let wd = vw.data();
    let cpg_out = cout / groups;
    for b in 0..bsz {
        for co in 0..cout {
            let group = co / cpg_out;
            let base_ci = group * cin_g;
            for to in 0..t_out {
                let mut acc = match &vb {
                    Some(vb) => vb.data()[co],
                    None => T::zero(),
                };
                for ci_g in 0..cin_g {
                    let ci = base_ci + ci_g;
                    for kk in 0..k {
                        let ti = (to * stride + kk * dilation) as isize - padding as isize;
                        if ti >= 0 && (ti as usize) < t_in {
                            acc += xd[(b * cin + ci) * t_in + ti as usize]
                                * wd[(co * cin_g + ci_g) * k + kk];
                        }
                    }
                }
                out[(b * cout + co) * t_out + to] = acc;
            }
        }
    }
    let out = Tensor::new(vec![bsz, cout, t_out], out);
    assert_finite("conv1d", &out);

    let requires = g.requires_grad(x)
        || g.requires_grad(w)
        || bias.map(|b| g.requires_grad(b)).unwrap_or(false);
    if !requires {
        return g.constant(out);
    }
    let mut parents = vec![x, w];
    if let Some(b) = bias {
        parents.push(b);
    }
    let has_bias = bias.is_some();
    g.push(
        out,
        true,
        parents,
        Some(Box::new(move |gout| {
            let gd = gout.data();
            let mut dx = vec![T::zero(); bsz * cin * t_in];
            let mut dw = vec![T::zero(); cout * cin_g * k];
            let mut db = vec![T::zero(); cout];
            let xd = vx.data();
            let wd = vw.data();
            for b in 0..bsz {
                for co in 0..cout {
                    let group = co / cpg_out;
                    let base_ci = group * cin_g;
                    for to in 0..t_out {
                        let go = gd[(b * cout + co) * t_out + to];
                        if has_bias {
                            db[co] += go;
                        }
                        if go == T::zero() {
                            continue;
                        }
                        for ci_g in 0..cin_g {
                            let ci = base_ci + ci_g;
                            for kk in 0..k {
                                let ti = (to * stride + kk * dilation) as isize - padding as isize;
                                if ti >= 0 && (ti as usize) < t_in {
                                    dx[(b * cin + ci) * t_in + ti as usize] +=
                                        go * wd[(co * cin_g + ci_g) * k + kk];
                                    dw[(co * cin_g + ci_g) * k + kk] +=
                                        go * xd[(b * cin + ci) * t_in + ti as usize];
                                }
                            }
                        }
                    }
                }
            }
            let mut grads = vec![
                Tensor::new(vec![bsz, cin, t_in], dx),
                Tensor::new(vec![cout, cin_g, k], dw),
            ];
            if has_bias {
                grads.push(Tensor::new(vec![cout], db));
            }
            grads
        })),
    )
}

pub fn transposed_conv1d_out_len(t_in: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let full = (t_in - 1) * stride + kernel;
    assert!(full >= 2 * padding, "transposed_conv1d: padding too large");
    full - 2 * padding
}

/// 1-D transposed convolution. `x` is `[B, Cin, T]`, `w` is `[Cin, Cout, K]`,
/// optional bias `[Cout]`. Output length is `(T-1)*stride + K - 2*padding`.
pub fn transposed_conv1d<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    w: NodeId,
    bias: Option<NodeId>,
    stride: usize,
    padding: usize,
) -> NodeId {
    let vx = g.value(x).clone();
    let vw = g.value(w).clone();
    let vb = bias.map(|b| g.value(b).clone());
    assert_eq!(vx.rank(), 3, "transposed_conv1d: input must be [B, C, T]");
    assert_eq!(vw.rank(), 3, "transposed_conv1d: weight must be [Cin, Cout, K]");
    let (bsz, cin, t_in) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
    let (cin_w, cout, k) = (vw.shape()[0], vw.shape()[1], vw.shape()[2]);
    assert_eq!(cin, cin_w, "transposed_conv1d: channel mismatch");
    if let Some(vb) = &vb {
        assert_eq!(vb.shape(), &[cout], "transposed_conv1d: bias shape");
    }
    let t_out = transposed_conv1d_out_len(t_in, k, stride, padding);

    let mut out = vec![T::zero(); bsz * cout * t_out];
    let xd = vx.data();
    let wd = vw.data();
    for b in 0..bsz {
        for ci in 0..cin {
            for ti in 0..t_in {
                let xv = xd[(b * cin + ci) * t_in + ti];
                if xv == T::zero() {
                    continue;
                }
                for co in 0..cout {
                    for kk in 0..k {
                        let to = (ti * stride + kk) as isize - padding as isize;
                        if to >= 0 && (to as usize) < t_out {
                            out[(b * cout + co) * t_out + to as usize] +=
                                xv * wd[(ci * cout + co) * k + kk];
                        }
                    }
                }
            }
        }
    }
    if let Some(vb) = &vb {
        for b in 0..bsz {
            for co in 0..cout {
                for to in 0..t_out {
                    out[(b * cout + co) * t_out + to] += vb.data()[co];
                }
            }
        }
    }
    let out = Tensor::new(vec![bsz, cout, t_out], out);
    assert_finite("transposed_conv1d", &out);

    let requires = g.requires_grad(x)
        || g.requires_grad(w)
        || bias.map(|b| g.requires_grad(b)).unwrap_or(false);
    if !requires {
        return g.constant(out);
    }
    let mut parents = vec![x, w];
    if let Some(b) = bias {
        parents.push(b);
    }
    let has_bias = bias.is_some();
    g.push(
        out,
        true,
        parents,
        Some(Box::new(move |gout| {
            let gd = gout.data();
            let xd = vx.data();
            let wd = vw.data();
            let mut dx = vec![T::zero(); bsz * cin * t_in];
            let mut dw = vec![T::zero(); cin * cout * k];
            let mut db = vec![T::zero(); cout];
            for b in 0..bsz {
                for ci in 0..cin {
                    for ti in 0..t_in {
                        let x_idx = (b * cin + ci) * t_in + ti;
                        for co in 0..cout {
                            for kk in 0..k {
                                let to = (ti * stride + kk) as isize - padding as isize;
                                if to >= 0 && (to as usize) < t_out {
                                    let go = gd[(b * cout + co) * t_out + to as usize];
                                    dx[x_idx] += go * wd[(ci * cout + co) * k + kk];
                                    dw[(ci * cout + co) * k + kk] += go * xd[x_idx];
                                }
                            }
                        }
                    }
                }
            }
            if has_bias {
                for b in 0..bsz {
                    for co in 0..cout {
                        for to in 0..t_out {
                            db[co] += gd[(b * cout + co) * t_out + to];
                        }
                    }
                }
            }
            let mut grads = vec![
                Tensor::new(vec![bsz, cin, t_in], dx),
                Tensor::new(vec![cin, cout, k], dw),
            ];
            if has_bias {
                grads.push(Tensor::new(vec![cout], db));
            }
            grads
        })),
    )
}

// ---------------------------------------------------------------------------
// axis reductions and softmax family
// ---------------------------------------------------------------------------

fn axis_geometry(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} out of range for shape {shape:?}");
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
    let mut s = shape.to_vec();
    if keepdim {
        s[axis] = 1;
    } else {
        s.remove(axis);
    }
    s
}

pub fn sum_axis<T: Scalar>(g: &mut Graph<T>, x: NodeId, axis: usize, keepdim: bool) -> NodeId {
    let vx = g.value(x).clone();
    let (outer, len, inner) = axis_geometry(vx.shape(), axis);
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for j in 0..len {
            for i in 0..inner {
                out[o * inner + i] += vx.data()[(o * len + j) * inner + i];
            }
        }
    }
    let out = Tensor::new(reduced_shape(vx.shape(), axis, keepdim), out);
    let in_shape = vx.shape().to_vec();
    record_unary(g, "sum_axis", x, out, move |gout| {
        let mut dx = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    dx[(o * len + j) * inner + i] = gout.data()[o * inner + i];
                }
            }
        }
        Tensor::new(in_shape.clone(), dx)
    })
}

pub fn mean_axis<T: Scalar>(g: &mut Graph<T>, x: NodeId, axis: usize, keepdim: bool) -> NodeId {
    let len = g.value(x).shape()[axis];
    let s = sum_axis(g, x, axis, keepdim);
    scale(g, s, 1.0 / len as f64)
}

pub fn sum_all<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let vx = g.value(x).clone();
    let total: T = vx.data().iter().copied().sum();
    let out = Tensor::scalar_tensor(total);
    let in_shape = vx.shape().to_vec();
    record_unary(g, "sum_all", x, out, move |gout| {
        Tensor::full(&in_shape, gout.scalar())
    })
}

pub fn mean_all<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let n = g.value(x).numel();
    let s = sum_all(g, x);
    scale(g, s, 1.0 / n as f64)
}

fn softmax_value<T: Scalar>(x: &Tensor<T>, axis: usize, log_mode: bool) -> Tensor<T> {
    let (outer, len, inner) = axis_geometry(x.shape(), axis);
    let mut out = vec![T::zero(); x.numel()];
    let xd = x.data();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let mut m = xd[at(0)];
            for j in 1..len {
                m = m.max(xd[at(j)]);
            }
            let mut z = T::zero();
            for j in 0..len {
                z += (xd[at(j)] - m).exp();
            }
            if log_mode {
                let lz = z.ln();
                for j in 0..len {
                    out[at(j)] = xd[at(j)] - m - lz;
                }
            } else {
                for j in 0..len {
                    out[at(j)] = (xd[at(j)] - m).exp() / z;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn softmax<T: Scalar>(g: &mut Graph<T>, x: NodeId, axis: usize) -> NodeId {
    let out = softmax_value(g.value(x), axis, false);
    let y = out.clone();
    let (outer, len, inner) = axis_geometry(g.value(x).shape(), axis);
    record_unary(g, "softmax", x, out, move |gout| {
        // dx = y * (g - sum_j g_j y_j) per lane
        let mut dx = vec![T::zero(); y.numel()];
        let yd = y.data();
        let gd = gout.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut dot = T::zero();
                for j in 0..len {
                    dot += gd[at(j)] * yd[at(j)];
                }
                for j in 0..len {
                    dx[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                }
            }
        }
        Tensor::new(y.shape().to_vec(), dx)
    })
}

pub fn log_softmax<T: Scalar>(g: &mut Graph<T>, x: NodeId, axis: usize) -> NodeId {
    let out = softmax_value(g.value(x), axis, true);
    let y = out.clone();
    let (outer, len, inner) = axis_geometry(g.value(x).shape(), axis);
    record_unary(g, "log_softmax", x, out, move |gout| {
        // dx = g - softmax(x) * sum_j g_j per lane
        let mut dx = vec![T::zero(); y.numel()];
        let yd = y.data();
        let gd = gout.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut gsum = T::zero();
                for j in 0..len {
                    gsum += gd[at(j)];
                }
                for j in 0..len {
                    dx[at(j)] = gd[at(j)] - yd[at(j)].exp() * gsum;
                }
            }
        }
        Tensor::new(y.shape().to_vec(), dx)
    })
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

fn transpose_value<T: Scalar>(x: &Tensor<T>, a: usize, b: usize) -> Tensor<T> {
    let mut shape = x.shape().to_vec();
    shape.swap(a, b);
    let in_strides = x.strides();
    let mut perm_strides: Vec<usize> = in_strides.clone();
    perm_strides.swap(a, b);
    let numel = x.numel();
    let rank = shape.len();
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let xd = x.data();
    for _ in 0..numel {
        out.push(xd[off]);
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            off += perm_strides[axis];
            if idx[axis] < shape[axis] {
                break;
            }
            idx[axis] = 0;
            off -= perm_strides[axis] * shape[axis];
        }
    }
    Tensor::new(shape, out)
}

pub fn transpose<T: Scalar>(g: &mut Graph<T>, x: NodeId, a: usize, b: usize) -> NodeId {
    let out = transpose_value(g.value(x), a, b);
    record_unary(g, "transpose", x, out, move |gout| transpose_value(gout, a, b))
}

pub fn reshape<T: Scalar>(g: &mut Graph<T>, x: NodeId, shape: Vec<usize>) -> NodeId {
    let in_shape = g.value(x).shape().to_vec();
    let out = g.value(x).reshaped(shape);
    record_unary(g, "reshape", x, out, move |gout| {
        gout.reshaped(in_shape.clone())
    })
}

pub fn concat<T: Scalar>(g: &mut Graph<T>, xs: &[NodeId], axis: usize) -> NodeId {
    assert!(!xs.is_empty(), "concat: empty input list");
    let shapes: Vec<Vec<usize>> = xs.iter().map(|&x| g.value(x).shape().to_vec()).collect();
    for s in &shapes[1..] {
        assert_eq!(s.len(), shapes[0].len(), "concat: rank mismatch");
        for (ax, (&d0, &d)) in shapes[0].iter().zip(s.iter()).enumerate() {
            assert!(ax == axis || d0 == d, "concat: non-axis dims differ");
        }
    }
    let mut out_shape = shapes[0].clone();
    out_shape[axis] = shapes.iter().map(|s| s[axis]).sum();
    let (outer, _, inner) = axis_geometry(&out_shape, axis);
    let total_len = out_shape[axis];
    let mut out = vec![T::zero(); outer * total_len * inner];
    let mut offset = 0usize;
    for (xi, &x) in xs.iter().enumerate() {
        let len = shapes[xi][axis];
        let xd = g.value(x).data();
        for o in 0..outer {
            for j in 0..len {
                let src = (o * len + j) * inner;
                let dst = (o * total_len + offset + j) * inner;
                out[dst..dst + inner].copy_from_slice(&xd[src..src + inner]);
            }
        }
        offset += len;
    }
    let out = Tensor::new(out_shape, out);
    assert_finite("concat", &out);
    let requires = xs.iter().any(|&x| g.requires_grad(x));
    if !requires {
        return g.constant(out);
    }
    let lens: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
    let parent_shapes = shapes.clone();
    g.push(
        out,
        true,
        xs.to_vec(),
        Some(Box::new(move |gout| {
            let gd = gout.data();
            let mut grads = Vec::with_capacity(lens.len());
            let mut offset = 0usize;
            for (xi, &len) in lens.iter().enumerate() {
                let mut dx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        let src = (o * total_len + offset + j) * inner;
                        let dst = (o * len + j) * inner;
                        dx[dst..dst + inner].copy_from_slice(&gd[src..src + inner]);
                    }
                }
                grads.push(Tensor::new(parent_shapes[xi].clone(), dx));
                offset += len;
            }
            grads
        })),
    )
}

pub fn slice<T: Scalar>(g: &mut Graph<T>, x: NodeId, axis: usize, start: usize, end: usize) -> NodeId {
    let vx = g.value(x).clone();
    let (outer, len, inner) = axis_geometry(vx.shape(), axis);
    assert!(start <= end && end <= len, "slice: range {start}..{end} out of axis length {len}");
    let out_len = end - start;
    let mut out_shape = vx.shape().to_vec();
    out_shape[axis] = out_len;
    let mut out = vec![T::zero(); outer * out_len * inner];
    for o in 0..outer {
        for j in 0..out_len {
            let src = (o * len + start + j) * inner;
            let dst = (o * out_len + j) * inner;
            out[dst..dst + inner].copy_from_slice(&vx.data()[src..src + inner]);
        }
    }
    let out = Tensor::new(out_shape, out);
    let in_shape = vx.shape().to_vec();
    record_unary(g, "slice", x, out, move |gout| {
        let mut dx = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            for j in 0..out_len {
                let src = (o * out_len + j) * inner;
                let dst = (o * len + start + j) * inner;
                dx[dst..dst + inner].copy_from_slice(&gout.data()[src..src + inner]);
            }
        }
        Tensor::new(in_shape.clone(), dx)
    })
}

/// Gather along `axis` by fixed indices (not differentiable w.r.t. indices).
pub fn index_select<T: Scalar>(g: &mut Graph<T>, x: NodeId, axis: usize, indices: &[usize]) -> NodeId {
    let vx = g.value(x).clone();
    let (outer, len, inner) = axis_geometry(vx.shape(), axis);
    for &ix in indices {
        assert!(ix < len, "index_select: index {ix} out of axis length {len}");
    }
    let out_len = indices.len();
    let mut out_shape = vx.shape().to_vec();
    out_shape[axis] = out_len;
    let mut out = vec![T::zero(); outer * out_len * inner];
    for o in 0..outer {
        for (j, &ix) in indices.iter().enumerate() {
            let src = (o * len + ix) * inner;
            let dst = (o * out_len + j) * inner;
            out[dst..dst + inner].copy_from_slice(&vx.data()[src..src + inner]);
        }
    }
    let out = Tensor::new(out_shape, out);
    let in_shape = vx.shape().to_vec();
    let indices = indices.to_vec();
    record_unary(g, "index_select", x, out, move |gout| {
        let mut dx = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            for (j, &ix) in indices.iter().enumerate() {
                let src = (o * out_len + j) * inner;
                let dst = (o * len + ix) * inner;
                for i in 0..inner {
                    dx[dst + i] += gout.data()[src + i];
                }
            }
        }
        Tensor::new(in_shape.clone(), dx)
    })
}

/// Row lookup into an embedding table `[N, D]`.
pub fn embedding_lookup<T: Scalar>(g: &mut Graph<T>, table: NodeId, ids: &[usize]) -> NodeId {
    assert_eq!(g.value(table).rank(), 2, "embedding_lookup: table must be [N, D]");
    index_select(g, table, 0, ids)
}

// ---------------------------------------------------------------------------
// normalization and attention composites
// ---------------------------------------------------------------------------

/// Normalize rows (last axis) to unit L2 norm. Rows with norm below 1e-12
/// map to zero vectors and receive no gradient.
pub fn l2_normalize<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let vx = g.value(x).clone();
    let rank = vx.rank();
    assert!(rank >= 1, "l2_normalize: rank must be >= 1");
    let (outer, len, inner) = axis_geometry(vx.shape(), rank - 1);
    debug_assert_eq!(inner, 1);
    let guard = t::<T>(1e-12);
    let mut out = vec![T::zero(); vx.numel()];
    let mut norms = vec![T::zero(); outer];
    for o in 0..outer {
        let row = &vx.data()[o * len..(o + 1) * len];
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        norms[o] = norm;
        if norm >= guard {
            for j in 0..len {
                out[o * len + j] = row[j] / norm;
            }
        }
    }
    let out = Tensor::new(vx.shape().to_vec(), out);
    let y = out.clone();
    record_unary(g, "l2_normalize", x, out, move |gout| {
        let mut dx = vec![T::zero(); y.numel()];
        let yd = y.data();
        let gd = gout.data();
        for o in 0..outer {
            if norms[o] < guard {
                continue;
            }
            let mut dot = T::zero();
            for j in 0..len {
                dot += gd[o * len + j] * yd[o * len + j];
            }
            for j in 0..len {
                dx[o * len + j] = (gd[o * len + j] - yd[o * len + j] * dot) / norms[o];
            }
        }
        Tensor::new(y.shape().to_vec(), dx)
    })
}

/// Layer normalization over the last axis with learnable gain and bias.
pub fn layer_norm<T: Scalar>(g: &mut Graph<T>, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
    let rank = g.value(x).rank();
    let axis = rank - 1;
    let m = mean_axis(g, x, axis, true);
    let c = sub(g, x, m);
    let c2 = mul(g, c, c);
    let v = mean_axis(g, c2, axis, true);
    let veps = affine(g, v, 1.0, 1e-5);
    let s = sqrt(g, veps);
    let xhat = div(g, c, s);
    let scaled = mul(g, xhat, gamma);
    add(g, scaled, beta)
}

/// Scaled dot-product attention. `q`, `k`, `v` are `[T, d]` or `[h, T, d]`;
/// `mask` is an additive bias broadcast onto the `[.., Tq, Tk]` score matrix.
pub fn scaled_dot_attention<T: Scalar>(
    g: &mut Graph<T>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    mask: Option<NodeId>,
) -> NodeId {
    let rank = g.value(q).rank();
    assert!(rank == 2 || rank == 3, "scaled_dot_attention: rank 2 or 3");
    let dh = *g.value(q).shape().last().unwrap();
    let kt = transpose(g, k, rank - 2, rank - 1);
    let scores = matmul(g, q, kt);
    let scaled = scale(g, scores, 1.0 / (dh as f64).sqrt());
    let biased = match mask {
        Some(m) => add(g, scaled, m),
        None => scaled,
    };
    let attn = softmax(g, biased, rank - 1);
    matmul(g, attn, v)
}
