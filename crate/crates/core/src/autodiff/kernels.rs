//! Low-level numeric kernels shared by the graph ops.

/// `C = op(A) · op(B) + beta · C` where `op(A)` is `m×k` and `op(B)` is `k×n`.
///
/// `a_t` means `A` is stored as `k×m`; `b_t` means `B` is stored as `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides describe
    // exactly those buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Numpy-style broadcast of two shapes (right-aligned, size-1 axes stretch).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

enum Pattern {
    Same,
    Suffix(usize),
    General,
}

fn pattern(out: &[usize], inp: &[usize]) -> Pattern {
    let n_in: usize = inp.iter().product();
    if inp == out {
        return Pattern::Same;
    }
    if inp.len() <= out.len() && out[out.len() - inp.len()..] == *inp {
        return Pattern::Suffix(n_in);
    }
    Pattern::General
}

/// Strides of `inp` expanded to the output rank, zero on broadcast axes.
fn broadcast_strides(out: &[usize], inp: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..inp.len()).rev() {
        let oi = rank - inp.len() + i;
        strides[oi] = if inp[i] == 1 { 0 } else { acc };
        acc *= inp[i];
    }
    strides
}

/// Calls `f(out_index, a_index, b_index)` for every element of the broadcast output.
pub(crate) fn for_each_broadcast(
    out: &[usize],
    a: &[usize],
    b: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    match (pattern(out, a), pattern(out, b)) {
        (Pattern::Same, Pattern::Same) => (0..n).for_each(|i| f(i, i, i)),
        (Pattern::Same, Pattern::Suffix(m)) => (0..n).for_each(|i| f(i, i, i % m)),
        (Pattern::Suffix(m), Pattern::Same) => (0..n).for_each(|i| f(i, i % m, i)),
        _ => {
            let rank = out.len();
            let sa = broadcast_strides(out, a);
            let sb = broadcast_strides(out, b);
            let mut idx = vec![0usize; rank];
            let (mut ia, mut ib) = (0usize, 0usize);
            for o in 0..n {
                f(o, ia, ib);
                for ax in (0..rank).rev() {
                    idx[ax] += 1;
                    ia += sa[ax];
                    ib += sb[ax];
                    if idx[ax] < out[ax] {
                        break;
                    }
                    ia -= sa[ax] * out[ax];
                    ib -= sb[ax] * out[ax];
                    idx[ax] = 0;
                }
            }
        }
    }
}

/// Output length of a strided 1D convolution with explicit zero padding.
pub(crate) fn conv_out_len(t: usize, kernel: usize, stride: usize, pad_l: usize, pad_r: usize) -> Option<usize> {
    let padded = t + pad_l + pad_r;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Unfolds `[B, T, C]` into `[B·T_out, K·C]` patch rows.
pub(crate) fn im2col(
    x: &[f64],
    (b, t, c): (usize, usize, usize),
    kernel: usize,
    stride: usize,
    pad_l: usize,
    t_out: usize,
) -> Vec<f64> {
    let row = kernel * c;
    let mut cols = vec![0.0; b * t_out * row];
    for bi in 0..b {
        for to in 0..t_out {
            let dst = &mut cols[(bi * t_out + to) * row..(bi * t_out + to + 1) * row];
            for k in 0..kernel {
                let ti = (to * stride + k) as isize - pad_l as isize;
                if ti < 0 || ti as usize >= t {
                    continue;
                }
                let src = (bi * t + ti as usize) * c;
                dst[k * c..(k + 1) * c].copy_from_slice(&x[src..src + c]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back into `[B, T, C]`.
pub(crate) fn col2im(
    cols: &[f64],
    (b, t, c): (usize, usize, usize),
    kernel: usize,
    stride: usize,
    pad_l: usize,
    t_out: usize,
) -> Vec<f64> {
    let row = kernel * c;
    let mut x = vec![0.0; b * t * c];
    for bi in 0..b {
        for to in 0..t_out {
            let src = &cols[(bi * t_out + to) * row..(bi * t_out + to + 1) * row];
            for k in 0..kernel {
                let ti = (to * stride + k) as isize - pad_l as isize;
                if ti < 0 || ti as usize >= t {
                    continue;
                }
                let dst = (bi * t + ti as usize) * c;
                for ci in 0..c {
                    x[dst + ci] += src[k * c + ci];
                }
            }
        }
    }
    x
}
