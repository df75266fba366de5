use super::{axpy, dot, sigmoid, NetError, Scalar};

/// One direction's parameters, gate order `i, f, g, o`: `w_ih` is `[4H][F]`, `w_hh` is
/// `[4H][H]`, `b` is `[4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a, F> {
    pub w_ih: &'a [F],
    pub w_hh: &'a [F],
    pub b: &'a [F],
}

impl<F> LstmWeights<'_, F> {
    fn check(&self, f_in: usize, hidden: usize) -> Result<(), NetError> {
        let g = 4 * hidden;
        if self.w_ih.len() != g * f_in || self.w_hh.len() != g * hidden || self.b.len() != g {
            return Err(NetError::Shape(format!(
                "LSTM weights {}/{}/{} for input {f_in}, hidden {hidden}",
                self.w_ih.len(),
                self.w_hh.len(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

/// Per-step activations of one direction, indexed by processing order.
#[derive(Debug, Clone, PartialEq)]
struct DirCache<F> {
    gates: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    h: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmCache<F> {
    pub steps: usize,
    pub input_dims: usize,
    pub hidden: usize,
    pub valid: usize,
    fwd: DirCache<F>,
    bwd: DirCache<F>,
}

/// Gradients for both directions (`[w_ih, w_hh, b]`) and the input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmGrads<F> {
    pub fwd: [Vec<F>; 3],
    pub bwd: [Vec<F>; 3],
    pub d_input: Vec<F>,
}

fn time_index(reverse: bool, valid: usize, k: usize) -> usize {
    if reverse {
        valid - 1 - k
    } else {
        k
    }
}

fn run_direction<F: Scalar>(
    x: &[F],
    f_in: usize,
    hidden: usize,
    valid: usize,
    w: &LstmWeights<F>,
    reverse: bool,
) -> DirCache<F> {
    let g4 = 4 * hidden;
    let mut cache = DirCache {
        gates: vec![F::zero(); valid * g4],
        c: vec![F::zero(); valid * hidden],
        tanh_c: vec![F::zero(); valid * hidden],
        h: vec![F::zero(); valid * hidden],
    };
    let mut z = vec![F::zero(); g4];
    for k in 0..valid {
        let t = time_index(reverse, valid, k);
        let xt = &x[t * f_in..(t + 1) * f_in];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = w.b[r] + dot(&w.w_ih[r * f_in..(r + 1) * f_in], xt);
            if k > 0 {
                let hp = &cache.h[(k - 1) * hidden..k * hidden];
                *zr = *zr + dot(&w.w_hh[r * hidden..(r + 1) * hidden], hp);
            }
        }
        for j in 0..hidden {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hidden + j]);
            let g = z[2 * hidden + j].tanh();
            let o = sigmoid(z[3 * hidden + j]);
            let c_prev = if k > 0 {
                cache.c[(k - 1) * hidden + j]
            } else {
                F::zero()
            };
            let c = f * c_prev + i * g;
            let tc = c.tanh();
            let gs = &mut cache.gates[k * g4..(k + 1) * g4];
            gs[j] = i;
            gs[hidden + j] = f;
            gs[2 * hidden + j] = g;
            gs[3 * hidden + j] = o;
            cache.c[k * hidden + j] = c;
            cache.tanh_c[k * hidden + j] = tc;
            cache.h[k * hidden + j] = o * tc;
        }
    }
    cache
}

/// Bidirectional LSTM over the first `valid` rows of a `steps × input_dims` sequence.
/// Output is `steps × 2H`: forward states in the first `H` columns, backward states (which
/// start at row `valid − 1`) in the last `H`. Rows `>= valid` are exactly zero.
pub fn bilstm_forward<F: Scalar>(
    x: &[F],
    steps: usize,
    input_dims: usize,
    valid: usize,
    hidden: usize,
    fwd: &LstmWeights<F>,
    bwd: &LstmWeights<F>,
) -> Result<(Vec<F>, BiLstmCache<F>), NetError> {
    if x.len() != steps * input_dims {
        return Err(NetError::Shape(format!(
            "{} values for {steps}×{input_dims}",
            x.len()
        )));
    }
    if valid == 0 || valid > steps {
        return Err(NetError::ValidLength { valid, len: steps });
    }
    fwd.check(input_dims, hidden)?;
    bwd.check(input_dims, hidden)?;
    let cf = run_direction(x, input_dims, hidden, valid, fwd, false);
    let cb = run_direction(x, input_dims, hidden, valid, bwd, true);
    let mut out = vec![F::zero(); steps * 2 * hidden];
    for k in 0..valid {
        let tf = k;
        out[tf * 2 * hidden..tf * 2 * hidden + hidden]
            .copy_from_slice(&cf.h[k * hidden..(k + 1) * hidden]);
        let tb = valid - 1 - k;
        out[tb * 2 * hidden + hidden..(tb + 1) * 2 * hidden]
            .copy_from_slice(&cb.h[k * hidden..(k + 1) * hidden]);
    }
    Ok((
        out,
        BiLstmCache {
            steps,
            input_dims,
            hidden,
            valid,
            fwd: cf,
            bwd: cb,
        },
    ))
}

fn backprop_direction<F: Scalar>(
    x: &[F],
    cache: &BiLstmCache<F>,
    dir: &DirCache<F>,
    w: &LstmWeights<F>,
    d_out: &[F],
    reverse: bool,
    d_input: &mut [F],
) -> [Vec<F>; 3] {
    let (f_in, hidden, valid) = (cache.input_dims, cache.hidden, cache.valid);
    let g4 = 4 * hidden;
    let col = if reverse { hidden } else { 0 };
    let mut dw_ih = vec![F::zero(); g4 * f_in];
    let mut dw_hh = vec![F::zero(); g4 * hidden];
    let mut db = vec![F::zero(); g4];
    let mut dh_next = vec![F::zero(); hidden];
    let mut dc_next = vec![F::zero(); hidden];
    let mut dz = vec![F::zero(); g4];
    let one = F::one();
    for k in (0..valid).rev() {
        let t = time_index(reverse, valid, k);
        let gs = &dir.gates[k * g4..(k + 1) * g4];
        for j in 0..hidden {
            let (i, f, g, o) = (
                gs[j],
                gs[hidden + j],
                gs[2 * hidden + j],
                gs[3 * hidden + j],
            );
            let tc = dir.tanh_c[k * hidden + j];
            let c_prev = if k > 0 {
                dir.c[(k - 1) * hidden + j]
            } else {
                F::zero()
            };
            let dh = d_out[t * 2 * hidden + col + j] + dh_next[j];
            let dc = dh * o * (one - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (one - i);
            dz[hidden + j] = dc * c_prev * f * (one - f);
            dz[2 * hidden + j] = dc * i * (one - g * g);
            dz[3 * hidden + j] = dh * tc * o * (one - o);
            dc_next[j] = dc * f;
        }
        let xt = &x[t * f_in..(t + 1) * f_in];
        dh_next.fill(F::zero());
        let dxt = &mut d_input[t * f_in..(t + 1) * f_in];
        for (r, &d) in dz.iter().enumerate() {
            if d.is_zero() {
                continue;
            }
            db[r] = db[r] + d;
            axpy(d, xt, &mut dw_ih[r * f_in..(r + 1) * f_in]);
            axpy(d, &w.w_ih[r * f_in..(r + 1) * f_in], dxt);
            if k > 0 {
                axpy(
                    d,
                    &dir.h[(k - 1) * hidden..k * hidden],
                    &mut dw_hh[r * hidden..(r + 1) * hidden],
                );
                axpy(d, &w.w_hh[r * hidden..(r + 1) * hidden], &mut dh_next);
            }
        }
    }
    [dw_ih, dw_hh, db]
}

/// Backpropagation through time for both directions. Rows of `d_out` at or beyond the valid
/// length contribute nothing.
pub fn bilstm_backward<F: Scalar>(
    x: &[F],
    cache: &BiLstmCache<F>,
    fwd: &LstmWeights<F>,
    bwd: &LstmWeights<F>,
    d_out: &[F],
) -> Result<BiLstmGrads<F>, NetError> {
    if x.len() != cache.steps * cache.input_dims || d_out.len() != cache.steps * 2 * cache.hidden {
        return Err(NetError::Shape(
            "BiLSTM gradient does not match the forward context".into(),
        ));
    }
    fwd.check(cache.input_dims, cache.hidden)?;
    bwd.check(cache.input_dims, cache.hidden)?;
    let mut d_input = vec![F::zero(); x.len()];
    let gf = backprop_direction(x, cache, &cache.fwd, fwd, d_out, false, &mut d_input);
    let gb = backprop_direction(x, cache, &cache.bwd, bwd, d_out, true, &mut d_input);
    Ok(BiLstmGrads {
        fwd: gf,
        bwd: gb,
        d_input,
    })
}
