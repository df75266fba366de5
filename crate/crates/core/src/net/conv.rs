use super::shape::{valid_after, PoolSpec, ResolvedConv, Shape2D};
use super::{axpy, dot, NetError, Scalar};

/// One sample's feature map, channels-last: `data[(t * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation<F> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Activation<F> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![F::zero(); height * width * channels],
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<F>,
    ) -> Result<Self, NetError> {
        if data.len() != height * width * channels {
            return Err(NetError::Shape(format!(
                "{} values for a {height}×{width}×{channels} map",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> Shape2D {
        Shape2D::new(self.height, self.width)
    }

    pub fn row_len(&self) -> usize {
        self.width * self.channels
    }

    pub fn at(&self, t: usize, x: usize, c: usize) -> F {
        self.data[(t * self.width + x) * self.channels + c]
    }
}

fn check_valid(valid: usize, len: usize) -> Result<(), NetError> {
    if valid == 0 || valid > len {
        return Err(NetError::ValidLength { valid, len });
    }
    Ok(())
}

/// Gathers the receptive field of output position `(oy, ox)` in `[ky][kx][c]` order.
/// Rows at or beyond `valid_in` read as zero, exactly like padding.
fn gather<F: Scalar>(
    input: &Activation<F>,
    valid_in: usize,
    rc: &ResolvedConv,
    oy: usize,
    ox: usize,
    patch: &mut [F],
) {
    let c = input.channels;
    let row = input.row_len();
    let full_rows = rc.pad_w == 0 && rc.kernel_w == input.width;
    for ky in 0..rc.kernel_h {
        let iy = (oy * rc.stride_h + ky) as isize - rc.pad_h as isize;
        let dst = &mut patch[ky * rc.kernel_w * c..(ky + 1) * rc.kernel_w * c];
        if iy < 0 || iy as usize >= valid_in {
            dst.fill(F::zero());
            continue;
        }
        let base = iy as usize * row;
        if full_rows {
            dst.copy_from_slice(&input.data[base..base + row]);
            continue;
        }
        for kx in 0..rc.kernel_w {
            let ix = (ox * rc.stride_w + kx) as isize - rc.pad_w as isize;
            let d = &mut dst[kx * c..(kx + 1) * c];
            if ix < 0 || ix as usize >= input.width {
                d.fill(F::zero());
            } else {
                let s = base + ix as usize * c;
                d.copy_from_slice(&input.data[s..s + c]);
            }
        }
    }
}

fn scatter<F: Scalar>(
    d_input: &mut Activation<F>,
    valid_in: usize,
    rc: &ResolvedConv,
    oy: usize,
    ox: usize,
    dpatch: &[F],
) {
    let c = d_input.channels;
    let row = d_input.row_len();
    for ky in 0..rc.kernel_h {
        let iy = (oy * rc.stride_h + ky) as isize - rc.pad_h as isize;
        if iy < 0 || iy as usize >= valid_in {
            continue;
        }
        let base = iy as usize * row;
        for kx in 0..rc.kernel_w {
            let ix = (ox * rc.stride_w + kx) as isize - rc.pad_w as isize;
            if ix < 0 || ix as usize >= d_input.width {
                continue;
            }
            let s = base + ix as usize * c;
            let src = &dpatch[(ky * rc.kernel_w + kx) * c..(ky * rc.kernel_w + kx + 1) * c];
            for (d, g) in d_input.data[s..s + c].iter_mut().zip(src) {
                *d = *d + *g;
            }
        }
    }
}

fn check_params<F>(
    input: &Activation<F>,
    rc: &ResolvedConv,
    weight: &[F],
    bias: &[F],
) -> Result<(), NetError> {
    if input.channels != rc.in_channels {
        return Err(NetError::Shape(format!(
            "input has {} channels, convolution expects {}",
            input.channels, rc.in_channels
        )));
    }
    if weight.len() != rc.weight_len() || bias.len() != rc.out_channels {
        return Err(NetError::Shape(format!(
            "weight/bias lengths {}/{} vs expected {}/{}",
            weight.len(),
            bias.len(),
            rc.weight_len(),
            rc.out_channels
        )));
    }
    Ok(())
}

/// Cross-correlation with bias (`weight` laid out `[out][kh][kw][in]`). Only the first
/// `valid_out` output rows are computed; the rest stay exactly zero.
/// Returns the pre-activation map and `valid_out`.
pub fn conv_forward<F: Scalar>(
    input: &Activation<F>,
    valid_in: usize,
    rc: &ResolvedConv,
    weight: &[F],
    bias: &[F],
) -> Result<(Activation<F>, usize), NetError> {
    check_params(input, rc, weight, bias)?;
    check_valid(valid_in, input.height)?;
    let out = rc.output(input.shape())?;
    let valid_out = valid_after(valid_in, rc.kernel_h, rc.stride_h, rc.pad_h).min(out.height);
    let co = rc.out_channels;
    let pl = rc.patch_len();
    let mut y = Activation::zeros(out.height, out.width, co);
    let mut patch = vec![F::zero(); pl];
    for oy in 0..valid_out {
        for ox in 0..out.width {
            gather(input, valid_in, rc, oy, ox, &mut patch);
            let dst = &mut y.data[(oy * out.width + ox) * co..(oy * out.width + ox + 1) * co];
            for (k, d) in dst.iter_mut().enumerate() {
                *d = bias[k] + dot(&weight[k * pl..(k + 1) * pl], &patch);
            }
        }
    }
    Ok((y, valid_out))
}

/// Accumulates parameter gradients into `d_weight`/`d_bias` and, when requested, the input
/// gradient into `d_input`. Rows of `d_output` at or beyond `valid_out` are ignored.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<F: Scalar>(
    input: &Activation<F>,
    valid_in: usize,
    rc: &ResolvedConv,
    weight: &[F],
    d_output: &Activation<F>,
    valid_out: usize,
    d_weight: &mut [F],
    d_bias: &mut [F],
    mut d_input: Option<&mut Activation<F>>,
) -> Result<(), NetError> {
    check_params(input, rc, weight, d_bias)?;
    let out = rc.output(input.shape())?;
    if d_output.shape() != out
        || d_output.channels != rc.out_channels
        || d_weight.len() != weight.len()
    {
        return Err(NetError::Shape(
            "gradient does not match the forward context".into(),
        ));
    }
    if let Some(d) = d_input.as_deref() {
        if d.shape() != input.shape() || d.channels != input.channels {
            return Err(NetError::Shape(
                "input-gradient buffer does not match the input".into(),
            ));
        }
    }
    let co = rc.out_channels;
    let pl = rc.patch_len();
    let mut patch = vec![F::zero(); pl];
    let mut dpatch = vec![F::zero(); pl];
    for oy in 0..valid_out.min(out.height) {
        for ox in 0..out.width {
            let g = &d_output.data[(oy * out.width + ox) * co..(oy * out.width + ox + 1) * co];
            if g.iter().all(|v| v.is_zero()) {
                continue;
            }
            gather(input, valid_in, rc, oy, ox, &mut patch);
            dpatch.fill(F::zero());
            for (k, &gk) in g.iter().enumerate() {
                if gk.is_zero() {
                    continue;
                }
                axpy(gk, &patch, &mut d_weight[k * pl..(k + 1) * pl]);
                d_bias[k] = d_bias[k] + gk;
                if d_input.is_some() {
                    axpy(gk, &weight[k * pl..(k + 1) * pl], &mut dpatch);
                }
            }
            if let Some(d) = d_input.as_deref_mut() {
                scatter(d, valid_in, rc, oy, ox, &dpatch);
            }
        }
    }
    Ok(())
}

/// Argmax bookkeeping from a max-pool forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    /// Flat input index chosen for each output element (valid rows only).
    pub argmax: Vec<usize>,
    pub input_height: usize,
    pub valid_out: usize,
}

/// Max-pooling along time. Windows read only rows below `valid_in`; ties go to the
/// earliest frame.
pub fn pool_forward<F: Scalar>(
    input: &Activation<F>,
    valid_in: usize,
    spec: &PoolSpec,
) -> Result<(Activation<F>, usize, PoolCache), NetError> {
    check_valid(valid_in, input.height)?;
    let out = spec.output(input.shape())?;
    let valid_out = valid_after(valid_in, spec.kernel, spec.stride, 0).min(out.height);
    let row = input.row_len();
    let mut y = Activation::zeros(out.height, input.width, input.channels);
    let mut argmax = vec![usize::MAX; y.data.len()];
    for oy in 0..valid_out {
        let start = oy * spec.stride;
        let end = (start + spec.kernel).min(valid_in);
        for j in 0..row {
            let mut best = start * row + j;
            for iy in start + 1..end {
                let idx = iy * row + j;
                if input.data[idx] > input.data[best] {
                    best = idx;
                }
            }
            y.data[oy * row + j] = input.data[best];
            argmax[oy * row + j] = best;
        }
    }
    Ok((
        y,
        valid_out,
        PoolCache {
            argmax,
            input_height: input.height,
            valid_out,
        },
    ))
}

pub fn pool_backward<F: Scalar>(d_output: &Activation<F>, cache: &PoolCache) -> Activation<F> {
    let row = d_output.row_len();
    let mut d = Activation::zeros(cache.input_height, d_output.width, d_output.channels);
    for (j, g) in d_output.data[..cache.valid_out * row].iter().enumerate() {
        let i = cache.argmax[j];
        d.data[i] = d.data[i] + *g;
    }
    d
}
