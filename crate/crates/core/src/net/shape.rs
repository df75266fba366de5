use serde::{Deserialize, Serialize};

use super::NetError;

/// `height` runs along time (frames), `width` along features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape2D {
    pub height: usize,
    pub width: usize,
}

impl Shape2D {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// The kernel spans the whole feature axis and slides along time only.
    Temporal,
    #[serde(rename = "2d")]
    TwoD,
}

/// Convolution hyperparameters. In temporal mode `kernel_w == 0` means "the full input
/// width", `stride_w` is ignored and padding applies to the time axis only; in 2D mode
/// `padding` is applied symmetrically on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub padding: usize,
    pub out_channels: usize,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn temporal(kernel_h: usize, stride_h: usize, padding: usize, out_channels: usize) -> Self {
        Self {
            kernel_h,
            kernel_w: 0,
            stride_h,
            stride_w: 1,
            padding,
            out_channels,
            mode: ConvMode::Temporal,
        }
    }

    pub fn two_d(kernel: usize, stride: usize, padding: usize, out_channels: usize) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            stride_h: stride,
            stride_w: stride,
            padding,
            out_channels,
            mode: ConvMode::TwoD,
        }
    }

    /// Concrete per-axis geometry for an input of the given shape.
    pub fn resolve(&self, input: Shape2D, in_channels: usize) -> Result<ResolvedConv, NetError> {
        let (kw, sw, pw) = match self.mode {
            ConvMode::Temporal => {
                if self.kernel_w != 0 && self.kernel_w != input.width {
                    return Err(NetError::InvalidSpec(format!(
                        "temporal kernel width {} must span the input width {}",
                        self.kernel_w, input.width
                    )));
                }
                (input.width, 1, 0)
            }
            ConvMode::TwoD => (self.kernel_w, self.stride_w, self.padding),
        };
        let r = ResolvedConv {
            kernel_h: self.kernel_h,
            kernel_w: kw,
            stride_h: self.stride_h,
            stride_w: sw,
            pad_h: self.padding,
            pad_w: pw,
            in_channels,
            out_channels: self.out_channels,
        };
        if r.kernel_h == 0
            || r.kernel_w == 0
            || r.stride_h == 0
            || r.stride_w == 0
            || r.out_channels == 0
            || in_channels == 0
        {
            return Err(NetError::InvalidSpec(format!(
                "zero-sized convolution parameter in {self:?}"
            )));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedConv {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ResolvedConv {
    pub fn output(&self, input: Shape2D) -> Result<Shape2D, NetError> {
        let axis = |n: usize, k: usize, p: usize, s: usize, name: &str| {
            (n + 2 * p)
                .checked_sub(k)
                .map(|span| span / s + 1)
                .ok_or_else(|| {
                    NetError::Shape(format!(
                        "{name} extent {n} (+2·{p} padding) smaller than kernel {k}"
                    ))
                })
        };
        Ok(Shape2D {
            height: axis(
                input.height,
                self.kernel_h,
                self.pad_h,
                self.stride_h,
                "time",
            )?,
            width: axis(
                input.width,
                self.kernel_w,
                self.pad_w,
                self.stride_w,
                "feature",
            )?,
        })
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.kernel_h * self.kernel_w * self.in_channels
    }

    pub fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels
    }
}

/// Output extent of a convolution, per axis `floor((in − kernel + 2·padding) / stride) + 1`.
pub fn mask_size(input: Shape2D, spec: &ConvSpec) -> Result<Shape2D, NetError> {
    spec.resolve(input, 1)?.output(input)
}

/// The same formula applied to a valid (unpadded) time length, never dropping below one
/// output step.
pub fn valid_after(valid: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (valid + 2 * padding).saturating_sub(kernel) / stride + 1
}

/// Max-pooling along time only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn output(&self, input: Shape2D) -> Result<Shape2D, NetError> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(NetError::InvalidSpec(format!(
                "zero-sized pooling {self:?}"
            )));
        }
        let h = input.height.checked_sub(self.kernel).ok_or_else(|| {
            NetError::Shape(format!(
                "time extent {} smaller than pool {}",
                input.height, self.kernel
            ))
        })?;
        Ok(Shape2D::new(h / self.stride + 1, input.width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageSpec {
    Conv(ConvSpec),
    MaxPool(PoolSpec),
}
