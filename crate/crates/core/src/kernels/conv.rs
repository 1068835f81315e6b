use rayon::prelude::*;

use crate::error::{argument, Result};

/// Dense channel-major volume: value `(c, z, y, x)` lives at
/// `((c * depth + z) * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub channels: usize,
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Volume {
    pub fn new(channels: usize, dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * dims.iter().product::<usize>() {
            return Err(argument(format!("volume data has {} values for shape {channels}x{dims:?}", data.len())));
        }
        Ok(Volume { channels, dims, data })
    }

    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Volume { channels, dims, data: vec![0.0; channels * dims.iter().product::<usize>()] }
    }

    pub fn get(&self, c: usize, z: usize, y: usize, x: usize) -> f64 {
        let [d, h, w] = self.dims;
        self.data[((c * d + z) * h + y) * w + x]
    }
}

/// Convolution layer geometry and weights. Weight `(n, m, a, b, e)` for
/// output channel `n`, input channel `m` and kernel offset `(a, b, e)` sits
/// at `(((n * in_channels + m) * kd + a) * kh + b) * kw + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: usize,
    pub weights: Vec<f64>,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(argument("channel counts must be >= 1"));
        }
        if self.stride == 0 {
            return Err(argument("stride must be >= 1"));
        }
        if self.kernel.contains(&0) {
            return Err(argument("kernel dimensions must be >= 1"));
        }
        let expected = self.in_channels * self.out_channels * self.kernel.iter().product::<usize>();
        if self.weights.len() != expected {
            return Err(argument(format!("{} kernel weights, expected {expected}", self.weights.len())));
        }
        Ok(())
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            if self.kernel[a] > input[a] {
                return Err(argument(format!("kernel {:?} larger than input {input:?}", self.kernel)));
            }
            out[a] = (input[a] - self.kernel[a]) / self.stride + 1;
        }
        Ok(out)
    }
}

/// Valid (unpadded) strided cross-correlation summed over input channels.
/// Each output channel is built by scattering one kernel tap at a time
/// across all output positions.
pub fn conv3d_forward(input: &Volume, spec: &ConvSpec) -> Result<Volume> {
    spec.validate()?;
    if input.channels != spec.in_channels {
        return Err(argument(format!("input has {} channels, layer expects {}", input.channels, spec.in_channels)));
    }
    let out_dims = spec.output_dims(input.dims)?;
    let [d, h, w] = input.dims;
    let [od, oh, ow] = out_dims;
    let [kd, kh, kw] = spec.kernel;
    let s = spec.stride;
    let per_out = od * oh * ow;
    let taps = kd * kh * kw;

    let mut data = vec![0.0; spec.out_channels * per_out];
    data.par_chunks_mut(per_out).enumerate().for_each(|(n, out)| {
        for m in 0..spec.in_channels {
            let plane = &input.data[m * d * h * w..(m + 1) * d * h * w];
            let kernel = &spec.weights[(n * spec.in_channels + m) * taps..][..taps];
            for (t, &wt) in kernel.iter().enumerate() {
                if wt == 0.0 {
                    continue;
                }
                let (a, b, e) = (t / (kh * kw), (t / kw) % kh, t % kw);
                for z in 0..od {
                    for y in 0..oh {
                        let row = ((z * s + a) * h + y * s + b) * w + e;
                        let dst = &mut out[(z * oh + y) * ow..][..ow];
                        for (x, o) in dst.iter_mut().enumerate() {
                            *o += wt * plane[row + x * s];
                        }
                    }
                }
            }
        }
    });
    Ok(Volume { channels: spec.out_channels, dims: out_dims, data })
}
