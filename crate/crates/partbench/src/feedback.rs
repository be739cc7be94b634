//! Feature-map math for conditioning on previously predicted masks:
//! per-channel affine modulation and patch-wise attention pooling over a
//! stack of maps.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("stack of feature maps is empty")]
    EmptyStack,
    #[error("feature map contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Dense `C x H x W` feature map (channel-major layout).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, FeedbackError> {
        if data.len() != channels * height * width {
            return Err(FeedbackError::ShapeMismatch(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(FeedbackError::NonFinite(bad));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, FeedbackError> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(c, h, w));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Feature-wise linear modulation: `y[c,h,w] = gamma[c] * x[c,h,w] + beta[c]`.
pub fn film_modulate(
    x: &FeatureMap,
    gamma: &[f64],
    beta: &[f64],
) -> Result<FeatureMap, FeedbackError> {
    if gamma.len() != x.channels || beta.len() != x.channels {
        return Err(FeedbackError::ShapeMismatch(format!(
            "{} channels but gamma has {} and beta has {}",
            x.channels,
            gamma.len(),
            beta.len()
        )));
    }
    let plane = x.height * x.width;
    let mut data = Vec::with_capacity(x.data.len());
    for (c, (&g, &b)) in gamma.iter().zip(beta).enumerate() {
        for i in 0..plane {
            data.push(g * x.data[c * plane + i] + b);
        }
    }
    FeatureMap::new(x.channels, x.height, x.width, data)
}

/// Pools a stack of feature maps into one map with per-patch attention.
///
/// For each patch `(h, w)`, the score of stack entry `k` is the scaled dot
/// product `<query(h,w), stack_k(h,w)> / sqrt(C)`; a softmax over `k` gives
/// the pooling weights, so each output patch is a convex combination of the
/// stack's patch vectors.
pub fn attention_pool_stack(
    stack: &[FeatureMap],
    query: &FeatureMap,
) -> Result<FeatureMap, FeedbackError> {
    let first = stack.first().ok_or(FeedbackError::EmptyStack)?;
    let shape = first.shape();
    for (k, map) in stack.iter().enumerate() {
        if map.shape() != shape {
            return Err(FeedbackError::ShapeMismatch(format!(
                "stack entry {k} has shape {:?}, expected {shape:?}",
                map.shape()
            )));
        }
    }
    if query.shape() != shape {
        return Err(FeedbackError::ShapeMismatch(format!(
            "query has shape {:?}, expected {shape:?}",
            query.shape()
        )));
    }

    let (channels, height, width) = shape;
    let scale = 1.0 / (channels as f64).sqrt();
    let mut out = vec![0.0; channels * height * width];
    for h in 0..height {
        for w in 0..width {
            let scores: Vec<f64> = stack
                .iter()
                .map(|map| {
                    let mut dot = 0.0;
                    for c in 0..channels {
                        dot += query.get(c, h, w) * map.get(c, h, w);
                    }
                    dot * scale
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..channels {
                let mut v = 0.0;
                for (map, e) in stack.iter().zip(&exps) {
                    v += (e / z) * map.get(c, h, w);
                }
                out[(c * height + h) * width + w] = v;
            }
        }
    }
    FeatureMap::new(channels, height, width, out)
}
